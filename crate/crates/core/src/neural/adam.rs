use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Multiply the learning rate by `factor` every `interval` epochs, never
/// going below `floor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub initial: f64,
    pub factor: f64,
    pub interval: usize,
    #[serde(default)]
    pub floor: f64,
}

impl StepDecay {
    pub fn constant(lr: f64) -> Self {
        Self {
            initial: lr,
            factor: 1.0,
            interval: 1,
            floor: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial > 0.0 && self.factor > 0.0 && self.factor <= 1.0 && self.interval > 0)
            || !(self.floor >= 0.0 && self.floor <= self.initial)
        {
            return Err(Error::Config(format!(
                "invalid learning-rate schedule {self:?}"
            )));
        }
        Ok(())
    }

    /// Learning rate in effect after `epoch` completed epochs.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let k = (epoch / self.interval) as i32;
        (self.initial * self.factor.powi(k)).max(self.floor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    epoch: usize,
    schedule: StepDecay,
}

impl Adam {
    pub fn new(n: usize, schedule: StepDecay) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            epoch: 0,
            schedule,
        }
    }

    /// Rebuilds an optimizer from saved moments and counters.
    pub fn from_state(
        m: Vec<f64>,
        v: Vec<f64>,
        step: u64,
        epoch: usize,
        schedule: StepDecay,
    ) -> Result<Self> {
        if m.len() != v.len() {
            return Err(Error::Checkpoint("adam moments differ in length".into()));
        }
        Ok(Self {
            m,
            v,
            step,
            epoch,
            schedule,
        })
    }

    pub fn lr(&self) -> f64 {
        self.schedule.lr_at(self.epoch)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn schedule(&self) -> &StepDecay {
        &self.schedule
    }

    pub fn moments(&self) -> (&[f64], &[f64]) {
        (&self.m, &self.v)
    }

    /// One bias-corrected Adam update. A non-finite gradient leaves the
    /// parameters untouched and reports the first offending index.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "gradient entry {i} is {}",
                grads[i]
            )));
        }
        self.step += 1;
        let lr = self.lr();
        let c1 = 1.0 - BETA1.powi(self.step as i32);
        let c2 = 1.0 - BETA2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
        Ok(())
    }

    /// Advances the schedule by one epoch.
    pub fn end_epoch(&mut self) {
        self.epoch += 1;
    }

    /// Returns the schedule to its initial rate; moments are kept.
    pub fn restart_schedule(&mut self) {
        self.epoch = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = [3.0];
        let mut opt = Adam::new(1, StepDecay::constant(0.01));
        opt.step(&mut p, &[1.0]).unwrap();
        assert!((3.0 - p[0] - 0.01).abs() < 1e-6 * 0.01);
    }

    #[test]
    fn first_step_opposes_gradient() {
        let g = [2.5, -0.001, 40.0, -7.0];
        let mut p = [0.0; 4];
        let mut opt = Adam::new(4, StepDecay::constant(1e-3));
        opt.step(&mut p, &g).unwrap();
        for (pi, gi) in p.iter().zip(&g) {
            assert_eq!(pi.signum(), -gi.signum());
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = [1.5, -2.0];
        let mut opt = Adam::new(2, StepDecay::constant(0.1));
        for _ in 0..3 {
            opt.step(&mut p, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(p, [1.5, -2.0]);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = [1.0, 1.0];
        let mut opt = Adam::new(2, StepDecay::constant(0.1));
        let err = opt.step(&mut p, &[0.0, f64::NAN]).unwrap_err();
        assert!(err.to_string().contains("entry 1"));
        assert_eq!(p, [1.0, 1.0]);
    }

    #[test]
    fn schedule_reaches_floor() {
        let s = StepDecay {
            initial: 4e-3,
            factor: 0.95,
            interval: 50,
            floor: 5e-4,
        };
        // 0.95^40 * 4e-3 is still above the floor, 0.95^41 * 4e-3 is below
        assert!(s.lr_at(2049) > 5e-4);
        assert_eq!(s.lr_at(2050), 5e-4);
        assert_eq!(s.lr_at(2100), 5e-4);
        assert_eq!(s.lr_at(0), 4e-3);
        assert!((s.lr_at(50) - 4e-3 * 0.95).abs() < 1e-18);
        let mut opt = Adam::new(1, s);
        for _ in 0..5000 {
            opt.end_epoch();
        }
        assert_eq!(opt.lr(), 5e-4);
    }
}
