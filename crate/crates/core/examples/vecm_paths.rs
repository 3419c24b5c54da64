//! Simulates the cointegrated VECM market under equal weights and prints
//! the distribution of the yearly return next to the mean price path.
//!
//! cargo run --release --example vecm_paths

use dynrisk::envs::{simulate_batch, VecmEnv, VecmSpec};
use dynrisk::neural::ConstantPolicy;
use dynrisk::oracle::DiscreteDistribution;
use dynrisk::Environment;

fn main() -> dynrisk::Result<()> {
    let env = VecmEnv::new(VecmSpec::default())?;
    let d = env.model().dim();
    println!(
        "{d} assets, {} periods, days per period {:?}",
        env.spec().horizon,
        env.spec().steps_per_period()
    );

    // raw action zero is the equal-weight portfolio
    let batch = simulate_batch(
        &env,
        &ConstantPolicy::new(vec![0.0; env.action_dim()]),
        5000,
        1,
    );
    let returns: Vec<f64> = batch.episodes().iter().map(|e| -e.total_cost()).collect();
    let dist = DiscreteDistribution::from_samples(&returns)?;
    println!(
        "yearly return: mean {:.4}, 5% quantile {:.4}, median {:.4}, 95% quantile {:.4}",
        dist.mean(),
        dist.var(0.05),
        dist.var(0.5),
        dist.var(0.95)
    );
    for t in (0..=env.spec().horizon).step_by(6) {
        let mean: Vec<f64> = (1..=d)
            .map(|i| {
                batch.episodes().iter().map(|e| e.state(t)[i]).sum::<f64>() / batch.len() as f64
            })
            .collect();
        println!("period {t:>2}: mean prices {mean:.3?}");
    }
    Ok(())
}
