//! Plain-text checkpoints. Floats are written as the hex of their IEEE bits
//! so a save/load cycle is bit-exact.
//!
//! ```text
//! dynrisk-checkpoint 1
//! meta <key> <value>
//! vec <key> <len>
//! <hex> <hex> ...
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{io_err, Error, Result};
use crate::neural::adam::{Adam, StepDecay};
use crate::neural::mlp::{Mlp, MlpShape, OutputActivation};

const MAGIC: &str = "dynrisk-checkpoint";
const VERSION: u32 = 1;
const PER_LINE: usize = 8;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    meta: BTreeMap<String, String>,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        assert!(!key.contains(char::is_whitespace) && !value.contains('\n'));
        self.meta.insert(key.to_string(), value);
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing entry {key}")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.meta(key)?;
        raw.parse()
            .map_err(|_| Error::Checkpoint(format!("entry {key} has unparsable value {raw}")))
    }

    pub fn has(&self, key: &str) -> bool {
        self.meta.contains_key(key) || self.vectors.contains_key(key)
    }

    pub fn set_vec(&mut self, key: &str, values: &[f64]) {
        assert!(!key.contains(char::is_whitespace));
        self.vectors.insert(key.to_string(), values.to_vec());
    }

    pub fn vec(&self, key: &str) -> Result<&[f64]> {
        self.vectors
            .get(key)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Checkpoint(format!("missing vector {key}")))
    }

    pub fn set_shape(&mut self, key: &str, shape: &MlpShape) {
        let sizes: Vec<String> = shape.sizes().iter().map(usize::to_string).collect();
        self.set_meta(&format!("{key}.sizes"), sizes.join(","));
        self.set_meta(&format!("{key}.output"), shape.output_activation().tag());
    }

    pub fn shape(&self, key: &str) -> Result<MlpShape> {
        let sizes = self
            .meta(&format!("{key}.sizes"))?
            .split(',')
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Checkpoint(format!("bad sizes for {key}")))?;
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Checkpoint(format!("bad sizes for {key}")));
        }
        let out = OutputActivation::from_tag(self.meta(&format!("{key}.output"))?)?;
        Ok(MlpShape::from_sizes(sizes, out))
    }

    pub fn set_net(&mut self, key: &str, net: &Mlp) {
        self.set_shape(key, net.shape());
        self.set_vec(&format!("{key}.params"), net.params());
    }

    pub fn net(&self, key: &str) -> Result<Mlp> {
        let shape = self.shape(key)?;
        Mlp::from_params(shape, self.vec(&format!("{key}.params"))?.to_vec())
            .map_err(|e| Error::Checkpoint(format!("{key}: {e}")))
    }

    pub fn set_adam(&mut self, key: &str, opt: &Adam) {
        let s = opt.schedule();
        let (m, v) = opt.moments();
        self.set_vec(&format!("{key}.m"), m);
        self.set_vec(&format!("{key}.v"), v);
        self.set_vec(
            &format!("{key}.schedule"),
            &[s.initial, s.factor, s.interval as f64, s.floor],
        );
        self.set_meta(&format!("{key}.step"), opt.steps());
        self.set_meta(&format!("{key}.epoch"), opt.epoch());
    }

    pub fn adam(&self, key: &str) -> Result<Adam> {
        let s = self.vec(&format!("{key}.schedule"))?;
        if s.len() != 4 {
            return Err(Error::Checkpoint(format!("bad schedule for {key}")));
        }
        let schedule = StepDecay {
            initial: s[0],
            factor: s[1],
            interval: s[2] as usize,
            floor: s[3],
        };
        Adam::from_state(
            self.vec(&format!("{key}.m"))?.to_vec(),
            self.vec(&format!("{key}.v"))?.to_vec(),
            self.meta_parse(&format!("{key}.step"))?,
            self.meta_parse(&format!("{key}.epoch"))?,
            schedule,
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\n");
        for (k, v) in &self.meta {
            writeln!(out, "meta {k} {v}").unwrap();
        }
        for (k, v) in &self.vectors {
            writeln!(out, "vec {k} {}", v.len()).unwrap();
            for chunk in v.chunks(PER_LINE) {
                let line: Vec<String> = chunk
                    .iter()
                    .map(|x| format!("{:016x}", x.to_bits()))
                    .collect();
                writeln!(out, "{}", line.join(" ")).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        match header.split_once(' ') {
            Some((MAGIC, v)) if v.trim() == VERSION.to_string() => {}
            Some((MAGIC, v)) => return Err(Error::Checkpoint(format!("unsupported version {v}"))),
            _ => return Err(Error::Checkpoint("not a checkpoint file".into())),
        }
        let mut ck = Checkpoint::new();
        while let Some(line) = lines.next() {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ck.meta.insert(k.to_string(), v.to_string());
            } else if let Some(rest) = line.strip_prefix("vec ") {
                let (k, n) = rest
                    .split_once(' ')
                    .ok_or_else(|| Error::Checkpoint(format!("bad line '{line}'")))?;
                let n: usize = n
                    .trim()
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("bad length in '{line}'")))?;
                let mut values = Vec::with_capacity(n);
                while values.len() < n {
                    let row = lines
                        .next()
                        .ok_or_else(|| Error::Checkpoint(format!("vector {k} truncated")))?;
                    for tok in row.split_whitespace() {
                        let bits = u64::from_str_radix(tok, 16)
                            .map_err(|_| Error::Checkpoint(format!("bad value {tok} in {k}")))?;
                        values.push(f64::from_bits(bits));
                    }
                }
                if values.len() != n {
                    return Err(Error::Checkpoint(format!(
                        "vector {k} has {} values, expected {n}",
                        values.len()
                    )));
                }
                ck.vectors.insert(k.to_string(), values);
            } else {
                return Err(Error::Checkpoint(format!("bad line '{line}'")));
            }
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_text(&text)
    }
}
