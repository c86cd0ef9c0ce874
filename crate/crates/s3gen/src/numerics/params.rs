use std::fmt::Write as _;
use std::path::Path;

use indexmap::IndexMap;

use super::rng::Rng;
use super::tensor::{NumericsError, Tensor};

const CHECKPOINT_MAGIC: &str = "s3gen-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

/// Ordered collection of named tensors. Used both for trainable
/// parameters and for their gradients (a zeroed clone of the former).
/// Iteration order is insertion order, which fixes the coordinate
/// numbering used by finite-difference checks.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    seed: u64,
    entries: IndexMap<String, Tensor>,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            entries: IndexMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn add(&mut self, name: &str, t: Tensor) {
        debug_assert!(
            !self.entries.contains_key(name),
            "duplicate parameter `{name}`"
        );
        self.entries.insert(name.to_string(), t);
    }

    /// Uniform init in ±1/sqrt(fan_in), the scheme used for every
    /// weight matrix and embedding table in this crate.
    pub fn add_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize, rng: &mut Rng) {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.uniform(-bound, bound)).collect();
        self.add(name, Tensor::new(shape.to_vec(), data).expect("shape/product"));
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) {
        self.add(name, Tensor::zeros(shape));
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.entries
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` not found"))
    }

    pub fn try_get(&self, name: &str) -> Result<&Tensor, NumericsError> {
        self.entries
            .get(name)
            .ok_or_else(|| NumericsError::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        self.entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("parameter `{name}` not found"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Adds `delta` into the named entry; used for gradient accumulation.
    pub fn accum(&mut self, name: &str, delta: &Tensor) {
        self.get_mut(name).add_assign(delta);
    }

    pub fn accum_at(&mut self, name: &str, idx: usize, v: f64) {
        self.get_mut(name).data_mut()[idx] += v;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.entries.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar coordinates across all entries.
    pub fn coord_count(&self) -> usize {
        self.entries.values().map(|t| t.len()).sum()
    }

    /// Same names and shapes, all values zero.
    pub fn zeros_like(&self) -> ParamStore {
        let mut out = ParamStore::new(self.seed);
        for (name, t) in &self.entries {
            out.add(name, Tensor::zeros(t.shape()));
        }
        out
    }

    /// Maps a flat coordinate index to (name, offset within tensor).
    pub fn locate(&self, flat: usize) -> (&str, usize) {
        let mut rest = flat;
        for (name, t) in &self.entries {
            if rest < t.len() {
                return (name.as_str(), rest);
            }
            rest -= t.len();
        }
        panic!("flat index {flat} out of range");
    }

    pub fn get_flat(&self, flat: usize) -> f64 {
        let (name, off) = self.locate(flat);
        self.entries[name].data()[off]
    }

    pub fn set_flat(&mut self, flat: usize, v: f64) {
        let (name, off) = self.locate(flat);
        let name = name.to_string();
        self.entries[&name].data_mut()[off] = v;
    }

    pub fn scale_all(&mut self, s: f64) {
        for t in self.entries.values_mut() {
            t.scale(s);
        }
    }

    /// L2 norm over every coordinate of every entry.
    pub fn global_norm(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|t| t.data().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.values().all(|t| t.all_finite())
    }

    /// Plain-text checkpoint: a header line with format version and init
    /// seed, then for each tensor a descriptor line `param <name> <dims…>`
    /// followed by one line of values printed with 17 significant digits,
    /// which round-trips f64 exactly.
    pub fn save(&self, path: &Path) -> Result<(), NumericsError> {
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} {}", self.seed);
        for (name, t) in &self.entries {
            let _ = write!(out, "param {name}");
            for d in t.shape() {
                let _ = write!(out, " {d}");
            }
            out.push('\n');
            let mut first = true;
            for v in t.data() {
                if !first {
                    out.push(' ');
                }
                let _ = write!(out, "{v:.16e}");
                first = false;
            }
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ParamStore, NumericsError> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(NumericsError::Checkpoint {
            line: 1,
            msg: "empty file".into(),
        })?;
        let mut hp = header.split_whitespace();
        if hp.next() != Some(CHECKPOINT_MAGIC) {
            return Err(NumericsError::Checkpoint {
                line: 1,
                msg: format!("expected `{CHECKPOINT_MAGIC}` header"),
            });
        }
        let version: u32 = hp
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or(NumericsError::Checkpoint {
                line: 1,
                msg: "missing format version".into(),
            })?;
        if version != CHECKPOINT_VERSION {
            return Err(NumericsError::Checkpoint {
                line: 1,
                msg: format!("unsupported version {version}"),
            });
        }
        let seed: u64 = hp
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or(NumericsError::Checkpoint {
                line: 1,
                msg: "missing seed".into(),
            })?;
        let mut store = ParamStore::new(seed);
        while let Some((ln, desc)) = lines.next() {
            if desc.trim().is_empty() {
                continue;
            }
            let mut parts = desc.split_whitespace();
            if parts.next() != Some("param") {
                return Err(NumericsError::Checkpoint {
                    line: ln + 1,
                    msg: format!("expected `param` descriptor, got `{desc}`"),
                });
            }
            let name = parts
                .next()
                .ok_or(NumericsError::Checkpoint {
                    line: ln + 1,
                    msg: "missing parameter name".into(),
                })?
                .to_string();
            let shape: Vec<usize> = parts
                .map(|s| {
                    s.parse().map_err(|_| NumericsError::Checkpoint {
                        line: ln + 1,
                        msg: format!("bad dimension `{s}`"),
                    })
                })
                .collect::<Result<_, _>>()?;
            let (vln, vals_line) = lines.next().ok_or(NumericsError::Checkpoint {
                line: ln + 2,
                msg: format!("missing values for `{name}`"),
            })?;
            let data: Vec<f64> = vals_line
                .split_whitespace()
                .map(|s| {
                    s.parse().map_err(|_| NumericsError::Checkpoint {
                        line: vln + 1,
                        msg: format!("bad value `{s}`"),
                    })
                })
                .collect::<Result<_, _>>()?;
            let t = Tensor::new(shape.clone(), data).map_err(|_| NumericsError::Checkpoint {
                line: vln + 1,
                msg: format!("value count does not match shape {shape:?}"),
            })?;
            store.add(&name, t);
        }
        Ok(store)
    }
}
