//! Named parameter store persisted as a TOML manifest plus a little-endian
//! `f32` blob holding the parameters back to back in manifest order.
//!
//! ```toml
//! architecture = "student-v1"
//! blob = "student.bin"
//!
//! [hyper]
//! conv1 = 16
//!
//! [[param]]
//! name = "cnn.conv1.weight"
//! shape = [16, 2, 5, 5]
//! ```

use std::collections::{BTreeMap, HashMap};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `±1/sqrt(fan_in)`.
    Uniform { fan_in: usize },
    Ones,
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }

    /// Weight `[n, m]` and bias `[m]` of a dense layer.
    pub fn dense(prefix: &str, n: usize, m: usize) -> [Self; 2] {
        [
            Self::new(format!("{prefix}.weight"), &[n, m], Init::Uniform { fan_in: n }),
            Self::new(format!("{prefix}.bias"), &[m], Init::Uniform { fan_in: n }),
        ]
    }

    pub fn count(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    architecture: String,
    blob: String,
    #[serde(default)]
    hyper: BTreeMap<String, u64>,
    #[serde(default)]
    param: Vec<ManifestParam>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestParam {
    name: String,
    shape: Vec<usize>,
}

/// Immutable after construction; share it freely between threads.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    architecture: String,
    hyper: BTreeMap<String, u64>,
    params: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl WeightStore {
    pub fn from_params(
        architecture: impl Into<String>,
        hyper: BTreeMap<String, u64>,
        params: Vec<(String, Tensor)>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(params.len());
        for (i, (name, _)) in params.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::Architecture {
                    param: name.clone(),
                    reason: "duplicate parameter".into(),
                });
            }
        }
        Ok(Self {
            architecture: architecture.into(),
            hyper,
            params,
            index,
        })
    }

    /// Deterministic initialization from `seed`.
    pub fn seeded(
        architecture: &str,
        hyper: BTreeMap<String, u64>,
        specs: &[ParamSpec],
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = specs
            .iter()
            .map(|s| {
                let t = match s.init {
                    Init::Uniform { fan_in } => {
                        let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
                        Tensor::from_fn(&s.shape, |_| rng.random_range(-bound..=bound))?
                    }
                    Init::Ones => Tensor::from_fn(&s.shape, |_| 1.0)?,
                    Init::Zeros => Tensor::zeros(&s.shape)?,
                };
                Ok((s.name.clone(), t))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_params(architecture, hyper, params)
    }

    pub fn architecture(&self) -> &str {
        &self.architecture
    }

    pub fn hyper(&self, key: &str) -> Option<u64> {
        self.hyper.get(key).copied()
    }

    pub fn hypers(&self) -> &BTreeMap<String, u64> {
        &self.hyper
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.len()).sum()
    }

    /// Looks up `name`, insisting on `shape`.
    pub fn get(&self, name: &str, shape: &[usize]) -> Result<&Tensor> {
        let t = self
            .index
            .get(name)
            .map(|&i| &self.params[i].1)
            .ok_or_else(|| Error::Architecture {
                param: name.to_string(),
                reason: "missing".into(),
            })?;
        if t.shape() != shape {
            return Err(Error::Architecture {
                param: name.to_string(),
                reason: format!("expected shape {shape:?}, found {:?}", t.shape()),
            });
        }
        Ok(t)
    }

    pub fn lookup(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.params[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = *self.index.get(name)?;
        Some(&mut self.params[i].1)
    }

    /// Errors unless the store holds exactly `specs` under `architecture`.
    pub fn check(&self, architecture: &str, specs: &[ParamSpec]) -> Result<()> {
        if self.architecture != architecture {
            return Err(Error::Architecture {
                param: "<architecture>".into(),
                reason: format!("expected `{architecture}`, found `{}`", self.architecture),
            });
        }
        for s in specs {
            self.get(&s.name, &s.shape)?;
        }
        if let Some((extra, _)) = self
            .params
            .iter()
            .find(|(n, _)| !specs.iter().any(|s| &s.name == n))
        {
            return Err(Error::Architecture {
                param: extra.clone(),
                reason: "not part of the architecture".into(),
            });
        }
        Ok(())
    }

    /// Writes the manifest to `manifest_path` and the blob beside it.
    pub fn save(&self, manifest_path: &Path) -> Result<()> {
        let stem = manifest_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("weights");
        let blob_name = format!("{stem}.bin");
        let blob_path = manifest_path.with_file_name(&blob_name);
        let manifest = Manifest {
            architecture: self.architecture.clone(),
            blob: blob_name,
            hyper: self.hyper.clone(),
            param: self
                .params
                .iter()
                .map(|(name, t)| ManifestParam {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))?;
        let file = std::fs::File::create(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        let mut out = BufWriter::new(file);
        for (_, t) in &self.params {
            for v in t.data() {
                out.write_f32::<LittleEndian>(*v).map_err(|e| Error::io(&blob_path, e))?;
            }
        }
        out.flush().map_err(|e| Error::io(&blob_path, e))
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Architecture {
            param: "<manifest>".into(),
            reason: e.to_string(),
        })?;
        let blob_path = manifest_path.with_file_name(&manifest.blob);
        let file = std::fs::File::open(&blob_path).map_err(|e| Error::io(&blob_path, e))?;
        let mut input = BufReader::new(file);
        let mut params = Vec::with_capacity(manifest.param.len());
        for p in manifest.param {
            let n: usize = p.shape.iter().product();
            let mut data = vec![0.0f32; n];
            input
                .read_f32_into::<LittleEndian>(&mut data)
                .map_err(|e| Error::Architecture {
                    param: p.name.clone(),
                    reason: format!("blob too short: {e}"),
                })?;
            let t = Tensor::new(p.shape, data).map_err(|e| Error::Architecture {
                param: p.name.clone(),
                reason: e.to_string(),
            })?;
            params.push((p.name, t));
        }
        let mut rest = Vec::new();
        input.read_to_end(&mut rest).map_err(|e| Error::io(&blob_path, e))?;
        if !rest.is_empty() {
            return Err(Error::Architecture {
                param: "<blob>".into(),
                reason: format!("{} trailing bytes", rest.len()),
            });
        }
        Self::from_params(manifest.architecture, manifest.hyper, params)
    }
}
