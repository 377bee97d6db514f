//! Dual-stream student network: shared per-frame CNN, one guided transformer
//! per camera and a dense regression head.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::ops::{conv2d, elu, linear, max_pool2d, sinusoidal_encoding};
use super::tensor::Tensor;
use super::transformer::{encoder_layer_specs, transformer_encoder_layer, EncoderLayerWeights};
use super::weights::{Init, ParamSpec, WeightStore};

pub const ARCHITECTURE: &str = "student-v1";
pub const IMAGE_HEIGHT: usize = 54;
pub const IMAGE_WIDTH: usize = 96;
pub const HISTORY: usize = 3;
/// Wrist and base views, mask and depth each, `HISTORY` frames apiece.
pub const OBS_CHANNELS: usize = 4 * HISTORY;
pub const PROPRIO_DIM: usize = 32;
pub const ACTION_DIM: usize = 8;
const STREAMS: [&str; 2] = ["wrist", "base"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudentConfig {
    pub conv1: usize,
    pub conv2: usize,
    pub cnn_hidden: usize,
    pub token_dim: usize,
    pub ff_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub proprio_dim: usize,
    pub head_hidden: [usize; 2],
}

impl Default for StudentConfig {
    fn default() -> Self {
        Self {
            conv1: 16,
            conv2: 32,
            cnn_hidden: 416,
            token_dim: 64,
            ff_dim: 2048,
            heads: 2,
            layers: 2,
            proprio_dim: PROPRIO_DIM,
            head_hidden: [128, 64],
        }
    }
}

const HYPER_KEYS: [&str; 10] = [
    "conv1",
    "conv2",
    "cnn_hidden",
    "token_dim",
    "ff_dim",
    "heads",
    "layers",
    "proprio_dim",
    "head_hidden1",
    "head_hidden2",
];

impl StudentConfig {
    fn values(&self) -> [usize; 10] {
        [
            self.conv1,
            self.conv2,
            self.cnn_hidden,
            self.token_dim,
            self.ff_dim,
            self.heads,
            self.layers,
            self.proprio_dim,
            self.head_hidden[0],
            self.head_hidden[1],
        ]
    }

    pub fn to_hyper(&self) -> BTreeMap<String, u64> {
        HYPER_KEYS
            .iter()
            .zip(self.values())
            .map(|(k, v)| (k.to_string(), v as u64))
            .collect()
    }

    pub fn from_store(w: &WeightStore) -> Result<Self> {
        let mut v = [0usize; 10];
        for (slot, key) in v.iter_mut().zip(HYPER_KEYS) {
            *slot = w.hyper(key).ok_or_else(|| Error::Architecture {
                param: format!("hyper.{key}"),
                reason: "missing".into(),
            })? as usize;
        }
        Ok(Self {
            conv1: v[0],
            conv2: v[1],
            cnn_hidden: v[2],
            token_dim: v[3],
            ff_dim: v[4],
            heads: v[5],
            layers: v[6],
            proprio_dim: v[7],
            head_hidden: [v[8], v[9]],
        })
    }

    /// Spatial size after both conv/pool stages.
    fn feature_map(&self) -> (usize, usize) {
        (IMAGE_HEIGHT / 2 / 2, IMAGE_WIDTH / 2 / 2)
    }

    fn flat_features(&self) -> usize {
        let (h, w) = self.feature_map();
        self.conv2 * h * w
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let d = self.token_dim;
        let mut s = vec![
            ParamSpec::new("cnn.conv1.weight", &[self.conv1, 2, 5, 5], Init::Uniform { fan_in: 2 * 25 }),
            ParamSpec::new("cnn.conv1.bias", &[self.conv1], Init::Uniform { fan_in: 2 * 25 }),
            ParamSpec::new(
                "cnn.conv2.weight",
                &[self.conv2, self.conv1, 3, 3],
                Init::Uniform { fan_in: self.conv1 * 9 },
            ),
            ParamSpec::new("cnn.conv2.bias", &[self.conv2], Init::Uniform { fan_in: self.conv1 * 9 }),
        ];
        s.extend(ParamSpec::dense("cnn.fc1", self.flat_features(), self.cnn_hidden));
        s.extend(ParamSpec::dense("cnn.fc2", self.cnn_hidden, d));
        s.extend(ParamSpec::dense("state", self.proprio_dim, d));
        for stream in STREAMS {
            for l in 0..self.layers {
                s.extend(encoder_layer_specs(&format!("{stream}.layer{l}"), d, self.ff_dim));
            }
            s.extend(ParamSpec::dense(&format!("{stream}.proj"), d, d));
        }
        s.extend(ParamSpec::dense("head.fc1", 2 * d, self.head_hidden[0]));
        s.extend(ParamSpec::dense("head.fc2", self.head_hidden[0], self.head_hidden[1]));
        s.extend(ParamSpec::dense("head.fc3", self.head_hidden[1], ACTION_DIM));
        s
    }

    pub fn param_count(&self) -> usize {
        self.param_specs().iter().map(ParamSpec::count).sum()
    }
}

pub fn seeded_student(config: &StudentConfig, seed: u64) -> Result<WeightStore> {
    WeightStore::seeded(ARCHITECTURE, config.to_hyper(), &config.param_specs(), seed)
}

/// Channel indices of frame `t` of `stream` (0 wrist, 1 base): `(mask, depth)`.
pub fn frame_channels(stream: usize, t: usize) -> (usize, usize) {
    let base = stream * 2 * HISTORY;
    (base + t, base + HISTORY + t)
}

pub struct StudentNet<'a> {
    config: StudentConfig,
    weights: &'a WeightStore,
}

impl<'a> StudentNet<'a> {
    pub fn new(weights: &'a WeightStore) -> Result<Self> {
        let config = StudentConfig::from_store(weights)?;
        weights.check(ARCHITECTURE, &config.param_specs())?;
        Ok(Self { config, weights })
    }

    pub fn config(&self) -> &StudentConfig {
        &self.config
    }

    fn p(&self, name: &str) -> &'a Tensor {
        // Shapes were validated in `new`.
        self.weights.lookup(name).expect("validated parameter")
    }

    fn dense(&self, x: &Tensor, prefix: &str) -> Result<Tensor> {
        linear(x, self.p(&format!("{prefix}.weight")), self.p(&format!("{prefix}.bias")))
    }

    /// Flattened conv features for every frame, `[2 * HISTORY, flat]`.
    fn conv_features(&self, frames: &Tensor) -> Result<Tensor> {
        let plane = IMAGE_HEIGHT * IMAGE_WIDTH;
        let mut rows = Vec::with_capacity(2 * HISTORY);
        for stream in 0..2 {
            for t in 0..HISTORY {
                let (m, d) = frame_channels(stream, t);
                let mut data = Vec::with_capacity(2 * plane);
                data.extend_from_slice(&frames.data()[m * plane..(m + 1) * plane]);
                data.extend_from_slice(&frames.data()[d * plane..(d + 1) * plane]);
                let x = Tensor::new(vec![2, IMAGE_HEIGHT, IMAGE_WIDTH], data)?;
                let x = conv2d(&x, self.p("cnn.conv1.weight"), self.p("cnn.conv1.bias"), 1, 2)?;
                let x = max_pool2d(&elu(x), 2)?;
                let x = conv2d(&x, self.p("cnn.conv2.weight"), self.p("cnn.conv2.bias"), 1, 1)?;
                let x = max_pool2d(&elu(x), 2)?;
                rows.push(x.reshape(vec![self.config.flat_features()])?);
            }
        }
        Tensor::stack(&rows)
    }

    pub fn forward(&self, frames: &Tensor, proprio: &[f32]) -> Result<[f32; ACTION_DIM]> {
        let c = &self.config;
        if frames.shape() != [OBS_CHANNELS, IMAGE_HEIGHT, IMAGE_WIDTH] {
            return Err(Error::Shape {
                op: "student_forward",
                left: frames.shape().to_vec(),
                right: vec![OBS_CHANNELS, IMAGE_HEIGHT, IMAGE_WIDTH],
            });
        }
        if proprio.len() != c.proprio_dim {
            return Err(Error::Shape {
                op: "student_forward",
                left: vec![proprio.len()],
                right: vec![c.proprio_dim],
            });
        }
        if !frames.is_finite() || proprio.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("student_forward input"));
        }
        let d = c.token_dim;
        let feats = self.conv_features(frames)?;
        let tokens = self.dense(&elu(self.dense(&feats, "cnn.fc1")?), "cnn.fc2")?;
        let state = self.dense(&Tensor::matrix(1, c.proprio_dim, proprio.to_vec())?, "state")?;
        let pe = sinusoidal_encoding(HISTORY + 1, d)?;
        let mut fused = Vec::with_capacity(2 * d);
        for (s, stream) in STREAMS.iter().enumerate() {
            let mut seq = state.data().to_vec();
            for t in 0..HISTORY {
                seq.extend_from_slice(tokens.row(s * HISTORY + t));
            }
            let mut x = Tensor::matrix(HISTORY + 1, d, seq)?.add(&pe)?;
            for l in 0..c.layers {
                let w = EncoderLayerWeights::from_store(self.weights, &format!("{stream}.layer{l}"), d, c.ff_dim, c.heads)?;
                x = transformer_encoder_layer(&x, &w)?;
            }
            let mut mean = vec![0.0f32; d];
            for t in 1..=HISTORY {
                mean.iter_mut().zip(x.row(t)).for_each(|(m, v)| *m += v / HISTORY as f32);
            }
            let proj = self.dense(&Tensor::matrix(1, d, mean)?, &format!("{stream}.proj"))?;
            fused.extend_from_slice(proj.data());
        }
        let h = elu(self.dense(&Tensor::matrix(1, 2 * d, fused)?, "head.fc1")?);
        let h = elu(self.dense(&h, "head.fc2")?);
        let out = self.dense(&h, "head.fc3")?;
        let mut a = [0.0f32; ACTION_DIM];
        a.copy_from_slice(out.data());
        Ok(a)
    }
}

pub fn student_forward(frames: &Tensor, proprio: &[f32], weights: &WeightStore) -> Result<[f32; ACTION_DIM]> {
    StudentNet::new(weights)?.forward(frames, proprio)
}
