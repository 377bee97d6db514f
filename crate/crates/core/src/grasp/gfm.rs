//! Attention over the grasp memory: a query built from the object descriptor
//! and pose scores every stored grasp after re-projecting it into the frame
//! the object pose is expressed in.
//!
//! Orientations are fused in the 64-d value space and projected back to a
//! 6-vector. Averaging Euler angles directly is not a rotation average; with
//! diffuse attention the decoded orientation is only meaningful when the
//! stored grasps are close to each other.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::se3::{grasp_to_world, vec6_decode, vec6_encode, Pose6};

use super::feature::{ObjectFeature, FEATURE_DIM};
use super::memory::GraspMemoryBank;

pub const QUERY_IN: usize = FEATURE_DIM + 6;
pub const EMBED_DIM: usize = 64;

/// Dense layer `y = W^T x + b` with `W` stored as `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense {
            weight: DMatrix::zeros(n_in, n_out),
            bias: DVector::zeros(n_out),
        }
    }

    fn seeded(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        Dense {
            weight: DMatrix::from_fn(n_in, n_out, |_, _| rng.random_range(-bound..=bound)),
            bias: DVector::from_fn(n_out, |_, _| rng.random_range(-bound..=bound)),
        }
    }

    /// Top-left identity block, zero bias.
    fn identity_block(n_in: usize, n_out: usize) -> Self {
        let mut d = Dense::zeros(n_in, n_out);
        for i in 0..n_in.min(n_out) {
            d.weight[(i, i)] = 1.0;
        }
        d
    }

    pub fn shape(&self) -> (usize, usize) {
        self.weight.shape()
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.weight.nrows() || self.bias.len() != self.weight.ncols() {
            return Err(Error::Shape {
                op: "gfm dense",
                left: vec![x.len()],
                right: vec![self.weight.nrows(), self.weight.ncols()],
            });
        }
        Ok(self.weight.tr_mul(x) + &self.bias)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GfmWeights {
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
    pub out: Dense,
}

/// Gains of the hand-set alignment weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    /// Preference for grasp positions on the robot-facing side of the object.
    pub bearing_gain: f64,
    /// Preference for high grasp positions; negative values favour low ones.
    pub height_bias: f64,
}

impl Default for Alignment {
    fn default() -> Self {
        Alignment {
            bearing_gain: 2000.0,
            height_bias: 0.0,
        }
    }
}

impl GfmWeights {
    /// Uniform in `±1/sqrt(fan_in)`.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GfmWeights {
            query: Dense::seeded(QUERY_IN, EMBED_DIM, &mut rng),
            key: Dense::seeded(6, EMBED_DIM, &mut rng),
            value: Dense::seeded(6, EMBED_DIM, &mut rng),
            out: Dense::seeded(EMBED_DIM, 6, &mut rng),
        }
    }

    /// Keys and values carry the re-projected grasp 6-vector unchanged. The
    /// query holds `-gain * (px, py, 0)` of the object position, so the logit of
    /// a grasp at `g` is `-gain * (p_xy . g_xy) + bias * g_z`: with the robot at
    /// the origin of the frame, grasps on the near side win.
    pub fn alignment(a: Alignment) -> Self {
        let mut query = Dense::zeros(QUERY_IN, EMBED_DIM);
        query.weight[(FEATURE_DIM, 0)] = -a.bearing_gain;
        query.weight[(FEATURE_DIM + 1, 1)] = -a.bearing_gain;
        query.bias[2] = a.height_bias;
        GfmWeights {
            query,
            key: Dense::identity_block(6, EMBED_DIM),
            value: Dense::identity_block(6, EMBED_DIM),
            out: Dense::identity_block(EMBED_DIM, 6),
        }
    }

    pub fn check_shapes(&self) -> Result<()> {
        let expect = [
            ("query", &self.query, (QUERY_IN, EMBED_DIM)),
            ("key", &self.key, (6, EMBED_DIM)),
            ("value", &self.value, (6, EMBED_DIM)),
            ("out", &self.out, (EMBED_DIM, 6)),
        ];
        for (name, d, shape) in expect {
            if d.shape() != shape || d.bias.len() != shape.1 {
                return Err(Error::Architecture {
                    param: name.to_string(),
                    reason: format!("expected {shape:?}, got {:?} with bias {}", d.shape(), d.bias.len()),
                });
            }
        }
        Ok(())
    }
}

impl Default for GfmWeights {
    fn default() -> Self {
        GfmWeights::alignment(Alignment::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GfmOutput {
    /// In the frame of the object pose passed in.
    pub fused: Pose6<f64>,
    /// Raw 6-vector before decoding.
    pub raw: [f64; 6],
    pub alphas: Vec<f64>,
    pub logits: Vec<f64>,
    /// Fused 64-d value.
    pub value: DVector<f64>,
}

/// Stored grasps re-projected through `obj_pose`.
pub fn world_grasps(bank: &GraspMemoryBank, obj_pose: &Pose6<f64>) -> Vec<Pose6<f64>> {
    bank.candidates
        .iter()
        .map(|c| grasp_to_world(&c.pose, obj_pose))
        .collect()
}

pub fn query_vector(feat: &ObjectFeature, obj_pose: &Pose6<f64>, w: &GfmWeights) -> Result<DVector<f64>> {
    let mut x = DVector::zeros(QUERY_IN);
    for (i, v) in feat.0.iter().enumerate() {
        x[i] = *v as f64;
    }
    for (i, v) in vec6_encode(obj_pose).iter().enumerate() {
        x[FEATURE_DIM + i] = *v;
    }
    w.query.apply(&x)
}

/// Key for each world grasp.
pub fn keys(world: &[Pose6<f64>], w: &GfmWeights) -> Result<Vec<DVector<f64>>> {
    world.iter().map(|g| w.key.apply(&flatten(g))).collect()
}

pub fn values(world: &[Pose6<f64>], w: &GfmWeights) -> Result<Vec<DVector<f64>>> {
    world.iter().map(|g| w.value.apply(&flatten(g))).collect()
}

fn flatten(g: &Pose6<f64>) -> DVector<f64> {
    DVector::from_row_slice(&vec6_encode(g))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn logits(feat: &ObjectFeature, obj_pose: &Pose6<f64>, world: &[Pose6<f64>], w: &GfmWeights) -> Result<Vec<f64>> {
    let q = query_vector(feat, obj_pose, w)?;
    Ok(keys(world, w)?.iter().map(|k| q.dot(k)).collect())
}

/// Combines values with the given attention weights and decodes the result.
pub fn fuse(world: &[Pose6<f64>], alphas: &[f64], w: &GfmWeights) -> Result<(DVector<f64>, [f64; 6], Pose6<f64>)> {
    if world.is_empty() {
        return Err(Error::EmptyBank);
    }
    if alphas.len() != world.len() {
        return Err(Error::Shape {
            op: "gfm fuse",
            left: vec![world.len()],
            right: vec![alphas.len()],
        });
    }
    // Anchored at the first value: sum(a_i v_i) = v_0 + sum(a_i (v_i - v_0)) when
    // the alphas sum to 1, and identical candidates then reproduce v_0 bit for bit.
    let vals = values(world, w)?;
    let mut value = vals[0].clone();
    for (v, a) in vals.iter().zip(alphas).skip(1) {
        value.axpy(*a, &(v - &vals[0]), 1.0);
    }
    let out = w.out.apply(&value)?;
    let raw = [out[0], out[1], out[2], out[3], out[4], out[5]];
    let fused = vec6_decode(&raw).map_err(|_| Error::NonFinite("gfm output"))?;
    Ok((value, raw, fused))
}

pub fn gfm_forward(
    feat: &ObjectFeature,
    obj_pose: &Pose6<f64>,
    bank: &GraspMemoryBank,
    w: &GfmWeights,
) -> Result<GfmOutput> {
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    w.check_shapes()?;
    let world = world_grasps(bank, obj_pose);
    let logits = logits(feat, obj_pose, &world, w)?;
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("gfm logits"));
    }
    let alphas = softmax(&logits);
    let (value, raw, fused) = fuse(&world, &alphas, w)?;
    Ok(GfmOutput {
        fused,
        raw,
        alphas,
        logits,
        value,
    })
}

/// Index of the highest logit; ties go to the lowest index.
pub fn argmax_index(logits: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, l) in logits.iter().enumerate() {
        if best.is_none_or(|b| *l > logits[b]) {
            best = Some(i);
        }
    }
    best
}

/// The stored grasp with the largest attention weight, re-projected.
pub fn select_argmax(
    bank: &GraspMemoryBank,
    obj_pose: &Pose6<f64>,
    feat: &ObjectFeature,
    w: &GfmWeights,
) -> Result<Pose6<f64>> {
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    w.check_shapes()?;
    let world = world_grasps(bank, obj_pose);
    let l = logits(feat, obj_pose, &world, w)?;
    if l.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("gfm logits"));
    }
    let i = argmax_index(&l).ok_or(Error::EmptyBank)?;
    Ok(world[i])
}

/// Uniform attention over the bank, the ablation without a learned query.
pub fn centroid_grasp(bank: &GraspMemoryBank, obj_pose: &Pose6<f64>, w: &GfmWeights) -> Result<Pose6<f64>> {
    let world = world_grasps(bank, obj_pose);
    let alphas = vec![1.0 / world.len().max(1) as f64; world.len()];
    Ok(fuse(&world, &alphas, w)?.2)
}
