//! Fixed-length geometric descriptor of an object, standing in for a learned
//! point-cloud embedding.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scene::catalog::{ObjectSpec, Shape};
use crate::se3::Vec3;

pub const FEATURE_DIM: usize = 128;
pub const HISTOGRAM_BINS: usize = 60;
pub const HISTOGRAM_RANGE: f64 = 0.3;
pub const SURFACE_SAMPLES: usize = 512;
/// Offset of the radial histogram inside the feature vector.
pub const HISTOGRAM_OFFSET: usize = 8;
/// One past the last populated entry.
pub const POPULATED: usize = HISTOGRAM_OFFSET + HISTOGRAM_BINS + 1;

const SURFACE_SEED: u64 = 0x7375_7266;

/// Layout: shape one-hot (3), dims (3), volume, surface area, normalized
/// radial histogram (60 bins over [0, 0.3) m), mass, zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectFeature(pub [f32; FEATURE_DIM]);

/// Uniform points on the surface, from a fixed stream so the result only depends on the shape.
pub fn surface_points(shape: &Shape, n: usize) -> Vec<Vec3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(SURFACE_SEED);
    let unit = |rng: &mut ChaCha8Rng| -> Vec3<f64> {
        let z: f64 = rng.random_range(-1.0..=1.0);
        let phi = rng.random_range(-PI..PI);
        let r = (1.0 - z * z).sqrt();
        Vec3::new(r * phi.cos(), r * phi.sin(), z)
    };
    (0..n)
        .map(|_| match *shape {
            Shape::Sphere { radius } => unit(&mut rng) * radius,
            Shape::Box { extents: [a, b, c] } => {
                let areas = [b * c, a * c, a * b];
                let total: f64 = areas.iter().sum();
                let mut pick = rng.random_range(0.0..total);
                let mut axis = 0;
                while axis < 2 && pick >= areas[axis] {
                    pick -= areas[axis];
                    axis += 1;
                }
                let half = [a / 2.0, b / 2.0, c / 2.0];
                let mut p = [0.0; 3];
                for (i, v) in p.iter_mut().enumerate() {
                    *v = rng.random_range(-half[i]..=half[i]);
                }
                p[axis] = if rng.random_bool(0.5) { half[axis] } else { -half[axis] };
                Vec3::from_array(p)
            }
            Shape::Cylinder { radius, height } => {
                let side = 2.0 * PI * radius * height;
                let caps = 2.0 * PI * radius * radius;
                let phi = rng.random_range(-PI..PI);
                if rng.random_range(0.0..side + caps) < side {
                    let z = rng.random_range(-height / 2.0..=height / 2.0);
                    Vec3::new(radius * phi.cos(), radius * phi.sin(), z)
                } else {
                    let r = radius * rng.random_range(0.0f64..=1.0).sqrt();
                    let z = if rng.random_bool(0.5) { height / 2.0 } else { -height / 2.0 };
                    Vec3::new(r * phi.cos(), r * phi.sin(), z)
                }
            }
        })
        .collect()
}

pub fn histogram_bin(distance: f64) -> usize {
    ((distance / HISTOGRAM_RANGE * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
}

pub fn object_feature(spec: &ObjectSpec) -> ObjectFeature {
    let mut f = [0.0f32; FEATURE_DIM];
    let (onehot, dims) = match spec.shape {
        Shape::Sphere { radius } => (0, [radius, 0.0, 0.0]),
        Shape::Box { extents } => (1, extents),
        Shape::Cylinder { radius, height } => (2, [radius, height, 0.0]),
    };
    f[onehot] = 1.0;
    for (i, d) in dims.iter().enumerate() {
        f[3 + i] = *d as f32;
    }
    f[6] = spec.shape.volume() as f32;
    f[7] = spec.shape.surface_area() as f32;
    let pts = surface_points(&spec.shape, SURFACE_SAMPLES);
    for p in &pts {
        f[HISTOGRAM_OFFSET + histogram_bin(p.norm())] += 1.0 / SURFACE_SAMPLES as f32;
    }
    f[HISTOGRAM_OFFSET + HISTOGRAM_BINS] = spec.mass as f32;
    ObjectFeature(f)
}
