//! Rigid-body pose algebra.
//!
//! Orientations use intrinsic XYZ Euler angles everywhere in the crate:
//! `R = Rx(roll) * Ry(pitch) * Rz(yaw)`. Angles stored in a [`Pose6`] are
//! always wrapped to `(-pi, pi]`, which makes the 6-vector encoding used by
//! the grasp memory canonical.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{wrap_angle, Real};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn unit_x() -> Self {
        Self::new(T::one(), T::zero(), T::zero())
    }

    pub fn unit_y() -> Self {
        Self::new(T::zero(), T::one(), T::zero())
    }

    pub fn unit_z() -> Self {
        Self::new(T::zero(), T::zero(), T::one())
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn norm_xy(self) -> T {
        (self.x * self.x + self.y * self.y).sqrt()
    }

    /// Unit vector, or `None` for (near) zero length.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > T::epsilon() {
            Some(self * (T::one() / n))
        } else {
            None
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn map(self, f: impl Fn(T) -> T) -> Self {
        Self::new(f(self.x), f(self.y), f(self.z))
    }

    pub fn max_abs_diff(self, o: Self) -> T {
        (self.x - o.x).abs().max((self.y - o.y).abs()).max((self.z - o.z).abs())
    }

    /// Scales the vector down so its norm does not exceed `limit`.
    pub fn clamp_norm(self, limit: T) -> Self {
        let n = self.norm();
        if n > limit && n > T::zero() {
            self * (limit / n)
        } else {
            self
        }
    }

    pub fn cast<U: Real>(self) -> Vec3<U> {
        Vec3::new(
            U::lit(self.x.to_f64_lossy()),
            U::lit(self.y.to_f64_lossy()),
            U::lit(self.z.to_f64_lossy()),
        )
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Real> Mat3<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    pub fn rot_x(a: T) -> Self {
        let (s, c) = a.sin_cos();
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[o, z, z], [z, c, -s], [z, s, c]],
        }
    }

    pub fn rot_y(a: T) -> Self {
        let (s, c) = a.sin_cos();
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[c, z, s], [z, o, z], [-s, z, c]],
        }
    }

    pub fn rot_z(a: T) -> Self {
        let (s, c) = a.sin_cos();
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[c, -s, z], [s, c, z], [z, z, o]],
        }
    }

    /// Matrix whose columns are `a`, `b`, `c`.
    pub fn from_columns(a: Vec3<T>, b: Vec3<T>, c: Vec3<T>) -> Self {
        Self {
            m: [[a.x, b.x, c.x], [a.y, b.y, c.y], [a.z, b.z, c.z]],
        }
    }

    pub fn column(&self, j: usize) -> Vec3<T> {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    pub fn transpose(&self) -> Self {
        let mut t = *self;
        for (i, row) in self.m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                t.m[j][i] = *v;
            }
        }
        t
    }

    pub fn mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        let r = |i: usize| self.m[i][0] * v.x + self.m[i][1] * v.y + self.m[i][2] * v.z;
        Vec3::new(r(0), r(1), r(2))
    }

    pub fn det(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Largest absolute entry of `R * R^T - I`.
    pub fn orthonormality_error(&self) -> T {
        let p = *self * self.transpose();
        let id = Self::identity();
        let mut worst = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((p.m[i][j] - id.m[i][j]).abs());
            }
        }
        worst
    }

    /// Geodesic angle between two rotations.
    pub fn angle_to(&self, other: &Self) -> T {
        let rel = self.transpose() * *other;
        let tr = rel.m[0][0] + rel.m[1][1] + rel.m[2][2];
        let c = ((tr - T::one()) / T::lit(2.0)).max(-T::one()).min(T::one());
        c.acos()
    }
}

impl<T: Real> Mul for Mat3<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut r = [[T::zero(); 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j] + self.m[i][2] * o.m[2][j];
            }
        }
        Self { m: r }
    }
}

/// 6-DoF pose: position plus intrinsic XYZ Euler angles wrapped to `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose6<T> {
    pub position: Vec3<T>,
    pub orientation: Vec3<T>,
}

impl<T: Real> Pose6<T> {
    pub fn new(position: Vec3<T>, orientation: Vec3<T>) -> Self {
        Self {
            position,
            orientation: orientation.map(wrap_angle),
        }
    }

    pub fn identity() -> Self {
        Self::new(Vec3::zero(), Vec3::zero())
    }

    pub fn from_translation(t: Vec3<T>) -> Self {
        Self::new(t, Vec3::zero())
    }

    /// Planar pose: position and heading about +z.
    pub fn from_xyz_yaw(x: T, y: T, z: T, yaw: T) -> Self {
        Self::new(Vec3::new(x, y, z), Vec3::new(T::zero(), T::zero(), yaw))
    }

    pub fn from_rotation(position: Vec3<T>, rotation: &Mat3<T>) -> Self {
        Self::new(position, euler_from_rotation(rotation))
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.orientation.is_finite()
    }

    pub fn to_transform(&self) -> Result<Transform<T>> {
        euler_to_transform(self)
    }

    pub fn rotation(&self) -> Mat3<T> {
        rotation_from_euler(self.orientation)
    }

    /// Maps a point expressed in this frame into the parent frame.
    pub fn transform_point(&self, p: Vec3<T>) -> Vec3<T> {
        self.rotation().mul_vec(p) + self.position
    }

    pub fn inverse(&self) -> Self {
        transform_to_euler(&Transform::from_pose(self).inverse())
    }

    pub fn compose(&self, other: &Self) -> Self {
        compose(self, other)
    }

    pub fn cast<U: Real>(&self) -> Pose6<U> {
        Pose6::new(self.position.cast(), self.orientation.cast())
    }
}

/// Linear and angular velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist<T> {
    pub linear: Vec3<T>,
    pub angular: Vec3<T>,
}

impl<T: Real> Twist<T> {
    pub fn zero() -> Self {
        Self {
            linear: Vec3::zero(),
            angular: Vec3::zero(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.linear.is_finite() && self.angular.is_finite()
    }
}

/// Rotation matrix plus translation; the canonical form for composition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> Transform<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zero(),
        }
    }

    fn from_pose(p: &Pose6<T>) -> Self {
        Self {
            rotation: rotation_from_euler(p.orientation),
            translation: p.position,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -rt.mul_vec(self.translation),
        }
    }

    pub fn apply(&self, p: Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(p) + self.translation
    }
}

impl<T: Real> Mul for Transform<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self {
            rotation: self.rotation * o.rotation,
            translation: self.rotation.mul_vec(o.translation) + self.translation,
        }
    }
}

fn rotation_from_euler<T: Real>(e: Vec3<T>) -> Mat3<T> {
    Mat3::rot_x(e.x) * Mat3::rot_y(e.y) * Mat3::rot_z(e.z)
}

/// Intrinsic XYZ Euler angles of a rotation matrix.
pub fn euler_from_rotation<T: Real>(r: &Mat3<T>) -> Vec3<T> {
    let m = &r.m;
    let sin_pitch = m[0][2].max(-T::one()).min(T::one());
    let pitch = sin_pitch.asin();
    let cos_pitch = pitch.cos();
    if cos_pitch > T::lit(1e-9) {
        let roll = (-m[1][2]).atan2(m[2][2]);
        let yaw = (-m[0][1]).atan2(m[0][0]);
        Vec3::new(roll, pitch, yaw)
    } else {
        // Gimbal lock: roll and yaw act about the same axis, put it all in roll.
        let roll = m[2][1].atan2(m[1][1]);
        Vec3::new(roll, pitch, T::zero())
    }
}

pub fn euler_to_transform<T: Real>(p: &Pose6<T>) -> Result<Transform<T>> {
    if !p.is_finite() {
        return Err(Error::invalid("pose contains non-finite values"));
    }
    Ok(Transform::from_pose(p))
}

pub fn transform_to_euler<T: Real>(t: &Transform<T>) -> Pose6<T> {
    Pose6::new(t.translation, euler_from_rotation(&t.rotation))
}

/// Pose of frame `b` expressed through frame `a`.
pub fn compose<T: Real>(a: &Pose6<T>, b: &Pose6<T>) -> Pose6<T> {
    transform_to_euler(&(Transform::from_pose(a) * Transform::from_pose(b)))
}

/// Re-expresses an object-local grasp pose in the frame the object pose is given in.
pub fn grasp_to_world<T: Real>(rel: &Pose6<T>, obj: &Pose6<T>) -> Pose6<T> {
    compose(obj, rel)
}

/// `[px, py, pz, rx, ry, rz]`.
pub fn vec6_encode<T: Real>(p: &Pose6<T>) -> [T; 6] {
    [
        p.position.x,
        p.position.y,
        p.position.z,
        p.orientation.x,
        p.orientation.y,
        p.orientation.z,
    ]
}

pub fn vec6_decode<T: Real>(v: &[T; 6]) -> Result<Pose6<T>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("6-vector contains non-finite values"));
    }
    Ok(Pose6::new(Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5])))
}

/// Position distance and geodesic rotation angle between two poses.
pub fn pose_error<T: Real>(a: &Pose6<T>, b: &Pose6<T>) -> (T, T) {
    ((a.position - b.position).norm(), a.rotation().angle_to(&b.rotation()))
}
