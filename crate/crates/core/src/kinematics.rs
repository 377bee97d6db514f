//! Arm kinematics helpers: damped-free Jacobian pseudoinverse step and
//! straight-line target interpolation.

use nalgebra::{DMatrix, DVector, RealField};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::se3::Vec3;

/// `JJ^T` condition numbers above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Minimum-norm joint increment `J^T (J J^T)^-1 e` for a full-row-rank `J`.
pub fn ik_pseudoinverse_step<T>(jacobian: &DMatrix<T>, error: &DVector<T>) -> Result<DVector<T>>
where
    T: Real + RealField,
{
    let (m, n) = jacobian.shape();
    if error.len() != m {
        return Err(Error::Shape {
            op: "ik_pseudoinverse_step",
            left: vec![m, n],
            right: vec![error.len()],
        });
    }
    if m == 0 || m > n {
        return Err(Error::invalid(format!(
            "jacobian must be wide with full row rank, got {m}x{n}"
        )));
    }
    let jjt = jacobian * jacobian.transpose();
    let eig = jjt.clone().symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for v in eig.eigenvalues.iter() {
        let v = Real::to_f64_lossy(*v);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::SingularJacobian { condition });
    }
    let chol = jjt
        .cholesky()
        .ok_or(Error::SingularJacobian { condition: f64::INFINITY })?;
    let y = chol.solve(error);
    Ok(jacobian.transpose() * y)
}

/// `(t/T) p_end + (1 - t/T) p` for `0 <= t <= T`.
pub fn interpolate_target<T: Real>(p: Vec3<T>, p_end: Vec3<T>, t: T, total: T) -> Result<Vec3<T>> {
    if !(total > T::zero()) {
        return Err(Error::invalid("trajectory duration must be positive"));
    }
    if !(t >= T::zero() && t <= total) {
        return Err(Error::invalid(format!(
            "interpolation time {:?} outside [0, {:?}]",
            t, total
        )));
    }
    let s = t / total;
    Ok(p_end * s + p * (T::one() - s))
}
