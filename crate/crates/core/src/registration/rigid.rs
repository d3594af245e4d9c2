use nalgebra::{Matrix3, Point3, Vector3};

use crate::cloudio::RigidTransform;
use crate::error::{Error, Result};

/// Least-squares rigid transform mapping `source[i]` onto `target[i]` (Kabsch / Umeyama
/// without scale). Reflections are rejected by flipping the weakest singular direction.
pub fn best_rigid_transform(source: &[Point3<f64>], target: &[Point3<f64>]) -> Result<RigidTransform> {
    if source.len() != target.len() {
        return Err(Error::InvalidInput(format!(
            "{} source points vs {} target points",
            source.len(),
            target.len()
        )));
    }
    let n = source.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("{n} correspondences, need at least 3")));
    }
    let inv = 1.0 / n as f64;
    let src_mean = source.iter().fold(Vector3::zeros(), |a, p| a + p.coords) * inv;
    let tgt_mean = target.iter().fold(Vector3::zeros(), |a, p| a + p.coords) * inv;
    let mut cross = Matrix3::zeros();
    for (p, q) in source.iter().zip(target) {
        cross += (p.coords - src_mean) * (q.coords - tgt_mean).transpose();
    }
    let svd = cross.svd(true, true);
    let s = svd.singular_values;
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::Degenerate("SVD did not converge".into()));
    };
    // ordered descending; rank < 2 means the rotation is not determined
    if !(s[0] > 0.0) || s[1] <= 1e-12 * s[0] {
        return Err(Error::Degenerate(
            "cross-covariance has rank < 2 (collinear or coincident points)".into(),
        ));
    }
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let translation = tgt_mean - rotation * src_mean;
    Ok(RigidTransform::from_parts_unchecked(rotation, translation))
}
