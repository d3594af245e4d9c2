use nalgebra::{Matrix3, Matrix4, Point3, Rotation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the orthonormality and unit-determinant checks.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// A rigid SE(3) pose: `x ↦ R·x + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    /// Builds a transform, checking `RᵀR = I` and `det R = 1`.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite transform entry".into()));
        }
        if !is_rotation(&rotation) {
            return Err(Error::InvalidInput(
                "rotation is not orthonormal with unit determinant".into(),
            ));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        debug_assert!(is_rotation(&rotation));
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: &UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *rotation.to_rotation_matrix().matrix(),
            translation,
        }
    }

    /// Rotation by `angle` radians about `axis` (normalized internally), followed by `translation`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rot = if axis.norm() == 0.0 {
            Rotation3::identity()
        } else {
            Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle)
        };
        Self {
            rotation: *rot.matrix(),
            translation,
        }
    }

    /// Roll/pitch/yaw (radians, applied as `Rz(yaw)·Ry(pitch)·Rx(roll)`).
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64, translation: Vector3<f64>) -> Self {
        let rot = Rotation3::from_euler_angles(roll, pitch, yaw);
        Self {
            rotation: *rot.matrix(),
            translation,
        }
    }

    /// Row-major 4×4 homogeneous matrix.
    pub fn from_matrix4(m: &Matrix4<f64>) -> Result<Self> {
        let rotation = m.fixed_view::<3, 3>(0, 0).into_owned();
        let translation = m.fixed_view::<3, 1>(0, 3).into_owned();
        Self::new(rotation, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    #[inline]
    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle of `R` in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        let r = &self.rotation;
        let s = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm() * 0.5;
        let c = (r.trace() - 1.0) * 0.5;
        s.atan2(c)
    }

    /// Projects the rotation back onto SO(3) after accumulated round-off.
    pub fn renormalized(&self) -> RigidTransform {
        let q = UnitQuaternion::from_matrix(&self.rotation);
        RigidTransform {
            rotation: *q.to_rotation_matrix().matrix(),
            translation: self.translation,
        }
    }

    /// SE(3) exponential of a twist `(ω, v)`.
    pub fn exp(twist: &Vector6<f64>) -> RigidTransform {
        let omega = Vector3::new(twist[0], twist[1], twist[2]);
        let v = Vector3::new(twist[3], twist[4], twist[5]);
        let theta = omega.norm();
        let hat = skew(&omega);
        let hat2 = hat * hat;
        let (a, b, c) = if theta < 1e-8 {
            let t2 = theta * theta;
            (1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
        } else {
            let t2 = theta * theta;
            (
                theta.sin() / theta,
                (1.0 - theta.cos()) / t2,
                (theta - theta.sin()) / (t2 * theta),
            )
        };
        let rotation = Matrix3::identity() + hat * a + hat2 * b;
        let jacobian = Matrix3::identity() + hat * b + hat2 * c;
        RigidTransform {
            rotation,
            translation: jacobian * v,
        }
    }

    /// SE(3) logarithm, inverse of [`RigidTransform::exp`] for rotation angles below π.
    pub fn log(&self) -> Vector6<f64> {
        let omega = rotation_log(&self.rotation);
        let theta = omega.norm();
        let hat = skew(&omega);
        let hat2 = hat * hat;
        let coeff = if theta < 1e-8 {
            1.0 / 12.0 + theta * theta / 720.0
        } else {
            let half = 0.5 * theta;
            (1.0 - half * half.cos() / half.sin()) / (theta * theta)
        };
        let v_inv = Matrix3::identity() - hat * 0.5 + hat2 * coeff;
        let v = v_inv * self.translation;
        Vector6::new(omega[0], omega[1], omega[2], v[0], v[1], v[2])
    }
}

pub(crate) fn is_rotation(r: &Matrix3<f64>) -> bool {
    let err = r.transpose() * r - Matrix3::identity();
    err.iter().all(|e| e.abs() <= ROTATION_TOLERANCE)
        && (r.determinant() - 1.0).abs() <= ROTATION_TOLERANCE
}

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v[2], v[1], v[2], 0.0, -v[0], -v[1], v[0], 0.0)
}

/// SO(3) logarithm as an axis-angle vector.
pub(crate) fn rotation_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    q.scaled_axis()
}
