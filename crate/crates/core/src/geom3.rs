//! SO(3)/SE(3) arithmetic and the transform-space distance used by the reward.
//!
//! All transforms act on points as `p ↦ R·p + t`. Distances follow the
//! reward definition: the rotation term is the geodesic angle
//! `acos((tr(R₁R₂ᵀ) − 1) / 2)` in radians and the translation term is the
//! Euclidean norm of the translation difference in model units. The two are
//! added with unit weights.

use std::fmt;

use nalgebra::Matrix3;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Vector3 = nalgebra::Vector3<f64>;

/// Tolerance for orthonormality and determinant checks.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

const AXIS_TOLERANCE: f64 = 1e-12;

/// A proper rotation matrix (orthonormal, det +1).
#[derive(Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl fmt::Debug for RotationMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.0;
        write!(
            f,
            "RotationMatrix([[{}, {}, {}], [{}, {}, {}], [{}, {}, {}]])",
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)]
        )
    }
}

impl Default for RotationMatrix {
    fn default() -> Self {
        Self::identity()
    }
}

impl RotationMatrix {
    /// Validates orthonormality and the determinant within [`ROTATION_TOLERANCE`].
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("rotation matrix has non-finite entries"));
        }
        let residual = orthonormality_residual(&m);
        if residual > ROTATION_TOLERANCE {
            return Err(Error::validation(format!(
                "matrix is not orthonormal (max |RᵀR − I| = {residual:e})"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::validation(format!(
                "rotation determinant must be +1, got {det}"
            )));
        }
        Ok(Self(m))
    }

    /// Builds from nine row-major entries.
    pub fn from_row_slice(rows: &[f64]) -> Result<Self> {
        if rows.len() != 9 {
            return Err(Error::validation(format!(
                "rotation needs 9 entries, got {}",
                rows.len()
            )));
        }
        Self::new(Matrix3::from_row_slice(rows))
    }

    #[cfg(test)]
    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn about_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn about_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Row-major entries.
    pub fn to_row_array(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Same as [`transpose`](Self::transpose).
    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn mul(&self, rhs: &RotationMatrix) -> Self {
        Self(self.0 * rhs.0)
    }

    pub fn rotate(&self, v: &Vector3) -> Vector3 {
        self.0 * v
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Max absolute entry of `RᵀR − I`.
    pub fn orthonormality_residual(&self) -> f64 {
        orthonormality_residual(&self.0)
    }

    /// Nearest rotation in the Frobenius sense (polar factor via SVD).
    pub fn reorthonormalized(&self) -> Self {
        Self(nearest_rotation(&self.0))
    }

    /// Re-orthonormalizes only when drift exceeds [`ROTATION_TOLERANCE`].
    pub fn renormalize_if_drifting(self) -> Self {
        if self.orthonormality_residual() > ROTATION_TOLERANCE {
            self.reorthonormalized()
        } else {
            self
        }
    }

    /// Axis-angle extraction.
    ///
    /// The angle comes from `atan2(sin θ, cos θ)` with `sin θ` read from the
    /// skew-symmetric part; near π the axis is recovered from the symmetric
    /// part. At angle 0 the axis is reported as +x.
    pub fn to_axis_angle(&self) -> AxisAngle {
        let m = &self.0;
        let skew = Vector3::new(
            m[(2, 1)] - m[(1, 2)],
            m[(0, 2)] - m[(2, 0)],
            m[(1, 0)] - m[(0, 1)],
        );
        let sin = 0.5 * skew.norm();
        let cos = 0.5 * (m.trace() - 1.0);
        let angle = sin.atan2(cos);
        if angle < 1e-12 {
            return AxisAngle {
                axis: Vector3::x(),
                angle: 0.0,
            };
        }
        let axis = if angle < std::f64::consts::PI - 1e-6 {
            skew / (2.0 * sin)
        } else {
            // sym(R) + I ≈ 2 a aᵀ near π; take the best-conditioned column
            let b = ((m + m.transpose()) * 0.5 + Matrix3::identity()) * 0.5;
            let diag = [b[(0, 0)], b[(1, 1)], b[(2, 2)]];
            let col = (0..3)
                .max_by(|&i, &j| diag[i].total_cmp(&diag[j]))
                .unwrap_or(0);
            let mut a: Vector3 = b.column(col).into_owned();
            a /= a.norm();
            // resolve the sign with the (small) skew part when available
            if a.dot(&skew) < 0.0 {
                a = -a;
            }
            a
        };
        AxisAngle {
            axis: axis.normalize(),
            angle,
        }
    }
}

fn orthonormality_residual(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).amax()
}

/// Closest proper rotation to `m` (Frobenius norm).
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}

/// Unit axis and angle in `[0, π]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAngle {
    pub axis: Vector3,
    pub angle: f64,
}

impl AxisAngle {
    pub fn new(axis: Vector3, angle: f64) -> Result<Self> {
        if axis.iter().any(|v| !v.is_finite()) || !angle.is_finite() {
            return Err(Error::validation("axis-angle has non-finite values"));
        }
        if ((axis.norm()) - 1.0).abs() > AXIS_TOLERANCE {
            return Err(Error::validation(format!(
                "rotation axis must be unit length, got norm {}",
                axis.norm()
            )));
        }
        if !(0.0..=std::f64::consts::PI).contains(&angle) {
            return Err(Error::validation(format!(
                "rotation angle must lie in [0, π], got {angle}"
            )));
        }
        Ok(Self { axis, angle })
    }

    /// Rodrigues' formula.
    pub fn to_rotation(&self) -> RotationMatrix {
        rodrigues(&self.axis, self.angle)
    }
}

/// `R = I + sin θ K + (1 − cos θ) K²` for unit `axis`. Any real angle is accepted.
pub(crate) fn rodrigues(axis: &Vector3, angle: f64) -> RotationMatrix {
    let k = Matrix3::new(
        0.0, -axis.z, axis.y, //
        axis.z, 0.0, -axis.x, //
        -axis.y, axis.x, 0.0,
    );
    let (s, c) = angle.sin_cos();
    RotationMatrix(Matrix3::identity() + k * s + k * k * (1.0 - c))
}

pub fn rotation_from_axis_angle(aa: &AxisAngle) -> Result<RotationMatrix> {
    AxisAngle::new(aa.axis, aa.angle).map(|aa| aa.to_rotation())
}

pub fn rotation_to_axis_angle(r: &RotationMatrix) -> AxisAngle {
    r.to_axis_angle()
}

/// Geodesic angle between two rotations, `acos((tr(R₁R₂ᵀ) − 1) / 2)` with the
/// argument clamped to `[−1, 1]`.
pub fn rotation_distance(r1: &RotationMatrix, r2: &RotationMatrix) -> f64 {
    // acos((tr − 1)/2) written as atan2(sin, cos); acos loses half the digits near 0
    let m = r1.0 * r2.0.transpose();
    let c = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let s = 0.5
        * Vector3::new(
            m[(2, 1)] - m[(1, 2)],
            m[(0, 2)] - m[(2, 0)],
            m[(1, 0)] - m[(0, 1)],
        )
        .norm();
    s.atan2(c)
}

pub fn translation_distance(t1: &Vector3, t2: &Vector3) -> f64 {
    (t1 - t2).norm()
}

/// `D = D_t + D_R` with unit weights (model units plus radians).
pub fn transform_distance(a: &RigidTransform, b: &RigidTransform) -> f64 {
    translation_distance(&a.translation, &b.translation)
        + rotation_distance(&a.rotation, &b.rotation)
}

/// Rotation plus translation, acting as `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RigidTransform {
    pub rotation: RotationMatrix,
    pub translation: Vector3,
}

impl RigidTransform {
    pub fn new(rotation: RotationMatrix, translation: Vector3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_rotation(rotation: RotationMatrix) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    pub fn from_translation(translation: Vector3) -> Self {
        Self::new(RotationMatrix::identity(), translation)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation.mul(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -rt.rotate(&self.translation),
        }
    }

    pub fn apply(&self, p: &Vector3) -> Vector3 {
        self.rotation.rotate(p) + self.translation
    }
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn inverse(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

#[derive(Serialize, Deserialize)]
struct TransformRecord {
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl Serialize for RigidTransform {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        TransformRecord {
            rotation: self.rotation.to_row_array(),
            translation: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rec = TransformRecord::deserialize(deserializer)?;
        let rotation =
            RotationMatrix::from_row_slice(&rec.rotation).map_err(serde::de::Error::custom)?;
        if rec.translation.iter().any(|v| !v.is_finite()) {
            return Err(serde::de::Error::custom("translation must be finite"));
        }
        Ok(RigidTransform::new(
            rotation,
            Vector3::from(rec.translation),
        ))
    }
}
