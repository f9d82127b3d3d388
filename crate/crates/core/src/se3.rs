//! Rigid-body actions and the ensemble aggregation formulas over SE(3).
//!
//! Positions are averaged arithmetically. Rotations are averaged by projecting
//! the arithmetic mean of the member matrices back onto SO(3) with an SVD
//! (the chordal L2 mean). Spread is summarised by the mean squared distance
//! to the mean position and the mean geodesic angle to the mean rotation.

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Tolerance on orthonormality and determinant for [`Rotation3::new`].
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Singular-value gap under which the chordal mean is treated as non-unique.
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;

/// A proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Rotation3(Matrix3<f64>);

impl Rotation3 {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates `m` as a rotation: `mᵀm = I` and `det(m) = 1`, both within
    /// [`ROTATION_TOLERANCE`].
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotARotation(f64::INFINITY));
        }
        let deviation = rotation_deviation(&m);
        if deviation > ROTATION_TOLERANCE {
            return Err(Error::NotARotation(deviation));
        }
        Ok(Self(m))
    }

    /// Exponential map of an axis-angle vector (Rodrigues).
    pub fn from_axis_angle(omega: &Vec3) -> Self {
        let theta = omega.norm();
        let k = hat(omega);
        if theta < 1e-12 {
            // second-order series keeps the result orthonormal to ~1e-24
            return Self(Matrix3::identity() + k + 0.5 * k * k);
        }
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / (theta * theta);
        Self(Matrix3::identity() + a * k + b * k * k)
    }

    pub fn about_x(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::new(angle, 0.0, 0.0))
    }

    pub fn about_y(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::new(0.0, angle, 0.0))
    }

    pub fn about_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::new(0.0, 0.0, angle))
    }

    /// Logarithm map: the axis-angle vector with angle in `[0, π]`.
    pub fn to_axis_angle(&self) -> Vec3 {
        let m = &self.0;
        let cos = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        let angle = cos.acos();
        let skew = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        if angle < 1e-6 {
            return 0.5 * skew;
        }
        if std::f64::consts::PI - angle > 1e-6 {
            return skew * (angle / (2.0 * angle.sin()));
        }
        // near π: axis from the symmetric part, sign from the skew part
        let b = (m + Matrix3::identity()) * 0.5;
        let mut axis = Vec3::new(
            b[(0, 0)].max(0.0).sqrt(),
            b[(1, 1)].max(0.0).sqrt(),
            b[(2, 2)].max(0.0).sqrt(),
        );
        let pivot = axis.imax();
        for i in 0..3 {
            if i != pivot && b[(pivot, i)] < 0.0 {
                axis[i] = -axis[i];
            }
        }
        if axis.dot(&skew) < 0.0 {
            axis = -axis;
        }
        axis.normalize() * angle
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Rotation angle in radians, `[0, π]`.
    pub fn angle(&self) -> f64 {
        trace_angle(self.0.trace())
    }
}

impl Default for Rotation3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Rotation3 {
    type Output = Rotation3;

    fn mul(self, rhs: Rotation3) -> Rotation3 {
        Rotation3(self.0 * rhs.0)
    }
}

impl TryFrom<[[f64; 3]; 3]> for Rotation3 {
    type Error = Error;

    fn try_from(rows: [[f64; 3]; 3]) -> Result<Self> {
        Rotation3::new(Matrix3::from_fn(|r, c| rows[r][c]))
    }
}

impl From<Rotation3> for [[f64; 3]; 3] {
    fn from(r: Rotation3) -> Self {
        let m = r.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }
}

/// An end-effector action: rotation and translation (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Rotation3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn new(rotation: Rotation3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(Rotation3::identity(), translation)
    }

    /// Builds a transform from `[tx, ty, tz, wx, wy, wz]` (meters, axis-angle radians).
    pub fn from_params(params: &[f64; 6]) -> Self {
        Self::new(
            Rotation3::from_axis_angle(&Vec3::new(params[3], params[4], params[5])),
            Vec3::new(params[0], params[1], params[2]),
        )
    }

    pub fn to_params(&self) -> [f64; 6] {
        let w = self.rotation.to_axis_angle();
        let t = self.translation;
        [t.x, t.y, t.z, w.x, w.y, w.z]
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.inverse();
        Self::new(rt, -rt.rotate(&self.translation))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation.rotate(&other.translation) + self.translation,
        )
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut h = Matrix4::identity();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        h.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        h
    }
}

/// Predictions of all ensemble members (or dropout samples) for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOutputs {
    members: Vec<RigidTransform>,
}

impl EnsembleOutputs {
    pub fn new(members: Vec<RigidTransform>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::TooFewMembers(members.len()));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[RigidTransform] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.members.iter().map(|m| m.translation).collect()
    }

    pub fn rotations(&self) -> Vec<Rotation3> {
        self.members.iter().map(|m| m.rotation).collect()
    }
}

/// Mean action together with its positional (m²) and rotational (rad) spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub action: RigidTransform,
    pub var_p: f64,
    pub var_r: f64,
}

pub fn validate_rotation(m: Matrix3<f64>) -> Result<Rotation3> {
    Rotation3::new(m)
}

pub fn mean_position(positions: &[Vec3]) -> Result<Vec3> {
    if positions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sum = positions.iter().fold(Vec3::zeros(), |acc, p| acc + p);
    Ok(sum / positions.len() as f64)
}

/// Proper rotation closest in Frobenius norm to the arithmetic mean `S` of
/// `rotations`: `U diag(1, 1, det(UVᵀ)) Vᵀ` for `S = U D Vᵀ`.
pub fn chordal_mean_rotation(rotations: &[Rotation3]) -> Result<Rotation3> {
    if rotations.is_empty() {
        return Err(Error::EmptyInput);
    }
    let s = rotations
        .iter()
        .fold(Matrix3::zeros(), |acc, r| acc + r.matrix())
        / rotations.len() as f64;
    project_to_rotation(&s)
}

/// Nearest proper rotation to an arbitrary 3×3 matrix.
pub fn project_to_rotation(s: &Matrix3<f64>) -> Result<Rotation3> {
    let svd = s.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateMean([f64::NAN; 3])),
    };
    // nalgebra does not order singular values; sort descending
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma = order.map(|i| svd.singular_values[i]);
    let u = Matrix3::from_columns(&order.map(|i| u.column(i).into_owned()));
    let v_t = Matrix3::from_rows(&order.map(|i| v_t.row(i).into_owned()));

    let d = (u * v_t).determinant().signum();
    let scale = sigma[0].max(1.0);
    let tied = sigma[1] - sigma[2] <= DEGENERACY_TOLERANCE * scale;
    let vanishing = sigma[2] <= DEGENERACY_TOLERANCE * scale;
    if tied && (d < 0.0 || vanishing) {
        return Err(Error::DegenerateMean(sigma));
    }
    let r = u * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * v_t;
    Rotation3::new(r)
}

/// Angle of the relative rotation `aᵀb`, in `[0, π]`.
pub fn geodesic_distance(a: &Rotation3, b: &Rotation3) -> f64 {
    trace_angle((a.matrix().transpose() * b.matrix()).trace())
}

pub fn position_variance(outputs: &EnsembleOutputs) -> Result<f64> {
    let positions = outputs.positions();
    let mean = mean_position(&positions)?;
    Ok(spread_about(&positions, &mean))
}

pub fn rotation_variance(outputs: &EnsembleOutputs) -> Result<f64> {
    let rotations = outputs.rotations();
    let mean = chordal_mean_rotation(&rotations)?;
    Ok(angular_spread_about(&rotations, &mean))
}

pub fn aggregate(outputs: &EnsembleOutputs) -> Result<Aggregate> {
    let positions = outputs.positions();
    let rotations = outputs.rotations();
    let p = mean_position(&positions)?;
    let r = chordal_mean_rotation(&rotations)?;
    Ok(Aggregate {
        action: RigidTransform::new(r, p),
        var_p: spread_about(&positions, &p),
        var_r: angular_spread_about(&rotations, &r),
    })
}

fn spread_about(positions: &[Vec3], mean: &Vec3) -> f64 {
    positions.iter().map(|p| (p - mean).norm_squared()).sum::<f64>() / positions.len() as f64
}

fn angular_spread_about(rotations: &[Rotation3], mean: &Rotation3) -> f64 {
    rotations
        .iter()
        .map(|r| geodesic_distance(r, mean))
        .sum::<f64>()
        / rotations.len() as f64
}

fn trace_angle(trace: f64) -> f64 {
    ((trace - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

fn rotation_deviation(m: &Matrix3<f64>) -> f64 {
    let ortho = (m.transpose() * m - Matrix3::identity()).norm();
    let det = (m.determinant() - 1.0).abs();
    ortho.max(det)
}

fn hat(w: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}
