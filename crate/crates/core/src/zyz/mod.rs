//! ZYZ Euler angles, the singularity proximity index, and motion-safety planning.
//!
//! Extraction returns `beta ∈ [0, π]`. The guard and the clamp operate on the
//! *signed* middle angle, `beta` folded into `(-π/2, π/2]` (see [`signed_beta`]),
//! so the symmetric clamp band `[-89.9°, 89.9°]` and the proximity index
//! `1 - |cos beta|` agree on where the dangerous region is: both treat
//! `|signed beta| → 90°` as near-singular.
//!
//! Worked examples of the fold:
//!
//! | extracted beta | signed beta | clamped | back to [0, π] |
//! |---------------:|------------:|--------:|---------------:|
//! | 45°            | 45°         | 45°     | 45°            |
//! | 90°            | 90°         | 89.9°   | 89.9°          |
//! | 90.05°         | -89.95°     | -89.9°  | 90.1°          |
//! | 180°           | 0°          | 0°      | 180°           |

mod oracle;
mod plan;

pub use oracle::{
    AlwaysFeasible, FeasibilityOracle, GeometricOracle, JointLimit, KinematicModel, NeverFeasible,
    OracleKind, Pose, PoseSpec, ScriptedOracle,
};
pub use plan::{
    bundled_suite, guard_benchmark, home_pose, near_singular_specs, near_singular_suite,
    safe_regrasp, singularity_guard, SUITE_SEED, SUITE_SIZE,
    BenchmarkSummary, GuardConfig, Outcome, PlanStep, RegraspPlan, RegraspStep, RollFrame,
};

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::Mul;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Orthonormality tolerance for [`Rot3`] (Frobenius norm of `RᵀR - I`).
pub const ORTHO_TOL: f64 = 1e-9;
/// `|sin beta|` below which extraction is treated as gimbal-locked.
pub const DEGENERATE_SIN: f64 = 1e-7;
/// Bound of the beta clamp, in degrees.
pub const CLAMP_DEG: f64 = 89.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ZyzError {
    #[error("matrix is not a proper rotation (orthonormality error {ortho:.3e}, det {det:.12})")]
    NotARotation { ortho: f64, det: f64 },
    #[error("non-finite value in pose")]
    NonFinite,
}

/// A 3×3 proper rotation matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rot3(pub [[f64; 3]; 3]);

impl Rot3 {
    pub const IDENTITY: Rot3 = Rot3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    /// Validates orthonormality and `det = +1` within [`ORTHO_TOL`].
    pub fn new(m: [[f64; 3]; 3]) -> Result<Self, ZyzError> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ZyzError::NonFinite);
        }
        let r = Rot3(m);
        let ortho = r.orthonormality_error();
        let det = r.determinant();
        if ortho > ORTHO_TOL || (det - 1.0).abs() > ORTHO_TOL {
            return Err(ZyzError::NotARotation { ortho, det });
        }
        Ok(r)
    }

    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rot3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn about_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rot3([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Rot3(std::array::from_fn(|i| std::array::from_fn(|j| m[j][i])))
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// `‖RᵀR − I‖_F`.
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.transpose() * *self;
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let d = p.0[i][j] - if i == j { 1.0 } else { 0.0 };
                acc += d * d;
            }
        }
        acc.sqrt()
    }

    pub fn frobenius_distance(&self, other: &Rot3) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl Mul for Rot3 {
    type Output = Rot3;

    fn mul(self, rhs: Rot3) -> Rot3 {
        let (a, b) = (&self.0, &rhs.0);
        Rot3(std::array::from_fn(|i| {
            std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum())
        }))
    }
}

/// ZYZ Euler triple in radians: `R = Rz(alpha) · Ry(beta) · Rz(gamma)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZyzAngles {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl ZyzAngles {
    pub const fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn from_degrees(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self::new(alpha.to_radians(), beta.to_radians(), gamma.to_radians())
    }

    pub fn to_degrees(self) -> [f64; 3] {
        [
            self.alpha.to_degrees(),
            self.beta.to_degrees(),
            self.gamma.to_degrees(),
        ]
    }
}

/// Closed-form ZYZ matrix.
pub fn rot_from_zyz(a: ZyzAngles) -> Rot3 {
    let (sa, ca) = a.alpha.sin_cos();
    let (sb, cb) = a.beta.sin_cos();
    let (sg, cg) = a.gamma.sin_cos();
    Rot3([
        [ca * cb * cg - sa * sg, -ca * cb * sg - sa * cg, ca * sb],
        [sa * cb * cg + ca * sg, -sa * cb * sg + ca * cg, sa * sb],
        [-sb * cg, sb * sg, cb],
    ])
}

/// Wraps into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Extracts ZYZ angles with `beta ∈ [0, π]`. The flag is `true` at gimbal lock
/// (`|sin beta| < 1e-7`), where `gamma` is fixed to 0 and `alpha` carries the
/// whole rotation about z.
pub fn zyz_from_rot(r: &Rot3) -> Result<(ZyzAngles, bool), ZyzError> {
    let r = Rot3::new(r.0)?;
    let m = &r.0;
    let beta = m[2][2].clamp(-1.0, 1.0).acos();
    if beta.sin().abs() < DEGENERATE_SIN {
        let alpha = if m[2][2] > 0.0 {
            m[1][0].atan2(m[0][0])
        } else {
            (-m[1][0]).atan2(m[1][1])
        };
        return Ok((ZyzAngles::new(wrap_angle(alpha), beta, 0.0), true));
    }
    let alpha = m[1][2].atan2(m[0][2]);
    let gamma = m[2][1].atan2(-m[2][0]);
    Ok((
        ZyzAngles::new(wrap_angle(alpha), beta, wrap_angle(gamma)),
        false,
    ))
}

/// `1 - |cos beta|`: 0 far from the singular band, 1 at `beta = ±90°`.
pub fn proximity_index(beta: f64) -> f64 {
    1.0 - beta.cos().abs()
}

/// Folds an extracted `beta ∈ [0, π]` into `(-π/2, π/2]`.
pub fn signed_beta(beta: f64) -> f64 {
    if beta > FRAC_PI_2 {
        beta - PI
    } else {
        beta
    }
}

/// Maps a (possibly adjusted) signed beta back into `[0, π]` on the same side
/// of 90° that `original` was folded from. Folding alone is lossy: 0° and 180°
/// both fold to 0.
pub fn unfold_beta(signed: f64, original: f64) -> f64 {
    if original > FRAC_PI_2 {
        signed + PI
    } else {
        signed
    }
}

/// Clamps a signed beta into `[-89.9°, 89.9°]`.
pub fn clamp_beta(beta: f64) -> f64 {
    let bound = CLAMP_DEG.to_radians();
    beta.clamp(-bound, bound)
}
