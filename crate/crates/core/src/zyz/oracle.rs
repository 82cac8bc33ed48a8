use std::fmt;

use serde::{Deserialize, Serialize};

use super::{rot_from_zyz, signed_beta, zyz_from_rot, Rot3, ZyzAngles, ZyzError};

/// End-effector pose in the robot base frame; positions in millimetres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseSpec", into = "PoseSpec")]
pub struct Pose {
    pub position: [f64; 3],
    pub rotation: Rot3,
}

impl Pose {
    pub fn new(position: [f64; 3], rotation: Rot3) -> Result<Self, ZyzError> {
        if position.iter().any(|v| !v.is_finite()) {
            return Err(ZyzError::NonFinite);
        }
        Ok(Self {
            position,
            rotation: Rot3::new(rotation.0)?,
        })
    }

    pub fn from_zyz(position: [f64; 3], angles: ZyzAngles) -> Result<Self, ZyzError> {
        Self::new(position, rot_from_zyz(angles))
    }

    pub fn angles(&self) -> ZyzAngles {
        // rotation validated at construction
        zyz_from_rot(&self.rotation).map(|(a, _)| a).unwrap_or(ZyzAngles::new(0.0, 0.0, 0.0))
    }

    pub fn norm(&self) -> f64 {
        self.position.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn translated(&self, by: [f64; 3]) -> Pose {
        Pose {
            position: std::array::from_fn(|i| self.position[i] + by[i]),
            rotation: self.rotation,
        }
    }

    pub fn with_rotation(&self, rotation: Rot3) -> Pose {
        Pose {
            position: self.position,
            rotation,
        }
    }
}

/// Serialized pose: position plus either ZYZ angles in degrees or a row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub position_mm: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zyz_deg: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[[f64; 3]; 3]>,
}

impl TryFrom<PoseSpec> for Pose {
    type Error = String;

    fn try_from(spec: PoseSpec) -> Result<Self, String> {
        let rotation = match (spec.zyz_deg, spec.rotation) {
            (Some([a, b, g]), None) => rot_from_zyz(ZyzAngles::from_degrees(a, b, g)),
            (None, Some(m)) => Rot3(m),
            (None, None) => return Err("pose needs `zyz_deg` or `rotation`".into()),
            (Some(_), Some(_)) => return Err("pose has both `zyz_deg` and `rotation`".into()),
        };
        Pose::new(spec.position_mm, rotation).map_err(|e| e.to_string())
    }
}

impl From<Pose> for PoseSpec {
    fn from(p: Pose) -> Self {
        PoseSpec {
            position_mm: p.position,
            zyz_deg: None,
            rotation: Some(p.rotation.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointLimit {
    pub min_deg: f64,
    pub max_deg: f64,
    pub margin_deg: f64,
}

/// Reach, safe workspace box and joint limits of the 6-axis arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KinematicModel {
    pub reach_mm: f64,
    pub box_x_mm: [f64; 2],
    pub box_y_mm: [f64; 2],
    pub box_z_mm: [f64; 2],
    /// J1..J6.
    pub joints: [JointLimit; 6],
}

impl Default for KinematicModel {
    fn default() -> Self {
        let j = |limit: f64, margin: f64| JointLimit {
            min_deg: -limit,
            max_deg: limit,
            margin_deg: margin,
        };
        Self {
            reach_mm: 900.0,
            box_x_mm: [-500.0, 500.0],
            box_y_mm: [-500.0, 500.0],
            box_z_mm: [0.0, 800.0],
            joints: [
                j(360.0, 10.0),
                j(95.0, 5.0),
                j(135.0, 5.0),
                j(360.0, 10.0),
                j(135.0, 5.0),
                j(360.0, 10.0),
            ],
        }
    }
}

impl KinematicModel {
    pub fn in_box(&self, p: &[f64; 3]) -> bool {
        let within = |v: f64, [lo, hi]: [f64; 2]| v >= lo && v <= hi;
        within(p[0], self.box_x_mm) && within(p[1], self.box_y_mm) && within(p[2], self.box_z_mm)
    }

    pub fn within_reach(&self, p: &[f64; 3]) -> bool {
        p.iter().map(|v| v * v).sum::<f64>().sqrt() <= self.reach_mm
    }

    /// Largest admissible `|signed beta|` in degrees: 90° less the wrist (J5) margin.
    pub fn beta_limit_deg(&self) -> f64 {
        90.0 - self.joints[4].margin_deg
    }

    /// Geometric feasibility surrogate: inside the box, within reach, and
    /// `|signed beta|` at most `90° − J5 margin`.
    pub fn ik_feasible(&self, pose: &Pose) -> bool {
        self.position_ok(&pose.position)
            && signed_beta(pose.angles().beta).to_degrees().abs() <= self.beta_limit_deg()
    }

    pub fn position_ok(&self, p: &[f64; 3]) -> bool {
        self.in_box(p) && self.within_reach(p)
    }
}

/// Boolean stand-in for inverse kinematics.
///
/// Implementations must be pure. `cartesian_feasible` answers for a straight-line
/// Cartesian move onto the pose and must accept every pose `feasible` accepts.
pub trait FeasibilityOracle: Send + Sync + fmt::Debug {
    fn feasible(&self, pose: &Pose) -> bool;

    fn cartesian_feasible(&self, pose: &Pose) -> bool {
        self.feasible(pose)
    }

    fn name(&self) -> &str;
}

#[derive(Clone, Debug, Default)]
pub struct GeometricOracle {
    pub model: KinematicModel,
}

impl GeometricOracle {
    pub fn new(model: KinematicModel) -> Self {
        Self { model }
    }
}

impl FeasibilityOracle for GeometricOracle {
    fn feasible(&self, pose: &Pose) -> bool {
        self.model.ik_feasible(pose)
    }

    /// Linear moves are executed by the Cartesian controller, so only the
    /// workspace constraints apply.
    fn cartesian_feasible(&self, pose: &Pose) -> bool {
        self.model.position_ok(&pose.position)
    }

    fn name(&self) -> &str {
        "geometric"
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AlwaysFeasible;

impl FeasibilityOracle for AlwaysFeasible {
    fn feasible(&self, _: &Pose) -> bool {
        true
    }

    fn name(&self) -> &str {
        "always"
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct NeverFeasible;

impl FeasibilityOracle for NeverFeasible {
    fn feasible(&self, _: &Pose) -> bool {
        false
    }

    fn name(&self) -> &str {
        "never"
    }
}

/// Rejects poses matching any listed rule, accepts the rest.
#[derive(Clone, Debug, Default)]
pub struct ScriptedOracle {
    /// Half-open bands `(lo, hi]` of extracted beta, degrees.
    pub reject_beta_deg: Vec<(f64, f64)>,
    /// Positions (mm) rejected within 1e-6 mm.
    pub reject_positions: Vec<[f64; 3]>,
    pub label: String,
}

impl ScriptedOracle {
    /// Slack on the open lower bound of a beta band, radians. A clamped beta of
    /// exactly 89.9° comes back from the matrix round trip within ~1e-15.
    const BAND_SLACK: f64 = 1e-9;

    /// Rejects extracted beta in `(89.9°, 90°]`; accepts anything the clamp produces.
    pub fn clamp_sensitive() -> Self {
        Self {
            reject_beta_deg: vec![(89.9, 90.0)],
            reject_positions: Vec::new(),
            label: "clamp-sensitive".into(),
        }
    }
}

impl FeasibilityOracle for ScriptedOracle {
    fn feasible(&self, pose: &Pose) -> bool {
        let beta = pose.angles().beta;
        let in_band = self.reject_beta_deg.iter().any(|&(lo, hi)| {
            beta > lo.to_radians() + Self::BAND_SLACK && beta <= hi.to_radians() + Self::BAND_SLACK
        });
        let at_position = self.reject_positions.iter().any(|p| {
            p.iter()
                .zip(pose.position.iter())
                .all(|(a, b)| (a - b).abs() < 1e-6)
        });
        !(in_band || at_position)
    }

    fn name(&self) -> &str {
        &self.label
    }
}

/// Shipped oracle configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    Geometric,
    Always,
    Never,
    ClampSensitive,
}

impl OracleKind {
    pub const ALL: [OracleKind; 4] = [
        OracleKind::Geometric,
        OracleKind::Always,
        OracleKind::Never,
        OracleKind::ClampSensitive,
    ];

    pub fn build(self, model: &KinematicModel) -> Box<dyn FeasibilityOracle> {
        match self {
            OracleKind::Geometric => Box::new(GeometricOracle::new(model.clone())),
            OracleKind::Always => Box::new(AlwaysFeasible),
            OracleKind::Never => Box::new(NeverFeasible),
            OracleKind::ClampSensitive => Box::new(ScriptedOracle::clamp_sensitive()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OracleKind::Geometric => "geometric",
            OracleKind::Always => "always",
            OracleKind::Never => "never",
            OracleKind::ClampSensitive => "clamp-sensitive",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}
