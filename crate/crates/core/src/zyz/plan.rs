//! Singularity guard, safe regrasp and the guard benchmark.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    clamp_beta, proximity_index, rot_from_zyz, signed_beta, unfold_beta, FeasibilityOracle,
    Pose, PoseSpec, Rot3, ZyzAngles,
};
use crate::rng::{stream, Stream};

/// Which frame the wrist-roll intermediate rotation acts in.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RollFrame {
    /// `current · rotZ(90°)`.
    #[default]
    Tool,
    /// `rotZ(90°) · current`.
    Base,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuardConfig {
    /// Proximity index above which a pose counts as near-singular.
    pub pi_threshold: f64,
    /// `|signed beta|` above which the regrasp triggers, degrees.
    pub beta_threshold_deg: f64,
    pub retract_mm: f64,
    pub roll_frame: RollFrame,
}

impl Default for GuardConfig {
    fn default() -> Self {
        Self {
            pi_threshold: 0.9,
            // |cos beta| = 0.1, the same band as pi_threshold
            beta_threshold_deg: 0.1f64.acos().to_degrees(),
            retract_mm: 50.0,
            roll_frame: RollFrame::Tool,
        }
    }
}

impl GuardConfig {
    fn near_singular(&self, beta: f64) -> bool {
        proximity_index(beta) > self.pi_threshold
    }
}

/// One recovery action. Variants are declared in execution order.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegraspStep {
    ClampBeta,
    /// J5 roll, signed degrees.
    WristClearance { degrees: f64 },
    /// Vertical retraction, then open the gripper.
    RetractUp { mm: f64 },
    /// Corrective ZYZ rotation `[0, 0, 90°]`, then close the gripper.
    CorrectiveRotation,
    /// Intermediate orientation `[alpha, 180°, gamma]`.
    AlignIntermediate,
    LinearCartesianFallback,
}

impl RegraspStep {
    /// 1-based position in the recovery sequence.
    pub fn ordinal(&self) -> usize {
        match self {
            RegraspStep::ClampBeta => 1,
            RegraspStep::WristClearance { .. } => 2,
            RegraspStep::RetractUp { .. } => 3,
            RegraspStep::CorrectiveRotation => 4,
            RegraspStep::AlignIntermediate => 5,
            RegraspStep::LinearCartesianFallback => 6,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RegraspStep::ClampBeta => "clamp_beta",
            RegraspStep::WristClearance { .. } => "wrist_clearance",
            RegraspStep::RetractUp { .. } => "retract_up_open_gripper",
            RegraspStep::CorrectiveRotation => "corrective_rotation_close_gripper",
            RegraspStep::AlignIntermediate => "align_intermediate",
            RegraspStep::LinearCartesianFallback => "linear_cartesian_fallback",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub step: RegraspStep,
    pub pose: Pose,
    pub accepted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    DirectSuccess,
    GuardedSuccess,
    RegraspSuccess,
    Infeasible,
}

impl Outcome {
    pub fn is_success(self) -> bool {
        self != Outcome::Infeasible
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegraspPlan {
    /// Motion waypoints executed on success (empty when infeasible).
    pub waypoints: Vec<Pose>,
    pub steps: Vec<PlanStep>,
    pub outcome: Outcome,
}

impl RegraspPlan {
    fn direct(target: &Pose) -> Self {
        Self {
            waypoints: vec![*target],
            steps: Vec::new(),
            outcome: Outcome::DirectSuccess,
        }
    }

    /// Motions commanded: waypoints plus attempted recovery steps.
    pub fn motion_count(&self) -> usize {
        self.waypoints.len() + self.steps.len()
    }
}

fn with_beta(pose: &Pose, a: ZyzAngles, beta: f64) -> Pose {
    pose.with_rotation(rot_from_zyz(ZyzAngles::new(a.alpha, beta, a.gamma)))
}

fn clamped(pose: &Pose, a: ZyzAngles) -> Pose {
    with_beta(pose, a, unfold_beta(clamp_beta(signed_beta(a.beta)), a.beta))
}

/// The six-step recovery sequence, stopping at the first step whose pose the
/// oracle accepts.
fn regrasp_sequence(target: &Pose, cfg: &GuardConfig, oracle: &dyn FeasibilityOracle) -> RegraspPlan {
    let a = target.angles();

    let p1 = clamped(target, a);
    let s = clamp_beta(signed_beta(a.beta));
    let roll = if s >= 0.0 { -FRAC_PI_2 } else { FRAC_PI_2 };
    let p2 = with_beta(target, a, unfold_beta(s + roll, a.beta));
    let p3 = p2.translated([0.0, 0.0, cfg.retract_mm]);
    let p4 = Pose {
        position: target.position,
        rotation: p3.rotation * Rot3::about_z(FRAC_PI_2),
    };
    let p5 = with_beta(target, a, PI);

    let candidates = [
        (RegraspStep::ClampBeta, p1),
        (
            RegraspStep::WristClearance {
                degrees: roll.to_degrees(),
            },
            p2,
        ),
        (RegraspStep::RetractUp { mm: cfg.retract_mm }, p3),
        (RegraspStep::CorrectiveRotation, p4),
        (RegraspStep::AlignIntermediate, p5),
        (RegraspStep::LinearCartesianFallback, *target),
    ];

    let mut steps = Vec::with_capacity(candidates.len());
    for (step, pose) in candidates {
        let accepted = if step == RegraspStep::LinearCartesianFallback {
            oracle.cartesian_feasible(&pose)
        } else {
            oracle.feasible(&pose)
        };
        steps.push(PlanStep {
            step,
            pose,
            accepted,
        });
        if accepted {
            return RegraspPlan {
                waypoints: vec![pose],
                steps,
                outcome: Outcome::RegraspSuccess,
            };
        }
    }
    RegraspPlan {
        waypoints: Vec::new(),
        steps,
        outcome: Outcome::Infeasible,
    }
}

/// Standalone regrasp check: runs the recovery sequence only when the target is
/// near-singular or its `|signed beta|` exceeds the configured threshold.
pub fn safe_regrasp(target: &Pose, cfg: &GuardConfig, oracle: &dyn FeasibilityOracle) -> RegraspPlan {
    let beta = target.angles().beta;
    let over = signed_beta(beta).to_degrees().abs() > cfg.beta_threshold_deg;
    if cfg.near_singular(beta) || over {
        regrasp_sequence(target, cfg, oracle)
    } else {
        RegraspPlan::direct(target)
    }
}

/// Two-step guarded motion `current → current·rotZ(90°) → target`, clamping beta
/// first when the target is near-singular. Falls back to the recovery sequence
/// when the oracle rejects either step.
pub fn singularity_guard(
    target: &Pose,
    current: &Pose,
    cfg: &GuardConfig,
    oracle: &dyn FeasibilityOracle,
) -> RegraspPlan {
    let a = target.angles();
    let triggered = cfg.near_singular(a.beta);
    let goal = if triggered { clamped(target, a) } else { *target };

    let roll = Rot3::about_z(FRAC_PI_2);
    let intermediate = current.with_rotation(match cfg.roll_frame {
        RollFrame::Tool => current.rotation * roll,
        RollFrame::Base => roll * current.rotation,
    });

    if oracle.feasible(&intermediate) && oracle.feasible(&goal) {
        let steps = if triggered {
            vec![PlanStep {
                step: RegraspStep::ClampBeta,
                pose: goal,
                accepted: true,
            }]
        } else {
            Vec::new()
        };
        return RegraspPlan {
            waypoints: vec![intermediate, goal],
            steps,
            outcome: if triggered {
                Outcome::GuardedSuccess
            } else {
                Outcome::DirectSuccess
            },
        };
    }
    regrasp_sequence(target, cfg, oracle)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub oracle: String,
    pub targets: usize,
    pub success_with_guard: f64,
    pub success_without_guard: f64,
    pub mean_motions_with_guard: f64,
    pub mean_motions_without_guard: f64,
    pub direct: usize,
    pub guarded: usize,
    pub regrasp: usize,
    pub infeasible: usize,
}

/// Runs each target with and without the guard. Without the guard a target
/// succeeds iff the oracle accepts it as is.
pub fn guard_benchmark(
    targets: &[Pose],
    current: &Pose,
    cfg: &GuardConfig,
    oracle: &dyn FeasibilityOracle,
) -> (BenchmarkSummary, Vec<RegraspPlan>) {
    let plans: Vec<RegraspPlan> = targets
        .iter()
        .map(|t| singularity_guard(t, current, cfg, oracle))
        .collect();
    let n = targets.len().max(1) as f64;
    let count = |o: Outcome| plans.iter().filter(|p| p.outcome == o).count();
    let with = plans.iter().filter(|p| p.outcome.is_success()).count();
    let without = targets.iter().filter(|t| oracle.feasible(t)).count();
    let summary = BenchmarkSummary {
        oracle: oracle.name().to_string(),
        targets: targets.len(),
        success_with_guard: with as f64 / n,
        success_without_guard: without as f64 / n,
        mean_motions_with_guard: plans.iter().map(|p| p.motion_count()).sum::<usize>() as f64 / n,
        mean_motions_without_guard: if targets.is_empty() { 0.0 } else { 1.0 },
        direct: count(Outcome::DirectSuccess),
        guarded: count(Outcome::GuardedSuccess),
        regrasp: count(Outcome::RegraspSuccess),
        infeasible: count(Outcome::Infeasible),
    };
    (summary, plans)
}

/// Top-down tool pose above the assembly area, used as the start of every motion.
pub fn home_pose() -> Pose {
    Pose::from_zyz([300.0, 0.0, 300.0], ZyzAngles::new(0.0, PI, 0.0))
        .expect("home pose is a valid rotation")
}

/// Deterministic suite of targets with beta in `(89.91°, 90°]`, inside the
/// workspace box and reach.
pub fn near_singular_suite(n: usize, seed: u64) -> Vec<Pose> {
    near_singular_specs(n, seed)
        .into_iter()
        .map(|s| Pose::try_from(s).expect("finite angles"))
        .collect()
}

/// The suite in its file form, angles rounded to 1e-6 so JSON is exact.
pub fn near_singular_specs(n: usize, seed: u64) -> Vec<PoseSpec> {
    let mut rng = stream(seed, Stream::Suite);
    let round = |v: f64| (v * 1e6).round() / 1e6;
    (0..n)
        .map(|_| {
            let position = [
                rng.random_range(200.0..450.0),
                rng.random_range(-250.0..250.0),
                rng.random_range(20.0..400.0),
            ];
            let alpha = rng.random_range(-180.0..180.0);
            let gamma = rng.random_range(-180.0..180.0);
            let beta = 90.0 - rng.random_range(0.0..0.09);
            PoseSpec {
                position_mm: position.map(round),
                zyz_deg: Some([round(alpha), round(beta), round(gamma)]),
                rotation: None,
            }
        })
        .collect()
}

pub const SUITE_SEED: u64 = 2024;
pub const SUITE_SIZE: usize = 100;

/// The near-singular suite shipped in `data/`, as the CLI uses it by default.
pub fn bundled_suite() -> Vec<Pose> {
    serde_json::from_str(include_str!("../../data/near_singular_suite.json"))
        .expect("bundled suite is valid")
}
