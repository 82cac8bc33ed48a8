//! The singularity guard on a few hand-picked targets and on the bundled
//! near-singular suite, for every shipped feasibility oracle.
//!
//!     cargo run --example zyz_guard

use soma_core::zyz::{
    bundled_suite, guard_benchmark, home_pose, proximity_index, singularity_guard, zyz_from_rot,
    GuardConfig, KinematicModel, OracleKind, Pose, ZyzAngles,
};

fn main() {
    let model = KinematicModel::default();
    let cfg = GuardConfig::default();
    let oracle = OracleKind::Geometric.build(&model);
    for beta in [30.0, 84.0, 89.95, 90.0, 120.0] {
        let target = Pose::from_zyz([320.0, 40.0, 120.0], ZyzAngles::from_degrees(15.0, beta, -40.0))
            .expect("valid pose");
        let (angles, _) = zyz_from_rot(&target.rotation).unwrap();
        let plan = singularity_guard(&target, &home_pose(), &cfg, oracle.as_ref());
        let steps: Vec<&str> = plan.steps.iter().map(|s| s.step.label()).collect();
        println!(
            "beta {beta:>6.2}  PI {:.4}  {:?}  [{}]",
            proximity_index(angles.beta),
            plan.outcome,
            steps.join(", ")
        );
    }

    let suite = bundled_suite();
    println!("\nbundled suite, {} targets", suite.len());
    for kind in OracleKind::ALL {
        let oracle = kind.build(&model);
        let (s, _) = guard_benchmark(&suite, &home_pose(), &cfg, oracle.as_ref());
        println!(
            "{:<16} with guard {:.2}  without {:.2}  mean motions {:.1}",
            s.oracle, s.success_with_guard, s.success_without_guard, s.mean_motions_with_guard
        );
    }
}
