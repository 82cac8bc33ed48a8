mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use soma_core::env::{Done, Env, Level};
use soma_core::geometry::{GridMask, PieceId};
use soma_core::rng::{stream, Stream};
use soma_core::solver::{
    order_robot_friendly, rotation_distinct_count, solve_all, solve_region, verify_region,
    SearchOrder, Solution,
};

fn full() -> &'static [Solution] {
    use std::sync::OnceLock;
    static ALL: OnceLock<Vec<Solution>> = OnceLock::new();
    ALL.get_or_init(|| solve_all(&PieceId::ALL))
}

#[test]
fn pinned_counts() {
    assert_eq!(full().len(), 103_392);
    assert_eq!(rotation_distinct_count(full(), GridMask::FULL), 4_308);
    assert_eq!(full().len(), 24 * 4_308);
}

#[test]
fn every_ordered_solution_replays_under_the_mask() {
    let env = Env::default();
    for (k, sol) in full().iter().enumerate() {
        let ordered = order_robot_friendly(sol).expect("every full solution is orderable");
        let mut s = ordered.initial_state();
        let mut done = Done::Running;
        for a in ordered.actions() {
            assert!(env.legal_mask(&s).get(a), "solution {k}: {a:?} masked out");
            let r = env.step(&s, a).unwrap();
            s = r.state;
            done = r.done;
        }
        assert_eq!(done, Done::Complete, "solution {k}");
    }
}

#[test]
fn ordered_placements_rise_monotonically_in_support() {
    // each placement's cells rest on the ground or on earlier pieces
    for sol in full().iter().step_by(997) {
        let ordered = order_robot_friendly(sol).unwrap();
        let mut filled = GridMask::EMPTY;
        for &i in &ordered.order {
            let cells = sol.placements[i].cells().unwrap();
            for c in cells.cells() {
                if c.z > 0 {
                    let below = common::c(c.x, c.y, c.z - 1).index().unwrap();
                    assert!(filled.union(cells).contains(below));
                }
            }
            filled = filled.union(cells);
        }
    }
}

#[test]
fn level_regions_are_solvable_and_orderable() {
    for level in Level::ALL {
        let sols = solve_region(&level.pieces(), level.target_region(), SearchOrder::CellMajor);
        assert!(!sols.is_empty(), "{level:?}");
        assert!(sols.iter().all(|s| verify_region(s, level.target_region())));
        assert!(sols.iter().any(|s| order_robot_friendly(s).is_ok()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn search_orders_agree_on_sub_puzzles(seed in 0u64..u64::MAX, keep in 2usize..=6) {
        let mut rng = stream(seed, Stream::Audit);
        let sol = &full()[rng.random_range(0..full().len())];
        let mut chosen = sol.placements.clone();
        chosen.shuffle(&mut rng);
        chosen.truncate(keep);
        let pieces: Vec<PieceId> = chosen.iter().map(|p| p.piece).collect();
        let region = chosen.iter().fold(GridMask::EMPTY, |m, p| m.union(p.cells().unwrap()));
        let a = solve_region(&pieces, region, SearchOrder::PieceMajor);
        let b = solve_region(&pieces, region, SearchOrder::CellMajor);
        prop_assert!(!a.is_empty());
        prop_assert_eq!(&a, &b);
        let mut sorted_chosen = chosen.clone();
        sorted_chosen.sort();
        prop_assert!(a.contains(&Solution::new(sorted_chosen)));
        for s in &a {
            prop_assert!(verify_region(s, region));
        }
    }
}
