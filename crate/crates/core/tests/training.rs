mod common;

use soma_core::curriculum::{
    evaluate, run_curriculum, summarize, CurriculumConfig, LevelConfig,
};
use soma_core::dqn::{load_checkpoint, save_checkpoint, TrainConfig};
use soma_core::env::{Env, Level, MaskMode, OrderPolicy};

fn small_train() -> TrainConfig {
    TrainConfig {
        batch: 64,
        warmup: 128,
        replay_capacity: 5_000,
        ..TrainConfig::default()
    }
}

#[test]
fn level_one_trained_checkpoint_evaluates_cleanly() {
    let cfg = CurriculumConfig {
        train: small_train(),
        levels: vec![LevelConfig::new(Level::One, 5_000, 0.95)],
        ..CurriculumConfig::default()
    };
    let (metrics, agent) = run_curriculum(&cfg, 42, &mut ()).unwrap();
    assert!(metrics.levels[0].promoted);
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("l1.bin");
    save_checkpoint(&agent.online, &path).unwrap();
    let net = load_checkpoint(&path).unwrap();
    assert_eq!(net, agent.online);
    let report = evaluate(&Env::default(), &net, Level::One, 10, 7, OrderPolicy::Shuffled);
    assert!(report.success_rate >= 0.95, "{report:?}");
}

#[test]
fn curriculum_carries_through_levels_and_stays_isolated() {
    let cfg = CurriculumConfig {
        train: small_train(),
        levels: vec![
            LevelConfig::new(Level::One, 300, 0.95),
            LevelConfig::new(Level::Two, 300, 0.80),
            LevelConfig::new(Level::Three, 300, 1.0),
        ],
        ..CurriculumConfig::default()
    };
    let (metrics, agent) = run_curriculum(&cfg, 3, &mut ()).unwrap();
    assert_eq!(metrics.levels.len(), 3);
    assert!(agent.updates() > 0);
    let episodes: Vec<usize> = metrics.episodes().map(|e| e.episode).collect();
    assert_eq!(episodes, (0..episodes.len()).collect::<Vec<_>>());
    let recent: Vec<_> = agent.replay().iter().cloned().collect();
    assert_eq!(common::isolation_violations(&agent.online, &recent, 3), 0);
    assert_eq!(common::isolation_violations(&agent.target, &recent, 4), 0);
    let summary = summarize(&metrics, 100, 100);
    assert_eq!(summary.levels.len(), 3);
    assert_eq!(summary.episodes, episodes.len());
}

#[test]
fn unmasked_ablation_runs() {
    let cfg = CurriculumConfig {
        train: small_train(),
        levels: vec![LevelConfig::new(Level::Three, 100, 1.0)],
        mask_mode: MaskMode::Unmasked,
        ..CurriculumConfig::default()
    };
    let (metrics, _) = run_curriculum(&cfg, 5, &mut ()).unwrap();
    assert_eq!(metrics.levels[0].episodes.len(), 100);
    // the ablation mask only ever admits more actions
    let (full, loose) = (Env::default(), cfg.env());
    for seed in 0..50 {
        let mut s = full.reset(Level::Three, seed, OrderPolicy::Shuffled);
        loop {
            let strict = full.legal_mask(&s);
            let relaxed = loose.legal_mask(&s);
            assert!(strict.iter().all(|a| relaxed.get(a)));
            assert!(relaxed.count() >= strict.count());
            let Some(a) = strict.iter().next() else { break };
            s = full.step(&s, a).unwrap().state;
        }
    }
}
