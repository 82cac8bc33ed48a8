//! Trains level 1 until promotion, saves the network and evaluates it greedily.
//!
//!     cargo run --release --example train_level1 -- [seed]

use soma_core::curriculum::{
    evaluate, run_curriculum, summarize, CurriculumConfig, EpisodeRecord, LevelConfig, Observer,
};
use soma_core::dqn::{load_checkpoint, save_checkpoint, Agent};
use soma_core::env::{Level, OrderPolicy};

struct Progress;

impl Observer for Progress {
    fn on_episode(&mut self, r: &EpisodeRecord, agent: &Agent) {
        if r.episode % 25 == 0 {
            println!(
                "episode {:>4} reward {:>6.1} success {} eps {:.3} updates {}",
                r.episode,
                r.reward,
                r.success,
                r.epsilon,
                agent.updates()
            );
        }
    }
}

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let cfg = CurriculumConfig {
        levels: vec![LevelConfig::new(Level::One, 5_000, 0.95)],
        ..CurriculumConfig::default()
    };
    let (metrics, agent) = run_curriculum(&cfg, seed, &mut Progress).expect("training diverged");
    let summary = summarize(&metrics, cfg.window, cfg.report_window);
    let l = &summary.levels[0];
    println!(
        "level 1: {} episodes, promoted {} at {:?}, rolling success {:.2}",
        l.episodes, l.promoted, l.promoted_at, l.final_rolling_success
    );

    let path = std::env::temp_dir().join("soma_level1.bin");
    save_checkpoint(&agent.online, &path).expect("write checkpoint");
    let net = load_checkpoint(&path).expect("read checkpoint");
    let report = evaluate(&cfg.env(), &net, Level::One, 10, seed, OrderPolicy::Shuffled);
    println!("greedy eval: {report:?}");
}
