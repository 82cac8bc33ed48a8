//! Builds a run configuration, writes it as TOML and drives the CLI
//! in-process with it.
//!
//!     cargo run --example run_config

use soma_core::cli::{self, RunConfig};
use soma_core::dqn::EpsilonSchedule;

fn main() {
    let dir = std::env::temp_dir().join("soma_run_config");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let mut cfg = RunConfig::default();
    cfg.seed = 7;
    cfg.out = dir.join("out");
    cfg.audit.samples = 200;
    cfg.curriculum.train.epsilon = EpsilonSchedule::linear();
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg.to_toml()).expect("write config");
    println!("{}", cfg.to_toml());

    let code = cli::run(["soma", "--config", path.to_str().unwrap(), "--no-timestamps", "mask-audit"]);
    println!("exit code {code}; outputs in {}", cfg.out.display());
}
