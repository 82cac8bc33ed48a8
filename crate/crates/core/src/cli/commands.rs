use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{
    parse_level, ArchArg, CliError, Context, EpsilonArg, EvalArgs, MaskAuditArgs, ReportArgs,
    RewardArg, SolveArgs, TrainArgs, ZyzSimArgs,
};
use crate::curriculum::{
    evaluate, rolling_rate, run_curriculum, summarize, EpisodeRecord, LevelConfig, LevelResult,
    Observer, RunMetrics, StepRecord, HIST_BIN_WIDTH,
};
use crate::dqn::{load_checkpoint, save_checkpoint, Agent, Arch, DecayClock, EpsilonSchedule};
use crate::env::{Level, MaskMode, RewardProfile};
use crate::geometry::{GridMask, OrientationTable, PieceId};
use crate::solver::{self, order_robot_friendly, PiecePlacement, SearchOrder};
use crate::zyz::{bundled_suite, guard_benchmark, home_pose, OracleKind, Pose};

fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct RunInfo<'a> {
    command: &'a str,
    seed: u64,
    version: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    started_unix_s: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    elapsed_s: Option<f64>,
}

/// Echoes the effective config and runs `body`, then records `run.json`.
fn with_provenance(
    ctx: &Context,
    command: &str,
    body: impl FnOnce() -> Result<(), CliError>,
) -> Result<(), CliError> {
    create_out(ctx.out())?;
    let path = ctx.out().join("config.toml");
    fs::write(&path, ctx.config.to_toml()).map_err(|e| CliError::io(&path, e))?;
    let started = Instant::now();
    let started_unix_s = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .ok();
    body()?;
    let info = RunInfo {
        command,
        seed: ctx.config.seed,
        version: env!("CARGO_PKG_VERSION"),
        started_unix_s: started_unix_s.filter(|_| ctx.timestamps),
        elapsed_s: ctx.timestamps.then(|| started.elapsed().as_secs_f64()),
    };
    write_json(&ctx.out().join("run.json"), &info)
}

#[derive(Serialize)]
struct SolutionLine<'a> {
    index: usize,
    placements: &'a [PiecePlacement],
    /// Robot-friendly placement order, if one exists.
    order: Option<Vec<PieceId>>,
}

fn parse_pieces(spec: &str) -> Result<Vec<PieceId>, CliError> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(PieceId::ALL.to_vec());
    }
    spec.split(',')
        .map(|name| {
            PieceId::from_name(name).ok_or_else(|| CliError::Config(format!("unknown piece `{name}`")))
        })
        .collect()
}

pub fn cmd_solve(ctx: &mut Context, args: &SolveArgs) -> Result<(), CliError> {
    let (pieces, region) = match args.level {
        Some(l) => {
            let level = parse_level(l)?;
            (level.pieces(), level.target_region())
        }
        None => (parse_pieces(&args.pieces)?, GridMask::FULL),
    };
    let cells: usize = pieces.iter().map(|p| p.cell_count()).sum();
    if cells != region.count() as usize {
        return Err(CliError::Config(format!(
            "pieces cover {cells} cells but the region has {}",
            region.count()
        )));
    }
    let mut unique = pieces.clone();
    unique.sort();
    unique.dedup();
    if unique.len() != pieces.len() {
        return Err(CliError::Config("each piece may appear once".into()));
    }
    with_provenance(ctx, "solve", || {
        let solutions = solver::solve_region(&pieces, region, SearchOrder::CellMajor);
        let summary = solver::summarize(&solutions, region);
        let path = ctx.out().join("solutions.jsonl");
        let mut w = create(&path)?;
        for (index, sol) in solutions.iter().take(args.limit.unwrap_or(usize::MAX)).enumerate() {
            let line = SolutionLine {
                index,
                placements: &sol.placements,
                order: order_robot_friendly(sol).ok().map(|o| o.pieces()),
            };
            serde_json::to_writer(&mut w, &line).map_err(|e| CliError::io(&path, e))?;
            w.write_all(b"\n").map_err(|e| CliError::io(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        write_json(&ctx.out().join("solve_summary.json"), &summary)?;
        println!(
            "solutions {} rotation-distinct {} orderable {} unorderable {}",
            summary.raw_solutions, summary.rotation_distinct, summary.orderable, summary.unorderable
        );
        Ok(())
    })
}

/// One line of `metrics.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricsLine {
    Episode(EpisodeRecord),
    Level {
        level: Level,
        episodes: usize,
        promoted: bool,
        promoted_at: Option<usize>,
    },
}

struct TrainObserver {
    metrics: BufWriter<File>,
    steps: Option<csv::Writer<File>>,
    log: BufWriter<File>,
    checkpoint_dir: PathBuf,
    checkpoint_every: usize,
    error: Option<CliError>,
}

impl TrainObserver {
    fn record(&mut self, f: impl FnOnce(&mut Self) -> Result<(), CliError>) {
        if self.error.is_none() {
            if let Err(e) = f(self) {
                self.error = Some(e);
            }
        }
    }

    fn line(&mut self, line: &MetricsLine) -> Result<(), CliError> {
        serde_json::to_writer(&mut self.metrics, line)
            .map_err(|e| CliError::Io(format!("metrics.jsonl: {e}")))?;
        self.metrics
            .write_all(b"\n")
            .map_err(|e| CliError::Io(format!("metrics.jsonl: {e}")))
    }
}

impl Observer for TrainObserver {
    fn on_step(&mut self, step: &StepRecord) {
        self.record(|o| match &mut o.steps {
            Some(w) => w
                .serialize(step)
                .map_err(|e| CliError::Io(format!("steps.csv: {e}"))),
            None => Ok(()),
        });
    }

    fn on_episode(&mut self, record: &EpisodeRecord, agent: &Agent) {
        self.record(|o| {
            o.line(&MetricsLine::Episode(record.clone()))?;
            let n = record.episode + 1;
            if o.checkpoint_every > 0 && n % o.checkpoint_every == 0 {
                let path = o.checkpoint_dir.join(format!("episode_{n:06}.bin"));
                save_checkpoint(&agent.online, &path)?;
            }
            Ok(())
        });
    }

    fn on_level(&mut self, result: &LevelResult, agent: &Agent) {
        self.record(|o| {
            o.line(&MetricsLine::Level {
                level: result.level,
                episodes: result.episodes.len(),
                promoted: result.promoted,
                promoted_at: result.promoted_at,
            })?;
            writeln!(
                o.log,
                "level {} episodes {} promoted {} at {:?} epsilon {:.4} updates {}",
                result.level.number(),
                result.episodes.len(),
                result.promoted,
                result.promoted_at,
                agent.epsilon(),
                agent.updates()
            )
            .map_err(|e| CliError::Io(format!("train.log: {e}")))
        });
    }
}

fn schedule_line(s: &EpsilonSchedule, clock: DecayClock) -> String {
    match *s {
        EpsilonSchedule::Exponential { start, rate, floor } => {
            format!("epsilon exponential start {start} end {floor} rate {rate} per {clock:?}")
        }
        EpsilonSchedule::Linear { start, end, steps } => {
            format!("epsilon linear start {start} end {end} over {steps} per {clock:?}")
        }
    }
}

pub fn cmd_train(ctx: &mut Context, args: &TrainArgs) -> Result<(), CliError> {
    let cc = &mut ctx.config.curriculum;
    if let Some(l) = args.level {
        let level = parse_level(l)?;
        let base = cc
            .levels
            .iter()
            .find(|c| c.level == level)
            .cloned()
            .unwrap_or_else(|| LevelConfig::new(level, 1_000, 1.0));
        cc.levels = vec![base];
    }
    if let Some(n) = args.episodes {
        for l in &mut cc.levels {
            l.episodes = n;
        }
    }
    match args.epsilon {
        Some(EpsilonArg::Exp) => {
            cc.train.epsilon = EpsilonSchedule::exponential();
            cc.train.decay_clock = DecayClock::Episode;
        }
        Some(EpsilonArg::Linear) => {
            cc.train.epsilon = EpsilonSchedule::linear();
            cc.train.decay_clock = DecayClock::Step;
        }
        None => {}
    }
    match args.reward {
        Some(RewardArg::Shaped) => cc.reward = RewardProfile::Shaped,
        Some(RewardArg::Sparse) => cc.reward = RewardProfile::Sparse,
        None => {}
    }
    match args.arch {
        Some(ArchArg::Hierarchical) => cc.train.arch = Arch::Hierarchical,
        Some(ArchArg::Flat) => cc.train.arch = Arch::Flat,
        None => {}
    }
    if args.unmasked {
        cc.mask_mode = MaskMode::Unmasked;
    }
    if let Some(k) = args.train_every {
        cc.train.train_every = k;
    }
    if let Some(k) = args.checkpoint_every {
        ctx.config.checkpoint_every = k;
    }
    ctx.config.curriculum.validate().map_err(CliError::Config)?;

    let ctx = &*ctx;
    with_provenance(ctx, "train", || {
        let out = ctx.out();
        let cfg = &ctx.config;
        let checkpoint_dir = out.join("checkpoints");
        if cfg.checkpoint_every > 0 {
            create_out(&checkpoint_dir)?;
        }
        let steps = if cfg.step_log {
            let path = out.join("steps.csv");
            Some(csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e))?)
        } else {
            None
        };
        let mut obs = TrainObserver {
            metrics: create(&out.join("metrics.jsonl"))?,
            steps,
            log: create(&out.join("train.log"))?,
            checkpoint_dir,
            checkpoint_every: cfg.checkpoint_every,
            error: None,
        };
        let train = &cfg.curriculum.train;
        writeln!(obs.log, "{}", schedule_line(&train.epsilon, train.decay_clock))
            .map_err(|e| CliError::Io(format!("train.log: {e}")))?;
        let result = run_curriculum(&cfg.curriculum, cfg.seed, &mut obs);
        let (metrics, agent) = match result {
            Ok(v) => v,
            Err(e) => {
                let _ = writeln!(obs.log, "aborted: {e}");
                let _ = obs.log.flush();
                let _ = obs.metrics.flush();
                return Err(e.into());
            }
        };
        if let Some(e) = obs.error.take() {
            return Err(e);
        }
        obs.metrics.flush().map_err(|e| CliError::Io(format!("metrics.jsonl: {e}")))?;
        obs.log.flush().map_err(|e| CliError::Io(format!("train.log: {e}")))?;
        if let Some(w) = &mut obs.steps {
            w.flush().map_err(|e| CliError::Io(format!("steps.csv: {e}")))?;
        }
        save_checkpoint(&agent.online, out.join("model.bin"))?;
        let summary = summarize(&metrics, cfg.curriculum.window, cfg.curriculum.report_window);
        write_json(&out.join("summary.json"), &summary)?;
        for l in &summary.levels {
            println!(
                "level {} episodes {} success {:.3} rolling {:.3} promoted {}",
                l.level.number(),
                l.episodes,
                l.success_rate,
                l.final_rolling_success,
                l.promoted
            );
        }
        Ok(())
    })
}

pub fn cmd_eval(ctx: &mut Context, args: &EvalArgs) -> Result<(), CliError> {
    if let Some(l) = args.level {
        ctx.config.eval.level = parse_level(l)?;
    }
    if let Some(n) = args.episodes {
        ctx.config.eval.episodes = n;
    }
    if ctx.config.eval.episodes == 0 {
        return Err(CliError::Config("eval needs at least one episode".into()));
    }
    let net = load_checkpoint(&args.checkpoint)
        .map_err(|e| CliError::io(&args.checkpoint, e))?;
    if net.arch != ctx.config.curriculum.train.arch {
        eprintln!("note: checkpoint architecture {:?} differs from config", net.arch);
    }
    let ctx = &*ctx;
    with_provenance(ctx, "eval", || {
        let e = &ctx.config.eval;
        let report = evaluate(
            &ctx.config.curriculum.env(),
            &net,
            e.level,
            e.episodes,
            ctx.config.seed,
            e.order,
        );
        write_json(&ctx.out().join("eval.json"), &report)?;
        println!(
            "level {} episodes {} success {:.3} mean reward {:.2} mean length {:.2}",
            report.level.number(),
            report.episodes,
            report.success_rate,
            report.mean_reward,
            report.mean_length
        );
        Ok(())
    })
}

#[derive(Serialize)]
struct AuditRow {
    samples: usize,
    mean_legal: f64,
    min_legal: usize,
    max_legal: usize,
    action_space: usize,
    raw_action_space: usize,
    ratio: f64,
    paper_ref_ratio: f64,
}

#[derive(Serialize)]
struct AuditSampleRow {
    sample: usize,
    placed: usize,
    legal: usize,
}

pub fn cmd_mask_audit(ctx: &mut Context, args: &MaskAuditArgs) -> Result<(), CliError> {
    if let Some(n) = args.samples {
        ctx.config.audit.samples = n;
    }
    if ctx.config.audit.samples == 0 {
        return Err(CliError::Config("mask-audit needs at least one sample".into()));
    }
    let ctx = &*ctx;
    with_provenance(ctx, "mask-audit", || {
        let r = solver::mask_ratio_report(
            &ctx.config.curriculum.env(),
            ctx.config.audit.samples,
            ctx.config.seed,
        );
        write_csv(
            &ctx.out().join("mask_audit.csv"),
            [AuditRow {
                samples: r.samples,
                mean_legal: r.mean_legal,
                min_legal: r.min_legal,
                max_legal: r.max_legal,
                action_space: r.action_space,
                raw_action_space: r.raw_action_space,
                ratio: r.ratio,
                paper_ref_ratio: r.paper_ref_ratio,
            }],
        )?;
        write_csv(
            &ctx.out().join("mask_samples.csv"),
            r.per_sample.iter().enumerate().map(|(sample, s)| AuditSampleRow {
                sample,
                placed: s.placed,
                legal: s.legal,
            }),
        )?;
        println!(
            "samples {} mean legal {:.1} of {} (ratio {:.2}, paper {:.2})",
            r.samples, r.mean_legal, r.action_space, r.ratio, r.paper_ref_ratio
        );
        Ok(())
    })
}

#[derive(Serialize)]
struct PlanLine<'a> {
    oracle: &'a str,
    target: usize,
    plan: &'a crate::zyz::RegraspPlan,
}

pub fn cmd_zyz_sim(ctx: &mut Context, args: &ZyzSimArgs) -> Result<(), CliError> {
    let targets: Vec<Pose> = match &args.targets {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => bundled_suite(),
    };
    let oracles = match &args.oracle {
        Some(name) => vec![OracleKind::parse(name)
            .ok_or_else(|| CliError::Config(format!("unknown oracle `{name}`")))?],
        None => OracleKind::ALL.to_vec(),
    };
    let ctx = &*ctx;
    with_provenance(ctx, "zyz-sim", || {
        let z = &ctx.config.zyz;
        let plans_path = ctx.out().join("zyz_plans.jsonl");
        let mut plans_out = create(&plans_path)?;
        let mut rows = Vec::new();
        for kind in oracles {
            let oracle = kind.build(&z.model);
            let (summary, plans) = guard_benchmark(&targets, &home_pose(), &z.guard, oracle.as_ref());
            for (target, plan) in plans.iter().enumerate() {
                let line = PlanLine { oracle: kind.name(), target, plan };
                serde_json::to_writer(&mut plans_out, &line)
                    .map_err(|e| CliError::io(&plans_path, e))?;
                plans_out
                    .write_all(b"\n")
                    .map_err(|e| CliError::io(&plans_path, e))?;
            }
            println!(
                "{:<16} with guard {:.3} without {:.3} motions {:.2}",
                summary.oracle,
                summary.success_with_guard,
                summary.success_without_guard,
                summary.mean_motions_with_guard
            );
            rows.push(summary);
        }
        plans_out.flush().map_err(|e| CliError::io(&plans_path, e))?;
        write_csv(&ctx.out().join("zyz_summary.csv"), rows)
    })
}

/// Reads a `metrics.jsonl` stream back into per-level results.
pub fn read_metrics(path: &Path) -> Result<RunMetrics, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut metrics = RunMetrics::default();
    let mut pending: Vec<EpisodeRecord> = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: MetricsLine = serde_json::from_str(&line)
            .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
        match parsed {
            MetricsLine::Episode(e) => pending.push(e),
            MetricsLine::Level {
                level,
                promoted,
                promoted_at,
                ..
            } => metrics.levels.push(LevelResult {
                level,
                episodes: std::mem::take(&mut pending),
                promoted,
                promoted_at,
            }),
        }
    }
    // a stream cut short by an aborted run
    if let Some(first) = pending.first() {
        metrics.levels.push(LevelResult {
            level: first.level,
            episodes: pending,
            promoted: false,
            promoted_at: None,
        });
    }
    Ok(metrics)
}

#[derive(Serialize)]
struct EpisodeRow {
    episode: usize,
    level: u8,
    level_episode: usize,
    reward: f64,
    length: usize,
    success: u8,
    rolling_success: f64,
    mean_loss: Option<f64>,
    epsilon: f64,
}

#[derive(Serialize)]
struct HistogramRow {
    lo: f64,
    hi: f64,
    count: usize,
}

#[derive(Serialize)]
struct OrientationRow {
    id: usize,
    piece: PieceId,
    local: usize,
    cells: String,
}

pub fn cmd_report(ctx: &mut Context, args: &ReportArgs) -> Result<(), CliError> {
    let explicit = args.metrics.is_some();
    let metrics_path = args
        .metrics
        .clone()
        .unwrap_or_else(|| ctx.out().join("metrics.jsonl"));
    let metrics = if explicit || metrics_path.exists() {
        Some(read_metrics(&metrics_path)?)
    } else {
        None
    };
    let ctx = &*ctx;
    with_provenance(ctx, "report", || {
        let out = ctx.out();
        let table = OrientationTable::get();
        write_csv(
            &out.join("orientations.csv"),
            (0..table.len()).map(|id| {
                let e = table.entry(id);
                OrientationRow {
                    id,
                    piece: e.piece,
                    local: e.local,
                    cells: e
                        .cells
                        .iter()
                        .map(|c| format!("{}{}{}", c.x, c.y, c.z))
                        .collect::<Vec<_>>()
                        .join(" "),
                }
            }),
        )?;
        let Some(metrics) = metrics else {
            println!("no metrics at {}; wrote orientations only", metrics_path.display());
            return Ok(());
        };
        let window = ctx.config.curriculum.window;
        let mut rows = Vec::new();
        for l in &metrics.levels {
            let flags: Vec<bool> = l.episodes.iter().map(|e| e.success).collect();
            let rolling = rolling_rate(&flags, window);
            rows.extend(l.episodes.iter().zip(rolling).map(|(e, r)| EpisodeRow {
                episode: e.episode,
                level: e.level.number(),
                level_episode: e.level_episode,
                reward: e.reward,
                length: e.length,
                success: u8::from(e.success),
                rolling_success: r,
                mean_loss: e.mean_loss,
                epsilon: e.epsilon,
            }));
        }
        write_csv(&out.join("episodes.csv"), rows)?;
        let summary = summarize(&metrics, window, ctx.config.curriculum.report_window);
        write_csv(
            &out.join("reward_histogram.csv"),
            summary.histogram.iter().map(|b| HistogramRow {
                lo: b.lo,
                hi: b.lo + HIST_BIN_WIDTH,
                count: b.count,
            }),
        )?;
        write_json(&out.join("report_summary.json"), &summary)?;
        println!(
            "episodes {} peaks {:?} reward-length r {:?}",
            summary.episodes, summary.peaks, summary.reward_length_correlation
        );
        Ok(())
    })
}
