//! Level 1 → 2 → 3 training with rolling-success promotion, plus the summary
//! statistics reported after a run.

use serde::{Deserialize, Serialize};

use crate::dqn::{Agent, DqnError, QNetwork, TrainConfig, Transition};
use crate::env::{Done, Env, EnvConfig, Level, MaskMode, OrderPolicy, RewardProfile};
use crate::rng::mix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelConfig {
    pub level: Level,
    /// Episode budget; the level ends early on promotion.
    pub episodes: usize,
    /// Rolling success rate that promotes to the next level.
    pub threshold: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_max_steps() -> usize {
    1_000
}

impl LevelConfig {
    pub fn new(level: Level, episodes: usize, threshold: f64) -> Self {
        Self {
            level,
            episodes,
            threshold,
            max_steps: default_max_steps(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub train: TrainConfig,
    pub levels: Vec<LevelConfig>,
    pub order: OrderPolicy,
    pub reward: RewardProfile,
    pub mask_mode: MaskMode,
    /// Rolling-success window used for promotion.
    pub window: usize,
    /// Window for the trailing/leading statistics in the summary.
    pub report_window: usize,
    /// Start each level from fresh weights instead of carrying them over.
    pub reinit_per_level: bool,
    /// Restart the exploration schedule at each level.
    pub restart_epsilon: bool,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            levels: vec![
                LevelConfig::new(Level::One, 5_000, 0.95),
                LevelConfig::new(Level::Two, 30_000, 0.80),
                LevelConfig::new(Level::Three, 10_000, 1.0),
            ],
            order: OrderPolicy::Shuffled,
            reward: RewardProfile::Shaped,
            mask_mode: MaskMode::Full,
            window: 100,
            report_window: 1_000,
            reinit_per_level: false,
            restart_epsilon: true,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.train.validate()?;
        if self.window == 0 || self.report_window == 0 {
            return Err("windows must be positive".into());
        }
        for l in &self.levels {
            if !(0.0..=1.0).contains(&l.threshold) {
                return Err(format!("threshold {} outside [0, 1]", l.threshold));
            }
            if l.max_steps == 0 {
                return Err("max_steps must be positive".into());
            }
        }
        Ok(())
    }

    pub fn env(&self) -> Env {
        Env::new(EnvConfig {
            reward: self.reward,
            mask_mode: self.mask_mode,
            ..EnvConfig::default()
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub level: Level,
    /// Index over the whole run.
    pub episode: usize,
    /// Index within the level.
    pub level_episode: usize,
    pub reward: f64,
    pub length: usize,
    pub success: bool,
    pub dead_end: bool,
    pub mean_loss: Option<f64>,
    pub epsilon: f64,
    pub target_synced: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: usize,
    pub step: usize,
    pub epsilon: f64,
    pub loss: Option<f32>,
    pub reward: i32,
    pub legal_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub level: Level,
    pub episodes: Vec<EpisodeRecord>,
    pub promoted: bool,
    /// Level episode at which the promotion window was complete.
    pub promoted_at: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub levels: Vec<LevelResult>,
}

impl RunMetrics {
    pub fn episodes(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.levels.iter().flat_map(|l| &l.episodes)
    }
}

/// Receives progress while a run is in flight. All methods default to no-ops.
pub trait Observer {
    fn on_step(&mut self, _step: &StepRecord) {}
    fn on_episode(&mut self, _record: &EpisodeRecord, _agent: &Agent) {}
    fn on_level(&mut self, _result: &LevelResult, _agent: &Agent) {}
}

impl Observer for () {}

/// Mean of the last `window` flags ending at each position (fewer at the start).
pub fn rolling_rate(flags: &[bool], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(flags.len());
    let mut hits = 0usize;
    for i in 0..flags.len() {
        hits += usize::from(flags[i]);
        if i >= window {
            hits -= usize::from(flags[i - window]);
        }
        out.push(hits as f64 / (i + 1).min(window) as f64);
    }
    out
}

/// How one training episode went.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub reward: f64,
    pub length: usize,
    pub done: Done,
    pub mean_loss: Option<f64>,
    /// Exploration rate in effect for the episode.
    pub epsilon: f64,
}

/// Plays one episode with exploration and learning.
#[allow(clippy::too_many_arguments)]
pub fn train_episode(
    env: &Env,
    agent: &mut Agent,
    level: Level,
    policy: OrderPolicy,
    env_seed: u64,
    max_steps: usize,
    episode: usize,
    observer: &mut dyn Observer,
) -> Result<EpisodeOutcome, DqnError> {
    let epsilon = agent.epsilon();
    let mut s = env.reset(level, env_seed, policy);
    let mut mask = env.legal_mask(&s);
    let (mut reward, mut length) = (0f64, 0usize);
    let mut done = if mask.is_empty() { Done::DeadEnd } else { Done::Running };
    let (mut loss_sum, mut losses) = (0f64, 0usize);
    while done == Done::Running && length < max_steps {
        let x = s.encode();
        let a = agent.act(&x, &mask)?;
        let r = env.step(&s, a)?;
        let total = r.reward.total();
        let info = agent.observe(Transition {
            state: x,
            action: a,
            reward: total as f32,
            next_state: r.state.encode(),
            next_mask: r.next_mask.clone(),
            terminal: r.done.is_terminal(),
        })?;
        if let Some(l) = info.loss {
            loss_sum += f64::from(l);
            losses += 1;
        }
        observer.on_step(&StepRecord {
            episode,
            step: length,
            epsilon,
            loss: info.loss,
            reward: total,
            legal_count: mask.count(),
        });
        reward += f64::from(total);
        length += 1;
        done = r.done;
        s = r.state;
        mask = r.next_mask;
    }
    let mean_loss = (losses > 0).then(|| loss_sum / losses as f64);
    Ok(EpisodeOutcome {
        reward,
        length,
        done,
        mean_loss,
        epsilon,
    })
}

/// Trains through `cfg.levels` in order, carrying the agent across levels.
pub fn run_curriculum(
    cfg: &CurriculumConfig,
    seed: u64,
    observer: &mut dyn Observer,
) -> Result<(RunMetrics, Agent), DqnError> {
    let env = cfg.env();
    let mut agent = Agent::new(cfg.train.clone(), seed);
    let mut metrics = RunMetrics::default();
    let mut episode = 0usize;
    for (li, lc) in cfg.levels.iter().enumerate() {
        if li > 0 {
            if cfg.reinit_per_level {
                agent = Agent::new(cfg.train.clone(), mix(seed, li as u64));
            }
            if cfg.restart_epsilon {
                agent.restart_schedule();
            }
        }
        let mut result = LevelResult {
            level: lc.level,
            episodes: Vec::new(),
            promoted: false,
            promoted_at: None,
        };
        let mut hits = std::collections::VecDeque::with_capacity(cfg.window);
        for k in 0..lc.episodes {
            let env_seed = mix(seed, episode as u64);
            let out = train_episode(
                &env,
                &mut agent,
                lc.level,
                cfg.order,
                env_seed,
                lc.max_steps,
                episode,
                observer,
            )?;
            let synced = agent.end_episode();
            let record = EpisodeRecord {
                level: lc.level,
                episode,
                level_episode: k,
                reward: out.reward,
                length: out.length,
                success: out.done == Done::Complete,
                dead_end: out.done == Done::DeadEnd,
                mean_loss: out.mean_loss,
                epsilon: out.epsilon,
                target_synced: synced,
            };
            observer.on_episode(&record, &agent);
            episode += 1;
            if hits.len() == cfg.window {
                hits.pop_front();
            }
            hits.push_back(record.success);
            result.episodes.push(record);
            if hits.len() == cfg.window {
                let rate = hits.iter().filter(|&&h| h).count() as f64 / cfg.window as f64;
                if rate >= lc.threshold {
                    result.promoted = true;
                    result.promoted_at = Some(k);
                    break;
                }
            }
        }
        if lc.episodes == 0 {
            result.promoted = true;
        }
        observer.on_level(&result, &agent);
        metrics.levels.push(result);
    }
    Ok((metrics, agent))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub level: Level,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_reward: f64,
    pub mean_length: f64,
}

/// Greedy rollouts with frozen weights.
pub fn evaluate(
    env: &Env,
    net: &QNetwork<f32>,
    level: Level,
    episodes: usize,
    seed: u64,
    policy: OrderPolicy,
) -> EvalReport {
    let (mut wins, mut reward, mut length) = (0usize, 0f64, 0usize);
    for k in 0..episodes {
        let mut s = env.reset(level, mix(seed, k as u64), policy);
        let mut mask = env.legal_mask(&s);
        while !mask.is_empty() {
            let q = net.eval(s.encode().as_slice()).q_row(0);
            let a = crate::dqn::greedy_action(&q, &mask).expect("mask nonempty");
            let r = env.step(&s, a).expect("greedy action is legal");
            reward += f64::from(r.reward.total());
            length += 1;
            if r.done == Done::Complete {
                wins += 1;
            }
            s = r.state;
            mask = r.next_mask;
        }
    }
    let n = episodes.max(1) as f64;
    EvalReport {
        level,
        episodes,
        success_rate: wins as f64 / n,
        mean_reward: reward / n,
        mean_length: length as f64 / n,
    }
}

pub const HIST_BIN_WIDTH: f64 = 20.0;
/// A bin is a peak when no bin within this many bins on either side is higher.
pub const PEAK_RADIUS: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub level: Level,
    pub episodes: usize,
    pub success_rate: f64,
    /// Success rate over the last `report_window` episodes.
    pub trailing_success_rate: f64,
    pub final_rolling_success: f64,
    pub promoted: bool,
    pub promoted_at: Option<usize>,
    pub first_window_mean_reward: f64,
    pub last_window_mean_reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaperReference {
    pub reward_peaks: [f64; 3],
    pub reward_length_correlation: f64,
    pub level_success_rates: [f64; 3],
}

impl Default for PaperReference {
    fn default() -> Self {
        Self {
            reward_peaks: [580.0, 600.0, 1180.0],
            reward_length_correlation: 0.495,
            level_success_rates: [1.0, 0.929, 0.399],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub levels: Vec<LevelSummary>,
    pub histogram: Vec<HistogramBin>,
    /// Lower edges of up to three histogram peaks, highest first.
    pub peaks: Vec<f64>,
    pub reward_length_correlation: Option<f64>,
    pub paper_reference: PaperReference,
}

/// Histogram with fixed-width bins aligned to multiples of `width`.
pub fn histogram(values: &[f64], width: f64) -> Vec<HistogramBin> {
    let Some(lo) = values.iter().copied().reduce(f64::min) else {
        return Vec::new();
    };
    let hi = values.iter().copied().fold(lo, f64::max);
    let first = (lo / width).floor() as i64;
    let last = (hi / width).floor() as i64;
    let mut bins: Vec<HistogramBin> = (first..=last)
        .map(|b| HistogramBin {
            lo: b as f64 * width,
            count: 0,
        })
        .collect();
    for &v in values {
        bins[((v / width).floor() as i64 - first) as usize].count += 1;
    }
    bins
}

/// Up to `n` bins that dominate their ±[`PEAK_RADIUS`] neighbourhood, by count
/// then position.
pub fn peaks(bins: &[HistogramBin], n: usize) -> Vec<f64> {
    let mut found: Vec<&HistogramBin> = (0..bins.len())
        .filter(|&i| {
            let c = bins[i].count;
            let lo = i.saturating_sub(PEAK_RADIUS);
            let hi = (i + PEAK_RADIUS).min(bins.len() - 1);
            // earlier bin wins a tie so plateaus yield one peak
            c > 0 && (lo..i).all(|j| bins[j].count < c) && (i + 1..=hi).all(|j| bins[j].count <= c)
        })
        .map(|i| &bins[i])
        .collect();
    found.sort_by(|a, b| b.count.cmp(&a.count).then(a.lo.total_cmp(&b.lo)));
    found.into_iter().take(n).map(|b| b.lo).collect()
}

/// Two-pass Pearson correlation; `None` for fewer than two points or zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn summarize(metrics: &RunMetrics, window: usize, report_window: usize) -> Summary {
    let rewards: Vec<f64> = metrics.episodes().map(|e| e.reward).collect();
    let lengths: Vec<f64> = metrics.episodes().map(|e| e.length as f64).collect();
    let hist = histogram(&rewards, HIST_BIN_WIDTH);
    let levels = metrics
        .levels
        .iter()
        .map(|l| {
            let eps = &l.episodes;
            let flags: Vec<bool> = eps.iter().map(|e| e.success).collect();
            let n = eps.len();
            let head = n.min(report_window);
            let tail = &eps[n - head..];
            LevelSummary {
                level: l.level,
                episodes: n,
                success_rate: mean(flags.iter().map(|&f| f64::from(u8::from(f)))),
                trailing_success_rate: mean(tail.iter().map(|e| f64::from(u8::from(e.success)))),
                final_rolling_success: rolling_rate(&flags, window).last().copied().unwrap_or(0.0),
                promoted: l.promoted,
                promoted_at: l.promoted_at,
                first_window_mean_reward: mean(eps[..head].iter().map(|e| e.reward)),
                last_window_mean_reward: mean(tail.iter().map(|e| e.reward)),
            }
        })
        .collect();
    Summary {
        episodes: rewards.len(),
        levels,
        peaks: peaks(&hist, 3),
        histogram: hist,
        reward_length_correlation: pearson(&rewards, &lengths),
        paper_reference: PaperReference::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;
    use rand::Rng;

    fn quick(levels: Vec<LevelConfig>) -> CurriculumConfig {
        CurriculumConfig {
            train: TrainConfig {
                batch: 32,
                warmup: 64,
                replay_capacity: 1_000,
                ..TrainConfig::default()
            },
            levels,
            ..CurriculumConfig::default()
        }
    }

    #[test]
    fn zero_budget_promotes_immediately() {
        let cfg = quick(vec![LevelConfig::new(Level::One, 0, 0.95)]);
        let (m, _) = run_curriculum(&cfg, 0, &mut ()).unwrap();
        assert!(m.levels[0].promoted);
        assert!(m.levels[0].episodes.is_empty());
    }

    #[test]
    fn level_one_promotes_after_a_full_window() {
        let cfg = quick(vec![LevelConfig::new(Level::One, 500, 0.95)]);
        let (m, agent) = run_curriculum(&cfg, 1, &mut ()).unwrap();
        let l = &m.levels[0];
        assert!(l.promoted);
        let at = l.promoted_at.unwrap();
        assert!(at >= 99);
        let flags: Vec<bool> = l.episodes.iter().map(|e| e.success).collect();
        assert!(rolling_rate(&flags, 100)[at] >= 0.95);
        // no earlier full window reached the threshold
        for k in 99..at {
            assert!(rolling_rate(&flags, 100)[k] < 0.95);
        }
        assert_eq!(agent.episodes() as usize, l.episodes.len());
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = quick(vec![
            LevelConfig::new(Level::One, 120, 1.0),
            LevelConfig::new(Level::Three, 30, 1.0),
        ]);
        let (a, _) = run_curriculum(&cfg, 9, &mut ()).unwrap();
        let (b, _) = run_curriculum(&cfg, 9, &mut ()).unwrap();
        assert_eq!(a, b);
        assert!(a.levels[1].episodes.iter().any(|e| e.mean_loss.is_some()));
    }

    #[test]
    fn epsilon_restarts_per_level() {
        let cfg = quick(vec![
            LevelConfig::new(Level::One, 50, 1.0),
            LevelConfig::new(Level::Two, 5, 1.0),
        ]);
        let (m, _) = run_curriculum(&cfg, 2, &mut ()).unwrap();
        assert_eq!(m.levels[1].episodes[0].epsilon, 0.9);
        assert!(m.levels[0].episodes[49].epsilon < 0.9);
    }

    #[test]
    fn evaluation_of_random_weights_is_well_formed() {
        let env = Env::default();
        let net = QNetwork::init(crate::dqn::Arch::Hierarchical, &mut stream(0, Stream::Init));
        let r = evaluate(&env, &net, Level::One, 10, 0, OrderPolicy::Shuffled);
        assert!((0.0..=1.0).contains(&r.success_rate));
        assert!(r.mean_length > 0.0);
    }

    #[test]
    fn summary_edge_cases() {
        assert_eq!(pearson(&[1.0], &[2.0]), None);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), None);
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        let h = histogram(&[0.0, 19.9, 20.0, -0.5], 20.0);
        assert_eq!(
            h,
            vec![
                HistogramBin { lo: -20.0, count: 1 },
                HistogramBin { lo: 0.0, count: 2 },
                HistogramBin { lo: 20.0, count: 1 },
            ]
        );
    }

    #[test]
    fn bimodal_peaks_are_recovered() {
        let mut rng = stream(3, Stream::Audit);
        let normal = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
            // Box-Muller
            let (u, v): (f64, f64) = (rng.random_range(1e-12..1.0), rng.random());
            (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
        };
        let mut data = Vec::new();
        for i in 0..20_000 {
            let centre = if i % 2 == 0 { 300.0 } else { 900.0 };
            data.push(centre + 40.0 * normal(&mut rng));
        }
        let p = peaks(&histogram(&data, 20.0), 3);
        let mut top2 = p[..2].to_vec();
        top2.sort_by(f64::total_cmp);
        assert!((top2[0] - 290.0).abs() <= 40.0, "{p:?}");
        assert!((top2[1] - 890.0).abs() <= 40.0, "{p:?}");
    }

    proptest! {
        #[test]
        fn rolling_rate_matches_naive(flags in proptest::collection::vec(any::<bool>(), 0..300), w in 1usize..120) {
            let r = rolling_rate(&flags, w);
            for i in 0..flags.len() {
                let lo = (i + 1).saturating_sub(w);
                let naive = flags[lo..=i].iter().filter(|&&f| f).count() as f64 / (i + 1 - lo) as f64;
                prop_assert_eq!(r[i], naive);
            }
        }

        #[test]
        fn pearson_matches_textbook(seed in 0u64..1000, n in 2usize..200) {
            let mut rng = stream(seed, Stream::Audit);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
            let y: Vec<f64> = x.iter().map(|v| 0.3 * v + rng.random_range(-50.0..50.0)).collect();
            // textbook: covariance over product of standard deviations
            let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let (mx, my) = (m(&x), m(&y));
            let cov = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n as f64;
            let sx = (x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n as f64).sqrt();
            let sy = (y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n as f64).sqrt();
            prop_assert!((pearson(&x, &y).unwrap() - cov / (sx * sy)).abs() < 1e-12);
        }

        #[test]
        fn histogram_mass_is_conserved(v in proptest::collection::vec(-2000.0f64..2000.0, 1..300)) {
            let h = histogram(&v, HIST_BIN_WIDTH);
            prop_assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), v.len());
        }
    }
}
