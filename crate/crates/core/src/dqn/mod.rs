//! Legal-action-masked DQN: network, replay, exploration schedule and the TD
//! update.

mod checkpoint;
mod net;
mod replay;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError, MAGIC,
    VERSION,
};
pub use net::{combine, Adam, Arch, Dense, Dropout, ForwardPass, Grads, HeadOutput, QNetwork, Scalar};
pub use replay::{ReplayBuffer, Transition};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{
    bellman_target, ActionIndex, EnvError, LegalMask, StateVector, NUM_ACTIONS, NUM_POSITIONS,
};
use crate::geometry::NUM_ORIENTATIONS;
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DqnError {
    #[error("non-finite loss {loss} at update {update} (grad norm {grad_norm})")]
    NonFiniteLoss {
        loss: f64,
        update: u64,
        grad_norm: f64,
    },
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EpsilonSchedule {
    /// `max(floor, start · rate^t)`.
    Exponential { start: f64, rate: f64, floor: f64 },
    /// Straight line from `start` to `end` over `steps`, flat afterwards.
    Linear { start: f64, end: f64, steps: u64 },
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self::exponential()
    }
}

impl EpsilonSchedule {
    pub fn exponential() -> Self {
        Self::Exponential {
            start: 0.9,
            rate: 0.995,
            floor: 0.05,
        }
    }

    pub fn linear() -> Self {
        Self::Linear {
            start: 0.9,
            end: 0.1,
            steps: 40_000,
        }
    }

    pub fn value(&self, t: u64) -> f64 {
        match *self {
            Self::Exponential { start, rate, floor } => {
                let e = i32::try_from(t).map_or(0.0, |t| start * rate.powi(t));
                e.max(floor)
            }
            Self::Linear { start, end, steps } => {
                if t >= steps {
                    end
                } else {
                    start + (end - start) * t as f64 / steps as f64
                }
            }
        }
    }
}

/// What advances the epsilon schedule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayClock {
    #[default]
    Episode,
    Step,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub arch: Arch,
    pub lr: f64,
    pub gamma: f64,
    pub batch: usize,
    /// Hard target sync cadence, in episodes.
    pub target_update_every: u64,
    /// Stored transitions before the first update.
    pub warmup: usize,
    pub grad_clip: f64,
    pub replay_capacity: usize,
    pub dropout: f64,
    pub epsilon: EpsilonSchedule,
    pub decay_clock: DecayClock,
    /// One gradient update per this many environment steps.
    pub train_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Hierarchical,
            lr: 1e-4,
            gamma: 0.99,
            batch: 512,
            target_update_every: 20,
            warmup: 1_000,
            grad_clip: 1.0,
            replay_capacity: 50_000,
            dropout: 0.3,
            epsilon: EpsilonSchedule::default(),
            decay_clock: DecayClock::Episode,
            train_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("lr", self.lr),
            ("gamma", self.gamma),
            ("grad_clip", self.grad_clip),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.gamma >= 1.0 {
            return Err(format!("gamma must be < 1, got {}", self.gamma));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        for (name, v) in [
            ("batch", self.batch as u64),
            ("target_update_every", self.target_update_every),
            ("replay_capacity", self.replay_capacity as u64),
            ("train_every", self.train_every),
        ] {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.batch > self.replay_capacity {
            return Err("batch exceeds replay capacity".into());
        }
        Ok(())
    }
}

/// Masked argmax over all action values; ties go to the lowest id.
pub fn greedy_action<T: Scalar>(q: &[T], mask: &LegalMask) -> Option<ActionIndex> {
    let mut best: Option<(ActionIndex, T)> = None;
    for a in mask.iter() {
        let v = q[a.id()];
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((a, v));
        }
    }
    best.map(|(a, _)| a)
}

/// Epsilon-greedy over legal actions. One uniform draw decides exploration;
/// exploring draws a second uniform index into the legal set.
pub fn select_action<R: Rng>(
    net: &QNetwork<f32>,
    s: &StateVector,
    mask: &LegalMask,
    epsilon: f64,
    rng: &mut R,
) -> Result<ActionIndex, EnvError> {
    if mask.is_empty() {
        return Err(EnvError::EmptyMask);
    }
    if rng.random::<f64>() < epsilon {
        let k = rng.random_range(0..mask.count());
        return Ok(mask.iter().nth(k).expect("k < count"));
    }
    let q = net.eval(s.as_slice()).q_row(0);
    Ok(greedy_action(&q, mask).expect("mask is nonempty"))
}

/// Masked TD targets for `batch` computed with `target` in eval mode.
pub fn td_targets<T: Scalar>(
    target: &QNetwork<T>,
    batch: &[&Transition],
    gamma: f64,
) -> Result<Vec<f64>, EnvError> {
    let x = stack(batch.iter().map(|t| &t.next_state));
    let pass = target.forward::<ChaCha8Rng>(&x, batch.len(), None);
    batch
        .iter()
        .enumerate()
        .map(|(row, t)| {
            if t.terminal {
                return Ok(f64::from(t.reward));
            }
            let q: Vec<f32> = pass
                .q_row(row)
                .iter()
                .map(|v| v.to_f32().unwrap())
                .collect();
            bellman_target(f64::from(t.reward), gamma, &q, &t.next_mask, false)
        })
        .collect()
}

fn stack<'a, T: Scalar>(states: impl Iterator<Item = &'a StateVector>) -> Vec<T> {
    states
        .flat_map(|s| s.0.iter().map(|&v| T::from(v).unwrap()))
        .collect()
}

/// Mean squared TD error of the taken actions, and its gradient.
pub fn loss_and_grad<T: Scalar, R: Rng>(
    net: &QNetwork<T>,
    batch: &[&Transition],
    targets: &[f64],
    dropout: Option<Dropout<'_, R>>,
) -> (T, Grads<T>) {
    let n = batch.len();
    let x = stack(batch.iter().map(|t| &t.state));
    let pass = net.forward(&x, n, dropout);
    let scale = T::from(2.0 / n as f64).unwrap();
    let mut loss = T::zero();
    let mut d_out = match &pass.out {
        HeadOutput::Split { ori, pos } => HeadOutput::Split {
            ori: vec![T::zero(); ori.len()],
            pos: vec![T::zero(); pos.len()],
        },
        HeadOutput::Flat(q) => HeadOutput::Flat(vec![T::zero(); q.len()]),
    };
    for (row, (t, &y)) in batch.iter().zip(targets).enumerate() {
        let a = t.action;
        let err = pass.q(row, a.id()) - T::from(y).unwrap();
        loss = loss + err * err;
        let g = scale * err;
        let slots = match &mut d_out {
            HeadOutput::Split { ori, pos } => vec![
                &mut ori[row * NUM_ORIENTATIONS + a.orientation()],
                &mut pos[row * NUM_POSITIONS + a.position()],
            ],
            HeadOutput::Flat(q) => vec![&mut q[row * NUM_ACTIONS + a.id()]],
        };
        for slot in slots {
            *slot = *slot + g;
        }
    }
    let loss = loss / T::from(n).unwrap();
    (loss, net.backward(&pass, &d_out))
}

/// Loss only, no dropout; used by gradient checks.
pub fn loss_only<T: Scalar>(net: &QNetwork<T>, batch: &[&Transition], targets: &[f64]) -> T {
    let x = stack(batch.iter().map(|t| &t.state));
    let pass = net.forward::<ChaCha8Rng>(&x, batch.len(), None);
    let sum = batch
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(row, (t, &y))| {
            let e = pass.q(row, t.action.id()) - T::from(y).unwrap();
            e * e
        })
        .fold(T::zero(), |a, b| a + b);
    sum / T::from(batch.len()).unwrap()
}

/// What one environment step did to the learner.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateInfo {
    pub loss: Option<f32>,
}

/// Online and target networks, optimizer, replay and the named RNG streams.
#[derive(Clone, Debug)]
pub struct Agent {
    pub online: QNetwork<f32>,
    pub target: QNetwork<f32>,
    cfg: TrainConfig,
    adam: Adam<f32>,
    replay: ReplayBuffer,
    rng_epsilon: ChaCha8Rng,
    rng_dropout: ChaCha8Rng,
    rng_replay: ChaCha8Rng,
    steps: u64,
    episodes: u64,
    updates: u64,
    syncs: u64,
    /// Clock value at which the current epsilon schedule started.
    schedule_origin: u64,
}

impl Agent {
    pub fn new(cfg: TrainConfig, seed: u64) -> Self {
        let net = QNetwork::init(cfg.arch, &mut stream(seed, Stream::Init));
        Self::with_network(net, cfg, seed)
    }

    pub fn with_network(net: QNetwork<f32>, cfg: TrainConfig, seed: u64) -> Self {
        assert_eq!(net.arch, cfg.arch, "network and config disagree on architecture");
        Self {
            target: net.clone(),
            adam: Adam::new(&net, cfg.lr, cfg.grad_clip),
            replay: ReplayBuffer::new(cfg.replay_capacity),
            online: net,
            rng_epsilon: stream(seed, Stream::Epsilon),
            rng_dropout: stream(seed, Stream::Dropout),
            rng_replay: stream(seed, Stream::Replay),
            steps: 0,
            episodes: 0,
            updates: 0,
            syncs: 0,
            schedule_origin: 0,
            cfg,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn syncs(&self) -> u64 {
        self.syncs
    }

    fn clock(&self) -> u64 {
        match self.cfg.decay_clock {
            DecayClock::Episode => self.episodes,
            DecayClock::Step => self.steps,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.cfg.epsilon.value(self.clock() - self.schedule_origin)
    }

    /// Starts the exploration schedule over, e.g. on entering a new level.
    pub fn restart_schedule(&mut self) {
        self.schedule_origin = self.clock();
    }

    pub fn act(&mut self, s: &StateVector, mask: &LegalMask) -> Result<ActionIndex, EnvError> {
        let eps = self.epsilon();
        select_action(&self.online, s, mask, eps, &mut self.rng_epsilon)
    }

    pub fn greedy(&self, s: &StateVector, mask: &LegalMask) -> Result<ActionIndex, EnvError> {
        if mask.is_empty() {
            return Err(EnvError::EmptyMask);
        }
        Ok(greedy_action(&self.online.eval(s.as_slice()).q_row(0), mask).expect("nonempty"))
    }

    /// Stores the transition and runs an update when one is due.
    pub fn observe(&mut self, t: Transition) -> Result<UpdateInfo, DqnError> {
        self.replay.push(t);
        self.steps += 1;
        let ready = self.replay.len() >= self.cfg.warmup.max(self.cfg.batch);
        if ready && self.steps % self.cfg.train_every == 0 {
            let loss = self.train_step()?;
            return Ok(UpdateInfo { loss: Some(loss) });
        }
        Ok(UpdateInfo::default())
    }

    /// One gradient step on a uniformly sampled batch.
    pub fn train_step(&mut self) -> Result<f32, DqnError> {
        let batch = self
            .replay
            .sample(self.cfg.batch, &mut self.rng_replay)
            .expect("caller checked replay size");
        let targets = td_targets(&self.target, &batch, self.cfg.gamma)?;
        let (loss, mut grads) = loss_and_grad(
            &self.online,
            &batch,
            &targets,
            Some(Dropout {
                rate: self.cfg.dropout,
                rng: &mut self.rng_dropout,
            }),
        );
        self.updates += 1;
        let norm = grads.norm();
        if !loss.is_finite() || !norm.is_finite() {
            return Err(DqnError::NonFiniteLoss {
                loss: f64::from(loss),
                update: self.updates,
                grad_norm: f64::from(norm),
            });
        }
        self.adam.step(&mut self.online, &mut grads);
        if !self.online.is_finite() {
            return Err(DqnError::NonFiniteLoss {
                loss: f64::from(loss),
                update: self.updates,
                grad_norm: f64::from(norm),
            });
        }
        Ok(loss)
    }

    /// Counts a finished episode; returns true when the target was synced.
    pub fn end_episode(&mut self) -> bool {
        self.episodes += 1;
        if self.episodes % self.cfg.target_update_every == 0 {
            self.sync_target();
            true
        } else {
            false
        }
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
        self.syncs += 1;
    }
}

#[cfg(test)]
mod tests;
