use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::env::{Env, Level, OrderPolicy, NUM_ACTIONS, STATE_DIM};
use crate::rng::{stream, Stream};

/// Transitions from uniformly random level-3 play.
pub(crate) fn random_transitions(n: usize, seed: u64) -> Vec<Transition> {
    let env = Env::default();
    let mut rng = stream(seed, Stream::Audit);
    let mut out = Vec::with_capacity(n);
    let mut episode = 0;
    while out.len() < n {
        let mut s = env.reset(Level::Three, seed ^ episode, OrderPolicy::Shuffled);
        episode += 1;
        let mut mask = env.legal_mask(&s);
        while !mask.is_empty() && out.len() < n {
            let a = mask.iter().nth(rng.random_range(0..mask.count())).unwrap();
            let r = env.step(&s, a).unwrap();
            out.push(Transition {
                state: s.encode(),
                action: a,
                reward: r.reward.total() as f32,
                next_state: r.state.encode(),
                next_mask: r.next_mask.clone(),
                terminal: r.done.is_terminal(),
            });
            s = r.state;
            mask = r.next_mask;
        }
    }
    out
}

fn small_config() -> TrainConfig {
    TrainConfig {
        batch: 16,
        warmup: 16,
        replay_capacity: 256,
        ..TrainConfig::default()
    }
}

#[test]
fn exponential_schedule_matches_closed_form() {
    let e = EpsilonSchedule::exponential();
    for t in [0u64, 1, 10, 100, 500, 587, 588, 1000, 100_000] {
        let oracle = (0.9 * 0.995f64.powf(t as f64)).max(0.05);
        assert!((e.value(t) - oracle).abs() < 1e-12, "t={t}");
    }
    assert_eq!(e.value(0), 0.9);
    assert_eq!(e.value(u64::MAX), 0.05);
}

#[test]
fn linear_schedule_endpoints() {
    let l = EpsilonSchedule::linear();
    assert_eq!(l.value(0), 0.9);
    assert_eq!(l.value(40_000), 0.1);
    assert_eq!(l.value(80_000), 0.1);
    assert!((l.value(20_000) - 0.5).abs() < 1e-12);
}

#[test]
fn single_legal_action_is_always_chosen() {
    let net = QNetwork::init(Arch::Hierarchical, &mut stream(0, Stream::Init));
    let mut mask = LegalMask::none();
    let only = ActionIndex::new(1234).unwrap();
    mask.set(only);
    let mut rng = stream(0, Stream::Epsilon);
    let s = StateVector([0.0; STATE_DIM]);
    for eps in [0.0, 0.5, 1.0] {
        for _ in 0..50 {
            assert_eq!(select_action(&net, &s, &mask, eps, &mut rng).unwrap(), only);
        }
    }
    assert_eq!(
        select_action(&net, &s, &LegalMask::none(), 0.0, &mut rng),
        Err(EnvError::EmptyMask)
    );
}

#[test]
fn full_exploration_is_uniform_over_legal_actions() {
    let net = QNetwork::<f32>::zeros(Arch::Hierarchical);
    let legal = [3usize, 100, 200, 999, 2000, 3131];
    let mut mask = LegalMask::none();
    for &i in &legal {
        mask.set(ActionIndex::new(i).unwrap());
    }
    let mut rng = stream(7, Stream::Epsilon);
    let s = StateVector([0.0; STATE_DIM]);
    let draws = 100_000;
    let mut counts = [0usize; 6];
    for _ in 0..draws {
        let a = select_action(&net, &s, &mask, 1.0, &mut rng).unwrap();
        counts[legal.iter().position(|&l| l == a.id()).unwrap()] += 1;
    }
    let expected = draws as f64 / 6.0;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // 5 degrees of freedom, p = 0.001
    assert!(chi2 < 20.515, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn greedy_ignores_illegal_maximum_and_breaks_ties_low() {
    let mut q = vec![0f32; NUM_ACTIONS];
    q[10] = 1e6;
    q[20] = 5.0;
    q[30] = 5.0;
    let mut mask = LegalMask::none();
    for i in [20, 30, 40] {
        mask.set(ActionIndex::new(i).unwrap());
    }
    assert_eq!(greedy_action(&q, &mask).unwrap().id(), 20);
    q[40] = f32::NEG_INFINITY;
    assert_eq!(greedy_action(&q, &mask).unwrap().id(), 20);
}

#[test]
fn terminal_targets_are_rewards() {
    let net = QNetwork::<f32>::init(Arch::Hierarchical, &mut stream(1, Stream::Init));
    let mut ts = random_transitions(40, 1);
    for (i, t) in ts.iter_mut().enumerate() {
        t.terminal = true;
        t.reward = i as f32 - 3.5;
    }
    let batch: Vec<&Transition> = ts.iter().collect();
    let y = td_targets(&net, &batch, 0.99).unwrap();
    for (i, &v) in y.iter().enumerate() {
        assert_eq!(v, i as f64 - 3.5);
    }
}

#[test]
fn duplicated_transition_loss_is_its_squared_error() {
    let net = QNetwork::init(Arch::Hierarchical, &mut stream(2, Stream::Init));
    let t = random_transitions(1, 2).remove(0);
    let batch: Vec<&Transition> = std::iter::repeat_n(&t, 512).collect();
    let targets = td_targets(&net, &batch, 0.99).unwrap();
    let q = net.eval(t.state.as_slice()).q(0, t.action.id());
    let single = (f64::from(q) - targets[0]).powi(2);
    let loss = loss_only(&net, &batch, &targets);
    assert!((f64::from(loss) - single).abs() <= 1e-5 * single.max(1.0));
}

/// Central differences in f64 against the analytic gradient.
pub(crate) fn gradient_check(arch: Arch, seed: u64, params: usize, batch: usize) -> f64 {
    let net: QNetwork<f64> = QNetwork::init(arch, &mut stream(seed, Stream::Init));
    let ts = random_transitions(batch, seed);
    let refs: Vec<&Transition> = ts.iter().collect();
    let mut rng = stream(seed, Stream::Audit);
    let targets: Vec<f64> = (0..batch).map(|_| rng.random_range(-50.0..50.0)).collect();
    let (_, grads) = loss_and_grad::<f64, ChaCha8Rng>(&net, &refs, &targets, None);
    let h = 1e-6;
    let mut worst = 0f64;
    for _ in 0..params {
        let k = rng.random_range(0..net.layers.len());
        let bias = rng.random_bool(0.2);
        let len = if bias { net.layers[k].b.len() } else { net.layers[k].w.len() };
        let i = rng.random_range(0..len);
        let analytic = if bias { grads.layers[k].b[i] } else { grads.layers[k].w[i] };
        let eval_at = |delta: f64| {
            let mut n = net.clone();
            let slot = if bias { &mut n.layers[k].b[i] } else { &mut n.layers[k].w[i] };
            *slot += delta;
            loss_only(&n, &refs, &targets)
        };
        let numeric = (eval_at(h) - eval_at(-h)) / (2.0 * h);
        let scale = analytic.abs().max(numeric.abs());
        let rel = if scale < 1e-8 { 0.0 } else { (analytic - numeric).abs() / scale };
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    for seed in 0..3 {
        let worst = gradient_check(Arch::Hierarchical, seed, 10, 8);
        assert!(worst <= 1e-4, "seed {seed}: {worst}");
    }
    assert!(gradient_check(Arch::Flat, 9, 10, 8) <= 1e-4);
}

#[test]
fn sync_copies_and_train_step_leaves_target_alone() {
    let mut agent = Agent::new(small_config(), 3);
    for t in random_transitions(64, 3) {
        agent.observe(t).unwrap();
    }
    assert!(agent.updates() > 0);
    let probe = random_transitions(1, 4).remove(0).state;
    let before = agent.target.clone();
    agent.train_step().unwrap();
    assert_eq!(agent.target, before);
    assert_ne!(agent.online, before);
    agent.sync_target();
    let a = agent.online.eval(probe.as_slice()).q_row(0);
    let b = agent.target.eval(probe.as_slice()).q_row(0);
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn target_syncs_every_twenty_episodes() {
    let mut agent = Agent::new(small_config(), 0);
    let mut synced = Vec::new();
    for _ in 0..65 {
        if agent.end_episode() {
            synced.push(agent.episodes());
        }
    }
    assert_eq!(synced, vec![20, 40, 60]);
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut agent = Agent::new(small_config(), 11);
        let mut losses = Vec::new();
        for t in random_transitions(1100, 11) {
            if let Some(l) = agent.observe(t).unwrap().loss {
                losses.push(l.to_bits());
            }
        }
        losses
    };
    let a = run();
    assert!(a.len() >= 1000);
    assert_eq!(a, run());
}

#[test]
fn loss_decreases_on_a_fixed_batch() {
    let mut agent = Agent::new(
        TrainConfig {
            lr: 1e-3,
            dropout: 0.0,
            ..small_config()
        },
        5,
    );
    let ts = random_transitions(16, 5);
    for t in ts.iter().cloned() {
        agent.replay.push(t);
    }
    let first = agent.train_step().unwrap();
    let mut last = first;
    for _ in 0..200 {
        last = agent.train_step().unwrap();
    }
    assert!(last < first * 0.5, "{first} -> {last}");
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    for bad in [
        TrainConfig { gamma: 1.0, ..TrainConfig::default() },
        TrainConfig { lr: 0.0, ..TrainConfig::default() },
        TrainConfig { batch: 0, ..TrainConfig::default() },
        TrainConfig { dropout: 1.0, ..TrainConfig::default() },
        TrainConfig { replay_capacity: 100, ..TrainConfig::default() },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedules_are_monotone_and_bounded(t in 0u64..200_000, dt in 1u64..1000) {
        for s in [EpsilonSchedule::exponential(), EpsilonSchedule::linear()] {
            prop_assert!(s.value(t + dt) <= s.value(t));
            prop_assert!(s.value(t) <= 0.9);
            prop_assert!(s.value(t) >= 0.05);
        }
    }

    #[test]
    fn head_shifts_do_not_change_greedy_choice(seed in 0u64..1000, c in -1e3f32..1e3) {
        let mut rng = stream(seed, Stream::Audit);
        let ori: Vec<f32> = (0..116).map(|_| rng.random_range(-10.0..10.0)).collect();
        let pos: Vec<f32> = (0..27).map(|_| rng.random_range(-10.0..10.0)).collect();
        let mut mask = LegalMask::none();
        for _ in 0..20 {
            mask.set(ActionIndex::new(rng.random_range(0..NUM_ACTIONS)).unwrap());
        }
        let base = greedy_action(&combine(&ori, &pos), &mask);
        let shifted_ori: Vec<f32> = ori.iter().map(|v| v + c).collect();
        let shifted_pos: Vec<f32> = pos.iter().map(|v| v + c).collect();
        prop_assert_eq!(greedy_action(&combine(&shifted_ori, &pos), &mask), base);
        prop_assert_eq!(greedy_action(&combine(&ori, &shifted_pos), &mask), base);
    }
}
