#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use soma_core::dqn::{greedy_action, loss_and_grad, loss_only, Arch, QNetwork, Transition};
use soma_core::env::{
    bellman_target, ActionIndex, Env, EnvState, LegalMask, Level, OrderPolicy, NUM_ACTIONS,
};
use soma_core::geometry::{normalize, Cell, OrientationTable, PieceId};
use soma_core::rng::{stream, Stream};

pub fn c(x: i32, y: i32, z: i32) -> Cell {
    Cell::new(x, y, z)
}

/// Action placing `piece` exactly on `cells`.
pub fn action_for(piece: PieceId, cells: &[Cell]) -> ActionIndex {
    let t = OrientationTable::get();
    let norm = normalize(cells);
    let anchor = c(
        cells.iter().map(|c| c.x).min().unwrap(),
        cells.iter().map(|c| c.y).min().unwrap(),
        cells.iter().map(|c| c.z).min().unwrap(),
    );
    let o = t
        .range(piece)
        .find(|&o| t.entry(o).cells == norm)
        .expect("shape is an orientation of the piece");
    ActionIndex::from_parts(o, anchor.index().unwrap()).unwrap()
}

/// Uniformly random legal play on level 3.
pub fn random_transitions(n: usize, seed: u64) -> Vec<Transition> {
    let env = Env::default();
    let mut rng = stream(seed, Stream::Audit);
    let mut out = Vec::with_capacity(n);
    let mut episode = 0;
    while out.len() < n {
        let mut s = env.reset(Level::Three, seed ^ (episode << 20), OrderPolicy::Shuffled);
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

/// Pushes every illegal Q-value by ±1e6 and checks that greedy choices and
/// Bellman targets are bit-identical. Returns the number of violations.
pub fn isolation_violations(net: &QNetwork<f32>, ts: &[Transition], seed: u64) -> usize {
    let mut rng = stream(seed, Stream::Audit);
    let mut bad = 0;
    for t in ts {
        let q = net.eval(t.next_state.as_slice()).q_row(0);
        let mut shifted = q.clone();
        for (id, v) in shifted.iter_mut().enumerate() {
            if !t.next_mask.contains(id) {
                *v += if rng.random_bool(0.5) { 1e6 } else { -1e6 };
            }
        }
        if greedy_action(&q, &t.next_mask) != greedy_action(&shifted, &t.next_mask) {
            bad += 1;
        }
        let y = |q: &[f32]| {
            bellman_target(f64::from(t.reward), 0.99, q, &t.next_mask, t.terminal).ok()
        };
        if y(&q).map(f64::to_bits) != y(&shifted).map(f64::to_bits) {
            bad += 1;
        }
    }
    bad
}

/// Worst relative error between the analytic gradient and central
/// differences over `params` random parameters, in f64, dropout off.
pub fn gradient_check(arch: Arch, seed: u64, params: usize, batch: usize) -> f64 {
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
        let at = |delta: f64| {
            let mut n = net.clone();
            let slot = if bias { &mut n.layers[k].b[i] } else { &mut n.layers[k].w[i] };
            *slot += delta;
            loss_only(&n, &refs, &targets)
        };
        let numeric = (at(h) - at(-h)) / (2.0 * h);
        let scale = analytic.abs().max(numeric.abs());
        let rel = if scale < 1e-8 { 0.0 } else { (analytic - numeric).abs() / scale };
        worst = worst.max(rel);
    }
    worst
}

/// Physical violations of placing `a` in `s`: overlap, floating cells, or
/// cells outside the grid.
pub fn placement_violations(s: &EnvState, a: ActionIndex) -> Vec<&'static str> {
    let mut v = Vec::new();
    let Some(cells) = a.cells() else {
        return vec!["out of bounds"];
    };
    let occupied = s.occupancy();
    if cells.intersects(occupied) {
        v.push("overlap");
    }
    let filled = occupied.union(cells);
    for cell in cells.cells() {
        if cell.z > 0 && !filled.contains(c(cell.x, cell.y, cell.z - 1).index().unwrap()) {
            v.push("floating");
            break;
        }
    }
    v
}

pub fn mask_of_ids(ids: &[usize]) -> LegalMask {
    let mut m = LegalMask::none();
    for &i in ids {
        m.set(ActionIndex::new(i % NUM_ACTIONS).unwrap());
    }
    m
}
