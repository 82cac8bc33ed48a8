use std::fmt::Debug;

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{NUM_ACTIONS, NUM_POSITIONS, STATE_DIM};
use crate::geometry::NUM_ORIENTATIONS;

/// Floating-point type the network can run in. Training uses `f32`; `f64` exists
/// so gradients can be checked against finite differences without round-off.
pub trait Scalar: Float + Default + Debug + Send + Sync + 'static {
    /// `C = A·B + beta·C` with arbitrary strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_scalar {
    ($t:ty, $f:path) => {
        impl Scalar for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
                    if rows == 0 || cols == 0 {
                        0
                    } else {
                        (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
                    }
                };
                assert!(a.len() >= span(m, k, rsa, csa));
                assert!(b.len() >= span(k, n, rsb, csb));
                assert!(c.len() >= span(m, n, rsc, csc));
                // SAFETY: the asserts above keep every strided access inside the slices,
                // and `c` is uniquely borrowed.
                unsafe {
                    $f(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    )
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    /// Shared trunk with an orientation head and a position head; Q adds them.
    #[default]
    Hierarchical,
    /// One output per action, no decomposition.
    Flat,
}

impl Arch {
    /// `(inputs, outputs)` of every layer, trunk first, then heads.
    pub fn shapes(self) -> Vec<(usize, usize)> {
        match self {
            Arch::Hierarchical => vec![
                (STATE_DIM, 512),
                (512, 256),
                (256, 128),
                (128, NUM_ORIENTATIONS),
                (128, NUM_POSITIONS),
            ],
            Arch::Flat => vec![(STATE_DIM, 512), (512, 256), (256, NUM_ACTIONS)],
        }
    }

    pub fn trunk_len(self) -> usize {
        match self {
            Arch::Hierarchical => 3,
            Arch::Flat => 2,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Arch::Hierarchical => 0,
            Arch::Flat => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Arch::Hierarchical),
            1 => Some(Arch::Flat),
            _ => None,
        }
    }
}

/// Fully connected layer; `w` is `outputs × inputs`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            w: vec![T::zero(); inputs * outputs],
            b: vec![T::zero(); outputs],
        }
    }

    /// `y = x·Wᵀ + b` for `batch` rows of `x`.
    fn forward(&self, x: &[T], batch: usize) -> Vec<T> {
        let mut y = Vec::with_capacity(batch * self.outputs);
        for _ in 0..batch {
            y.extend_from_slice(&self.b);
        }
        let (i, o) = (self.inputs as isize, self.outputs as isize);
        T::gemm(batch, self.inputs, self.outputs, x, i, 1, &self.w, 1, i, T::one(), &mut y, o, 1);
        y
    }
}

/// Network parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork<T = f32> {
    pub arch: Arch,
    pub layers: Vec<Dense<T>>,
}

/// Gradient with the same layout as the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Scalar> Grads<T> {
    pub fn norm(&self) -> T {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.b))
            .fold(T::zero(), |acc, &g| acc + g * g)
            .sqrt()
    }

    pub fn scale(&mut self, by: T) {
        for l in &mut self.layers {
            for g in l.w.iter_mut().chain(l.b.iter_mut()) {
                *g = *g * by;
            }
        }
    }
}

/// Head outputs for a batch.
#[derive(Clone, Debug, PartialEq)]
pub enum HeadOutput<T> {
    /// `[batch × 116]` orientation values and `[batch × 27]` position values.
    Split { ori: Vec<T>, pos: Vec<T> },
    /// `[batch × 3132]`.
    Flat(Vec<T>),
}

/// Dropout settings for a training-mode forward pass.
pub struct Dropout<'a, R: Rng> {
    pub rate: f64,
    pub rng: &'a mut R,
}

/// Intermediate values kept for backprop.
pub struct ForwardPass<T> {
    pub batch: usize,
    /// Input to each trunk layer, plus the trunk output at the end.
    acts: Vec<Vec<T>>,
    /// Pre-activation of each trunk layer.
    pre: Vec<Vec<T>>,
    /// Inverted-dropout multipliers, one per trunk layer.
    masks: Vec<Option<Vec<T>>>,
    pub out: HeadOutput<T>,
}

impl<T: Scalar> ForwardPass<T> {
    /// Q of action `action_id` for batch row `row`.
    pub fn q(&self, row: usize, action_id: usize) -> T {
        let (o, p) = (action_id / NUM_POSITIONS, action_id % NUM_POSITIONS);
        match &self.out {
            HeadOutput::Split { ori, pos } => {
                ori[row * NUM_ORIENTATIONS + o] + pos[row * NUM_POSITIONS + p]
            }
            HeadOutput::Flat(q) => q[row * NUM_ACTIONS + action_id],
        }
    }

    /// All 3132 action values of row `row`.
    pub fn q_row(&self, row: usize) -> Vec<T> {
        match &self.out {
            HeadOutput::Split { ori, pos } => combine(
                &ori[row * NUM_ORIENTATIONS..(row + 1) * NUM_ORIENTATIONS],
                &pos[row * NUM_POSITIONS..(row + 1) * NUM_POSITIONS],
            ),
            HeadOutput::Flat(q) => q[row * NUM_ACTIONS..(row + 1) * NUM_ACTIONS].to_vec(),
        }
    }
}

/// `Q[o·27 + p] = q_ori[o] + q_pos[p]`.
pub fn combine<T: Scalar>(q_ori: &[T], q_pos: &[T]) -> Vec<T> {
    assert_eq!(q_ori.len(), NUM_ORIENTATIONS);
    assert_eq!(q_pos.len(), NUM_POSITIONS);
    let mut q = Vec::with_capacity(NUM_ACTIONS);
    for &o in q_ori {
        q.extend(q_pos.iter().map(|&p| o + p));
    }
    q
}

impl<T: Scalar> QNetwork<T> {
    pub fn zeros(arch: Arch) -> Self {
        Self {
            arch,
            layers: arch
                .shapes()
                .into_iter()
                .map(|(i, o)| Dense::zeros(i, o))
                .collect(),
        }
    }

    /// He-uniform weights for the rectified trunk, LeCun-uniform for the heads,
    /// zero biases.
    pub fn init<R: Rng>(arch: Arch, rng: &mut R) -> Self {
        let mut net = Self::zeros(arch);
        let trunk = arch.trunk_len();
        for (k, l) in net.layers.iter_mut().enumerate() {
            let gain = if k < trunk { 6.0 } else { 3.0 };
            let bound = (gain / l.inputs as f64).sqrt();
            for w in &mut l.w {
                *w = T::from(rng.random_range(-bound..bound)).unwrap();
            }
        }
        net
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<U: Scalar>(&self) -> QNetwork<U> {
        let conv = |v: &[T]| v.iter().map(|&x| U::from(x).unwrap()).collect();
        QNetwork {
            arch: self.arch,
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    w: conv(&l.w),
                    b: conv(&l.b),
                })
                .collect(),
        }
    }

    /// Batched forward pass over `x` (`batch × 36`). Dropout is applied after
    /// every trunk activation when given; eval mode passes `None`.
    pub fn forward<R: Rng>(
        &self,
        x: &[T],
        batch: usize,
        mut dropout: Option<Dropout<'_, R>>,
    ) -> ForwardPass<T> {
        assert_eq!(x.len(), batch * STATE_DIM);
        let trunk = self.arch.trunk_len();
        let mut acts = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(trunk);
        let mut masks = Vec::with_capacity(trunk);
        for layer in &self.layers[..trunk] {
            let z = layer.forward(acts.last().unwrap(), batch);
            let mut h: Vec<T> = z.iter().map(|&v| v.max(T::zero())).collect();
            let mask = dropout.as_mut().filter(|d| d.rate > 0.0).map(|d| {
                let keep = T::from(1.0 / (1.0 - d.rate)).unwrap();
                let m: Vec<T> = (0..h.len())
                    .map(|_| {
                        if d.rng.random::<f64>() < d.rate {
                            T::zero()
                        } else {
                            keep
                        }
                    })
                    .collect();
                for (v, &k) in h.iter_mut().zip(&m) {
                    *v = *v * k;
                }
                m
            });
            pre.push(z);
            masks.push(mask);
            acts.push(h);
        }
        let features = acts.last().unwrap();
        let out = match self.arch {
            Arch::Hierarchical => HeadOutput::Split {
                ori: self.layers[trunk].forward(features, batch),
                pos: self.layers[trunk + 1].forward(features, batch),
            },
            Arch::Flat => HeadOutput::Flat(self.layers[trunk].forward(features, batch)),
        };
        ForwardPass {
            batch,
            acts,
            pre,
            masks,
            out,
        }
    }

    /// Eval-mode forward pass of a single state.
    pub fn eval(&self, x: &[T]) -> ForwardPass<T> {
        self.forward::<rand_chacha::ChaCha8Rng>(x, 1, None)
    }

    /// Backprop of `d_out` (same layout as the head output) through `pass`.
    pub fn backward(&self, pass: &ForwardPass<T>, d_out: &HeadOutput<T>) -> Grads<T> {
        let batch = pass.batch;
        let trunk = self.arch.trunk_len();
        let mut grads: Vec<Dense<T>> = self
            .layers
            .iter()
            .map(|l| Dense::zeros(l.inputs, l.outputs))
            .collect();
        let features = &pass.acts[trunk];
        let mut d_feat = vec![T::zero(); batch * self.layers[trunk].inputs];
        let heads: Vec<(usize, &Vec<T>)> = match d_out {
            HeadOutput::Split { ori, pos } => vec![(trunk, ori), (trunk + 1, pos)],
            HeadOutput::Flat(q) => vec![(trunk, q)],
        };
        for (k, dy) in heads {
            linear_backward(&self.layers[k], features, dy, batch, &mut grads[k], &mut d_feat, true);
        }
        let mut d_h = d_feat;
        for k in (0..trunk).rev() {
            let mut d_z = d_h;
            for (i, g) in d_z.iter_mut().enumerate() {
                if pass.pre[k][i] <= T::zero() {
                    *g = T::zero();
                } else if let Some(m) = &pass.masks[k] {
                    *g = *g * m[i];
                }
            }
            let mut d_x = if k > 0 {
                vec![T::zero(); batch * self.layers[k].inputs]
            } else {
                Vec::new()
            };
            linear_backward(&self.layers[k], &pass.acts[k], &d_z, batch, &mut grads[k], &mut d_x, k > 0);
            d_h = d_x;
        }
        Grads { layers: grads }
    }
}

/// Accumulates parameter gradients of a linear layer into `g` and, when
/// `want_dx`, adds the input gradient into `dx`.
fn linear_backward<T: Scalar>(
    layer: &Dense<T>,
    x: &[T],
    dy: &[T],
    batch: usize,
    g: &mut Dense<T>,
    dx: &mut [T],
    want_dx: bool,
) {
    let (i, o) = (layer.inputs as isize, layer.outputs as isize);
    // dW = dyᵀ · x
    T::gemm(layer.outputs, batch, layer.inputs, dy, 1, o, x, i, 1, T::one(), &mut g.w, i, 1);
    for row in dy.chunks_exact(layer.outputs) {
        for (b, &d) in g.b.iter_mut().zip(row) {
            *b = *b + d;
        }
    }
    if want_dx {
        // dx += dy · W
        T::gemm(batch, layer.outputs, layer.inputs, dy, o, 1, &layer.w, i, 1, T::one(), dx, i, 1);
    }
}

/// Adam with global-norm gradient clipping.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip: f64,
    t: i32,
    m: Vec<Dense<T>>,
    v: Vec<Dense<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(net: &QNetwork<T>, lr: f64, clip: f64) -> Self {
        let zeros = || {
            net.layers
                .iter()
                .map(|l| Dense::zeros(l.inputs, l.outputs))
                .collect()
        };
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// Clips `grads` in place and applies one update. Returns the pre-clip norm.
    pub fn step(&mut self, net: &mut QNetwork<T>, grads: &mut Grads<T>) -> T {
        let norm = grads.norm();
        let clip = T::from(self.clip).unwrap();
        if norm > clip {
            grads.scale(clip / norm);
        }
        self.t += 1;
        let c = |x: f64| T::from(x).unwrap();
        let (b1, b2) = (c(self.beta1), c(self.beta2));
        let bc1 = c(1.0 - self.beta1.powi(self.t));
        let bc2 = c(1.0 - self.beta2.powi(self.t));
        let (lr, eps) = (c(self.lr), c(self.eps));
        let one = T::one();
        for (((p, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            let params = p.w.iter_mut().chain(p.b.iter_mut());
            let gs = g.w.iter().chain(&g.b);
            let ms = m.w.iter_mut().chain(m.b.iter_mut());
            let vs = v.w.iter_mut().chain(v.b.iter_mut());
            for (((p, &g), m), v) in params.zip(gs).zip(ms).zip(vs) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        norm
    }
}
