//! Layer kernels as plain functions over row-major slices. The model composes
//! them; keeping them separate lets each be gradient-checked on its own.

use rand::Rng;

use super::real::{axpy, dot, Real};
use crate::corpus::PAD;

/// Gathers embedding rows for `ids` into `[rows × dim]`. PAD ids and rows past
/// the end of `ids` are zero.
pub fn embedding_lookup<T: Real>(table: &[T], dim: usize, ids: &[u32], rows: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * dim];
    for (r, &id) in ids.iter().take(rows).enumerate() {
        if id != PAD {
            let i = id as usize;
            out[r * dim..(r + 1) * dim].copy_from_slice(&table[i * dim..(i + 1) * dim]);
        }
    }
    out
}

/// Scatter-adds `dx` (`[rows × dim]`) into the table gradient. PAD never
/// receives gradient so its row stays zero.
pub fn embedding_backward<T: Real>(grad_table: &mut [T], dim: usize, ids: &[u32], dx: &[T]) {
    for (r, &id) in ids.iter().enumerate().take(dx.len() / dim) {
        if id != PAD {
            let i = id as usize;
            axpy(T::one(), &dx[r * dim..(r + 1) * dim], &mut grad_table[i * dim..(i + 1) * dim]);
        }
    }
}

/// Valid 1-D convolution over time. `x` is `[rows × dim]`, `weight` is
/// `[filters × kernel × dim]`. Returns pre-activations `[n_win × filters]`
/// where window `t` covers rows `t..t+kernel`.
pub fn conv1d_forward<T: Real>(
    x: &[T],
    dim: usize,
    weight: &[T],
    bias: &[T],
    kernel: usize,
    n_win: usize,
) -> Vec<T> {
    let filters = bias.len();
    let span = kernel * dim;
    debug_assert!(n_win == 0 || x.len() >= (n_win - 1) * dim + span);
    let mut out = Vec::with_capacity(n_win * filters);
    for t in 0..n_win {
        let window = &x[t * dim..t * dim + span];
        for f in 0..filters {
            out.push(bias[f] + dot(&weight[f * span..(f + 1) * span], window));
        }
    }
    out
}

/// Accumulates conv gradients. Zero entries of `dout` are skipped, so a
/// max-pooled upstream gradient costs one window per filter.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward<T: Real>(
    x: &[T],
    dim: usize,
    weight: &[T],
    kernel: usize,
    n_win: usize,
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    dx: Option<&mut [T]>,
) {
    let filters = dbias.len();
    let span = kernel * dim;
    let mut dx = dx;
    for t in 0..n_win {
        for f in 0..filters {
            let g = dout[t * filters + f];
            if g == T::zero() {
                continue;
            }
            dbias[f] += g;
            axpy(g, &x[t * dim..t * dim + span], &mut dweight[f * span..(f + 1) * span]);
            if let Some(dx) = dx.as_deref_mut() {
                axpy(g, &weight[f * span..(f + 1) * span], &mut dx[t * dim..t * dim + span]);
            }
        }
    }
}

pub fn relu_forward<T: Real>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| v.max(T::zero())).collect()
}

/// Subgradient 0 at exactly zero.
pub fn relu_backward<T: Real>(pre: &[T], dout: &[T]) -> Vec<T> {
    pre.iter()
        .zip(dout)
        .map(|(&p, &g)| if p > T::zero() { g } else { T::zero() })
        .collect()
}

/// Max over time per filter for `x` of shape `[n_win × filters]`. Returns the
/// pooled values and, per filter, the first time index attaining the max.
/// With no windows the output is zero and nothing is recorded.
pub fn max_pool_time_forward<T: Real>(x: &[T], n_win: usize, filters: usize) -> (Vec<T>, Vec<usize>) {
    if n_win == 0 {
        return (vec![T::zero(); filters], Vec::new());
    }
    let mut best = x[..filters].to_vec();
    let mut arg = vec![0usize; filters];
    for t in 1..n_win {
        let row = &x[t * filters..(t + 1) * filters];
        for f in 0..filters {
            if row[f] > best[f] {
                best[f] = row[f];
                arg[f] = t;
            }
        }
    }
    (best, arg)
}

/// Routes each filter's gradient to its recorded argmax position.
pub fn max_pool_time_backward<T: Real>(dpooled: &[T], argmax: &[usize], n_win: usize) -> Vec<T> {
    let filters = dpooled.len();
    let mut dx = vec![T::zero(); n_win * filters];
    for (f, &t) in argmax.iter().enumerate() {
        dx[t * filters + f] += dpooled[f];
    }
    dx
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutMode {
    TrainStochastic,
    McStochastic,
    Deterministic,
}

impl DropoutMode {
    pub fn is_stochastic(self) -> bool {
        !matches!(self, DropoutMode::Deterministic)
    }
}

/// Inverted-dropout multipliers: each entry is `0` with probability `p`,
/// otherwise `1/(1-p)`. Deterministic mode returns all ones and draws nothing.
pub fn dropout_mask<T: Real, R: Rng + ?Sized>(n: usize, p: f64, mode: DropoutMode, rng: &mut R) -> Vec<T> {
    if !mode.is_stochastic() {
        return vec![T::one(); n];
    }
    let keep = T::lit(1.0 / (1.0 - p));
    (0..n)
        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
        .collect()
}

/// `y = x·Wᵀ + b` with `x: [batch × inp]`, `w: [out × inp]`.
pub fn linear_forward<T: Real>(x: &[T], w: &[T], b: &[T], batch: usize) -> Vec<T> {
    let out = b.len();
    let inp = w.len() / out;
    let mut y = Vec::with_capacity(batch * out);
    for i in 0..batch {
        let xi = &x[i * inp..(i + 1) * inp];
        for o in 0..out {
            y.push(b[o] + dot(&w[o * inp..(o + 1) * inp], xi));
        }
    }
    y
}

/// Accumulates `dW`, `db` and returns `dx`.
pub fn linear_backward<T: Real>(
    x: &[T],
    w: &[T],
    dy: &[T],
    batch: usize,
    dw: &mut [T],
    db: &mut [T],
) -> Vec<T> {
    let out = db.len();
    let inp = w.len() / out;
    let mut dx = vec![T::zero(); batch * inp];
    for i in 0..batch {
        let xi = &x[i * inp..(i + 1) * inp];
        for o in 0..out {
            let g = dy[i * out + o];
            if g == T::zero() {
                continue;
            }
            db[o] += g;
            axpy(g, xi, &mut dw[o * inp..(o + 1) * inp]);
            axpy(g, &w[o * inp..(o + 1) * inp], &mut dx[i * inp..(i + 1) * inp]);
        }
    }
    dx
}
