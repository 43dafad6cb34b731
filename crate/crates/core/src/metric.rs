//! Intra-class pull / inter-class hinge push on feature representations.
//!
//! With `D(a, b) = ‖a − b‖² / d`:
//!
//! * `intra(k) = 2/(|S_k|² − |S_k|) · Σ_{i<j ∈ S_k} D(r_i, r_j)`
//! * `inter(p, q) = 1/(|S_p|·|S_q|) · Σ_{i∈S_p, j∈S_q} max(0, m − D(r_i, r_j))`
//! * `loss = Σ_k { intra(k) + λ · Σ_{i≠k} inter(k, i) }`
//!
//! The double sum visits every unordered class pair twice; that is kept as
//! written. All quantities are computed per mini-batch over the classes
//! present in it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{FeatureBatch, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub margin: f64,
    pub lambda_weight: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            margin: 0.5,
            lambda_weight: 0.1,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::Config(format!("margin must be finite and >= 0, got {}", self.margin)));
        }
        if !(self.lambda_weight.is_finite() && self.lambda_weight >= 0.0) {
            return Err(Error::Config(format!(
                "lambda_weight must be finite and >= 0, got {}",
                self.lambda_weight
            )));
        }
        Ok(())
    }
}

/// Rows of a batch grouped by class (`S_k`). Only classes present appear.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    pub subsets: BTreeMap<usize, Vec<usize>>,
}

impl ClassPartition {
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut subsets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (row, &y) in labels.iter().enumerate() {
            subsets.entry(y).or_default().push(row);
        }
        Self { subsets }
    }

    pub fn num_classes_present(&self) -> usize {
        self.subsets.len()
    }

    pub fn members(&self, class: usize) -> &[usize] {
        self.subsets.get(&class).map_or(&[], Vec::as_slice)
    }
}

#[inline]
fn distance<T: Real>(a: &[T], b: &[T]) -> T {
    let s: T = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
    s / T::lit(a.len() as f64)
}

/// `‖a − b‖² / dim`.
pub fn pairwise_distance<T: Real>(a: &[T], b: &[T], dim: usize) -> Result<T> {
    if a.len() != dim || b.len() != dim || dim == 0 {
        return Err(Error::Shape(format!(
            "distance between vectors of length {} and {} with dim {dim}",
            a.len(),
            b.len()
        )));
    }
    Ok(distance(a, b))
}

pub fn intra_loss<T: Real>(batch: &FeatureBatch<T>, partition: &ClassPartition, class: usize) -> T {
    let s = partition.members(class);
    let n = s.len();
    if n < 2 {
        return T::zero();
    }
    let mut sum = T::zero();
    for (a, &i) in s.iter().enumerate() {
        for &j in &s[a + 1..] {
            sum += distance(batch.row(i), batch.row(j));
        }
    }
    sum * T::lit(2.0 / (n * n - n) as f64)
}

pub fn inter_loss<T: Real>(batch: &FeatureBatch<T>, partition: &ClassPartition, p: usize, q: usize, margin: f64) -> T {
    let (sp, sq) = (partition.members(p), partition.members(q));
    if p == q || sp.is_empty() || sq.is_empty() {
        return T::zero();
    }
    let m = T::lit(margin);
    let mut sum = T::zero();
    for &i in sp {
        for &j in sq {
            sum += (m - distance(batch.row(i), batch.row(j))).max(T::zero());
        }
    }
    sum / T::lit((sp.len() * sq.len()) as f64)
}

#[derive(Debug, Clone)]
pub struct MetricOutput<T> {
    pub loss: T,
    /// Exact gradient of `loss` w.r.t. every feature row.
    pub grad: Tensor<T>,
    /// Set when fewer than two classes were present, so no inter pair existed.
    pub inter_skipped: bool,
}

/// `grad_i += coef·(2/d)(r_i − r_j)`, `grad_j −= the same`.
fn push_pair_grad<T: Real>(grad: &mut Tensor<T>, batch: &FeatureBatch<T>, i: usize, j: usize, coef: T) {
    let c = coef * T::lit(2.0 / batch.dim as f64);
    let (ri, rj) = (batch.row(i), batch.row(j));
    let diff: Vec<T> = ri.iter().zip(rj).map(|(&a, &b)| c * (a - b)).collect();
    for (g, d) in grad.row_mut(i).iter_mut().zip(&diff) {
        *g += *d;
    }
    for (g, d) in grad.row_mut(j).iter_mut().zip(&diff) {
        *g -= *d;
    }
}

pub fn metric_loss<T: Real>(batch: &FeatureBatch<T>, partition: &ClassPartition, config: &MetricConfig) -> MetricOutput<T> {
    let mut grad = Tensor::zeros(&[batch.len(), batch.dim]);
    let mut loss = T::zero();
    let lambda = T::lit(config.lambda_weight);
    let margin = T::lit(config.margin);
    let classes: Vec<usize> = partition.subsets.keys().copied().collect();

    for &k in &classes {
        let s = partition.members(k);
        let n = s.len();
        if n >= 2 {
            let coef = T::lit(2.0 / (n * n - n) as f64);
            for (a, &i) in s.iter().enumerate() {
                for &j in &s[a + 1..] {
                    loss += coef * distance(batch.row(i), batch.row(j));
                    push_pair_grad(&mut grad, batch, i, j, coef);
                }
            }
        }
        for &other in classes.iter().filter(|&&c| c != k) {
            let so = partition.members(other);
            let coef = lambda / T::lit((n * so.len()) as f64);
            for &i in s {
                for &j in so {
                    let gap = margin - distance(batch.row(i), batch.row(j));
                    // Hinge is inactive at the boundary: subgradient 0 when D == m.
                    if gap > T::zero() {
                        loss += coef * gap;
                        push_pair_grad(&mut grad, batch, i, j, -coef);
                    }
                }
            }
        }
    }
    MetricOutput {
        loss,
        grad,
        inter_skipped: classes.len() < 2,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub mean_intra: f64,
    pub mean_inter: f64,
    pub ratio: f64,
    pub intra_pairs: u64,
    pub inter_pairs: u64,
}

/// Mean `D` over all same-class pairs and all cross-class pairs.
pub fn distance_statistics<T: Real>(batch: &FeatureBatch<T>, partition: &ClassPartition) -> Result<DistanceStats> {
    if partition.num_classes_present() < 2 {
        return Err(Error::Evaluation(
            "distance statistics need at least two classes".into(),
        ));
    }
    let rows: Vec<Vec<f64>> = (0..batch.len())
        .map(|i| batch.row(i).iter().map(|x| x.as_f64()).collect())
        .collect();
    let (mut intra, mut inter) = (0.0f64, 0.0f64);
    let (mut n_intra, mut n_inter) = (0u64, 0u64);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let d = distance(&rows[i], &rows[j]);
            if batch.labels[i] == batch.labels[j] {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    if n_intra == 0 {
        return Err(Error::Evaluation(
            "no same-class pairs: intra-class distance undefined".into(),
        ));
    }
    let mean_intra = intra / n_intra as f64;
    let mean_inter = inter / n_inter as f64;
    Ok(DistanceStats {
        mean_intra,
        mean_inter,
        ratio: mean_intra / mean_inter,
        intra_pairs: n_intra,
        inter_pairs: n_inter,
    })
}
