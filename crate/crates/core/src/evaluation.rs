//! Selective prediction under deferral: the most uncertain fraction `r` of
//! the test set goes to human experts, the rest is scored as usual.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    pub instance_id: String,
    pub predicted_class: usize,
    pub true_class: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeferralMode {
    /// Metrics over the kept set `S \ S_r` only.
    RemainingOnly,
    /// Deferred items count as correctly labelled; metrics over all of `S`.
    Combined,
}

impl DeferralMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DeferralMode::RemainingOnly => "remaining_only",
            DeferralMode::Combined => "combined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeferralPolicy {
    pub ratios: Vec<f64>,
    pub mode: DeferralMode,
}

impl Default for DeferralPolicy {
    fn default() -> Self {
        Self {
            ratios: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            mode: DeferralMode::RemainingOnly,
        }
    }
}

impl DeferralPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::Config(format!("ratios must lie in [0, 1): {:?}", self.ratios)));
        }
        if self.ratios.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "ratios must be strictly ascending: {:?}",
                self.ratios
            )));
        }
        Ok(())
    }
}

/// `floor(r·n)`. The epsilon absorbs binary representation error so that
/// e.g. `0.3·10` defers 3, not 2.
pub fn deferred_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64) + 1e-9).floor() as usize
}

/// Most uncertain first: score descending, then instance id ascending.
pub fn uncertainty_order(a: &ScoredPrediction, b: &ScoredPrediction) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.instance_id.cmp(&b.instance_id))
}

/// Splits into `(deferred, kept)`; both keep the uncertainty order.
pub fn select_deferred(predictions: &[ScoredPrediction], ratio: f64) -> (Vec<ScoredPrediction>, Vec<ScoredPrediction>) {
    let mut sorted = predictions.to_vec();
    sorted.sort_by(uncertainty_order);
    let kept = sorted.split_off(deferred_count(ratio, predictions.len()));
    (sorted, kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

fn nonempty<T>(items: &[T]) -> Result<()> {
    if items.is_empty() {
        return Err(Error::Evaluation("no predictions left to score".into()));
    }
    Ok(())
}

pub fn accuracy(kept: &[ScoredPrediction]) -> Result<f64> {
    nonempty(kept)?;
    let correct = kept.iter().filter(|p| p.predicted_class == p.true_class).count();
    Ok(correct as f64 / kept.len() as f64)
}

/// Per-class confusion counts `(tp, fp, fn)`.
fn confusion(kept: &[ScoredPrediction]) -> BTreeMap<usize, (u64, u64, u64)> {
    let mut counts: BTreeMap<usize, (u64, u64, u64)> = BTreeMap::new();
    for p in kept {
        if p.predicted_class == p.true_class {
            counts.entry(p.true_class).or_default().0 += 1;
        } else {
            counts.entry(p.predicted_class).or_default().1 += 1;
            counts.entry(p.true_class).or_default().2 += 1;
        }
    }
    counts
}

/// Global F1 from pooled TP/FP/FN; equals accuracy for single-label data.
pub fn micro_f1(kept: &[ScoredPrediction]) -> Result<f64> {
    nonempty(kept)?;
    let (tp, fp, fn_) = confusion(kept)
        .values()
        .fold((0, 0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

/// Mean per-class F1 over the classes present among the kept true labels.
/// A class that is never predicted correctly scores 0.
pub fn macro_f1(kept: &[ScoredPrediction]) -> Result<f64> {
    nonempty(kept)?;
    let present: BTreeSet<usize> = kept.iter().map(|p| p.true_class).collect();
    let counts = confusion(kept);
    let sum: f64 = present
        .iter()
        .map(|c| {
            let (tp, fp, fn_) = counts[c];
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
        })
        .sum();
    Ok(sum / present.len() as f64)
}

pub fn metrics(kept: &[ScoredPrediction]) -> Result<Metrics> {
    Ok(Metrics {
        accuracy: accuracy(kept)?,
        micro_f1: micro_f1(kept)?,
        macro_f1: macro_f1(kept)?,
    })
}

fn metrics_for(deferred: &[ScoredPrediction], kept: &[ScoredPrediction], mode: DeferralMode) -> Result<Metrics> {
    match mode {
        DeferralMode::RemainingOnly => metrics(kept),
        DeferralMode::Combined => {
            let mut all: Vec<ScoredPrediction> = kept.to_vec();
            all.extend(deferred.iter().map(|p| ScoredPrediction {
                predicted_class: p.true_class,
                ..p.clone()
            }));
            metrics(&all)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub scorer: String,
    pub ratio: f64,
    pub mode: DeferralMode,
    pub metrics: Metrics,
    /// Relative change of micro-F1 against ratio 0.
    pub improvement_ratio: f64,
    pub macro_improvement_ratio: f64,
    pub n_deferred: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

fn improvement(value: f64, base: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        (value - base) / base
    }
}

/// One row per ratio in `policy`, labelled with `scorer` and `seed`.
pub fn evaluate(predictions: &[ScoredPrediction], policy: &DeferralPolicy, scorer: &str, seed: u64) -> Result<EvalReport> {
    policy.validate()?;
    nonempty(predictions)?;
    let base = {
        let (d, k) = select_deferred(predictions, 0.0);
        metrics_for(&d, &k, policy.mode)?
    };
    let mut rows = Vec::with_capacity(policy.ratios.len());
    for &ratio in &policy.ratios {
        let (deferred, kept) = select_deferred(predictions, ratio);
        let m = metrics_for(&deferred, &kept, policy.mode).map_err(|_| {
            Error::Evaluation(format!(
                "ratio {ratio} leaves no kept predictions out of {}",
                predictions.len()
            ))
        })?;
        rows.push(EvalRow {
            scorer: scorer.to_string(),
            ratio,
            mode: policy.mode,
            improvement_ratio: improvement(m.micro_f1, base.micro_f1),
            macro_improvement_ratio: improvement(m.macro_f1, base.macro_f1),
            metrics: m,
            n_deferred: deferred.len(),
            seed,
        });
    }
    Ok(EvalReport { rows })
}

/// Control condition: defer a uniformly random `floor(r·n)` subset, averaged
/// over `trials`.
pub fn random_deferral_baseline(
    predictions: &[ScoredPrediction],
    ratio: f64,
    mode: DeferralMode,
    trials: usize,
    seed: u64,
) -> Result<Metrics> {
    nonempty(predictions)?;
    if trials == 0 {
        return Err(Error::Config("random baseline needs at least one trial".into()));
    }
    let n = predictions.len();
    let k = deferred_count(ratio, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = Metrics {
        accuracy: 0.0,
        micro_f1: 0.0,
        macro_f1: 0.0,
    };
    for _ in 0..trials {
        let picked: BTreeSet<usize> = sample(&mut rng, n, k).into_iter().collect();
        let (mut deferred, mut kept) = (Vec::with_capacity(k), Vec::with_capacity(n - k));
        for (i, p) in predictions.iter().enumerate() {
            if picked.contains(&i) {
                deferred.push(p.clone());
            } else {
                kept.push(p.clone());
            }
        }
        let m = metrics_for(&deferred, &kept, mode)?;
        sum.accuracy += m.accuracy;
        sum.micro_f1 += m.micro_f1;
        sum.macro_f1 += m.macro_f1;
    }
    let t = trials as f64;
    Ok(Metrics {
        accuracy: sum.accuracy / t,
        micro_f1: sum.micro_f1 / t,
        macro_f1: sum.macro_f1 / t,
    })
}

/// Rows for the random control in the same shape as [`evaluate`].
pub fn random_baseline_report(
    predictions: &[ScoredPrediction],
    policy: &DeferralPolicy,
    trials: usize,
    seed: u64,
) -> Result<EvalReport> {
    policy.validate()?;
    let base = random_deferral_baseline(predictions, 0.0, policy.mode, 1, seed)?;
    let mut rows = Vec::new();
    for (i, &ratio) in policy.ratios.iter().enumerate() {
        let m = random_deferral_baseline(predictions, ratio, policy.mode, trials, seed.wrapping_add(i as u64))?;
        rows.push(EvalRow {
            scorer: "random".into(),
            ratio,
            mode: policy.mode,
            improvement_ratio: improvement(m.micro_f1, base.micro_f1),
            macro_improvement_ratio: improvement(m.macro_f1, base.macro_f1),
            metrics: m,
            n_deferred: deferred_count(ratio, predictions.len()),
            seed,
        });
    }
    Ok(EvalReport { rows })
}

impl EvalReport {
    pub fn extend(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
    }

    /// Columns: scorer, ratio, mode, accuracy, micro_f1, macro_f1,
    /// improvement_ratio, n_deferred, seed.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "scorer",
            "ratio",
            "mode",
            "accuracy",
            "micro_f1",
            "macro_f1",
            "improvement_ratio",
            "n_deferred",
            "seed",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.scorer.clone(),
                format!("{}", r.ratio),
                r.mode.as_str().to_string(),
                format!("{:.6}", r.metrics.accuracy),
                format!("{:.6}", r.metrics.micro_f1),
                format!("{:.6}", r.metrics.macro_f1),
                format!("{:.6}", r.improvement_ratio),
                r.n_deferred.to_string(),
                r.seed.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::Evaluation(e.to_string()))?;
        Ok(())
    }

    /// Aligned text table: one block per (mode, metric), scorers as rows,
    /// ratios as columns, each cell `value(improvement%)`.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let modes: BTreeSet<DeferralMode> = self.rows.iter().map(|r| r.mode).collect();
        for mode in modes {
            let rows: Vec<&EvalRow> = self.rows.iter().filter(|r| r.mode == mode).collect();
            let mut ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
            ratios.sort_by(f64::total_cmp);
            ratios.dedup();
            let mut scorers: Vec<&str> = Vec::new();
            for r in &rows {
                if !scorers.contains(&r.scorer.as_str()) {
                    scorers.push(&r.scorer);
                }
            }
            let width = scorers.iter().map(|s| s.len()).max().unwrap_or(6).max(8);
            for (label, pick) in [
                ("Micro F1, Improved Ratio", (|r: &EvalRow| (r.metrics.micro_f1, r.improvement_ratio)) as fn(&EvalRow) -> (f64, f64)),
                ("Macro F1, Improved Ratio", |r: &EvalRow| (r.metrics.macro_f1, r.macro_improvement_ratio)),
            ] {
                writeln!(out, "Uncertainty Ratio ({label}) [{}]", mode.as_str()).unwrap();
                write!(out, "{:width$}", "").unwrap();
                for r in &ratios {
                    write!(out, " | {:>15}", format!("{:.0}%", r * 100.0)).unwrap();
                }
                out.push('\n');
                for s in &scorers {
                    write!(out, "{s:width$}").unwrap();
                    for ratio in &ratios {
                        let cell = rows
                            .iter()
                            .find(|r| r.scorer == *s && r.ratio == *ratio)
                            .map(|r| {
                                let (v, imp) = pick(r);
                                if *ratio == 0.0 {
                                    format!("{v:.3}")
                                } else {
                                    format!("{v:.3}({:.2}%)", imp * 100.0)
                                }
                            })
                            .unwrap_or_default();
                        write!(out, " | {cell:>15}").unwrap();
                    }
                    out.push('\n');
                }
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pred(id: &str, pred: usize, truth: usize, score: f64) -> ScoredPrediction {
        ScoredPrediction {
            instance_id: id.into(),
            predicted_class: pred,
            true_class: truth,
            score,
        }
    }

    #[test]
    fn deferral_selection() {
        let preds: Vec<_> = (0..10).map(|i| pred(&format!("{i}"), 0, 0, i as f64)).collect();
        let (d, k) = select_deferred(&preds, 0.0);
        assert!(d.is_empty());
        assert_eq!(k.len(), 10);
        let (d, k) = select_deferred(&preds, 0.2);
        let ids: Vec<&str> = d.iter().map(|p| p.instance_id.as_str()).collect();
        assert_eq!(ids, ["9", "8"]);
        assert_eq!(k.len(), 8);
        assert_eq!(deferred_count(0.3, 10), 3);
        assert_eq!(deferred_count(0.29, 100), 29);
    }

    #[test]
    fn ties_break_by_id() {
        let preds = vec![pred("b", 0, 0, 1.0), pred("a", 0, 0, 1.0), pred("c", 0, 0, 0.5)];
        let (d, _) = select_deferred(&preds, 0.34);
        assert_eq!(d[0].instance_id, "a");
    }

    #[test]
    fn perfect_predictions() {
        let preds: Vec<_> = (0..12).map(|i| pred(&format!("{i}"), i % 3, i % 3, 0.1 * i as f64)).collect();
        let m = metrics(&preds).unwrap();
        assert_eq!((m.accuracy, m.micro_f1, m.macro_f1), (1.0, 1.0, 1.0));
        for mode in [DeferralMode::RemainingOnly, DeferralMode::Combined] {
            let rep = evaluate(&preds, &DeferralPolicy { mode, ..Default::default() }, "x", 0).unwrap();
            for r in rep.rows {
                assert_eq!(r.metrics.accuracy, 1.0);
                assert_eq!(r.improvement_ratio, 0.0);
            }
        }
    }

    #[test]
    fn two_class_confusion_oracle() {
        // Class 0: TP=1, FP=1 (a class-1 item predicted 0), FN=0.
        let preds = vec![pred("a", 0, 0, 0.0), pred("b", 0, 1, 0.0)];
        // F1(0) = 2·1/(2·1+1+0) = 2/3; F1(1): tp 0, fn 1 → 0.
        let f1_0 = 2.0 / 3.0;
        assert!((macro_f1(&preds).unwrap() - (f1_0 + 0.0) / 2.0).abs() < 1e-15);
        assert_eq!(micro_f1(&preds).unwrap(), 0.5);
        assert_eq!(accuracy(&preds).unwrap(), 0.5);
    }

    #[test]
    fn macro_f1_skips_absent_true_classes() {
        // Class 2 only ever predicted, never a true label: not averaged.
        let preds = vec![pred("a", 0, 0, 0.0), pred("b", 2, 1, 0.0), pred("c", 1, 1, 0.0)];
        // F1(0) = 1; F1(1) = 2·1/(2+0+1) = 2/3.
        assert!((macro_f1(&preds).unwrap() - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_kept_set_errors() {
        assert!(accuracy(&[]).is_err());
        let preds = vec![pred("a", 0, 0, 0.0)];
        let policy = DeferralPolicy { ratios: vec![0.0, 0.99], mode: DeferralMode::RemainingOnly };
        // floor(0.99) = 0 deferred, still fine.
        assert!(evaluate(&preds, &policy, "x", 0).is_ok());
        let two = vec![pred("a", 0, 0, 0.0), pred("b", 0, 0, 1.0)];
        let policy = DeferralPolicy { ratios: vec![0.0, 0.5], mode: DeferralMode::RemainingOnly };
        assert!(evaluate(&two, &policy, "x", 0).is_ok());
    }

    #[test]
    fn policy_validation() {
        assert!(DeferralPolicy { ratios: vec![0.2, 0.1], mode: DeferralMode::Combined }.validate().is_err());
        assert!(DeferralPolicy { ratios: vec![0.0, 1.0], mode: DeferralMode::Combined }.validate().is_err());
    }

    #[test]
    fn oracle_scorer_reaches_perfect_combined_accuracy() {
        // 30% errors, scored 1; correct scored 0.
        let preds: Vec<_> = (0..20)
            .map(|i| {
                let wrong = i % 10 < 3;
                pred(&format!("{i:02}"), if wrong { 1 } else { 0 }, 0, if wrong { 1.0 } else { 0.0 })
            })
            .collect();
        let policy = DeferralPolicy { ratios: vec![0.0, 0.1, 0.3, 0.4], mode: DeferralMode::Combined };
        let rep = evaluate(&preds, &policy, "oracle", 0).unwrap();
        let acc: Vec<f64> = rep.rows.iter().map(|r| r.metrics.accuracy).collect();
        assert_eq!(acc, [0.7, 0.8, 1.0, 1.0]);
    }

    #[test]
    fn random_baseline_examples() {
        let perfect: Vec<_> = (0..50).map(|i| pred(&format!("{i}"), 1, 1, 0.0)).collect();
        let m = random_deferral_baseline(&perfect, 0.3, DeferralMode::RemainingOnly, 10, 1).unwrap();
        assert_eq!(m.accuracy, 1.0);
        let mixed: Vec<_> = (0..50).map(|i| pred(&format!("{i}"), i % 2, 0, i as f64)).collect();
        let r0 = random_deferral_baseline(&mixed, 0.0, DeferralMode::RemainingOnly, 5, 2).unwrap();
        let e0 = evaluate(&mixed, &DeferralPolicy { ratios: vec![0.0], mode: DeferralMode::RemainingOnly }, "x", 0).unwrap();
        assert_eq!(r0, e0.rows[0].metrics);
    }

    #[test]
    fn random_baseline_matches_analytic_expectation() {
        // 30% errors, combined mode, r = 0.2: E[acc] = 0.7 + 0.2·0.3 = 0.76.
        let n = 1000;
        let preds: Vec<_> = (0..n)
            .map(|i| pred(&format!("{i:04}"), usize::from(i % 10 < 3), 0, 0.0))
            .collect();
        let trials = 100;
        let m = random_deferral_baseline(&preds, 0.2, DeferralMode::Combined, trials, 9).unwrap();
        // Per trial: wrong items deferred ~ hypergeometric(n=1000, K=300, draws=200);
        // var = 200·0.3·0.7·(800/999). Accuracy sd = sqrt(var)/1000.
        let var: f64 = 200.0 * 0.3 * 0.7 * (800.0 / 999.0);
        let sd_mean = var.sqrt() / n as f64 / (trials as f64).sqrt();
        assert!((m.accuracy - 0.76).abs() < 3.0 * sd_mean, "{} vs 0.76 (3σ = {})", m.accuracy, 3.0 * sd_mean);
    }

    #[test]
    fn csv_and_table_render() {
        let preds: Vec<_> = (0..10).map(|i| pred(&format!("{i}"), i % 2, 0, i as f64)).collect();
        let rep = evaluate(&preds, &DeferralPolicy::default(), "de", 7).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("scorer,ratio,mode,accuracy,micro_f1,macro_f1,improvement_ratio,n_deferred,seed\n"));
        assert_eq!(text.lines().count(), 6);
        let table = rep.to_table();
        assert!(table.contains("Micro F1, Improved Ratio"));
        assert!(table.contains("de"));
    }

    proptest! {
        #[test]
        fn micro_f1_equals_accuracy(seed in 0u64..1000, n in 1usize..60, c in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            use rand::Rng;
            let preds: Vec<_> = (0..n).map(|i| pred(&format!("{i}"), rng.random_range(0..c), rng.random_range(0..c), rng.random())).collect();
            prop_assert!((micro_f1(&preds).unwrap() - accuracy(&preds).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn combined_accuracy_non_decreasing_and_permutation_invariant(seed in 0u64..1000) {
            use rand::Rng;
            use rand::seq::SliceRandom;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let preds: Vec<_> = (0..40).map(|i| pred(&format!("{i:02}"), rng.random_range(0..3), rng.random_range(0..3), (rng.random_range(0..5)) as f64)).collect();
            let policy = DeferralPolicy { ratios: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5], mode: DeferralMode::Combined };
            let rep = evaluate(&preds, &policy, "x", 0).unwrap();
            for w in rep.rows.windows(2) {
                prop_assert!(w[1].metrics.accuracy >= w[0].metrics.accuracy);
            }
            let mut shuffled = preds.clone();
            shuffled.shuffle(&mut rng);
            prop_assert_eq!(evaluate(&shuffled, &policy, "x", 0).unwrap(), rep);
        }
    }
}
