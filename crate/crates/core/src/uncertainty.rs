//! Per-instance uncertainty scores. Higher always means less certain.
//!
//! The main scorer is dropout-entropy: run the classifier `T` times with
//! dropout active, histogram the predicted classes, keep the largest bins
//! when there are many classes, normalise and take the entropy.

use std::cmp::Ordering;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TokenBatch;
use crate::error::{Error, Result};
use crate::nn::rng::stream;
use crate::nn::{argmax, softmax, DropoutMode, FeatureBatch, ModelState, Real};

const MC_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    DropoutEntropy,
    DropoutBaseline,
    PlVariance,
    DistanceKnn,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 4] = [
        ScorerKind::DropoutEntropy,
        ScorerKind::DropoutBaseline,
        ScorerKind::PlVariance,
        ScorerKind::DistanceKnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScorerKind::DropoutEntropy => "dropout_entropy",
            ScorerKind::DropoutBaseline => "dropout_baseline",
            ScorerKind::PlVariance => "pl_variance",
            ScorerKind::DistanceKnn => "distance_knn",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, ScorerKind::DropoutEntropy | ScorerKind::DropoutBaseline)
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScorerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scorer `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    pub num_samples: usize,
    pub knn_k: usize,
    pub seed: u64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            kind: ScorerKind::DropoutEntropy,
            num_samples: 100,
            knn_k: 10,
            seed: 0,
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kind.is_stochastic() && self.num_samples < 2 {
            return Err(Error::Config("num_samples must be >= 2".into()));
        }
        if self.knn_k == 0 {
            return Err(Error::Config("knn_k must be >= 1".into()));
        }
        Ok(())
    }
}

/// Sampled class indices, row-major `[num_instances × num_samples]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionSamples {
    sampled_classes: Vec<usize>,
    num_samples: usize,
    num_classes: usize,
}

impl PredictionSamples {
    pub fn new(sampled_classes: Vec<usize>, num_samples: usize, num_classes: usize) -> Result<Self> {
        if num_samples == 0 || sampled_classes.len() % num_samples != 0 {
            return Err(Error::Shape(format!(
                "{} samples do not form rows of {num_samples}",
                sampled_classes.len()
            )));
        }
        if let Some(&bad) = sampled_classes.iter().find(|&&c| c >= num_classes) {
            return Err(Error::ClassOutOfRange { class: bad, num_classes });
        }
        Ok(Self {
            sampled_classes,
            num_samples,
            num_classes,
        })
    }

    pub fn num_instances(&self) -> usize {
        self.sampled_classes.len() / self.num_samples
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.sampled_classes[i * self.num_samples..(i + 1) * self.num_samples]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScore {
    pub instance_id: String,
    pub value: f64,
    pub predicted_class: usize,
    pub scorer: ScorerKind,
    /// Raw class histogram, for the sampling scorers.
    pub histogram: Option<Vec<u32>>,
}

/// Runs `f(i, j, logits)` for every instance `i` and MC sample `j`. The
/// convolutional part is deterministic, so it is computed once per instance
/// and only dropout and the output layer are re-run.
fn mc_map<T, F, O>(model: &ModelState<T>, tokens: &TokenBatch, num_samples: usize, seed: u64, f: F) -> Result<Vec<O>>
where
    T: Real,
    F: Fn(&mut dyn Iterator<Item = Vec<T>>) -> O + Sync,
    O: Send,
{
    let pooled = model.pooled(tokens)?;
    Ok((0..tokens.batch_size())
        .into_par_iter()
        .map(|i| {
            let row = pooled.row(i);
            let mut samples = (0..num_samples).map(|j| {
                let mut rng = stream(seed, &[MC_STREAM, i as u64, j as u64]);
                model.head(row, DropoutMode::McStochastic, &mut rng).2
            });
            f(&mut samples)
        })
        .collect())
}

/// Argmax class of `num_samples` dropout-active passes per instance. Each
/// (instance, sample) pair owns its random stream, so results do not depend
/// on thread scheduling.
pub fn mc_sample<T: Real>(model: &ModelState<T>, tokens: &TokenBatch, num_samples: usize, seed: u64) -> Result<PredictionSamples> {
    if num_samples < 2 {
        return Err(Error::Config("num_samples must be >= 2".into()));
    }
    let rows = mc_map(model, tokens, num_samples, seed, |it| it.map(|l| argmax(&l)).collect::<Vec<_>>())?;
    PredictionSamples::new(rows.concat(), num_samples, model.num_classes())
}

pub fn bin_count(samples: &[usize], num_classes: usize) -> Result<Vec<u32>> {
    let mut hist = vec![0u32; num_classes];
    for &c in samples {
        if c >= num_classes {
            return Err(Error::ClassOutOfRange { class: c, num_classes });
        }
        hist[c] += 1;
    }
    Ok(hist)
}

/// Number of bins kept by [`mask_top_m`].
pub fn mask_size(num_classes: usize) -> usize {
    if num_classes > 10 {
        2 * num_classes / 3
    } else {
        num_classes
    }
}

/// Keeps the `floor(2c/3)` largest bins when `c > 10`, otherwise returns
/// the histogram unchanged. Ties at the cutoff keep the lower class index.
pub fn mask_top_m(histogram: &[u32], num_classes: usize) -> Vec<u32> {
    let m = mask_size(num_classes);
    if m >= histogram.len() {
        return histogram.to_vec();
    }
    let mut order: Vec<usize> = (0..histogram.len()).collect();
    order.sort_by(|&a, &b| histogram[b].cmp(&histogram[a]).then(a.cmp(&b)));
    let mut out = vec![0; histogram.len()];
    for &k in &order[..m] {
        out[k] = histogram[k];
    }
    out
}

pub fn normalize(histogram: &[u32]) -> Result<Vec<f64>> {
    let total: u64 = histogram.iter().map(|&h| h as u64).sum();
    if total == 0 {
        return Err(Error::Evaluation("cannot normalise an all-zero histogram".into()));
    }
    Ok(histogram.iter().map(|&h| h as f64 / total as f64).collect())
}

/// Natural-log entropy with `0 · ln 0 = 0`.
pub fn entropy(probabilities: &[f64]) -> f64 {
    let h: f64 = probabilities.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
    h.max(0.0)
}

/// Entropy of one row of samples after counting and masking, plus the raw
/// histogram and its argmax.
pub fn dropout_entropy(samples: &[usize], num_classes: usize) -> Result<(f64, usize, Vec<u32>)> {
    let hist = bin_count(samples, num_classes)?;
    let masked = mask_top_m(&hist, num_classes);
    let u = entropy(&normalize(&masked)?);
    Ok((u, argmax(&hist), hist))
}

pub fn de_score<T: Real>(
    model: &ModelState<T>,
    ids: &[String],
    tokens: &TokenBatch,
    config: &ScorerConfig,
) -> Result<Vec<UncertaintyScore>> {
    check_kind(config, ScorerKind::DropoutEntropy)?;
    check_ids(ids, tokens)?;
    let samples = mc_sample(model, tokens, config.num_samples, config.seed)?;
    (0..samples.num_instances())
        .map(|i| {
            let (value, predicted_class, hist) = dropout_entropy(samples.row(i), samples.num_classes())?;
            Ok(UncertaintyScore {
                instance_id: ids[i].clone(),
                value,
                predicted_class,
                scorer: ScorerKind::DropoutEntropy,
                histogram: Some(hist),
            })
        })
        .collect()
}

/// Entropy of the mean softmax over the dropout samples.
pub fn dropout_baseline_score<T: Real>(
    model: &ModelState<T>,
    ids: &[String],
    tokens: &TokenBatch,
    config: &ScorerConfig,
) -> Result<Vec<UncertaintyScore>> {
    check_kind(config, ScorerKind::DropoutBaseline)?;
    check_ids(ids, tokens)?;
    let c = model.num_classes();
    let t = config.num_samples;
    let rows = mc_map(model, tokens, t, config.seed, |it| {
        let mut mean = vec![0.0f64; c];
        let mut hist = vec![0u32; c];
        for logits in it {
            hist[argmax(&logits)] += 1;
            for (m, p) in mean.iter_mut().zip(softmax(&logits)) {
                *m += p.as_f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= t as f64);
        (mean, hist)
    })?;
    Ok(rows
        .into_iter()
        .zip(ids)
        .map(|((mean, hist), id)| UncertaintyScore {
            instance_id: id.clone(),
            value: entropy(&mean),
            predicted_class: argmax(&mean),
            scorer: ScorerKind::DropoutBaseline,
            histogram: Some(hist),
        })
        .collect())
}

/// Population variance in one pass (Welford).
pub fn variance(xs: &[f64]) -> f64 {
    let (mut mean, mut m2) = (0.0, 0.0);
    for (n, &x) in xs.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (n + 1) as f64;
        m2 += delta * (x - mean);
    }
    if xs.is_empty() {
        0.0
    } else {
        m2 / xs.len() as f64
    }
}

/// Negated variance of the deterministic logits: flat logits score highest.
/// Values are therefore `<= 0`.
pub fn pl_variance_score<T: Real>(model: &ModelState<T>, ids: &[String], tokens: &TokenBatch) -> Result<Vec<UncertaintyScore>> {
    check_ids(ids, tokens)?;
    let logits = model.logits(tokens)?;
    Ok(ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let row: Vec<f64> = logits.row(i).iter().map(|x| x.as_f64()).collect();
            UncertaintyScore {
                instance_id: id.clone(),
                value: -variance(&row),
                predicted_class: argmax(&row),
                scorer: ScorerKind::PlVariance,
                histogram: None,
            }
        })
        .collect())
}

/// Deterministic (pre-dropout) features for every row, paired with labels.
pub fn deterministic_features<T: Real>(model: &ModelState<T>, tokens: &TokenBatch, labels: Vec<usize>) -> Result<FeatureBatch<T>> {
    FeatureBatch::new(model.pooled(tokens)?, labels)
}

/// `exp(−D)`-weighted share of the `k` nearest reference points whose label
/// is `predicted`. Distance ties keep the lower reference index.
pub fn knn_confidence<T: Real>(feature: &[T], predicted: usize, reference: &FeatureBatch<T>, k: usize) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Evaluation("no reference features for k-NN".into()));
    }
    if k == 0 || k > reference.len() {
        return Err(Error::Config(format!("knn_k {k} outside 1..={}", reference.len())));
    }
    let dim = reference.dim;
    let mut dists: Vec<(f64, usize)> = (0..reference.len())
        .map(|j| Ok((crate::metric::pairwise_distance(feature, reference.row(j), dim)?.as_f64(), j)))
        .collect::<Result<_>>()?;
    let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1));
    if k < dists.len() {
        dists.select_nth_unstable_by(k - 1, by_dist);
        dists.truncate(k);
    }
    let d_min = dists.iter().map(|d| d.0).fold(f64::INFINITY, f64::min);
    let (mut agree, mut total) = (0.0, 0.0);
    for &(d, j) in &dists {
        let w = (-(d - d_min)).exp();
        total += w;
        if reference.labels[j] == predicted {
            agree += w;
        }
    }
    Ok(agree / total)
}

/// `1 −` the k-NN label agreement of each instance's deterministic feature
/// with the training features.
pub fn distance_confidence_score<T: Real>(
    model: &ModelState<T>,
    ids: &[String],
    tokens: &TokenBatch,
    train_features: &FeatureBatch<T>,
    config: &ScorerConfig,
) -> Result<Vec<UncertaintyScore>> {
    check_kind(config, ScorerKind::DistanceKnn)?;
    check_ids(ids, tokens)?;
    if train_features.is_empty() {
        return Err(Error::Evaluation("no training features for k-NN".into()));
    }
    let pooled = model.pooled(tokens)?;
    let logits = model.logits(tokens)?;
    (0..ids.len())
        .into_par_iter()
        .map(|i| {
            let predicted = argmax(logits.row(i));
            let conf = knn_confidence(pooled.row(i), predicted, train_features, config.knn_k)?;
            Ok(UncertaintyScore {
                instance_id: ids[i].clone(),
                value: (1.0 - conf).max(0.0),
                predicted_class: predicted,
                scorer: ScorerKind::DistanceKnn,
                histogram: None,
            })
        })
        .collect()
}

/// Dispatches on `config.kind`. `train_features` is required for the k-NN
/// scorer and ignored otherwise.
pub fn score<T: Real>(
    model: &ModelState<T>,
    ids: &[String],
    tokens: &TokenBatch,
    config: &ScorerConfig,
    train_features: Option<&FeatureBatch<T>>,
) -> Result<Vec<UncertaintyScore>> {
    config.validate()?;
    match config.kind {
        ScorerKind::DropoutEntropy => de_score(model, ids, tokens, config),
        ScorerKind::DropoutBaseline => dropout_baseline_score(model, ids, tokens, config),
        ScorerKind::PlVariance => pl_variance_score(model, ids, tokens),
        ScorerKind::DistanceKnn => {
            let reference = train_features.ok_or_else(|| Error::Config("distance_knn needs training features".into()))?;
            distance_confidence_score(model, ids, tokens, reference, config)
        }
    }
}

fn check_kind(config: &ScorerConfig, expected: ScorerKind) -> Result<()> {
    if config.kind != expected {
        return Err(Error::Config(format!("scorer kind {} passed to {expected}", config.kind)));
    }
    config.validate()
}

fn check_ids(ids: &[String], tokens: &TokenBatch) -> Result<()> {
    if ids.len() != tokens.batch_size() {
        return Err(Error::Shape(format!("{} ids for {} documents", ids.len(), tokens.batch_size())));
    }
    Ok(())
}

/// One line of the score export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    pub scorer: ScorerKind,
    pub score: f64,
    pub predicted_class: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_label: Option<usize>,
}

impl ScoreRecord {
    pub fn new(score: &UncertaintyScore, true_label: Option<usize>) -> Self {
        Self {
            id: score.instance_id.clone(),
            scorer: score.scorer,
            score: score.value,
            predicted_class: score.predicted_class,
            histogram: score.histogram.clone(),
            true_label,
        }
    }
}

pub fn write_score_records<W: Write>(records: &[ScoreRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("<scores>", e))?;
    }
    out.flush().map_err(|e| Error::io("<scores>", e))
}

pub fn read_score_records<R: BufRead>(input: R, path: &str) -> Result<Vec<ScoreRecord>> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ScoreRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.into(),
            line: n + 1,
            message: e.to_string(),
        })?;
        if !rec.score.is_finite() {
            return Err(Error::Parse {
                path: path.into(),
                line: n + 1,
                message: "score is not finite".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::EncoderConfig;
    use proptest::prelude::*;

    fn toy_model(dropout_p: f64) -> ModelState<f64> {
        let mut cfg = EncoderConfig::new(30, 3);
        cfg.embed_dim = 6;
        cfg.kernel_sizes = vec![2, 3];
        cfg.filters_per_kernel = 4;
        cfg.max_len = 12;
        cfg.dropout_p = dropout_p;
        ModelState::new(cfg, None, 11).unwrap()
    }

    fn toy_tokens(n: usize) -> (Vec<String>, TokenBatch) {
        let seqs: Vec<Vec<u32>> = (0..n).map(|i| (0..8).map(|t| 2 + ((i * 7 + t * 3) % 28) as u32).collect()).collect();
        ((0..n).map(|i| format!("d{i}")).collect(), TokenBatch::from_sequences(&seqs, 12))
    }

    #[test]
    fn bin_count_examples() {
        let h = bin_count(&[2; 50], 20).unwrap();
        assert_eq!(h[2], 50);
        assert_eq!(h.iter().sum::<u32>(), 50);
        let mut s = vec![2; 24];
        s.extend([0; 20]);
        s.extend([1; 6]);
        assert_eq!(bin_count(&s, 3).unwrap(), vec![20, 6, 24]);
        assert!(matches!(bin_count(&[3], 3), Err(Error::ClassOutOfRange { .. })));
    }

    #[test]
    fn mask_sizes() {
        assert_eq!(mask_size(20), 13);
        assert_eq!(mask_size(12), 8);
        assert_eq!(mask_size(10), 10);
        let h: Vec<u32> = (1..=20).collect();
        assert_eq!(mask_top_m(&h, 20).iter().filter(|&&x| x > 0).count(), 13);
        assert_eq!(mask_top_m(&[5, 1], 2), vec![5, 1]);
    }

    #[test]
    fn mask_ties_keep_lower_index() {
        let h = vec![1u32; 12];
        let m = mask_top_m(&h, 12);
        assert_eq!(m, [vec![1; 8], vec![0; 4]].concat());
    }

    #[test]
    fn mask_matches_sort_oracle() {
        let h: Vec<u32> = vec![7, 3, 11, 0, 5, 9, 2, 8, 1, 10, 4, 6];
        let mut sorted = h.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let threshold = sorted[7];
        let expected: Vec<u32> = h.iter().map(|&x| if x >= threshold { x } else { 0 }).collect();
        assert_eq!(mask_top_m(&h, 12), expected);
    }

    #[test]
    fn normalize_and_entropy_examples() {
        let p = normalize(&[24, 20, 6]).unwrap();
        assert!((p[0] - 0.48).abs() < 1e-12 && (p[1] - 0.40).abs() < 1e-12 && (p[2] - 0.12).abs() < 1e-12);
        assert_eq!(normalize(&[50, 0, 0]).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(normalize(&[0, 0]).is_err());
        assert_eq!(entropy(&[1.0, 0.0, 0.0, 0.0]), 0.0);
        assert!((entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-12);
        let oracle = -(0.48f64 * 0.48f64.ln() + 0.40 * 0.40f64.ln() + 0.12 * 0.12f64.ln());
        assert!((entropy(&p) - oracle).abs() < 1e-12);
        assert!((entropy(&p) - 0.9732).abs() < 1e-4);
    }

    #[test]
    fn unanimous_samples_score_zero() {
        for c in [2, 4, 20] {
            let (u, pred, _) = dropout_entropy(&[1; 100], c).unwrap();
            assert_eq!(u, 0.0);
            assert_eq!(pred, 1);
        }
    }

    #[test]
    fn zero_dropout_is_deterministic() {
        let model = toy_model(0.0);
        let (ids, tokens) = toy_tokens(6);
        let samples = mc_sample(&model, &tokens, 7, 1).unwrap();
        let logits = model.logits(&tokens).unwrap();
        for i in 0..6 {
            assert!(samples.row(i).iter().all(|&c| c == argmax(logits.row(i))));
        }
        let cfg = ScorerConfig { num_samples: 7, ..Default::default() };
        assert!(de_score(&model, &ids, &tokens, &cfg).unwrap().iter().all(|s| s.value == 0.0));
        let cfg = ScorerConfig { kind: ScorerKind::DropoutBaseline, num_samples: 7, ..Default::default() };
        for (i, s) in dropout_baseline_score(&model, &ids, &tokens, &cfg).unwrap().iter().enumerate() {
            let p: Vec<f64> = softmax(logits.row(i));
            assert!((s.value - entropy(&p)).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let model = toy_model(0.5);
        let (_, tokens) = toy_tokens(5);
        assert_eq!(mc_sample(&model, &tokens, 20, 9).unwrap(), mc_sample(&model, &tokens, 20, 9).unwrap());
        assert!(mc_sample(&model, &tokens, 1, 9).is_err());
    }

    #[test]
    fn sample_stream_is_per_instance() {
        // Scoring a subset gives the same rows as scoring everything, as long
        // as instance positions are unchanged.
        let model = toy_model(0.5);
        let (_, tokens) = toy_tokens(6);
        let all = mc_sample(&model, &tokens, 10, 3).unwrap();
        let head = mc_sample(&model, &tokens.select(&[0, 1, 2]), 10, 3).unwrap();
        for i in 0..3 {
            assert_eq!(all.row(i), head.row(i));
        }
    }

    #[test]
    fn boundary_instance_is_uncertain() {
        // Two classes, one feature pair; logits (a·x, −a·x) with x near zero
        // put the instance on the decision boundary.
        let mut cfg = EncoderConfig::new(4, 2);
        cfg.embed_dim = 1;
        cfg.kernel_sizes = vec![1];
        cfg.filters_per_kernel = 8;
        cfg.max_len = 1;
        cfg.dropout_p = 0.5;
        let mut model: ModelState<f64> = ModelState::new(cfg, None, 0).unwrap();
        let emb = model.encoder.embedding.value.data_mut();
        emb.copy_from_slice(&[0.0, 0.0, 1.0, 1.0]);
        let conv = &mut model.encoder.convs[0];
        conv.weight.value.data_mut().fill(1.0);
        conv.bias.value.data_mut().fill(0.0);
        let w = model.fc_weight.value.data_mut();
        for f in 0..8 {
            let sign = if f % 2 == 0 { 1.0 } else { -1.0 };
            w[f] = sign;
            w[8 + f] = -sign;
        }
        model.fc_bias.value.data_mut().fill(0.0);
        let tokens = TokenBatch::from_sequences(&[vec![2u32]], 1);
        let samples = mc_sample(&model, &tokens, 100, 5).unwrap();
        let hist = bin_count(samples.row(0), 2).unwrap();
        assert!(hist[0] > 0 && hist[1] > 0, "{hist:?}");

        // A confident instance: make every filter vote for class 0.
        let mut confident = model.clone();
        let w = confident.fc_weight.value.data_mut();
        w[..8].fill(1.0);
        w[8..].fill(-1.0);
        let ids = vec!["x".to_string()];
        let cfg = ScorerConfig::default();
        let u_boundary = de_score(&model, &ids, &tokens, &cfg).unwrap()[0].value;
        let u_confident = de_score(&confident, &ids, &tokens, &cfg).unwrap()[0].value;
        assert!(u_boundary > 0.0 && u_boundary > u_confident);
    }

    #[test]
    fn pl_variance_examples() {
        assert_eq!(variance(&[3.0; 5]), 0.0);
        let mut a = vec![0.0; 5];
        a[0] = 10.0;
        let mut b = vec![0.0; 5];
        b[0] = 1.0;
        assert!(-variance(&a) < -variance(&b));
        let model = toy_model(0.5);
        let (ids, tokens) = toy_tokens(4);
        let scores = pl_variance_score(&model, &ids, &tokens).unwrap();
        assert!(scores.iter().all(|s| s.value <= 0.0 && s.value.is_finite()));
    }

    #[test]
    fn knn_examples() {
        let feats = Tensor2::rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]]);
        let refs = FeatureBatch::new(feats, vec![1, 1, 1]).unwrap();
        assert_eq!(knn_confidence(&[0.1, 0.1], 1, &refs, 3).unwrap(), 1.0);
        assert_eq!(knn_confidence(&[0.1, 0.1], 0, &refs, 3).unwrap(), 0.0);
        assert!(knn_confidence(&[0.1, 0.1], 0, &refs, 4).is_err());
    }

    #[test]
    fn knn_matches_hand_formula() {
        // Ten 1-d references at distances d_j = x_j² (dim 1), labels alternate.
        let xs: Vec<f64> = (0..12).map(|j| 0.3 * j as f64).collect();
        let labels: Vec<usize> = (0..12).map(|j| j % 3).collect();
        let refs = FeatureBatch::new(crate::nn::Tensor::new(vec![12, 1], xs.clone()).unwrap(), labels.clone()).unwrap();
        let (mut agree, mut total) = (0.0, 0.0);
        for j in 0..10 {
            let w = (-(xs[j] * xs[j])).exp();
            total += w;
            if labels[j] == 1 {
                agree += w;
            }
        }
        let got = knn_confidence(&[0.0], 1, &refs, 10).unwrap();
        assert!((got - agree / total).abs() < 1e-12);
    }

    struct Tensor2;
    impl Tensor2 {
        fn rows<const D: usize>(rows: &[[f64; D]]) -> crate::nn::Tensor<f64> {
            crate::nn::Tensor::new(vec![rows.len(), D], rows.iter().flatten().copied().collect()).unwrap()
        }
    }

    #[test]
    fn score_records_round_trip() {
        let s = UncertaintyScore {
            instance_id: "a/1".into(),
            value: 0.5,
            predicted_class: 2,
            scorer: ScorerKind::DropoutEntropy,
            histogram: Some(vec![1, 0, 9]),
        };
        let recs = vec![ScoreRecord::new(&s, Some(2)), ScoreRecord::new(&s, None)];
        let mut buf = Vec::new();
        write_score_records(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap().find("true_label").is_none());
        assert_eq!(read_score_records(&buf[..], "mem").unwrap(), recs);
        let bad = b"{\"id\":\"x\"}\n";
        assert!(matches!(read_score_records(&bad[..], "mem"), Err(Error::Parse { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn bin_count_matches_recount(samples in prop::collection::vec(0usize..7, 1..200)) {
            let h = bin_count(&samples, 7).unwrap();
            for c in 0..7 {
                prop_assert_eq!(h[c] as usize, samples.iter().filter(|&&s| s == c).count());
            }
        }

        #[test]
        fn normalize_sums_to_one(h in prop::collection::vec(0u32..1000, 1..30)) {
            prop_assume!(h.iter().any(|&x| x > 0));
            let p = normalize(&h).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn entropy_bounds_and_order_invariance(mut samples in prop::collection::vec(0usize..20, 2..150), c in 2usize..20) {
            samples.iter_mut().for_each(|s| *s %= c);
            let (u, top, _) = dropout_entropy(&samples, c).unwrap();
            prop_assert!((0.0..=(c as f64).ln() + 1e-12).contains(&u));
            samples.reverse();
            let (u2, top2, _) = dropout_entropy(&samples, c).unwrap();
            prop_assert_eq!(u, u2);
            prop_assert_eq!(top, top2);
        }

        #[test]
        fn mask_keeps_top_class_and_mass(h in prop::collection::vec(0u32..50, 11..30)) {
            let c = h.len();
            let masked = mask_top_m(&h, c);
            prop_assert_eq!(argmax(&h), argmax(&masked));
            prop_assert!(masked.iter().filter(|&&x| x > 0).count() <= mask_size(c));
            for (a, b) in h.iter().zip(&masked) {
                prop_assert!(*b == 0 || a == b);
            }
        }

        #[test]
        fn welford_matches_two_pass(xs in prop::collection::vec(-50.0f64..50.0, 1..40)) {
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let oracle = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
            let v = variance(&xs);
            prop_assert!((v - oracle).abs() <= 1e-9 * oracle.max(1e-12) + 1e-12);
        }
    }
}
