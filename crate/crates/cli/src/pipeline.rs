use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};
use udc_core::corpus::{
    build_vocab, encode_dataset, load_dataset, load_pretrained_embeddings, split_dataset, EmbeddingMatrix, EncodedSet,
    LabeledDataset, Splits, Vocabulary,
};
use udc_core::evaluation::{
    deferred_count, evaluate, random_baseline_report, uncertainty_order, DeferralPolicy, EvalReport,
    ScoredPrediction,
};
use udc_core::metric::{distance_statistics, ClassPartition, DistanceStats};
use udc_core::nn::{
    evaluate_model, load_checkpoint_for, save_checkpoint, train, write_log_csv, EpochLog, ModelState, TrainOutcome,
};
use udc_core::uncertainty::{
    deterministic_features, read_score_records, score, write_score_records, ScoreRecord, ScorerConfig, ScorerKind,
};
use udc_core::Error;
use udc_triage::{write_queue, QueueRecord};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const CHECKPOINT: &str = "model.ckpt";
pub const VOCAB: &str = "vocab.json";
pub const CLASSES: &str = "classes.json";
pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const REPORT: &str = "report.csv";
pub const QUEUE: &str = "triage_queue.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl FromStr for SplitName {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "valid" => Ok(SplitName::Valid),
            "test" => Ok(SplitName::Test),
            other => Err(CliError::Usage(format!("unknown split `{other}` (train, valid, test)"))),
        }
    }
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Valid => "valid",
            SplitName::Test => "test",
        }
    }

    fn pick(self, splits: &Splits) -> &LabeledDataset {
        match self {
            SplitName::Train => &splits.train,
            SplitName::Valid => &splits.valid,
            SplitName::Test => &splits.test,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    Error::io(path, e).into()
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

pub fn load_data(cfg: &RunConfig) -> Result<LabeledDataset> {
    let ds = load_dataset(&cfg.data.path, cfg.data_format()?, &cfg.load_options())?;
    info!(
        "loaded {} documents in {} classes from {}",
        ds.len(),
        ds.num_classes,
        cfg.data.path.display()
    );
    Ok(ds)
}

pub fn split(cfg: &RunConfig, dataset: &LabeledDataset) -> Result<Splits> {
    Ok(split_dataset(dataset, &cfg.split_spec())?)
}

/// Data, split and vocabulary for a training run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: LabeledDataset,
    pub splits: Splits,
    pub vocab: Vocabulary,
    pub embeddings: Option<EmbeddingMatrix>,
}

impl Prepared {
    pub fn encode(&self, cfg: &RunConfig, which: SplitName) -> EncodedSet {
        encode_dataset(which.pick(&self.splits), &self.vocab, cfg.model.max_len)
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let dataset = load_data(cfg)?;
    let splits = split(cfg, &dataset)?;
    let vocab = build_vocab(&splits.train, cfg.data.min_count)?;
    let embeddings = if cfg.data.embeddings.is_empty() {
        None
    } else {
        let m = load_pretrained_embeddings(Path::new(&cfg.data.embeddings), &vocab, cfg.model.embed_dim, cfg.seed)?;
        info!("pretrained vectors cover {} of {} vocabulary entries", m.pretrained_hits, vocab.len());
        Some(m)
    };
    Ok(Prepared {
        dataset,
        splits,
        vocab,
        embeddings,
    })
}

/// Trains one model on prepared data. The metric loss is used when enabled
/// in the config.
pub fn fit(cfg: &RunConfig, data: &Prepared) -> Result<TrainOutcome> {
    let enc = cfg.encoder_config(data.vocab.len(), data.dataset.num_classes);
    let model = ModelState::new(enc, data.embeddings.as_ref(), cfg.seed)?;
    let metric = cfg.metric.enabled.then(|| cfg.metric_config());
    let out = train(
        model,
        &data.encode(cfg, SplitName::Train),
        &data.encode(cfg, SplitName::Valid),
        &cfg.train_config(),
        metric.as_ref(),
    )?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub out: PathBuf,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub valid_micro_f1: f64,
}

/// Writes the checkpoint, vocabulary, class names, effective config and
/// per-epoch log into `cfg.out`.
pub fn write_run(cfg: &RunConfig, data: &Prepared, outcome: &TrainOutcome) -> Result<TrainSummary> {
    create_dir(&cfg.out)?;
    save_checkpoint(&outcome.model, &cfg.out.join(CHECKPOINT))?;
    data.vocab.save(&cfg.out.join(VOCAB))?;
    let classes = cfg.out.join(CLASSES);
    serde_json::to_writer_pretty(create(&classes)?, &data.dataset.class_names).map_err(Error::from)?;
    write_effective_config(cfg)?;
    write_log_csv(&outcome.log, create(&cfg.out.join(TRAIN_LOG))?)?;
    let best: &EpochLog = &outcome.log[outcome.best_epoch - 1];
    Ok(TrainSummary {
        out: cfg.out.clone(),
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.log.len(),
        valid_micro_f1: best.valid_micro_f1,
    })
}

pub fn write_effective_config(cfg: &RunConfig) -> Result<()> {
    create_dir(&cfg.out)?;
    let path = cfg.out.join(EFFECTIVE_CONFIG);
    std::fs::write(&path, cfg.to_toml()).map_err(|e| io_err(&path, e))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<TrainSummary>> {
    cfg.validate()?;
    let data = prepare(cfg)?;
    if cfg.sweep.margins.is_empty() && cfg.sweep.lambdas.is_empty() {
        let outcome = fit(cfg, &data)?;
        return Ok(vec![write_run(cfg, &data, &outcome)?]);
    }
    run_sweep(cfg, &data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub margin: f64,
    pub lambda_weight: f64,
    pub best_epoch: usize,
    pub valid_micro_f1: f64,
    pub test_micro_f1: f64,
    pub test_intra_inter_ratio: f64,
}

/// One training run per (margin, λ) under `out/sweep/`, summarised in
/// `out/sweep.csv`.
pub fn run_sweep(cfg: &RunConfig, data: &Prepared) -> Result<Vec<TrainSummary>> {
    let margins = if cfg.sweep.margins.is_empty() { vec![cfg.metric.margin] } else { cfg.sweep.margins.clone() };
    let lambdas = if cfg.sweep.lambdas.is_empty() { vec![cfg.metric.lambda_weight] } else { cfg.sweep.lambdas.clone() };
    write_effective_config(cfg)?;
    let test = data.encode(cfg, SplitName::Test);
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &margin in &margins {
        for &lambda_weight in &lambdas {
            let mut run = cfg.clone();
            run.metric.enabled = true;
            run.metric.margin = margin;
            run.metric.lambda_weight = lambda_weight;
            run.sweep = Default::default();
            run.out = cfg.out.join("sweep").join(format!("margin-{margin}_lambda-{lambda_weight}"));
            info!("sweep: margin {margin}, lambda {lambda_weight}");
            let outcome = fit(&run, data)?;
            let summary = write_run(&run, data, &outcome)?;
            let feats = deterministic_features(&outcome.model, &test.tokens, test.labels.clone())?;
            let stats = distance_statistics(&feats, &ClassPartition::from_labels(&test.labels))?;
            rows.push(SweepRow {
                margin,
                lambda_weight,
                best_epoch: summary.best_epoch,
                valid_micro_f1: summary.valid_micro_f1,
                test_micro_f1: evaluate_model(&outcome.model, &test)?.micro_f1,
                test_intra_inter_ratio: stats.ratio,
            });
            summaries.push(summary);
        }
    }
    let mut w = csv::Writer::from_writer(create(&cfg.out.join("sweep.csv"))?);
    for r in &rows {
        w.serialize(r).map_err(Error::from)?;
    }
    w.flush().map_err(|e| io_err(&cfg.out.join("sweep.csv"), e))?;
    Ok(summaries)
}

/// A trained model with the vocabulary saved beside its checkpoint.
pub struct Trained {
    pub model: ModelState<f32>,
    pub vocab: Vocabulary,
}

/// Loads a checkpoint and checks it against the config's model section.
pub fn load_trained(cfg: &RunConfig, checkpoint: &Path, num_classes: usize) -> Result<Trained> {
    let dir = checkpoint.parent().unwrap_or(Path::new("."));
    let vocab = Vocabulary::load(&dir.join(VOCAB))?;
    let expected = cfg.encoder_config(vocab.len(), num_classes);
    let model = load_checkpoint_for(checkpoint, &expected)?;
    Ok(Trained { model, vocab })
}

/// Reloads the data, re-derives the split and encodes one part with the
/// checkpoint's vocabulary.
pub fn reload_split(cfg: &RunConfig, checkpoint: &Path, which: SplitName) -> Result<(Trained, Splits, EncodedSet)> {
    let dataset = load_data(cfg)?;
    let splits = split(cfg, &dataset)?;
    let trained = load_trained(cfg, checkpoint, dataset.num_classes)?;
    let set = encode_dataset(which.pick(&splits), &trained.vocab, cfg.model.max_len);
    Ok((trained, splits, set))
}

pub fn scorer_config(cfg: &RunConfig, kind: ScorerKind) -> ScorerConfig {
    ScorerConfig {
        kind,
        num_samples: cfg.scoring.num_samples,
        knn_k: cfg.scoring.knn_k,
        seed: cfg.seed,
    }
}

/// Runs every configured scorer on `set`. The training split provides the
/// reference features for the k-NN scorer.
pub fn score_set(
    cfg: &RunConfig,
    model: &ModelState<f32>,
    set: &EncodedSet,
    train_set: &EncodedSet,
) -> Result<Vec<(ScorerKind, Vec<ScoreRecord>)>> {
    let reference = if cfg.scoring.scorers.contains(&ScorerKind::DistanceKnn) {
        Some(deterministic_features(model, &train_set.tokens, train_set.labels.clone())?)
    } else {
        None
    };
    let mut out = Vec::new();
    for &kind in &cfg.scoring.scorers {
        let scores = score(model, &set.instance_ids, &set.tokens, &scorer_config(cfg, kind), reference.as_ref())?;
        let records = scores
            .iter()
            .zip(&set.labels)
            .map(|(s, &y)| ScoreRecord::new(s, Some(y)))
            .collect();
        out.push((kind, records));
    }
    Ok(out)
}

pub fn scores_path(out: &Path, kind: ScorerKind) -> PathBuf {
    out.join("scores").join(format!("{kind}.jsonl"))
}

pub fn cmd_score(cfg: &RunConfig, checkpoint: &Path, which: SplitName) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let (trained, splits, set) = reload_split(cfg, checkpoint, which)?;
    let train_set = encode_dataset(&splits.train, &trained.vocab, cfg.model.max_len);
    create_dir(&cfg.out.join("scores"))?;
    write_effective_config(cfg)?;
    let mut paths = Vec::new();
    for (kind, records) in score_set(cfg, &trained.model, &set, &train_set)? {
        let path = scores_path(&cfg.out, kind);
        write_score_records(&records, create(&path)?)?;
        info!("{kind}: {} scores -> {}", records.len(), path.display());
        paths.push(path);
    }
    Ok(paths)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(read_score_records(BufReader::new(file), &path.display().to_string())?)
}

/// Score records joined with their true labels.
pub fn predictions(records: &[ScoreRecord]) -> Result<Vec<ScoredPrediction>> {
    records
        .iter()
        .map(|r| {
            let true_class = r.true_label.ok_or_else(|| {
                Error::Evaluation(format!("score record `{}` has no true label", r.id))
            })?;
            Ok(ScoredPrediction {
                instance_id: r.id.clone(),
                predicted_class: r.predicted_class,
                true_class,
                score: r.score,
            })
        })
        .collect()
}

/// Deferral report for already-loaded score sets, plus the random control
/// computed on the first set's predictions.
pub fn evaluate_scores(cfg: &RunConfig, sets: &[(String, Vec<ScoreRecord>)]) -> Result<EvalReport> {
    let first = sets.first().ok_or_else(|| CliError::Usage("no score files given".into()))?;
    let ids: BTreeSet<&str> = first.1.iter().map(|r| r.id.as_str()).collect();
    for (name, recs) in &sets[1..] {
        let other: BTreeSet<&str> = recs.iter().map(|r| r.id.as_str()).collect();
        if other != ids || other.len() != recs.len() {
            return Err(Error::Evaluation(format!("{name} covers a different instance set than {}", first.0)).into());
        }
    }
    let mut report = EvalReport::default();
    for &mode in &cfg.evaluation.modes {
        let policy = DeferralPolicy {
            ratios: cfg.evaluation.ratios.clone(),
            mode,
        };
        for (_, recs) in sets {
            let scorer = recs.first().map_or("empty".to_string(), |r| r.scorer.to_string());
            report.extend(evaluate(&predictions(recs)?, &policy, &scorer, cfg.seed)?);
        }
        if cfg.evaluation.random_trials > 0 {
            let preds = predictions(&first.1)?;
            report.extend(random_baseline_report(&preds, &policy, cfg.evaluation.random_trials, cfg.seed)?);
        }
    }
    Ok(report)
}

pub fn cmd_evaluate(cfg: &RunConfig, files: &[PathBuf]) -> Result<EvalReport> {
    let sets = files
        .iter()
        .map(|f| Ok((f.display().to_string(), read_scores(f)?)))
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate_scores(cfg, &sets)?;
    create_dir(&cfg.out)?;
    write_effective_config(cfg)?;
    let path = cfg.out.join(REPORT);
    report.write_csv(create(&path)?)?;
    Ok(report)
}

/// Writes `id, label, f_0 .. f_{d-1}` for the deterministic features of one
/// split and returns the file with its distance statistics.
pub fn cmd_export_features(cfg: &RunConfig, checkpoint: &Path, which: SplitName) -> Result<(PathBuf, DistanceStats)> {
    cfg.validate()?;
    let (trained, _, set) = reload_split(cfg, checkpoint, which)?;
    let feats = deterministic_features(&trained.model, &set.tokens, set.labels.clone())?;
    create_dir(&cfg.out)?;
    let path = cfg.out.join(format!("features_{}.csv", which.as_str()));
    let mut w = csv::Writer::from_writer(create(&path)?);
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..feats.dim).map(|j| format!("f_{j}")));
    w.write_record(&header).map_err(Error::from)?;
    for i in 0..feats.len() {
        let mut row = vec![set.instance_ids[i].clone(), set.labels[i].to_string()];
        // `{:?}` on f32 is the shortest text that parses back to the same value.
        row.extend(feats.row(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&row).map_err(Error::from)?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    let stats = distance_statistics(&feats, &ClassPartition::from_labels(&set.labels))?;
    Ok((path, stats))
}

/// Most uncertain `floor(ratio·n)` records joined with their text, most
/// uncertain first. `top3` comes from the MC histogram when the scorer kept
/// one, else it is the single predicted class.
pub fn build_queue(records: &[ScoreRecord], dataset: &LabeledDataset, ratio: f64) -> Result<Vec<QueueRecord>> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(CliError::Usage(format!("ratio {ratio} outside [0, 1]")));
    }
    let texts: HashMap<&str, &str> = dataset.documents.iter().map(|d| (d.id.as_str(), d.text.as_str())).collect();
    let mut order: Vec<(ScoredPrediction, &ScoreRecord)> = records
        .iter()
        .map(|r| {
            let p = ScoredPrediction {
                instance_id: r.id.clone(),
                predicted_class: r.predicted_class,
                true_class: 0,
                score: r.score,
            };
            (p, r)
        })
        .collect();
    order.sort_by(|a, b| uncertainty_order(&a.0, &b.0));
    let take = deferred_count(ratio, records.len());
    order[..take]
        .iter()
        .map(|(_, r)| {
            let text = texts
                .get(r.id.as_str())
                .ok_or_else(|| Error::Dataset(format!("scored instance `{}` is not in the dataset", r.id)))?;
            Ok(QueueRecord {
                instance_id: r.id.clone(),
                text: text.to_string(),
                score: r.score,
                predicted_class: r.predicted_class,
                top3: top3(r),
                num_classes: dataset.num_classes,
                true_label: r.true_label,
            })
        })
        .collect()
}

fn top3(r: &ScoreRecord) -> Vec<(usize, f64)> {
    let Some(hist) = &r.histogram else {
        return vec![(r.predicted_class, 1.0)];
    };
    let total: u32 = hist.iter().sum();
    let mut classes: Vec<usize> = (0..hist.len()).filter(|&c| hist[c] > 0).collect();
    classes.sort_by(|&a, &b| hist[b].cmp(&hist[a]).then(a.cmp(&b)));
    classes.truncate(3);
    classes.into_iter().map(|c| (c, hist[c] as f64 / total as f64)).collect()
}

pub fn cmd_triage_export(cfg: &RunConfig, scores: &Path, ratio: f64) -> Result<(PathBuf, usize)> {
    let records = read_scores(scores)?;
    let dataset = load_data(cfg)?;
    let queue = build_queue(&records, &dataset, ratio)?;
    create_dir(&cfg.out)?;
    let path = cfg.out.join(QUEUE);
    write_queue(&path, &queue)?;
    Ok((path, queue.len()))
}
