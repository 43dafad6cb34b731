use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use udc_core::corpus::{DatasetFormat, LoadOptions, SplitSpec};
use udc_core::evaluation::DeferralMode;
use udc_core::metric::MetricConfig;
use udc_core::nn::{EncoderConfig, TrainConfig};
use udc_core::uncertainty::ScorerKind;

use crate::error::{CliError, Result};

/// Everything a run needs. Missing keys take the defaults below; the
/// effective config written next to each run lists every key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub metric: MetricSection,
    pub scoring: ScoringConfig,
    pub evaluation: EvaluationConfig,
    pub triage: TriageConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs/default"),
            data: DataConfig::default(),
            split: SplitConfig::default(),
            model: ModelConfig::default(),
            train: TrainSection::default(),
            metric: MetricSection::default(),
            scoring: ScoringConfig::default(),
            evaluation: EvaluationConfig::default(),
            triage: TriageConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    /// `newsgroups_dirs`, `jsonl` or `csv`.
    pub format: String,
    pub strip_headers: bool,
    /// Newsgroup directories to keep; empty keeps all.
    pub categories: Vec<String>,
    /// Declared class count for JSONL/CSV; 0 infers it from the labels.
    pub num_classes: usize,
    pub min_count: usize,
    /// GloVe-style text vectors; empty means random initialisation.
    pub embeddings: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: PathBuf::from("data/20news"),
            format: "newsgroups_dirs".into(),
            strip_headers: false,
            categories: Vec::new(),
            num_classes: 0,
            min_count: 1,
            embeddings: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let s = SplitSpec::default();
        Self {
            train_fraction: s.train_fraction,
            valid_fraction: s.valid_fraction,
            test_fraction: s.test_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub kernel_sizes: Vec<usize>,
    pub filters_per_kernel: usize,
    pub dropout_p: f64,
    pub max_len: usize,
    pub freeze_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let e = EncoderConfig::new(0, 0);
        Self {
            embed_dim: e.embed_dim,
            kernel_sizes: e.kernel_sizes,
            filters_per_kernel: e.filters_per_kernel,
            dropout_p: e.dropout_p,
            max_len: e.max_len,
            freeze_embeddings: e.freeze_embeddings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            max_epochs: t.max_epochs,
            patience: t.patience,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSection {
    pub enabled: bool,
    pub margin: f64,
    pub lambda_weight: f64,
}

impl Default for MetricSection {
    fn default() -> Self {
        let m = MetricConfig::default();
        Self {
            enabled: true,
            margin: m.margin,
            lambda_weight: m.lambda_weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub scorers: Vec<ScorerKind>,
    pub num_samples: usize,
    pub knn_k: usize,
    /// Split scored by `score` when no `--split` is given.
    pub split: String,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            scorers: ScorerKind::ALL.to_vec(),
            num_samples: 100,
            knn_k: 10,
            split: "test".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub ratios: Vec<f64>,
    pub modes: Vec<DeferralMode>,
    /// Trials averaged by the random-deferral control; 0 disables it.
    pub random_trials: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            ratios: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            modes: vec![DeferralMode::RemainingOnly, DeferralMode::Combined],
            random_trials: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriageConfig {
    pub top_ratio: f64,
    pub addr: String,
    /// Built UI bundle; empty serves a placeholder page.
    pub ui_dir: String,
}

impl Default for TriageConfig {
    fn default() -> Self {
        Self {
            top_ratio: 0.2,
            addr: "127.0.0.1:8080".into(),
            ui_dir: String::new(),
        }
    }
}

/// Margin and λ values to train over. Empty lists fall back to the single
/// value in `[metric]`; both empty means no sweep.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub margins: Vec<f64>,
    pub lambdas: Vec<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.data_format()?;
        self.split_spec().validate()?;
        self.train_config().validate()?;
        self.metric_config().validate()?;
        if self.scoring.scorers.is_empty() {
            return Err(CliError::Usage("scoring.scorers is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.triage.top_ratio) {
            return Err(CliError::Usage(format!("triage.top_ratio {} outside [0, 1]", self.triage.top_ratio)));
        }
        self.encoder_config(2, 2).validate()?;
        Ok(())
    }

    pub fn data_format(&self) -> Result<DatasetFormat> {
        Ok(self.data.format.parse()?)
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            strip_headers: self.data.strip_headers,
            num_classes: (self.data.num_classes > 0).then_some(self.data.num_classes),
            categories: self.data.categories.clone(),
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.split.train_fraction,
            valid_fraction: self.split.valid_fraction,
            test_fraction: self.split.test_fraction,
            seed: self.seed,
        }
    }

    pub fn encoder_config(&self, vocab_size: usize, num_classes: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            embed_dim: self.model.embed_dim,
            kernel_sizes: self.model.kernel_sizes.clone(),
            filters_per_kernel: self.model.filters_per_kernel,
            dropout_p: self.model.dropout_p,
            max_len: self.model.max_len,
            num_classes,
            freeze_embeddings: self.model.freeze_embeddings,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seed: self.seed,
        }
    }

    pub fn metric_config(&self) -> MetricConfig {
        MetricConfig {
            margin: self.metric.margin,
            lambda_weight: self.metric.lambda_weight,
        }
    }
}
