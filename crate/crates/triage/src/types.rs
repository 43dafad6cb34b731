use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TriageError};

/// One line of the queue file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueRecord {
    pub instance_id: String,
    pub text: String,
    pub score: f64,
    pub predicted_class: usize,
    /// Up to three `(class, MC frequency)` pairs, most frequent first.
    pub top3: Vec<(usize, f64)>,
    pub num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_label: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    Labeled,
}

/// Queue entry as served by `/api/queue`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageItem {
    pub instance_id: String,
    pub text: String,
    pub score: f64,
    pub predicted_class: usize,
    pub top3: Vec<(usize, f64)>,
    pub status: Status,
}

/// Full document view for `/api/docs/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocView {
    #[serde(flatten)]
    pub item: TriageItem,
    pub num_classes: usize,
    pub label: Option<HumanLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanLabel {
    pub instance_id: String,
    pub label: usize,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRequest {
    pub instance_id: String,
    pub label: usize,
    pub reviewer: String,
}

/// Human labels count as ground truth. Accuracy fields are `null` when the
/// queue carries no true labels or the relevant set is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveMetrics {
    pub total: usize,
    pub labeled_count: usize,
    pub coverage: f64,
    pub model_accuracy_on_kept: Option<f64>,
    pub combined_accuracy: Option<f64>,
    pub agreement_rate: Option<f64>,
    pub ground_truth_available: bool,
}

pub fn read_queue(path: &Path) -> Result<Vec<QueueRecord>> {
    let file = File::open(path).map_err(|e| TriageError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| TriageError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| TriageError::Corrupt {
            path: path.into(),
            line: n + 1,
            message,
        };
        let rec: QueueRecord = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        if !rec.score.is_finite() {
            return Err(corrupt("score is not finite".into()));
        }
        if rec.predicted_class >= rec.num_classes || rec.true_label.is_some_and(|t| t >= rec.num_classes) {
            return Err(corrupt(format!("class index outside 0..{}", rec.num_classes)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_queue(path: &Path, records: &[QueueRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| TriageError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| TriageError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| TriageError::io(path, e))?;
    }
    w.flush().map_err(|e| TriageError::io(path, e))
}
