use std::cmp::Ordering;
use std::collections::HashMap;
use std::str::FromStr;

use crate::error::{Result, TriageError};
use crate::types::{DocView, HumanLabel, LiveMetrics, QueueRecord, Status, TriageItem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StatusFilter {
    #[default]
    Pending,
    Labeled,
    All,
}

impl FromStr for StatusFilter {
    type Err = TriageError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pending" => Ok(StatusFilter::Pending),
            "labeled" => Ok(StatusFilter::Labeled),
            "all" => Ok(StatusFilter::All),
            other => Err(TriageError::BadRequest(format!("unknown status `{other}`"))),
        }
    }
}

/// Queue contents plus accepted labels. Metrics are a pure function of the
/// two.
#[derive(Debug, Clone)]
pub struct TriageState {
    items: Vec<QueueRecord>,
    index: HashMap<String, usize>,
    labels: HashMap<String, HumanLabel>,
}

fn queue_order(a: &QueueRecord, b: &QueueRecord) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.instance_id.cmp(&b.instance_id))
}

impl TriageState {
    pub fn new(mut items: Vec<QueueRecord>) -> Result<Self> {
        items.sort_by(queue_order);
        let mut index = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if index.insert(item.instance_id.clone(), i).is_some() {
                return Err(TriageError::BadRequest(format!(
                    "queue lists `{}` twice",
                    item.instance_id
                )));
            }
        }
        Ok(Self {
            items,
            index,
            labels: HashMap::new(),
        })
    }

    /// Errors a label would raise, without applying it.
    pub fn check(&self, instance_id: &str, label: usize) -> Result<()> {
        let &i = self
            .index
            .get(instance_id)
            .ok_or_else(|| TriageError::UnknownInstance(instance_id.to_string()))?;
        if self.labels.contains_key(instance_id) {
            return Err(TriageError::Duplicate(instance_id.to_string()));
        }
        let num_classes = self.items[i].num_classes;
        if label >= num_classes {
            return Err(TriageError::InvalidLabel {
                instance_id: instance_id.to_string(),
                label,
                num_classes,
            });
        }
        Ok(())
    }

    pub fn apply(&mut self, label: HumanLabel) -> Result<()> {
        self.check(&label.instance_id, label.label)?;
        self.labels.insert(label.instance_id.clone(), label);
        Ok(())
    }

    fn status(&self, id: &str) -> Status {
        if self.labels.contains_key(id) {
            Status::Labeled
        } else {
            Status::Pending
        }
    }

    fn item(&self, rec: &QueueRecord) -> TriageItem {
        TriageItem {
            instance_id: rec.instance_id.clone(),
            text: rec.text.clone(),
            score: rec.score,
            predicted_class: rec.predicted_class,
            top3: rec.top3.clone(),
            status: self.status(&rec.instance_id),
        }
    }

    /// Items in descending score order, ties by id.
    pub fn queue(&self, status: StatusFilter, limit: Option<usize>) -> Vec<TriageItem> {
        self.items
            .iter()
            .filter(|r| match status {
                StatusFilter::All => true,
                StatusFilter::Pending => !self.labels.contains_key(&r.instance_id),
                StatusFilter::Labeled => self.labels.contains_key(&r.instance_id),
            })
            .take(limit.unwrap_or(usize::MAX))
            .map(|r| self.item(r))
            .collect()
    }

    pub fn doc(&self, id: &str) -> Option<DocView> {
        let rec = &self.items[*self.index.get(id)?];
        Some(DocView {
            item: self.item(rec),
            num_classes: rec.num_classes,
            label: self.labels.get(id).cloned(),
        })
    }

    pub fn labels(&self) -> impl Iterator<Item = &HumanLabel> {
        self.labels.values()
    }

    pub fn metrics(&self) -> LiveMetrics {
        let total = self.items.len();
        let labeled_count = self.labels.len();
        let truth = !self.items.is_empty() && self.items.iter().all(|r| r.true_label.is_some());
        let (mut kept, mut kept_correct, mut agree) = (0usize, 0usize, 0usize);
        for r in &self.items {
            match self.labels.get(&r.instance_id) {
                Some(h) => agree += usize::from(h.label == r.predicted_class),
                None => {
                    kept += 1;
                    kept_correct += usize::from(r.true_label == Some(r.predicted_class));
                }
            }
        }
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        LiveMetrics {
            total,
            labeled_count,
            coverage: ratio(labeled_count, total).unwrap_or(0.0),
            model_accuracy_on_kept: if truth { ratio(kept_correct, kept) } else { None },
            combined_accuracy: if truth { ratio(kept_correct + labeled_count, total) } else { None },
            agreement_rate: ratio(agree, labeled_count),
            ground_truth_available: truth,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn record(id: &str, score: f64, pred: usize, truth: Option<usize>) -> QueueRecord {
        QueueRecord {
            instance_id: id.into(),
            text: format!("text of {id}"),
            score,
            predicted_class: pred,
            top3: vec![(pred, 0.6), ((pred + 1) % 3, 0.4)],
            num_classes: 3,
            true_label: truth,
        }
    }

    fn label(id: &str, l: usize) -> HumanLabel {
        HumanLabel {
            instance_id: id.into(),
            label: l,
            reviewer: "r".into(),
            timestamp: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    #[test]
    fn orders_by_score_then_id() {
        let s = TriageState::new(vec![
            record("b", 0.5, 0, None),
            record("a", 0.5, 0, None),
            record("c", 0.9, 0, None),
        ])
        .unwrap();
        let ids: Vec<_> = s.queue(StatusFilter::All, None).into_iter().map(|i| i.instance_id).collect();
        assert_eq!(ids, ["c", "a", "b"]);
        assert_eq!(s.queue(StatusFilter::Pending, Some(2)).len(), 2);
    }

    #[test]
    fn rejections() {
        let mut s = TriageState::new(vec![record("a", 1.0, 0, None)]).unwrap();
        assert!(matches!(s.apply(label("x", 0)), Err(TriageError::UnknownInstance(_))));
        assert!(matches!(s.apply(label("a", 3)), Err(TriageError::InvalidLabel { .. })));
        s.apply(label("a", 1)).unwrap();
        assert!(matches!(s.apply(label("a", 2)), Err(TriageError::Duplicate(_))));
        assert_eq!(s.doc("a").unwrap().label.unwrap().label, 1);
        assert!(TriageState::new(vec![record("a", 1.0, 0, None), record("a", 0.0, 0, None)]).is_err());
    }

    #[test]
    fn combined_accuracy_hand_count() {
        // Model right on a, c; wrong on b, d, e.
        let items = vec![
            record("a", 0.1, 0, Some(0)),
            record("b", 0.9, 1, Some(2)),
            record("c", 0.2, 2, Some(2)),
            record("d", 0.8, 0, Some(1)),
            record("e", 0.7, 1, Some(0)),
        ];
        let mut s = TriageState::new(items).unwrap();
        let m = s.metrics();
        assert_eq!((m.total, m.labeled_count, m.coverage), (5, 0, 0.0));
        assert_eq!(m.combined_accuracy, Some(0.4));
        assert_eq!(m.model_accuracy_on_kept, Some(0.4));
        assert_eq!(m.agreement_rate, None);
        s.apply(label("b", 2)).unwrap();
        s.apply(label("d", 0)).unwrap();
        let m = s.metrics();
        assert_eq!(m.combined_accuracy, Some((2.0 + 2.0) / 5.0));
        assert_eq!(m.model_accuracy_on_kept, Some(2.0 / 3.0));
        assert_eq!(m.agreement_rate, Some(0.5));
        for (id, l) in [("a", 0), ("c", 2), ("e", 0)] {
            s.apply(label(id, l)).unwrap();
        }
        let m = s.metrics();
        assert_eq!((m.coverage, m.combined_accuracy, m.model_accuracy_on_kept), (1.0, Some(1.0), None));
    }

    #[test]
    fn without_truth_only_agreement() {
        let mut s = TriageState::new(vec![record("a", 0.1, 0, None), record("b", 0.2, 1, None)]).unwrap();
        s.apply(label("a", 0)).unwrap();
        let m = s.metrics();
        assert!(!m.ground_truth_available);
        assert_eq!((m.combined_accuracy, m.model_accuracy_on_kept), (None, None));
        assert_eq!((m.coverage, m.agreement_rate), (0.5, Some(1.0)));
    }
}
