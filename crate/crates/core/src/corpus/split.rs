use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            valid_fraction: 0.1,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_fraction, self.valid_fraction, self.test_fraction];
        if fr.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Config(format!("split fractions must lie in (0,1): {fr:?}")));
        }
        let sum: f64 = fr.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: LabeledDataset,
    pub valid: LabeledDataset,
    pub test: LabeledDataset,
}

/// Stratified random split: each class is shuffled under `spec.seed` and cut
/// by the requested fractions (rounded, with at least one document in each
/// part). Documents keep their original relative order inside every split.
pub fn split_dataset(dataset: &LabeledDataset, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for class in 0..dataset.num_classes {
        let mut members: Vec<usize> = dataset
            .documents
            .iter()
            .enumerate()
            .filter(|(_, d)| d.label == class)
            .map(|(i, _)| i)
            .collect();
        let n = members.len();
        if n < 3 {
            return Err(Error::Dataset(format!(
                "class {} ({}) has {n} documents; need at least 3 to populate every split",
                class, dataset.class_names[class]
            )));
        }
        members.shuffle(&mut rng);
        let n_valid = ((n as f64 * spec.valid_fraction).round() as usize).max(1);
        let n_test = ((n as f64 * spec.test_fraction).round() as usize).max(1);
        let n_train = n.saturating_sub(n_valid + n_test).max(1);
        // Rounding can overshoot on tiny classes; trim test then valid.
        let (n_valid, n_test) = fit_remaining(n - n_train, n_valid, n_test);
        parts[0].extend_from_slice(&members[..n_train]);
        parts[1].extend_from_slice(&members[n_train..n_train + n_valid]);
        parts[2].extend_from_slice(&members[n_train + n_valid..n_train + n_valid + n_test]);
    }
    let [train, valid, test] = parts.map(|mut idx| {
        idx.sort_unstable();
        dataset.subset(&idx)
    });
    Ok(Splits { train, valid, test })
}

fn fit_remaining(budget: usize, mut valid: usize, mut test: usize) -> (usize, usize) {
    while valid + test > budget {
        if test > 1 && test >= valid {
            test -= 1;
        } else {
            valid -= 1;
        }
    }
    // Any leftover goes to test.
    test += budget - valid - test;
    (valid, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use std::collections::HashSet;

    fn dataset(per_class: &[usize]) -> LabeledDataset {
        let mut documents = Vec::new();
        for (c, &n) in per_class.iter().enumerate() {
            for i in 0..n {
                documents.push(Document {
                    id: format!("c{c}-{i}"),
                    text: format!("doc {i}"),
                    label: c,
                });
            }
        }
        LabeledDataset {
            documents,
            num_classes: per_class.len(),
            class_names: (0..per_class.len()).map(|c| format!("class{c}")).collect(),
        }
    }

    fn count(ds: &LabeledDataset, c: usize) -> usize {
        ds.documents.iter().filter(|d| d.label == c).count()
    }

    #[test]
    fn ten_per_class_gives_7_1_2() {
        let ds = dataset(&[10, 10]);
        let s = split_dataset(&ds, &SplitSpec::default()).unwrap();
        assert_eq!(
            (s.train.len(), s.valid.len(), s.test.len()),
            (14, 2, 4)
        );
        for c in 0..2 {
            assert_eq!((count(&s.train, c), count(&s.valid, c), count(&s.test, c)), (7, 1, 2));
        }
    }

    #[test]
    fn deterministic_disjoint_exhaustive() {
        let ds = dataset(&[13, 7, 31]);
        let spec = SplitSpec { seed: 9, ..Default::default() };
        let a = split_dataset(&ds, &spec).unwrap();
        let b = split_dataset(&ds, &spec).unwrap();
        assert_eq!(a, b);
        let mut seen = HashSet::new();
        for d in a.train.documents.iter().chain(&a.valid.documents).chain(&a.test.documents) {
            assert!(seen.insert(d.id.clone()), "duplicate {}", d.id);
        }
        assert_eq!(seen.len(), ds.len());
        let other = split_dataset(&ds, &SplitSpec { seed: 10, ..spec }).unwrap();
        assert_ne!(other.train, a.train);
    }

    #[test]
    fn class_proportions_within_one_document() {
        let ds = dataset(&[13, 7, 31, 12]);
        let s = split_dataset(&ds, &SplitSpec::default()).unwrap();
        for (part, frac) in [(&s.train, 0.7), (&s.valid, 0.1), (&s.test, 0.2)] {
            for c in 0..4 {
                let n = count(&ds, c) as f64;
                assert!((count(part, c) as f64 - n * frac).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn rejects_tiny_class_and_bad_fractions() {
        assert!(split_dataset(&dataset(&[10, 2]), &SplitSpec::default()).is_err());
        let bad = SplitSpec { train_fraction: 0.8, ..Default::default() };
        assert!(split_dataset(&dataset(&[10, 10]), &bad).is_err());
        let zero = SplitSpec { train_fraction: 0.8, valid_fraction: 0.0, test_fraction: 0.2, seed: 0 };
        assert!(zero.validate().is_err());
    }
}
