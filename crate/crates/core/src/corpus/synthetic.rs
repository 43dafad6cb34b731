//! Seeded generator for topic-structured text corpora and matching word
//! vectors. Used for offline fixtures and the desk-scale experiments when a
//! real newsgroups dump is not available.
//!
//! Every document draws a fraction of its words from its class topic, an
//! optional share from a distractor topic and the rest from a shared
//! background vocabulary. Weak-signal documents with strong distractors are
//! genuinely ambiguous, so a trained classifier makes errors concentrated on
//! exactly the inputs where dropout disagreement is high.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Document, LabeledDataset};
use crate::error::{Error, Result};

const SYLLABLES: [&str; 32] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ba", "de", "fi", "go", "hu", "ja", "ke", "li",
    "mo", "nu", "pa", "qe", "ri", "so", "tu", "ve", "wa", "xi", "yo", "ze", "bri", "cla", "dro", "ste",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub docs_per_class: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub topic_vocab: usize,
    pub shared_vocab: usize,
    /// Range of the per-document fraction of class-topic words.
    pub signal: (f64, f64),
    /// Probability that a document also mixes in another class's topic.
    pub distractor_prob: f64,
    /// Distractor strength relative to the document's own signal, drawn from `[0, this]`.
    pub distractor_scale: f64,
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 4,
            docs_per_class: 700,
            min_len: 30,
            max_len: 80,
            topic_vocab: 150,
            shared_vocab: 500,
            signal: (0.03, 0.25),
            distractor_prob: 0.6,
            distractor_scale: 1.0,
            label_noise: 0.03,
            seed: 2019,
        }
    }
}

/// Generated corpus with its vocabulary layout.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub dataset: LabeledDataset,
    pub topic_words: Vec<Vec<String>>,
    pub shared_words: Vec<String>,
}

fn word_pool(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut words = Vec::with_capacity(SYLLABLES.len().pow(2) + SYLLABLES.len().pow(3));
    for a in SYLLABLES {
        for b in SYLLABLES {
            words.push(format!("{a}{b}"));
            for c in SYLLABLES {
                words.push(format!("{a}{b}{c}"));
            }
        }
    }
    words.shuffle(rng);
    words.truncate(n);
    words
}

/// Zipf-like index: rank `r` drawn with weight `1/(r+1)`.
fn zipf_index(n: usize, rng: &mut ChaCha8Rng) -> usize {
    let h = (n as f64 + 1.0).ln();
    let u: f64 = rng.random();
    (((u * h).exp() - 1.0).floor() as usize).min(n - 1)
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    if spec.num_classes < 2 || spec.docs_per_class == 0 || spec.min_len == 0 || spec.min_len > spec.max_len {
        return Err(Error::Config(format!("invalid synthetic spec {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pool = word_pool(spec.num_classes * spec.topic_vocab + spec.shared_vocab, &mut rng);
    let topic_words: Vec<Vec<String>> = pool[..spec.num_classes * spec.topic_vocab]
        .chunks(spec.topic_vocab)
        .map(|c| c.to_vec())
        .collect();
    let shared_words = pool[spec.num_classes * spec.topic_vocab..].to_vec();
    let class_names: Vec<String> = (0..spec.num_classes).map(|k| format!("topic{k}")).collect();

    let mut documents = Vec::with_capacity(spec.num_classes * spec.docs_per_class);
    for i in 0..spec.num_classes * spec.docs_per_class {
        let class = i % spec.num_classes;
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let signal = rng.random_range(spec.signal.0..=spec.signal.1);
        let (distractor, noise_share) = if rng.random_bool(spec.distractor_prob) {
            let mut other = rng.random_range(0..spec.num_classes - 1);
            if other >= class {
                other += 1;
            }
            (Some(other), signal * rng.random_range(0.0..=spec.distractor_scale))
        } else {
            (None, 0.0)
        };
        let mut text = String::new();
        for pos in 0..len {
            let u: f64 = rng.random();
            let word = if u < signal {
                &topic_words[class][zipf_index(spec.topic_vocab, &mut rng)]
            } else if let (Some(d), true) = (distractor, u < signal + noise_share) {
                &topic_words[d][zipf_index(spec.topic_vocab, &mut rng)]
            } else {
                &shared_words[zipf_index(spec.shared_vocab, &mut rng)]
            };
            if pos > 0 {
                text.push(' ');
            }
            text.push_str(word);
            if rng.random_bool(0.08) {
                text.push_str(if rng.random_bool(0.8) { "." } else { "," });
            }
        }
        let label = if rng.random_bool(spec.label_noise) {
            (class + rng.random_range(1..spec.num_classes)) % spec.num_classes
        } else {
            class
        };
        documents.push(Document {
            id: format!("{}/{:05}", class_names[label], i),
            text,
            label,
        });
    }
    Ok(SyntheticCorpus {
        dataset: LabeledDataset::new(documents, class_names)?,
        topic_words,
        shared_words,
    })
}

impl SyntheticCorpus {
    /// GloVe-format text: topic words cluster around a per-class centroid,
    /// background words are isotropic noise.
    pub fn word_vectors(&self, dim: usize, seed: u64) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centroid = Normal::new(0.0, 0.4).unwrap();
        let noise = Normal::new(0.0, 0.25).unwrap();
        let centroids: Vec<Vec<f64>> = (0..self.topic_words.len())
            .map(|_| (0..dim).map(|_| centroid.sample(&mut rng)).collect())
            .collect();
        let mut out = String::new();
        let emit = |out: &mut String, word: &str, base: Option<&[f64]>, rng: &mut ChaCha8Rng| {
            out.push_str(word);
            for j in 0..dim {
                let v = base.map_or(0.0, |b| b[j]) + noise.sample(rng);
                write!(out, " {v:.5}").unwrap();
            }
            out.push('\n');
        };
        for (k, words) in self.topic_words.iter().enumerate() {
            for w in words {
                emit(&mut out, w, Some(&centroids[k]), &mut rng);
            }
        }
        for w in self.shared_words.iter().map(String::as_str).chain([".", ","]) {
            emit(&mut out, w, None, &mut rng);
        }
        out
    }

    /// Writes the corpus as `root/<class_name>/<doc_file>`.
    pub fn write_newsgroups_dirs(&self, root: &Path) -> Result<()> {
        for name in &self.dataset.class_names {
            let dir = root.join(name);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        for doc in &self.dataset.documents {
            let p = root.join(&doc.id);
            std::fs::write(&p, &doc.text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
