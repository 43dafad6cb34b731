use super::tokenize::tokenize;
use super::vocab::{Vocabulary, PAD};
use super::LabeledDataset;
use crate::error::{Error, Result};

/// `[batch × max_len]` token ids, right-padded with `PAD`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBatch {
    ids: Vec<u32>,
    max_len: usize,
}

impl TokenBatch {
    pub fn new(ids: Vec<u32>, max_len: usize) -> Result<Self> {
        if max_len == 0 || ids.len() % max_len != 0 {
            return Err(Error::Shape(format!(
                "{} token ids do not form rows of length {max_len}",
                ids.len()
            )));
        }
        Ok(Self { ids, max_len })
    }

    /// Truncates or pads each sequence to `max_len`.
    pub fn from_sequences<S: AsRef<[u32]>>(seqs: &[S], max_len: usize) -> Self {
        let mut ids = vec![PAD; seqs.len() * max_len];
        for (row, seq) in ids.chunks_mut(max_len).zip(seqs) {
            let seq = seq.as_ref();
            let n = seq.len().min(max_len);
            row[..n].copy_from_slice(&seq[..n]);
        }
        Self { ids, max_len }
    }

    pub fn batch_size(&self) -> usize {
        self.ids.len() / self.max_len
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.ids[i * self.max_len..(i + 1) * self.max_len]
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn select(&self, rows: &[usize]) -> TokenBatch {
        let mut ids = Vec::with_capacity(rows.len() * self.max_len);
        for &r in rows {
            ids.extend_from_slice(self.row(r));
        }
        TokenBatch {
            ids,
            max_len: self.max_len,
        }
    }
}

/// A dataset turned into model input.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSet {
    pub instance_ids: Vec<String>,
    pub tokens: TokenBatch,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl EncodedSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> EncodedSet {
        EncodedSet {
            instance_ids: rows.iter().map(|&r| self.instance_ids[r].clone()).collect(),
            tokens: self.tokens.select(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            num_classes: self.num_classes,
        }
    }
}

pub fn encode_text(text: &str, vocab: &Vocabulary, max_len: usize) -> Vec<u32> {
    tokenize(text)
        .iter()
        .take(max_len)
        .map(|t| vocab.lookup(t))
        .collect()
}

pub fn encode_dataset(dataset: &LabeledDataset, vocab: &Vocabulary, max_len: usize) -> EncodedSet {
    let seqs: Vec<Vec<u32>> = dataset
        .documents
        .iter()
        .map(|d| encode_text(&d.text, vocab, max_len))
        .collect();
    EncodedSet {
        instance_ids: dataset.documents.iter().map(|d| d.id.clone()).collect(),
        tokens: TokenBatch::from_sequences(&seqs, max_len),
        labels: dataset.labels(),
        num_classes: dataset.num_classes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UNK;

    #[test]
    fn pads_and_truncates() {
        let vocab = Vocabulary::from_tokens(["a", "b"]).unwrap();
        let a = vocab.index("a").unwrap();
        let b = vocab.index("b").unwrap();
        assert_eq!(encode_text("a b c a b", &vocab, 4), [a, b, UNK, a]);
        let batch = TokenBatch::from_sequences(&[vec![a], vec![b, b, b, b, b]], 3);
        assert_eq!(batch.row(0), [a, PAD, PAD]);
        assert_eq!(batch.row(1), [b, b, b]);
        assert_eq!(batch.batch_size(), 2);
        assert!(TokenBatch::new(vec![1, 2, 3], 2).is_err());
    }
}
