use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::tokenize::tokenize;
use super::LabeledDataset;
use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ index mapping. Index 0 is padding, index 1 the unknown token.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    token_to_index: HashMap<String, u32>,
    index_to_token: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens already in insertion order.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self {
            token_to_index: HashMap::new(),
            index_to_token: Vec::new(),
        };
        vocab.push(PAD_TOKEN.to_string())?;
        vocab.push(UNK_TOKEN.to_string())?;
        for t in tokens {
            vocab.push(t.into())?;
        }
        Ok(vocab)
    }

    fn push(&mut self, token: String) -> Result<()> {
        if self.token_to_index.contains_key(&token) {
            return Err(Error::Dataset(format!("duplicate vocabulary token {token:?}")));
        }
        self.token_to_index
            .insert(token.clone(), self.index_to_token.len() as u32);
        self.index_to_token.push(token);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_to_token.is_empty()
    }

    pub fn index(&self, token: &str) -> Option<u32> {
        self.token_to_index.get(token).copied()
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.index_to_token.get(index as usize).map(String::as_str)
    }

    /// Index for `token`, falling back to UNK.
    pub fn lookup(&self, token: &str) -> u32 {
        self.index(token).unwrap_or(UNK)
    }

    pub fn tokens(&self) -> &[String] {
        &self.index_to_token
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&raw)?)
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.index_to_token.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(serde::de::Error::custom("vocabulary must start with <pad>, <unk>"));
        }
        Vocabulary::from_tokens(tokens.into_iter().skip(2)).map_err(serde::de::Error::custom)
    }
}

/// Every token occurring at least `min_count` times in `dataset`, ordered by
/// frequency (descending) then lexicographically. Pass the training split.
pub fn build_vocab(dataset: &LabeledDataset, min_count: usize) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::Config("min_count must be >= 1".into()));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for doc in &dataset.documents {
        for tok in tokenize(&doc.text) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn corpus(texts: &[&str]) -> LabeledDataset {
        LabeledDataset {
            documents: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Document {
                    id: i.to_string(),
                    text: t.to_string(),
                    label: i % 2,
                })
                .collect(),
            num_classes: 2,
            class_names: vec!["a".into(), "b".into()],
        }
    }

    #[test]
    fn min_count_one_and_two() {
        let ds = corpus(&["a a b"]);
        let v1 = build_vocab(&ds, 1).unwrap();
        assert_eq!(v1.tokens(), [PAD_TOKEN, UNK_TOKEN, "a", "b"]);
        let v2 = build_vocab(&ds, 2).unwrap();
        assert_eq!(v2.tokens(), [PAD_TOKEN, UNK_TOKEN, "a"]);
    }

    #[test]
    fn frequency_then_lexicographic_order() {
        let ds = corpus(&["z y x x", "y z w"]);
        let v = build_vocab(&ds, 1).unwrap();
        assert_eq!(v.tokens()[2..], ["x", "y", "z", "w"]);
    }

    #[test]
    fn round_trip_and_unk() {
        let ds = corpus(&["the cat sat on the mat ."]);
        let v = build_vocab(&ds, 1).unwrap();
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.index(t), Some(i as u32));
            assert_eq!(v.token(i as u32), Some(t.as_str()));
        }
        assert_eq!(v.lookup("dog"), UNK);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn rejects_zero_min_count() {
        assert!(build_vocab(&corpus(&["a"]), 0).is_err());
    }
}
