use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, PAD};
use crate::error::{Error, Result};

/// Standard deviation of the random initialization, N(0, 0.1²).
pub const RANDOM_INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    Pretrained,
    Random,
}

/// `[vocab_size × embed_dim]` initial word vectors; row `PAD` is all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub values: Vec<f32>,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub source: EmbeddingSource,
    /// Number of vocabulary rows copied from the pretrained file.
    pub pretrained_hits: usize,
}

impl EmbeddingMatrix {
    pub fn random(vocab_size: usize, embed_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, RANDOM_INIT_STD).unwrap();
        let mut values: Vec<f32> = (0..vocab_size * embed_dim)
            .map(|_| normal.sample(&mut rng) as f32)
            .collect();
        values[PAD as usize * embed_dim..(PAD as usize + 1) * embed_dim].fill(0.0);
        Self {
            values,
            vocab_size,
            embed_dim,
            source: EmbeddingSource::Random,
            pretrained_hits: 0,
        }
    }

    pub fn row(&self, index: usize) -> &[f32] {
        &self.values[index * self.embed_dim..(index + 1) * self.embed_dim]
    }
}

/// Reads a GloVe text file (`token v1 ... vD` per line). Tokens found in the
/// file are copied verbatim; the rest keep a random N(0, 0.1²) row drawn
/// under `seed`.
pub fn load_pretrained_embeddings(
    path: &Path,
    vocab: &Vocabulary,
    embed_dim: usize,
    seed: u64,
) -> Result<EmbeddingMatrix> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut matrix = EmbeddingMatrix::random(vocab.len(), embed_dim, seed);
    let mut hits = 0;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().unwrap();
        let rest: Vec<&str> = fields.collect();
        if rest.len() != embed_dim {
            if lineno == 0 {
                return Err(Error::Shape(format!(
                    "{}: embedding file has dimension {}, expected {embed_dim}",
                    path.display(),
                    rest.len()
                )));
            }
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("expected {embed_dim} values, found {}", rest.len()),
            });
        }
        let Some(index) = vocab.index(token) else {
            continue;
        };
        if index == PAD {
            continue;
        }
        let row = &mut matrix.values[index as usize * embed_dim..(index as usize + 1) * embed_dim];
        for (slot, raw) in row.iter_mut().zip(&rest) {
            let v: f32 = raw.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message: format!("not a number: {raw:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                    message: format!("non-finite value {raw:?}"),
                });
            }
            *slot = v;
        }
        hits += 1;
    }
    matrix.source = EmbeddingSource::Pretrained;
    matrix.pretrained_hits = hits;
    Ok(matrix)
}
