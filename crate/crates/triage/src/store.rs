use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::{Result, TriageError};
use crate::types::HumanLabel;

/// Append-only JSONL file of accepted labels.
#[derive(Debug)]
pub struct LabelStore {
    path: PathBuf,
    file: File,
}

impl LabelStore {
    /// Opens (creating if needed) the store and returns every record in it
    /// with its line number.
    pub fn open(path: &Path) -> Result<(Self, Vec<(usize, HumanLabel)>)> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .read(true)
            .open(path)
            .map_err(|e| TriageError::io(path, e))?;
        let mut labels = Vec::new();
        let reader = BufReader::new(File::open(path).map_err(|e| TriageError::io(path, e))?);
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| TriageError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let label = serde_json::from_str(&line).map_err(|e| TriageError::Corrupt {
                path: path.into(),
                line: n + 1,
                message: e.to_string(),
            })?;
            labels.push((n + 1, label));
        }
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
            },
            labels,
        ))
    }

    /// Writes one record and syncs it to disk.
    pub fn append(&mut self, label: &HumanLabel) -> Result<()> {
        let mut line = serde_json::to_vec(label).map_err(|e| TriageError::io(&self.path, e.into()))?;
        line.push(b'\n');
        self.file.write_all(&line).map_err(|e| TriageError::io(&self.path, e))?;
        self.file.sync_data().map_err(|e| TriageError::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
