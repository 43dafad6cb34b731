//! Dataset ingestion, tokenization, vocabulary, pretrained embeddings and
//! stratified splitting.

mod embeddings;
mod encode;
mod split;
pub mod synthetic;
mod tokenize;
mod vocab;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embeddings::{load_pretrained_embeddings, EmbeddingMatrix, EmbeddingSource, RANDOM_INIT_STD};
pub use encode::{encode_dataset, encode_text, EncodedSet, TokenBatch};
pub use split::{split_dataset, SplitSpec, Splits};
pub use tokenize::tokenize;
pub use vocab::{build_vocab, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub documents: Vec<Document>,
    pub num_classes: usize,
    pub class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(documents: Vec<Document>, class_names: Vec<String>) -> Result<Self> {
        let ds = Self {
            num_classes: class_names.len(),
            documents,
            class_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Dataset(format!(
                "need at least 2 classes, found {}",
                self.num_classes
            )));
        }
        if self.class_names.len() != self.num_classes {
            return Err(Error::Dataset("class_names length != num_classes".into()));
        }
        let mut ids = HashSet::new();
        for d in &self.documents {
            if d.label >= self.num_classes {
                return Err(Error::ClassOutOfRange {
                    class: d.label,
                    num_classes: self.num_classes,
                });
            }
            if !ids.insert(d.id.as_str()) {
                return Err(Error::Dataset(format!("duplicate document id {:?}", d.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.documents.iter().map(|d| d.label).collect()
    }

    /// Documents at `indices`, in the given order, sharing this dataset's classes.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            documents: indices.iter().map(|&i| self.documents[i].clone()).collect(),
            num_classes: self.num_classes,
            class_names: self.class_names.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    NewsgroupsDirs,
    Jsonl,
    Csv,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "newsgroups_dirs" => Ok(Self::NewsgroupsDirs),
            "jsonl" => Ok(Self::Jsonl),
            "csv" => Ok(Self::Csv),
            other => Err(Error::Config(format!("unknown dataset format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Drop everything up to the first blank line of each newsgroup post.
    #[serde(default)]
    pub strip_headers: bool,
    /// Declared class count for JSONL/CSV; inferred from labels when absent.
    #[serde(default)]
    pub num_classes: Option<usize>,
    /// Newsgroup directories to load; all of them when empty.
    #[serde(default)]
    pub categories: Vec<String>,
}

pub fn load_dataset(path: &Path, format: DatasetFormat, opts: &LoadOptions) -> Result<LabeledDataset> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset path does not exist"),
        ));
    }
    match format {
        DatasetFormat::NewsgroupsDirs => load_newsgroups(path, opts),
        DatasetFormat::Jsonl => load_jsonl(path, opts),
        DatasetFormat::Csv => load_csv(path, opts),
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<std::fs::DirEntry>> {
    let mut entries = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort_by_key(|e| e.file_name());
    Ok(entries)
}

fn load_newsgroups(root: &Path, opts: &LoadOptions) -> Result<LabeledDataset> {
    let mut class_names = Vec::new();
    let mut documents = Vec::new();
    for class_entry in sorted_entries(root)? {
        if !class_entry.path().is_dir() {
            continue;
        }
        let class_name = class_entry.file_name().to_string_lossy().into_owned();
        if !opts.categories.is_empty() && !opts.categories.contains(&class_name) {
            continue;
        }
        let label = class_names.len();
        let before = documents.len();
        for doc_entry in sorted_entries(&class_entry.path())? {
            let p = doc_entry.path();
            if !p.is_file() {
                continue;
            }
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            let mut text = String::from_utf8_lossy(&bytes).into_owned();
            if opts.strip_headers {
                text = strip_header(&text).to_string();
            }
            documents.push(Document {
                id: format!("{}/{}", class_name, doc_entry.file_name().to_string_lossy()),
                text,
                label,
            });
        }
        if documents.len() == before {
            return Err(Error::Dataset(format!(
                "class directory {} is empty",
                class_entry.path().display()
            )));
        }
        class_names.push(class_name);
    }
    if let Some(missing) = opts.categories.iter().find(|c| !class_names.contains(c)) {
        return Err(Error::Dataset(format!("category {missing:?} not found under {}", root.display())));
    }
    LabeledDataset::new(documents, class_names)
}

fn strip_header(text: &str) -> &str {
    let normalized = text.find("\n\n").or_else(|| text.find("\r\n\r\n"));
    match normalized {
        Some(i) => text[i..].trim_start(),
        None => text,
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    label: usize,
}

fn load_jsonl(path: &Path, opts: &LoadOptions) -> Result<LabeledDataset> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: RawRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push((i + 1, rec));
    }
    finish_records(path, records, opts)
}

fn load_csv(path: &Path, opts: &LoadOptions) -> Result<LabeledDataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    for (i, rec) in reader.deserialize::<RawRecord>().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            message: e.to_string(),
        })?;
        records.push((i + 2, rec));
    }
    finish_records(path, records, opts)
}

fn finish_records(
    path: &Path,
    records: Vec<(usize, RawRecord)>,
    opts: &LoadOptions,
) -> Result<LabeledDataset> {
    let inferred = records.iter().map(|(_, r)| r.label + 1).max().unwrap_or(0);
    let num_classes = opts.num_classes.unwrap_or(inferred);
    let mut documents = Vec::with_capacity(records.len());
    for (line, r) in records {
        if r.label >= num_classes {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("label {} outside declared range 0..{num_classes}", r.label),
            });
        }
        documents.push(Document {
            id: r.id,
            text: r.text,
            label: r.label,
        });
    }
    let class_names = (0..num_classes).map(|c| c.to_string()).collect();
    LabeledDataset::new(documents, class_names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn newsgroups_layout() {
        let dir = tempfile::tempdir().unwrap();
        for class in ["sci.med", "alt.atheism"] {
            fs::create_dir(dir.path().join(class)).unwrap();
            for i in 0..3 {
                fs::write(dir.path().join(class).join(format!("{i}")), format!("{class} body {i}")).unwrap();
            }
        }
        let ds = load_dataset(dir.path(), DatasetFormat::NewsgroupsDirs, &LoadOptions::default()).unwrap();
        assert_eq!(ds.len(), 6);
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.class_names, ["alt.atheism", "sci.med"]);
        assert_eq!(ds.documents[0].id, "alt.atheism/0");
        assert_eq!(ds.documents[3].label, 1);
    }

    #[test]
    fn empty_class_dir_and_missing_path() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir(dir.path().join("a")).unwrap();
        fs::write(dir.path().join("a/1"), "x").unwrap();
        fs::create_dir(dir.path().join("b")).unwrap();
        assert!(matches!(
            load_dataset(dir.path(), DatasetFormat::NewsgroupsDirs, &LoadOptions::default()),
            Err(Error::Dataset(_))
        ));
        assert!(matches!(
            load_dataset(&dir.path().join("nope"), DatasetFormat::Jsonl, &LoadOptions::default()),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn strips_headers_when_asked() {
        let dir = tempfile::tempdir().unwrap();
        for c in ["a", "b"] {
            fs::create_dir(dir.path().join(c)).unwrap();
            fs::write(dir.path().join(c).join("1"), "From: x\nSubject: y\n\nbody text").unwrap();
        }
        let opts = LoadOptions { strip_headers: true, ..Default::default() };
        let ds = load_dataset(dir.path(), DatasetFormat::NewsgroupsDirs, &opts).unwrap();
        assert_eq!(ds.documents[0].text, "body text");
    }

    #[test]
    fn jsonl_hundred_lines_five_ratings() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("reviews.jsonl");
        let lines: Vec<String> = (0..100)
            .map(|i| serde_json::json!({"id": format!("r{i}"), "text": "ok", "label": i % 5}).to_string())
            .collect();
        fs::write(&p, lines.join("\n")).unwrap();
        let ds = load_dataset(&p, DatasetFormat::Jsonl, &LoadOptions::default()).unwrap();
        assert_eq!(ds.len(), 100);
        assert_eq!(ds.num_classes, 5);
    }

    #[test]
    fn jsonl_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        fs::write(&p, "{\"id\":\"a\",\"text\":\"t\",\"label\":0}\n{\"id\":\"b\",\"label\":1}\n").unwrap();
        assert!(matches!(
            load_dataset(&p, DatasetFormat::Jsonl, &LoadOptions::default()),
            Err(Error::Parse { line: 2, .. })
        ));
        fs::write(&p, "{\"id\":\"a\",\"text\":\"t\",\"label\":0}\n{\"id\":\"b\",\"text\":\"t\",\"label\":3}\n").unwrap();
        let opts = LoadOptions { num_classes: Some(2), ..Default::default() };
        assert!(matches!(load_dataset(&p, DatasetFormat::Jsonl, &opts), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn csv_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "id,text,label\na,\"hello, world\",0\nb,bye,1\n").unwrap();
        let ds = load_dataset(&p, DatasetFormat::Csv, &LoadOptions::default()).unwrap();
        assert_eq!(ds.documents[0].text, "hello, world");
        assert_eq!(ds.num_classes, 2);
    }
}
