//! Dataset loading, validation, statistics and k-shot demonstration sampling.
//!
//! The canonical on-disk format is JSONL with `{id, text, label, split}`;
//! CSV distributions are ingested through a per-dataset column map and label
//! map. Everything downstream works on the in-memory [`Dataset`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "valid" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split: {other}")),
        }
    }
}

/// One text instance with its gold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub label: Label,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub avg_token_length: f64,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

/// k labeled train examples for in-context prompting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstrations {
    pub examples: Vec<Sample>,
}

impl Demonstrations {
    pub fn empty() -> Self {
        Demonstrations { examples: Vec::new() }
    }

    pub fn k(&self) -> usize {
        self.examples.len()
    }

    /// (text, label) pairs in prompt order.
    pub fn pairs(&self) -> Vec<(String, String)> {
        self.examples
            .iter()
            .map(|s| (s.text.clone(), s.label.as_text().to_string()))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown label {value:?} at line {line} (not in label map)")]
    UnknownLabel { value: String, line: usize },
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("empty text at line {0}")]
    EmptyText(usize),
    #[error("dataset is empty")]
    Empty,
    #[error("requested {requested} demonstrations but train split has {available}")]
    InsufficientTrain { requested: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Jsonl,
    Csv,
}

impl std::str::FromStr for DataFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(DataFormat::Jsonl),
            "csv" => Ok(DataFormat::Csv),
            other => Err(format!("unknown format: {other}")),
        }
    }
}

/// Per-dataset ingestion options: label normalization, CSV column names,
/// split assignment for records that carry none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    /// Raw label value -> normalized label. Keys are matched after trimming
    /// and lowercasing.
    pub label_map: BTreeMap<String, Label>,
    pub default_split: Split,
    pub text_column: String,
    pub label_column: String,
    pub id_column: Option<String>,
    pub split_column: Option<String>,
    /// Optional conversation-context column, prepended to the text when
    /// `include_context` is set (off by default: target utterance only).
    pub context_column: Option<String>,
    pub include_context: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        let mut label_map = BTreeMap::new();
        for (k, v) in [
            ("sarcastic", Label::Sarcastic),
            ("not_sarcastic", Label::NotSarcastic),
            ("not sarcastic", Label::NotSarcastic),
            ("1", Label::Sarcastic),
            ("0", Label::NotSarcastic),
        ] {
            label_map.insert(k.to_string(), v);
        }
        LoadOptions {
            label_map,
            default_split: Split::Train,
            text_column: "text".into(),
            label_column: "label".into(),
            id_column: None,
            split_column: None,
            context_column: None,
            include_context: false,
        }
    }
}

impl LoadOptions {
    fn map_label(&self, raw: &str, line: usize) -> Result<Label, DataError> {
        let key = raw.trim().to_ascii_lowercase();
        self.label_map
            .get(&key)
            .copied()
            .ok_or(DataError::UnknownLabel { value: raw.to_string(), line })
    }
}

#[derive(Deserialize)]
struct JsonlRecord {
    id: Option<String>,
    text: String,
    label: String,
    split: Option<String>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, samples: Vec<Sample>) -> Result<Dataset, DataError> {
        let mut seen = HashSet::new();
        for s in &samples {
            if !seen.insert(s.id.clone()) {
                return Err(DataError::DuplicateId(s.id.clone()));
            }
        }
        Ok(Dataset { name: name.into(), samples })
    }

    pub fn load(path: &Path, format: DataFormat, options: &LoadOptions) -> Result<Dataset, DataError> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".to_string());
        match format {
            DataFormat::Jsonl => Self::load_jsonl(path, &name, options),
            DataFormat::Csv => Self::load_csv(path, &name, options),
        }
    }

    fn load_jsonl(path: &Path, name: &str, options: &LoadOptions) -> Result<Dataset, DataError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DataError::Io { path: path.display().to_string(), source: e })?;
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: JsonlRecord = serde_json::from_str(line)
                .map_err(|e| DataError::Parse { line: line_no, message: e.to_string() })?;
            let label = options.map_label(&record.label, line_no)?;
            let split = match record.split {
                Some(s) => s
                    .parse()
                    .map_err(|e: String| DataError::Parse { line: line_no, message: e })?,
                None => options.default_split,
            };
            if record.text.is_empty() {
                return Err(DataError::EmptyText(line_no));
            }
            samples.push(Sample {
                id: record.id.unwrap_or_else(|| format!("line{line_no}")),
                text: record.text,
                label,
                split,
            });
        }
        Dataset::new(name, samples)
    }

    fn load_csv(path: &Path, name: &str, options: &LoadOptions) -> Result<Dataset, DataError> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| DataError::Parse { line: 0, message: e.to_string() })?;
        let headers = reader
            .headers()
            .map_err(|e| DataError::Parse { line: 1, message: e.to_string() })?
            .clone();
        let column = |name: &str| headers.iter().position(|h| h == name);
        let text_idx = column(&options.text_column).ok_or_else(|| DataError::Parse {
            line: 1,
            message: format!("missing column {:?}", options.text_column),
        })?;
        let label_idx = column(&options.label_column).ok_or_else(|| DataError::Parse {
            line: 1,
            message: format!("missing column {:?}", options.label_column),
        })?;
        let id_idx = options.id_column.as_deref().and_then(column);
        let split_idx = options.split_column.as_deref().and_then(column);
        let context_idx = options.context_column.as_deref().and_then(column);

        let mut samples = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let line_no = i + 2; // header is line 1
            let row = row.map_err(|e| DataError::Parse { line: line_no, message: e.to_string() })?;
            let get = |idx: usize| row.get(idx).unwrap_or("").to_string();
            let mut text = get(text_idx);
            if options.include_context {
                if let Some(idx) = context_idx {
                    let context = get(idx);
                    if !context.is_empty() {
                        text = format!("{context} {text}");
                    }
                }
            }
            if text.is_empty() {
                return Err(DataError::EmptyText(line_no));
            }
            let label = options.map_label(&get(label_idx), line_no)?;
            let split = match split_idx {
                Some(idx) if !get(idx).is_empty() => get(idx)
                    .parse()
                    .map_err(|e: String| DataError::Parse { line: line_no, message: e })?,
                _ => options.default_split,
            };
            let id = match id_idx {
                Some(idx) if !get(idx).is_empty() => get(idx),
                _ => format!("row{}", i + 1),
            };
            samples.push(Sample { id, text, label, split });
        }
        Dataset::new(name, samples)
    }

    /// Writes the dataset in the canonical JSONL format.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), DataError> {
        let file = std::fs::File::create(path)
            .map_err(|e| DataError::Io { path: path.display().to_string(), source: e })?;
        let mut writer = std::io::BufWriter::new(file);
        for s in &self.samples {
            let line = serde_json::json!({
                "id": s.id,
                "text": s.text,
                "label": match s.label { Label::Sarcastic => "sarcastic", Label::NotSarcastic => "not_sarcastic" },
                "split": s.split.to_string(),
            });
            writeln!(writer, "{line}")
                .map_err(|e| DataError::Io { path: path.display().to_string(), source: e })?;
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> Vec<&Sample> {
        self.samples.iter().filter(|s| s.split == split).collect()
    }

    pub fn stats(&self) -> Result<DatasetStats, DataError> {
        if self.samples.is_empty() {
            return Err(DataError::Empty);
        }
        let total_tokens: usize = self
            .samples
            .iter()
            .map(|s| s.text.split_whitespace().count())
            .sum();
        Ok(DatasetStats {
            avg_token_length: total_tokens as f64 / self.samples.len() as f64,
            train: self.split(Split::Train).len(),
            dev: self.split(Split::Dev).len(),
            test: self.split(Split::Test).len(),
        })
    }

    /// Draws k distinct train samples, deterministic under the seed.
    /// The conventional shot counts are 0, 1, 5 and 10; other values work
    /// but are the caller's responsibility to flag.
    pub fn sample_k_shots(&self, k: usize, seed: u64) -> Result<Demonstrations, DataError> {
        if k == 0 {
            return Ok(Demonstrations::empty());
        }
        let train = self.split(Split::Train);
        if k > train.len() {
            return Err(DataError::InsufficientTrain { requested: k, available: train.len() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<&Sample> = train.clone();
        picked.shuffle(&mut rng);
        picked.truncate(k);
        Ok(Demonstrations { examples: picked.into_iter().cloned().collect() })
    }
}

/// Deterministic synthetic dataset with exact split sizes, used for offline
/// fixtures. Texts are unique and never substrings of each other.
pub fn synthetic_dataset(
    name: &str,
    n_train: usize,
    n_dev: usize,
    n_test: usize,
    seed: u64,
) -> Dataset {
    const FILLERS: [&str; 8] = [
        "what a day", "truly wonderful", "just perfect weather", "plain report",
        "nothing to add", "so impressive", "hardly surprising", "fine as usual",
    ];
    let mut samples = Vec::with_capacity(n_train + n_dev + n_test);
    let mut index = 0usize;
    for (split, count) in [(Split::Train, n_train), (Split::Dev, n_dev), (Split::Test, n_test)] {
        for _ in 0..count {
            let filler = FILLERS[(seed as usize + index) % FILLERS.len()];
            let label = if (seed as usize + index) % 2 == 0 {
                Label::Sarcastic
            } else {
                Label::NotSarcastic
            };
            samples.push(Sample {
                id: format!("{name}-{index:05}"),
                text: format!("sample {index:05} of {name}: {filler}"),
                label,
                split,
            });
            index += 1;
        }
    }
    Dataset { name: name.to_string(), samples }
}
