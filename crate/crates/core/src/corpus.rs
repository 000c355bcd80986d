//! Intent-labeled datasets, their train/dev/test splits, and the TSV file format.
//!
//! Files are two-column TSV with the header `text<TAB>label`. Instance ids are
//! positional and split-scoped (`train:00042`), assigned at load time.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TSV_HEADER: &str = "text\tlabel";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: expected header `text<TAB>label`, found {found:?}")]
    BadHeader { line: usize, found: String },
    #[error("line {line}: expected 2 tab-separated fields, found {fields}")]
    FieldCount { line: usize, fields: usize },
    #[error("line {line}: empty text field")]
    EmptyText { line: usize },
    #[error("line {line}: empty label field")]
    EmptyLabel { line: usize },
    #[error("line {line}: invalid UTF-8")]
    Utf8 { line: usize },
    #[error("utterance {id}: text contains a tab or line break")]
    UnwritableText { id: String },
    #[error("utterance {id}: label contains a tab or line break")]
    UnwritableLabel { id: String },
    #[error("utterance {id}: {reason}")]
    Invalid { id: String, reason: &'static str },
    #[error("duplicate instance id {0}")]
    DuplicateId(String),
    #[error("{field} holds a {found} dataset")]
    WrongSplit { field: &'static str, found: SplitTag },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Dev,
    Test,
}

impl SplitTag {
    pub const ALL: [SplitTag; 3] = [SplitTag::Train, SplitTag::Dev, SplitTag::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Dev => "dev",
            SplitTag::Test => "test",
        }
    }

    /// Positional instance id, e.g. `train:00042`.
    pub fn instance_id(self, row: usize) -> String {
        format!("{}:{row:05}", self.as_str())
    }

    /// Split encoded in the prefix of an instance id.
    pub fn of_id(id: &str) -> Option<SplitTag> {
        id.split_once(':').and_then(|(tag, _)| tag.parse().ok())
    }
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitTag::Train),
            "dev" => Ok(SplitTag::Dev),
            "test" => Ok(SplitTag::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledUtterance {
    pub id: String,
    pub text: String,
    pub intent: String,
}

impl LabeledUtterance {
    pub fn new(id: impl Into<String>, text: impl Into<String>, intent: impl Into<String>) -> Self {
        LabeledUtterance {
            id: id.into(),
            text: text.into(),
            intent: intent.into(),
        }
    }

    fn check(&self) -> Result<(), CorpusError> {
        if self.text.trim().is_empty() {
            return Err(CorpusError::Invalid {
                id: self.id.clone(),
                reason: "text is empty",
            });
        }
        if self.intent.is_empty() {
            return Err(CorpusError::Invalid {
                id: self.id.clone(),
                reason: "intent is empty",
            });
        }
        Ok(())
    }
}

/// An ordered, immutable list of utterances belonging to one split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    name: String,
    split_tag: SplitTag,
    utterances: Vec<LabeledUtterance>,
    intents: BTreeSet<String>,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        split_tag: SplitTag,
        utterances: Vec<LabeledUtterance>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(utterances.len());
        for u in &utterances {
            u.check()?;
            if !seen.insert(u.id.as_str()) {
                return Err(CorpusError::DuplicateId(u.id.clone()));
            }
        }
        let intents = utterances.iter().map(|u| u.intent.clone()).collect();
        Ok(LabeledDataset {
            name: name.into(),
            split_tag,
            utterances,
            intents,
        })
    }

    /// Builds a dataset from `(text, intent)` rows with positional ids. The
    /// dataset is named after its split, like one produced by [`load_tsv`].
    pub fn from_rows<T, L>(split_tag: SplitTag, rows: impl IntoIterator<Item = (T, L)>) -> Result<Self, CorpusError>
    where
        T: Into<String>,
        L: Into<String>,
    {
        let utterances = rows
            .into_iter()
            .enumerate()
            .map(|(i, (text, intent))| LabeledUtterance::new(split_tag.instance_id(i), text, intent))
            .collect();
        Self::new(split_tag.as_str(), split_tag, utterances)
    }

    pub fn empty(split_tag: SplitTag) -> Self {
        LabeledDataset {
            name: split_tag.as_str().to_string(),
            split_tag,
            utterances: Vec::new(),
            intents: BTreeSet::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn split_tag(&self) -> SplitTag {
        self.split_tag
    }

    pub fn utterances(&self) -> &[LabeledUtterance] {
        &self.utterances
    }

    pub fn intents(&self) -> &BTreeSet<String> {
        &self.intents
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&LabeledUtterance> {
        self.utterances.iter().find(|u| u.id == id)
    }

    /// Keeps the utterances matching `keep`, preserving order and ids.
    pub fn filtered(&self, mut keep: impl FnMut(&LabeledUtterance) -> bool) -> LabeledDataset {
        let utterances: Vec<_> = self.utterances.iter().filter(|u| keep(u)).cloned().collect();
        let intents = utterances.iter().map(|u| u.intent.clone()).collect();
        LabeledDataset {
            name: self.name.clone(),
            split_tag: self.split_tag,
            utterances,
            intents,
        }
    }
}

/// Parses a TSV stream into a dataset. Accepts `\r\n` line endings.
pub fn load_tsv<R: BufRead>(source: R, split_tag: SplitTag) -> Result<LabeledDataset, CorpusError> {
    let lines = source.split(b'\n');
    let mut utterances = Vec::new();
    let mut saw_header = false;

    for (line_no, raw) in (1usize..).zip(lines) {
        let mut raw = raw?;
        if raw.last() == Some(&b'\r') {
            raw.pop();
        }
        let line = String::from_utf8(raw).map_err(|_| CorpusError::Utf8 { line: line_no })?;
        if !saw_header {
            let header = line.strip_prefix('\u{feff}').unwrap_or(&line);
            if header != TSV_HEADER {
                return Err(CorpusError::BadHeader {
                    line: line_no,
                    found: line,
                });
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(CorpusError::FieldCount {
                line: line_no,
                fields: fields.len(),
            });
        }
        if fields[0].trim().is_empty() {
            return Err(CorpusError::EmptyText { line: line_no });
        }
        if fields[1].is_empty() {
            return Err(CorpusError::EmptyLabel { line: line_no });
        }
        let id = split_tag.instance_id(utterances.len());
        utterances.push(LabeledUtterance::new(id, fields[0], fields[1]));
    }
    if !saw_header {
        return Err(CorpusError::BadHeader {
            line: 1,
            found: String::new(),
        });
    }
    LabeledDataset::new(split_tag.as_str(), split_tag, utterances)
}

/// Loads a TSV file; the dataset takes the file stem as its name.
pub fn load_tsv_file(path: impl AsRef<Path>, split_tag: SplitTag) -> Result<LabeledDataset, CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let dataset = load_tsv(std::io::BufReader::new(file), split_tag)?;
    Ok(match path.file_stem().and_then(|s| s.to_str()) {
        Some(stem) => dataset.with_name(stem),
        None => dataset,
    })
}

fn unwritable(s: &str) -> bool {
    s.contains(['\t', '\r', '\n'])
}

pub fn write_tsv(dataset: &LabeledDataset) -> Result<Vec<u8>, CorpusError> {
    let mut out = Vec::with_capacity(16 + dataset.len() * 48);
    out.extend_from_slice(TSV_HEADER.as_bytes());
    out.push(b'\n');
    for u in dataset.utterances() {
        if unwritable(&u.text) {
            return Err(CorpusError::UnwritableText { id: u.id.clone() });
        }
        if unwritable(&u.intent) {
            return Err(CorpusError::UnwritableLabel { id: u.id.clone() });
        }
        out.extend_from_slice(u.text.as_bytes());
        out.push(b'\t');
        out.extend_from_slice(u.intent.as_bytes());
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_tsv_file(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    std::fs::write(path, write_tsv(dataset)?)?;
    Ok(())
}

pub fn intent_histogram(dataset: &LabeledDataset) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for u in dataset.utterances() {
        *counts.entry(u.intent.clone()).or_insert(0) += 1;
    }
    counts
}

/// Train, dev and test splits of one corpus. Instance ids are unique across all three.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitTriple {
    pub train: LabeledDataset,
    pub dev: LabeledDataset,
    pub test: LabeledDataset,
}

impl SplitTriple {
    pub fn new(train: LabeledDataset, dev: LabeledDataset, test: LabeledDataset) -> Result<Self, CorpusError> {
        for (field, ds, want) in [
            ("train", &train, SplitTag::Train),
            ("dev", &dev, SplitTag::Dev),
            ("test", &test, SplitTag::Test),
        ] {
            if ds.split_tag() != want {
                return Err(CorpusError::WrongSplit {
                    field,
                    found: ds.split_tag(),
                });
            }
        }
        let mut seen = HashSet::new();
        for u in train
            .utterances()
            .iter()
            .chain(dev.utterances())
            .chain(test.utterances())
        {
            if !seen.insert(u.id.as_str()) {
                return Err(CorpusError::DuplicateId(u.id.clone()));
            }
        }
        Ok(SplitTriple { train, dev, test })
    }

    pub fn load_dir_files(
        train: impl AsRef<Path>,
        dev: impl AsRef<Path>,
        test: impl AsRef<Path>,
    ) -> Result<Self, CorpusError> {
        SplitTriple::new(
            load_tsv_file(train, SplitTag::Train)?,
            load_tsv_file(dev, SplitTag::Dev)?,
            load_tsv_file(test, SplitTag::Test)?,
        )
    }

    pub fn split(&self, tag: SplitTag) -> &LabeledDataset {
        match tag {
            SplitTag::Train => &self.train,
            SplitTag::Dev => &self.dev,
            SplitTag::Test => &self.test,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabeledDataset> {
        [&self.train, &self.dev, &self.test].into_iter()
    }
}
