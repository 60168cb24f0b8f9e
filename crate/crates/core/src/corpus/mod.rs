//! Labeled mention datasets: records, the concept inventory, folds, and the
//! on-disk TSV layout.
//!
//! ```text
//! <dataset>/concepts.tsv        concept_id<TAB>preferred_term
//! <dataset>/fold_<k>/train.tsv  raw_mention<TAB>concept_id[<TAB>processed_text]
//! <dataset>/fold_<k>/test.tsv   same as train.tsv
//! ```
//!
//! Single-split corpora use `fold_0` only.

mod synthetic;

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::preprocess::Preprocessor;

pub use synthetic::{generate_synthetic, NoiseParams, MAX_SYNTHETIC_CONCEPTS};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: unknown concept `{id}`")]
    UnknownConcept {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("dataset contains no records")]
    EmptyDataset,
    #[error("need at least 2 training records to carve out a validation set, got {0}")]
    TooSmall(usize),
    #[error("invalid split fraction {0}")]
    InvalidFraction(f64),
    #[error("invalid synthetic corpus parameters: {0}")]
    InvalidParams(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MentionRecord {
    pub raw_text: String,
    /// Filled in by preprocessing; `None` until then.
    pub processed_text: Option<String>,
    pub concept_id: String,
}

impl MentionRecord {
    pub fn new(raw_text: impl Into<String>, concept_id: impl Into<String>) -> Self {
        Self {
            raw_text: raw_text.into(),
            processed_text: None,
            concept_id: concept_id.into(),
        }
    }

    /// Text the encoder should see: the processed form if present, else the raw one.
    pub fn text(&self) -> &str {
        self.processed_text.as_deref().unwrap_or(&self.raw_text)
    }
}

/// Bijection between concept IDs and dense indices `0..N`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConceptInventory {
    ids: Vec<String>,
    terms: Vec<Option<String>>,
    index: HashMap<String, usize>,
}

impl ConceptInventory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `id` if it is new and returns its index either way.
    pub fn insert(&mut self, id: &str, term: Option<String>) -> usize {
        if let Some(&i) = self.index.get(id) {
            if self.terms[i].is_none() {
                self.terms[i] = term;
            }
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.terms.push(term);
        self.index.insert(id.to_string(), i);
        i
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms[index].as_deref()
    }

    pub fn set_term(&mut self, index: usize, term: Option<String>) {
        self.terms[index] = term;
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// SHA-256 over the ordered concept IDs. Two inventories hash equal
    /// exactly when they assign the same index to every ID.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for id in &self.ids {
            hasher.update(id.as_bytes());
            hasher.update(b"\n");
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Indices assigned in first-appearance order over `records`.
pub fn build_inventory<'a, I>(records: I) -> Result<ConceptInventory, CorpusError>
where
    I: IntoIterator<Item = &'a MentionRecord>,
{
    let mut inv = ConceptInventory::new();
    for r in records {
        inv.insert(&r.concept_id, None);
    }
    if inv.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    Ok(inv)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Fold {
    pub train: Vec<MentionRecord>,
    pub test: Vec<MentionRecord>,
}

impl Fold {
    /// `(raw_text, concept_id)` pairs present in both train and test.
    pub fn overlapping_pairs(&self) -> Vec<(String, String)> {
        let train: HashSet<(&str, &str)> = self
            .train
            .iter()
            .map(|r| (r.raw_text.as_str(), r.concept_id.as_str()))
            .collect();
        let mut seen = HashSet::new();
        self.test
            .iter()
            .filter(|r| train.contains(&(r.raw_text.as_str(), r.concept_id.as_str())))
            .filter(|r| seen.insert((r.raw_text.as_str(), r.concept_id.as_str())))
            .map(|r| (r.raw_text.clone(), r.concept_id.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FoldSet {
    pub folds: Vec<Fold>,
}

impl FoldSet {
    pub fn records(&self) -> impl Iterator<Item = &MentionRecord> {
        self.folds
            .iter()
            .flat_map(|f| f.train.iter().chain(f.test.iter()))
    }

    pub fn records_mut(&mut self) -> impl Iterator<Item = &mut MentionRecord> {
        self.folds
            .iter_mut()
            .flat_map(|f| f.train.iter_mut().chain(f.test.iter_mut()))
    }

    pub fn is_preprocessed(&self) -> bool {
        self.records().all(|r| r.processed_text.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub inventory: ConceptInventory,
    pub folds: FoldSet,
}

impl Dataset {
    /// Fills `processed_text` on every record. Re-running on an already
    /// processed dataset recomputes from the raw text and yields the same result.
    pub fn preprocess(&mut self, pre: &Preprocessor) {
        for r in self.folds.records_mut() {
            r.processed_text = Some(pre.apply(&r.raw_text));
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

fn read_concepts(path: &Path) -> Result<Vec<(String, Option<String>)>, CorpusError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (line, text) in read_lines(path)? {
        let mut parts = text.splitn(2, '\t');
        let id = parts.next().unwrap_or_default().trim().to_string();
        let term = parts.next().map(|t| t.to_string());
        if id.is_empty() {
            return Err(CorpusError::Format {
                path: path.to_path_buf(),
                line,
                message: "empty concept id".into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(CorpusError::Format {
                path: path.to_path_buf(),
                line,
                message: format!("duplicate concept id `{id}`"),
            });
        }
        out.push((id, term));
    }
    Ok(out)
}

fn read_mentions(path: &Path, known: &HashSet<&str>) -> Result<Vec<MentionRecord>, CorpusError> {
    let mut out = Vec::new();
    for (line, text) in read_lines(path)? {
        let fields: Vec<&str> = text.split('\t').collect();
        let format_err = |message: &str| CorpusError::Format {
            path: path.to_path_buf(),
            line,
            message: message.to_string(),
        };
        if fields.len() != 2 && fields.len() != 3 {
            return Err(format_err(
                "expected `raw_mention<TAB>concept_id[<TAB>processed_text]`",
            ));
        }
        if fields[0].trim().is_empty() {
            return Err(format_err("empty mention text"));
        }
        let id = fields[1].trim();
        if !known.contains(id) {
            return Err(CorpusError::UnknownConcept {
                path: path.to_path_buf(),
                line,
                id: id.to_string(),
            });
        }
        out.push(MentionRecord {
            raw_text: fields[0].to_string(),
            processed_text: fields.get(2).map(|s| s.to_string()),
            concept_id: id.to_string(),
        });
    }
    if out.is_empty() {
        return Err(CorpusError::Format {
            path: path.to_path_buf(),
            line: 0,
            message: "no mention records".into(),
        });
    }
    Ok(out)
}

fn fold_dirs(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CorpusError::io(dir, e))? {
        let entry = entry.map_err(|e| CorpusError::io(dir, e))?;
        let name = entry.file_name();
        let Some(k) = name
            .to_str()
            .and_then(|n| n.strip_prefix("fold_"))
            .and_then(|k| k.parse::<usize>().ok())
        else {
            continue;
        };
        if entry.path().is_dir() {
            found.push((k, entry.path()));
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(CorpusError::Format {
            path: dir.to_path_buf(),
            line: 0,
            message: "no fold_<k> directories".into(),
        });
    }
    for (expected, (k, path)) in found.iter().enumerate() {
        if *k != expected {
            return Err(CorpusError::Format {
                path: path.clone(),
                line: 0,
                message: format!("fold directories must be numbered contiguously from 0, missing fold_{expected}"),
            });
        }
    }
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Loads a dataset directory.
///
/// The inventory covers every concept cited by any record of any fold, in
/// first-appearance order (fold 0 train, fold 0 test, fold 1 train, ...).
/// Preferred terms come from `concepts.tsv`; concepts listed there but never
/// cited are not part of the inventory.
pub fn load_dataset(dir: &Path) -> Result<Dataset, CorpusError> {
    let concepts_path = dir.join("concepts.tsv");
    let concepts = read_concepts(&concepts_path)?;
    let known: HashSet<&str> = concepts.iter().map(|(id, _)| id.as_str()).collect();
    let terms: HashMap<&str, &Option<String>> =
        concepts.iter().map(|(id, t)| (id.as_str(), t)).collect();

    let mut folds = Vec::new();
    for fold_dir in fold_dirs(dir)? {
        let train = read_mentions(&fold_dir.join("train.tsv"), &known)?;
        let test = read_mentions(&fold_dir.join("test.tsv"), &known)?;
        folds.push(Fold { train, test });
    }
    let folds = FoldSet { folds };
    let mut inventory = build_inventory(folds.records())?;
    for i in 0..inventory.len() {
        let term = terms[inventory.id(i)].clone();
        inventory.set_term(i, term);
    }
    Ok(Dataset { inventory, folds })
}

fn check_field(path: &Path, field: &str) -> Result<(), CorpusError> {
    if field.contains(['\t', '\n', '\r']) {
        return Err(CorpusError::Format {
            path: path.to_path_buf(),
            line: 0,
            message: format!("field `{}` contains a tab or newline", field.escape_debug()),
        });
    }
    Ok(())
}

fn write_mentions(path: &Path, records: &[MentionRecord]) -> Result<(), CorpusError> {
    let mut out = String::new();
    for r in records {
        check_field(path, &r.raw_text)?;
        out.push_str(&r.raw_text);
        out.push('\t');
        out.push_str(&r.concept_id);
        if let Some(p) = &r.processed_text {
            check_field(path, p)?;
            out.push('\t');
            out.push_str(p);
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CorpusError::io(path, e))
}

/// Writes the canonical form of `dataset` under `dir`, creating it if needed.
pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
    let concepts_path = dir.join("concepts.tsv");
    let mut concepts = String::new();
    for (i, id) in dataset.inventory.ids().iter().enumerate() {
        concepts.push_str(id);
        if let Some(term) = dataset.inventory.term(i) {
            check_field(&concepts_path, term)?;
            concepts.push('\t');
            concepts.push_str(term);
        }
        concepts.push('\n');
    }
    fs::write(&concepts_path, concepts).map_err(|e| CorpusError::io(&concepts_path, e))?;
    for (k, fold) in dataset.folds.folds.iter().enumerate() {
        let fold_dir = dir.join(format!("fold_{k}"));
        fs::create_dir_all(&fold_dir).map_err(|e| CorpusError::io(&fold_dir, e))?;
        write_mentions(&fold_dir.join("train.tsv"), &fold.train)?;
        write_mentions(&fold_dir.join("test.tsv"), &fold.test)?;
    }
    Ok(())
}

/// Splits off `round(fraction * n)` records (at least 1, at most n-1) for
/// validation. Both halves keep the input's relative order.
pub fn validation_split(
    records: &[MentionRecord],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<MentionRecord>, Vec<MentionRecord>), CorpusError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(fraction));
    }
    let n = records.len();
    if n < 2 {
        return Err(CorpusError::TooSmall(n));
    }
    let n_val = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_val = vec![false; n];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (val, train): (Vec<_>, Vec<_>) = records.iter().cloned().zip(is_val).partition(|(_, v)| *v);
    Ok((
        train.into_iter().map(|(r, _)| r).collect(),
        val.into_iter().map(|(r, _)| r).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(text: &str, id: &str) -> MentionRecord {
        MentionRecord::new(text, id)
    }

    #[test]
    fn inventory_first_appearance_order() {
        let records = [rec("x", "A"), rec("y", "B"), rec("z", "A"), rec("w", "C")];
        let inv = build_inventory(&records).unwrap();
        assert_eq!(inv.len(), 3);
        assert_eq!(inv.index_of("A"), Some(0));
        assert_eq!(inv.index_of("B"), Some(1));
        assert_eq!(inv.index_of("C"), Some(2));
        assert!(matches!(
            build_inventory(&[]),
            Err(CorpusError::EmptyDataset)
        ));
    }

    #[test]
    fn fingerprint_tracks_order() {
        let a = build_inventory(&[rec("x", "A"), rec("y", "B")]).unwrap();
        let b = build_inventory(&[rec("y", "B"), rec("x", "A")]).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    fn numbered(n: usize) -> Vec<MentionRecord> {
        (0..n).map(|i| rec(&format!("m{i}"), "A")).collect()
    }

    #[test]
    fn validation_split_sizes() {
        let (t, v) = validation_split(&numbered(100), 0.1, 7).unwrap();
        assert_eq!((t.len(), v.len()), (90, 10));
        let (t2, v2) = validation_split(&numbered(100), 0.1, 7).unwrap();
        assert_eq!((t.clone(), v.clone()), (t2, v2));
        let (t, v) = validation_split(&numbered(6650), 0.1, 1).unwrap();
        assert_eq!((t.len(), v.len()), (5985, 665));
        let (t, v) = validation_split(&numbered(2), 0.1, 1).unwrap();
        assert_eq!((t.len(), v.len()), (1, 1));
    }

    #[test]
    fn validation_split_partitions_input() {
        let input = numbered(37);
        let (t, v) = validation_split(&input, 0.25, 3).unwrap();
        let mut all: Vec<_> = t.iter().chain(&v).map(|r| r.raw_text.clone()).collect();
        all.sort();
        let mut expected: Vec<_> = input.iter().map(|r| r.raw_text.clone()).collect();
        expected.sort();
        assert_eq!(all, expected);
        let tv: HashSet<_> = t.iter().map(|r| &r.raw_text).collect();
        assert!(v.iter().all(|r| !tv.contains(&r.raw_text)));
    }

    #[test]
    fn validation_split_errors() {
        assert!(matches!(
            validation_split(&numbered(1), 0.1, 0),
            Err(CorpusError::TooSmall(1))
        ));
        assert!(matches!(
            validation_split(&numbered(10), 1.0, 0),
            Err(CorpusError::InvalidFraction(_))
        ));
    }

    #[test]
    fn overlap_detection() {
        let fold = Fold {
            train: vec![rec("a", "X"), rec("b", "Y")],
            test: vec![rec("a", "X"), rec("a", "Y"), rec("a", "X")],
        };
        assert_eq!(fold.overlapping_pairs(), vec![("a".into(), "X".into())]);
    }
}
