//! Keyphrase log ingestion and curation.
//!
//! Rows are `keyphrase \t leaf_category \t search_score \t recall_score`.
//! Scores may be raw counts or rank positions; the [`ScoreOrientation`]
//! declared at ingest maps both to a canonical direction where a larger
//! search value and a smaller recall value are better.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::{tokenize, Normalizer};

/// Leaf category identifier.
pub type CategoryId = u64;

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("input not found: {0}")]
    NotFound(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// A malformed input row, reported with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

/// How the two score columns should be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOrientation {
    pub search_higher_is_better: bool,
    pub recall_lower_is_better: bool,
}

impl ScoreOrientation {
    /// Raw counts: more searches is better, fewer recalled items is better.
    pub const COUNT: Self = Self { search_higher_is_better: true, recall_lower_is_better: true };

    /// Rank positions where 1 is the most preferred in both columns.
    pub const RANK: Self = Self { search_higher_is_better: false, recall_lower_is_better: true };

    pub fn canonical_search(self, raw: f64) -> f64 {
        if self.search_higher_is_better {
            raw
        } else {
            -raw
        }
    }

    pub fn canonical_recall(self, raw: f64) -> f64 {
        if self.recall_lower_is_better {
            raw
        } else {
            -raw
        }
    }

    // Canonicalization is a sign flip, so it is its own inverse.
    pub fn raw_search(self, canonical: f64) -> f64 {
        self.canonical_search(canonical)
    }

    pub fn raw_recall(self, canonical: f64) -> f64 {
        self.canonical_recall(canonical)
    }

    /// Whether a raw search score passes `min_search`.
    ///
    /// Under rank orientation the threshold is a maximum rank, and 0 means
    /// no limit.
    pub fn passes(self, raw_search: f64, min_search: f64) -> bool {
        if !self.search_higher_is_better && min_search <= 0.0 {
            return true;
        }
        self.canonical_search(raw_search) >= self.canonical_search(min_search)
    }
}

impl Default for ScoreOrientation {
    fn default() -> Self {
        Self::COUNT
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawKeyphraseRow {
    pub keyphrase: String,
    pub leaf_category: CategoryId,
    pub search_score: f64,
    pub recall_score: f64,
}

/// Streaming TSV reader. Yields one item per non-blank line.
pub struct TsvRows<R> {
    lines: io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> TsvRows<R> {
    pub fn new(reader: R) -> Self {
        Self { lines: reader.lines(), line_no: 0 }
    }
}

impl<R: BufRead> Iterator for TsvRows<R> {
    type Item = Result<Result<RawKeyphraseRow, RowError>, io::Error>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e)),
            };
            self.line_no += 1;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() {
                continue;
            }
            let parsed = parse_row(line, self.line_no);
            if self.line_no == 1 && parsed.is_err() && looks_like_header(line) {
                continue;
            }
            return Some(Ok(parsed));
        }
    }
}

fn looks_like_header(line: &str) -> bool {
    let cols: Vec<&str> = line.split('\t').collect();
    cols.len() == 4
        && cols[1].trim().parse::<CategoryId>().is_err()
        && cols[2].trim().parse::<f64>().is_err()
        && cols[3].trim().parse::<f64>().is_err()
}

fn parse_score(field: &str, name: &str, line: usize) -> Result<f64, RowError> {
    let value: f64 = field.trim().parse().map_err(|_| RowError {
        line,
        message: format!("unparseable {name} {field:?}"),
    })?;
    if !value.is_finite() || value < 0.0 {
        return Err(RowError { line, message: format!("{name} must be finite and non-negative, got {field:?}") });
    }
    Ok(value)
}

fn parse_row(line: &str, line_no: usize) -> Result<RawKeyphraseRow, RowError> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 4 {
        return Err(RowError { line: line_no, message: format!("expected 4 columns, found {}", cols.len()) });
    }
    let keyphrase = cols[0].trim();
    if keyphrase.is_empty() {
        return Err(RowError { line: line_no, message: "empty keyphrase".into() });
    }
    let leaf_category = cols[1].trim().parse().map_err(|_| RowError {
        line: line_no,
        message: format!("unparseable leaf_category {:?}", cols[1]),
    })?;
    Ok(RawKeyphraseRow {
        keyphrase: keyphrase.to_owned(),
        leaf_category,
        search_score: parse_score(cols[2], "search_score", line_no)?,
        recall_score: parse_score(cols[3], "recall_score", line_no)?,
    })
}

/// Everything read from one TSV file.
#[derive(Debug, Default)]
pub struct IngestReport {
    pub rows: Vec<RawKeyphraseRow>,
    pub errors: Vec<RowError>,
}

pub fn ingest_reader<R: BufRead>(reader: R) -> Result<IngestReport, CurationError> {
    let mut report = IngestReport::default();
    for item in TsvRows::new(reader) {
        match item? {
            Ok(row) => report.rows.push(row),
            Err(e) => report.errors.push(e),
        }
    }
    Ok(report)
}

pub fn ingest(path: &Path) -> Result<IngestReport, CurationError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => CurationError::NotFound(path.display().to_string()),
        _ => CurationError::Io(e),
    })?;
    ingest_reader(BufReader::new(file))
}

/// A unique keyphrase within one leaf category.
#[derive(Debug, Clone, PartialEq)]
pub struct CuratedKeyphrase {
    /// Normalized tokens joined by a single space.
    pub text: String,
    /// Canonical search score (larger is better).
    pub search: f64,
    /// Canonical recall score (smaller is better).
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuratedDataset {
    pub meta_category: String,
    pub orientation: ScoreOrientation,
    /// Per-leaf keyphrases in first-occurrence order.
    pub leaves: BTreeMap<CategoryId, Vec<CuratedKeyphrase>>,
}

impl CuratedDataset {
    pub fn num_keyphrases(&self) -> usize {
        self.leaves.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.num_keyphrases() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurationStatus {
    Ok,
    /// Nothing survived filtering; a model built from this is vacuous.
    Vacuous,
}

#[derive(Debug, Clone)]
pub struct CurationOutcome {
    pub dataset: CuratedDataset,
    pub status: CurationStatus,
    pub below_threshold: usize,
    pub duplicates_merged: usize,
    /// Rows whose keyphrase normalized to nothing.
    pub empty_after_normalization: usize,
}

#[derive(Debug, Clone)]
pub struct CurateOptions {
    pub meta_category: String,
    pub min_search: f64,
    pub orientation: ScoreOrientation,
}

impl Default for CurateOptions {
    fn default() -> Self {
        Self { meta_category: "default".into(), min_search: 0.0, orientation: ScoreOrientation::COUNT }
    }
}

/// Filter by search threshold, normalize, dedup per leaf keeping the best
/// search score (first occurrence wins ties), and group by leaf.
pub fn curate<I>(rows: I, opts: &CurateOptions, normalizer: &dyn Normalizer) -> CurationOutcome
where
    I: IntoIterator<Item = RawKeyphraseRow>,
{
    let orientation = opts.orientation;
    let mut leaves: BTreeMap<CategoryId, Vec<CuratedKeyphrase>> = BTreeMap::new();
    let mut index: HashMap<(CategoryId, String), usize> = HashMap::new();
    let (mut below, mut dups, mut empty) = (0, 0, 0);

    for row in rows {
        if !orientation.passes(row.search_score, opts.min_search) {
            below += 1;
            continue;
        }
        let tokens = tokenize(&row.keyphrase, normalizer);
        if tokens.is_empty() {
            empty += 1;
            continue;
        }
        let text = tokens.join(" ");
        let search = orientation.canonical_search(row.search_score);
        let recall = orientation.canonical_recall(row.recall_score);
        let bucket = leaves.entry(row.leaf_category).or_default();
        match index.get(&(row.leaf_category, text.clone())) {
            Some(&pos) => {
                dups += 1;
                let existing = &mut bucket[pos];
                if search > existing.search {
                    existing.search = search;
                    existing.recall = recall;
                }
            }
            None => {
                index.insert((row.leaf_category, text.clone()), bucket.len());
                bucket.push(CuratedKeyphrase { text, search, recall });
            }
        }
    }

    let dataset = CuratedDataset { meta_category: opts.meta_category.clone(), orientation, leaves };
    let status = if dataset.is_empty() { CurationStatus::Vacuous } else { CurationStatus::Ok };
    CurationOutcome { dataset, status, below_threshold: below, duplicates_merged: dups, empty_after_normalization: empty }
}
