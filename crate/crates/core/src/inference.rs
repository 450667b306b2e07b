//! Candidate enumeration and ranking.
//!
//! A title is reduced to its set of token ids. Every keyphrase adjacent to a
//! title token in the leaf graph becomes a candidate, and the number of title
//! tokens reaching it is its common-token count `c = |T ∩ l|`. Candidates are
//! pruned by count group, scored by an [`Alignment`] function and sorted by
//! `(align desc, search desc, recall asc, id asc)`.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::CategoryId;
use crate::graph::{KeyphraseId, Model};
use crate::vocab::{tokenize, DefaultNormalizer, Normalizer, TokenId};

pub const DEFAULT_K: usize = 20;
pub const DEFAULT_MAX_PREDICTIONS: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InferenceError {
    #[error("unknown leaf category {0}")]
    UnknownLeaf(CategoryId),

    #[error("k must be at least 1")]
    InvalidK,

    #[error("alignment needs 1 <= c <= |l|, got c = {common}, |l| = {label_len}")]
    InvalidCount { common: u32, label_len: u32 },
}

/// Title/label alignment score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    /// `c / (|l| - c + 1)`
    #[default]
    Lta,
    /// `c / |l|`
    Wmr,
    /// `c / (|l| + |T| - c)`
    Jac,
}

impl Alignment {
    #[inline]
    pub fn score(self, common: u32, label_len: u32, title_len: u32) -> f64 {
        let c = common as f64;
        let l = label_len as f64;
        match self {
            Alignment::Lta => c / (l - c + 1.0),
            Alignment::Wmr => c / l,
            Alignment::Jac => c / (l + title_len as f64 - c),
        }
    }
}

impl FromStr for Alignment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lta" => Ok(Alignment::Lta),
            "wmr" => Ok(Alignment::Wmr),
            "jac" => Ok(Alignment::Jac),
            other => Err(format!("unknown alignment {other:?} (expected lta, wmr or jac)")),
        }
    }
}

impl fmt::Display for Alignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Alignment::Lta => "lta",
            Alignment::Wmr => "wmr",
            Alignment::Jac => "jac",
        })
    }
}

/// Label title alignment with its precondition checked.
pub fn lta(common: u32, label_len: u32) -> Result<f64, InferenceError> {
    if common == 0 || common > label_len {
        return Err(InferenceError::InvalidCount { common, label_len });
    }
    Ok(Alignment::Lta.score(common, label_len, 0))
}

/// Deduplicate and count, in first-occurrence order, using a count array.
pub fn dc(items: &[u32]) -> Vec<(u32, u32)> {
    let Some(&max) = items.iter().max() else {
        return Vec::new();
    };
    let mut counts = vec![0u32; max as usize + 1];
    let mut order = Vec::new();
    for &x in items {
        let slot = &mut counts[x as usize];
        if *slot == 0 {
            order.push(x);
        }
        *slot += 1;
    }
    order.into_iter().map(|x| (x, counts[x as usize])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub kp_id: KeyphraseId,
    pub common: u32,
    pub align: f64,
    /// Canonical search score.
    pub search: f64,
    /// Canonical recall score.
    pub recall: f64,
}

/// Total ranking order: align desc, search desc, recall asc, id asc.
pub fn ranking_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.align
        .total_cmp(&a.align)
        .then_with(|| b.search.total_cmp(&a.search))
        .then_with(|| a.recall.total_cmp(&b.recall))
        .then_with(|| a.kp_id.cmp(&b.kp_id))
}

/// Title reduced to model token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TitleTokens {
    /// In-vocabulary token ids, unique, in first-occurrence order.
    pub ids: Vec<TokenId>,
    /// Number of unique title tokens, including those outside the vocabulary.
    pub unique_len: u32,
}

pub fn title_tokens(model: &Model, title: &str, normalizer: &dyn Normalizer) -> TitleTokens {
    let tokens = tokenize(title, normalizer);
    let mut seen = HashSet::with_capacity(tokens.len());
    let mut ids = Vec::with_capacity(tokens.len());
    for t in &tokens {
        if seen.insert(t.as_str()) {
            if let Some(id) = model.vocabulary().get(t) {
                ids.push(id);
            }
        }
    }
    TitleTokens { ids, unique_len: seen.len() as u32 }
}

/// Per-worker buffers, reused across queries.
#[derive(Debug, Default)]
pub struct Scratch {
    counts: Vec<u32>,
    touched: Vec<KeyphraseId>,
}

impl Scratch {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Gather candidates of `leaf` for the given title tokens.
pub fn enumerate(
    model: &Model,
    leaf: CategoryId,
    title: &TitleTokens,
    align: Alignment,
    scratch: &mut Scratch,
) -> Result<Vec<Candidate>, InferenceError> {
    let graph = model.leaf(leaf).ok_or(InferenceError::UnknownLeaf(leaf))?;
    let base = graph.keyphrase_range().start;
    if scratch.counts.len() < graph.num_keyphrases() {
        scratch.counts.resize(graph.num_keyphrases(), 0);
    }
    scratch.touched.clear();

    for &token in &title.ids {
        for &kp in graph.neighbours(token) {
            let slot = &mut scratch.counts[(kp - base) as usize];
            if *slot == 0 {
                scratch.touched.push(kp);
            }
            *slot += 1;
        }
    }

    let mut out = Vec::with_capacity(scratch.touched.len());
    for &kp in &scratch.touched {
        let slot = &mut scratch.counts[(kp - base) as usize];
        let common = *slot;
        *slot = 0;
        out.push(Candidate {
            kp_id: kp,
            common,
            align: align.score(common, model.keyphrase_len(kp), title.unique_len),
            search: model.search(kp),
            recall: model.recall(kp),
        });
    }
    Ok(out)
}

/// Keep whole groups of equal `common`, largest first, until at least `k`
/// candidates are kept. The group that crosses `k` is kept entirely.
pub fn prune_by_count_groups(mut cands: Vec<Candidate>, k: usize) -> Vec<Candidate> {
    if cands.len() <= k {
        return cands;
    }
    let max_common = cands.iter().map(|c| c.common).max().unwrap_or(0) as usize;
    let mut hist = vec![0usize; max_common + 1];
    for c in &cands {
        hist[c.common as usize] += 1;
    }
    let mut kept = 0;
    let mut threshold = 0;
    for c in (0..=max_common).rev() {
        kept += hist[c];
        if kept >= k {
            threshold = c as u32;
            break;
        }
    }
    cands.retain(|c| c.common >= threshold);
    cands
}

/// Sort into ranking order and apply an optional hard cap.
pub fn rank(mut cands: Vec<Candidate>, cap: Option<usize>) -> Vec<Candidate> {
    cands.sort_unstable_by(ranking_order);
    if let Some(cap) = cap {
        cands.truncate(cap);
    }
    cands
}

/// One ranked keyphrase, with scores in the orientation they were ingested in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub keyphrase: String,
    pub align: f64,
    pub search: f64,
    pub recall: f64,
    /// 1-based position. Implied by list order in serialized output.
    #[serde(skip)]
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecommendOptions {
    pub k: usize,
    pub align: Alignment,
    pub max_predictions: Option<usize>,
    pub min_common_tokens: u32,
}

impl Default for RecommendOptions {
    fn default() -> Self {
        Self { k: DEFAULT_K, align: Alignment::Lta, max_predictions: Some(DEFAULT_MAX_PREDICTIONS), min_common_tokens: 1 }
    }
}

/// Borrowing front end over an immutable model.
pub struct Recommender<'m> {
    model: &'m Model,
    normalizer: &'m dyn Normalizer,
    options: RecommendOptions,
}

static DEFAULT_NORMALIZER: DefaultNormalizer = DefaultNormalizer::new();

impl<'m> Recommender<'m> {
    pub fn new(model: &'m Model) -> Self {
        Self { model, normalizer: &DEFAULT_NORMALIZER, options: RecommendOptions::default() }
    }

    pub fn with_options(mut self, options: RecommendOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_normalizer(mut self, normalizer: &'m dyn Normalizer) -> Self {
        self.normalizer = normalizer;
        self
    }

    pub fn model(&self) -> &'m Model {
        self.model
    }

    pub fn options(&self) -> &RecommendOptions {
        &self.options
    }

    /// Scored candidates after pruning and ranking, before text lookup.
    pub fn candidates(
        &self,
        title: &str,
        leaf: CategoryId,
        options: &RecommendOptions,
        scratch: &mut Scratch,
    ) -> Result<Vec<Candidate>, InferenceError> {
        if options.k == 0 {
            return Err(InferenceError::InvalidK);
        }
        let tokens = title_tokens(self.model, title, self.normalizer);
        let mut cands = enumerate(self.model, leaf, &tokens, options.align, scratch)?;
        if options.min_common_tokens > 1 {
            cands.retain(|c| c.common >= options.min_common_tokens);
        }
        let cands = prune_by_count_groups(cands, options.k);
        Ok(rank(cands, options.max_predictions))
    }

    pub fn recommend_with(
        &self,
        title: &str,
        leaf: CategoryId,
        options: &RecommendOptions,
        scratch: &mut Scratch,
    ) -> Result<Vec<Prediction>, InferenceError> {
        let cands = self.candidates(title, leaf, options, scratch)?;
        let orientation = self.model.orientation();
        Ok(cands
            .into_iter()
            .enumerate()
            .map(|(i, c)| Prediction {
                keyphrase: self.model.keyphrase_text(c.kp_id).to_owned(),
                align: c.align,
                search: orientation.raw_search(c.search),
                recall: orientation.raw_recall(c.recall),
                rank: i + 1,
            })
            .collect())
    }

    pub fn recommend(&self, title: &str, leaf: CategoryId, scratch: &mut Scratch) -> Result<Vec<Prediction>, InferenceError> {
        self.recommend_with(title, leaf, &self.options, scratch)
    }

    /// Recommend for every item using `workers` threads. Results come back
    /// in input order and equal sequential [`Recommender::recommend`] output.
    pub fn recommend_batch(&self, items: &[BatchItem], workers: usize) -> Vec<BatchResult> {
        let one = |item: &BatchItem, scratch: &mut Scratch| {
            let mut opts = self.options;
            if let Some(k) = item.k {
                opts.k = k;
            }
            BatchResult {
                item_id: item.item_id.clone(),
                outcome: self.recommend_with(&item.title, item.leaf_category, &opts, scratch),
            }
        };

        let workers = workers.max(1).min(items.len().max(1));
        if workers == 1 {
            let mut scratch = Scratch::new();
            return items.iter().map(|it| one(it, &mut scratch)).collect();
        }

        const CHUNK: usize = 32;
        let next = AtomicUsize::new(0);
        let mut slots: Vec<Option<BatchResult>> = Vec::with_capacity(items.len());
        slots.resize_with(items.len(), || None);
        let parts: Vec<Vec<(usize, BatchResult)>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    s.spawn(|| {
                        let mut scratch = Scratch::new();
                        let mut done = Vec::new();
                        loop {
                            let start = next.fetch_add(CHUNK, AtomicOrdering::Relaxed);
                            if start >= items.len() {
                                break;
                            }
                            for (i, item) in items.iter().enumerate().skip(start).take(CHUNK) {
                                done.push((i, one(item, &mut scratch)));
                            }
                        }
                        done
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("batch worker panicked")).collect()
        });
        for (i, r) in parts.into_iter().flatten() {
            slots[i] = Some(r);
        }
        slots.into_iter().map(|r| r.expect("every item processed")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchItem {
    pub item_id: String,
    pub title: String,
    pub leaf_category: CategoryId,
    /// Overrides the recommender's `k` for this item.
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub item_id: String,
    pub outcome: Result<Vec<Prediction>, InferenceError>,
}
