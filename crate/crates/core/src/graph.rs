//! Per-leaf bipartite token → keyphrase graphs stored as CSR.
//!
//! A [`Model`] owns one global token vocabulary, one keyphrase string table
//! and a keyphrase attribute table stored as parallel arrays. Each
//! [`LeafGraph`] covers a contiguous range of keyphrase ids and maps the
//! tokens occurring in that leaf to dense local rows:
//!
//! ```text
//! rows(token)        = local row index r
//! neighbours(r)      = edges[offsets[r] .. offsets[r + 1]]
//! offsets[0]         = 0, offsets[rows] = |E_l|
//! ```

use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use thiserror::Error;

use crate::curation::{CategoryId, CuratedDataset, ScoreOrientation};
use crate::vocab::{TokenId, Vocabulary};

/// Global keyphrase identifier, dense over the model.
pub type KeyphraseId = u32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown leaf category {0}")]
    UnknownLeaf(CategoryId),

    #[error("malformed model: {0}")]
    Malformed(String),
}

/// Borrowed view of one keyphrase record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyphraseRef<'a> {
    pub id: KeyphraseId,
    /// Sorted, unique token ids.
    pub tokens: &'a [TokenId],
    pub search: f64,
    pub recall: f64,
    pub text: &'a str,
}

impl KeyphraseRef<'_> {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafGraph {
    pub(crate) leaf_category: CategoryId,
    pub(crate) kp_start: KeyphraseId,
    pub(crate) kp_end: KeyphraseId,
    /// Global token id of each local row, ascending.
    pub(crate) row_tokens: Vec<TokenId>,
    pub(crate) offsets: Vec<u32>,
    pub(crate) edges: Vec<KeyphraseId>,
    pub(crate) rows: HashMap<TokenId, u32>,
}

impl LeafGraph {
    pub(crate) fn from_parts(
        leaf_category: CategoryId,
        kp_range: Range<KeyphraseId>,
        row_tokens: Vec<TokenId>,
        offsets: Vec<u32>,
        edges: Vec<KeyphraseId>,
    ) -> Self {
        let rows = row_tokens.iter().enumerate().map(|(r, &t)| (t, r as u32)).collect();
        Self { leaf_category, kp_start: kp_range.start, kp_end: kp_range.end, row_tokens, offsets, edges, rows }
    }

    pub fn leaf_category(&self) -> CategoryId {
        self.leaf_category
    }

    /// Global keyphrase ids belonging to this leaf.
    pub fn keyphrase_range(&self) -> Range<KeyphraseId> {
        self.kp_start..self.kp_end
    }

    pub fn num_keyphrases(&self) -> usize {
        (self.kp_end - self.kp_start) as usize
    }

    pub fn num_tokens(&self) -> usize {
        self.row_tokens.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn offsets(&self) -> &[u32] {
        &self.offsets
    }

    pub fn edges(&self) -> &[KeyphraseId] {
        &self.edges
    }

    pub fn row_tokens(&self) -> &[TokenId] {
        &self.row_tokens
    }

    /// Keyphrases containing `token`; empty if the token is absent from this leaf.
    pub fn neighbours(&self, token: TokenId) -> &[KeyphraseId] {
        match self.rows.get(&token) {
            Some(&r) => self.row(r as usize),
            None => &[],
        }
    }

    pub fn row(&self, r: usize) -> &[KeyphraseId] {
        &self.edges[self.offsets[r] as usize..self.offsets[r + 1] as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeStats {
    pub num_tokens: usize,
    pub num_edges: usize,
    pub d_avg: f64,
}

/// A trained model for one meta category.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub(crate) meta_category: String,
    pub(crate) orientation: ScoreOrientation,
    pub(crate) vocabulary: Vocabulary,
    pub(crate) strings: Vec<String>,
    pub(crate) kp_token_offsets: Vec<u32>,
    pub(crate) kp_tokens: Vec<TokenId>,
    pub(crate) search: Vec<f64>,
    pub(crate) recall: Vec<f64>,
    pub(crate) text_ref: Vec<u32>,
    pub(crate) leaves: HashMap<CategoryId, LeafGraph>,
}

impl Model {
    pub fn meta_category(&self) -> &str {
        &self.meta_category
    }

    pub fn orientation(&self) -> ScoreOrientation {
        self.orientation
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn strings(&self) -> &[String] {
        &self.strings
    }

    pub fn num_keyphrases(&self) -> usize {
        self.search.len()
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf(&self, leaf: CategoryId) -> Option<&LeafGraph> {
        self.leaves.get(&leaf)
    }

    /// Leaf category ids in ascending order.
    pub fn leaf_ids(&self) -> Vec<CategoryId> {
        let mut ids: Vec<_> = self.leaves.keys().copied().collect();
        ids.sort_unstable();
        ids
    }

    pub fn keyphrase(&self, id: KeyphraseId) -> KeyphraseRef<'_> {
        let i = id as usize;
        KeyphraseRef {
            id,
            tokens: self.keyphrase_tokens(id),
            search: self.search[i],
            recall: self.recall[i],
            text: &self.strings[self.text_ref[i] as usize],
        }
    }

    #[inline]
    pub fn keyphrase_len(&self, id: KeyphraseId) -> u32 {
        let i = id as usize;
        self.kp_token_offsets[i + 1] - self.kp_token_offsets[i]
    }

    #[inline]
    pub fn keyphrase_tokens(&self, id: KeyphraseId) -> &[TokenId] {
        let i = id as usize;
        &self.kp_tokens[self.kp_token_offsets[i] as usize..self.kp_token_offsets[i + 1] as usize]
    }

    #[inline]
    pub fn search(&self, id: KeyphraseId) -> f64 {
        self.search[id as usize]
    }

    #[inline]
    pub fn recall(&self, id: KeyphraseId) -> f64 {
        self.recall[id as usize]
    }

    pub fn keyphrase_text(&self, id: KeyphraseId) -> &str {
        &self.strings[self.text_ref[id as usize] as usize]
    }

    pub fn degree_stats(&self, leaf: CategoryId) -> Result<DegreeStats, GraphError> {
        let g = self.leaf(leaf).ok_or(GraphError::UnknownLeaf(leaf))?;
        let (num_tokens, num_edges) = (g.num_tokens(), g.num_edges());
        let d_avg = if num_tokens == 0 { 0.0 } else { num_edges as f64 / num_tokens as f64 };
        Ok(DegreeStats { num_tokens, num_edges, d_avg })
    }

    pub fn total_edges(&self) -> usize {
        self.leaves.values().map(LeafGraph::num_edges).sum()
    }

    /// Check every structural invariant. Used after deserialization.
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |m: String| Err(GraphError::Malformed(m));
        let n = self.search.len();
        if self.recall.len() != n || self.text_ref.len() != n || self.kp_token_offsets.len() != n + 1 {
            return bad("keyphrase attribute arrays disagree in length".into());
        }
        if self.kp_token_offsets[0] != 0 || *self.kp_token_offsets.last().unwrap() as usize != self.kp_tokens.len() {
            return bad("keyphrase token offsets do not span the token array".into());
        }
        let vocab_len = self.vocabulary.len();
        for id in 0..n as KeyphraseId {
            let i = id as usize;
            if self.kp_token_offsets[i] > self.kp_token_offsets[i + 1] {
                return bad(format!("keyphrase {id}: offsets decrease"));
            }
            let toks = self.keyphrase_tokens(id);
            if toks.is_empty() {
                return bad(format!("keyphrase {id} has no tokens"));
            }
            if toks.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("keyphrase {id}: tokens not strictly increasing"));
            }
            if toks.iter().any(|&t| t as usize >= vocab_len) {
                return bad(format!("keyphrase {id}: token id out of range"));
            }
            if self.text_ref[i] as usize >= self.strings.len() {
                return bad(format!("keyphrase {id}: string ref out of range"));
            }
        }

        let mut ranges: Vec<Range<KeyphraseId>> = Vec::with_capacity(self.leaves.len());
        for (&leaf, g) in &self.leaves {
            if g.leaf_category != leaf {
                return bad(format!("leaf {leaf}: id mismatch"));
            }
            if g.kp_start > g.kp_end || g.kp_end as usize > n {
                return bad(format!("leaf {leaf}: keyphrase range out of bounds"));
            }
            ranges.push(g.keyphrase_range());
            let rows = g.row_tokens.len();
            if g.offsets.len() != rows + 1 || g.offsets[0] != 0 || g.offsets[rows] as usize != g.edges.len() {
                return bad(format!("leaf {leaf}: offsets malformed"));
            }
            if g.row_tokens.windows(2).any(|w| w[0] >= w[1]) || g.row_tokens.iter().any(|&t| t as usize >= vocab_len) {
                return bad(format!("leaf {leaf}: row tokens invalid"));
            }
            let mut edges_per_kp = vec![0usize; g.num_keyphrases()];
            for r in 0..rows {
                if g.offsets[r] > g.offsets[r + 1] {
                    return bad(format!("leaf {leaf}: offsets decrease"));
                }
                let adj = g.row(r);
                if adj.windows(2).any(|w| w[0] >= w[1]) {
                    return bad(format!("leaf {leaf}: row {r} not sorted/unique"));
                }
                for &kp in adj {
                    if kp < g.kp_start || kp >= g.kp_end {
                        return bad(format!("leaf {leaf}: edge to foreign keyphrase {kp}"));
                    }
                    if self.keyphrase_tokens(kp).binary_search(&g.row_tokens[r]).is_err() {
                        return bad(format!("leaf {leaf}: edge ({}, {kp}) not in keyphrase", g.row_tokens[r]));
                    }
                    edges_per_kp[(kp - g.kp_start) as usize] += 1;
                }
            }
            // Each keyphrase must be reached from every one of its tokens.
            for (off, &count) in edges_per_kp.iter().enumerate() {
                let kp = g.kp_start + off as KeyphraseId;
                if count != self.keyphrase_len(kp) as usize {
                    return bad(format!("leaf {leaf}: keyphrase {kp} has {count} edges"));
                }
            }
        }
        ranges.sort_by_key(|r| r.start);
        if ranges.windows(2).any(|w| w[0].end > w[1].start) {
            return bad("leaf keyphrase ranges overlap".into());
        }
        Ok(())
    }
}

/// Construct the model. Ids are assigned in sorted order so identical
/// datasets produce identical models.
pub fn build(dataset: &CuratedDataset) -> Model {
    // Vocabulary: all distinct tokens, sorted.
    let mut token_set: BTreeSet<&str> = BTreeSet::new();
    let mut text_set: BTreeSet<&str> = BTreeSet::new();
    for kps in dataset.leaves.values() {
        for kp in kps {
            token_set.extend(kp.text.split(' '));
            text_set.insert(&kp.text);
        }
    }
    let mut vocabulary = Vocabulary::new();
    for t in &token_set {
        vocabulary.intern(t);
    }
    let strings: Vec<String> = text_set.iter().map(|s| s.to_string()).collect();
    let string_ref: HashMap<&str, u32> = text_set.iter().enumerate().map(|(i, s)| (*s, i as u32)).collect();

    let total = dataset.num_keyphrases();
    let mut model = Model {
        meta_category: dataset.meta_category.clone(),
        orientation: dataset.orientation,
        vocabulary,
        strings: Vec::new(),
        kp_token_offsets: Vec::with_capacity(total + 1),
        kp_tokens: Vec::new(),
        search: Vec::with_capacity(total),
        recall: Vec::with_capacity(total),
        text_ref: Vec::with_capacity(total),
        leaves: HashMap::with_capacity(dataset.leaves.len()),
    };
    model.kp_token_offsets.push(0);

    for (&leaf, kps) in &dataset.leaves {
        if kps.is_empty() {
            continue;
        }
        let mut sorted: Vec<_> = kps.iter().collect();
        sorted.sort_by(|a, b| a.text.cmp(&b.text));

        let kp_start = model.search.len() as KeyphraseId;
        let mut pairs: Vec<(TokenId, KeyphraseId)> = Vec::new();
        for kp in sorted {
            let id = model.search.len() as KeyphraseId;
            let mut toks: Vec<TokenId> =
                kp.text.split(' ').map(|t| model.vocabulary.get(t).expect("token interned above")).collect();
            toks.sort_unstable();
            toks.dedup();
            pairs.extend(toks.iter().map(|&t| (t, id)));
            model.kp_tokens.extend_from_slice(&toks);
            model.kp_token_offsets.push(model.kp_tokens.len() as u32);
            model.search.push(kp.search);
            model.recall.push(kp.recall);
            model.text_ref.push(string_ref[kp.text.as_str()]);
        }
        let kp_end = model.search.len() as KeyphraseId;

        pairs.sort_unstable();
        pairs.dedup();
        let mut row_tokens = Vec::new();
        let mut offsets = vec![0u32];
        let mut edges = Vec::with_capacity(pairs.len());
        for (t, kp) in pairs {
            if row_tokens.last() != Some(&t) {
                if !row_tokens.is_empty() {
                    offsets.push(edges.len() as u32);
                }
                row_tokens.push(t);
            }
            edges.push(kp);
        }
        offsets.push(edges.len() as u32);
        model.leaves.insert(leaf, LeafGraph::from_parts(leaf, kp_start..kp_end, row_tokens, offsets, edges));
    }
    model.strings = strings;
    model
}
