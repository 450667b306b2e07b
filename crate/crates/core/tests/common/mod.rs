//! Shared helpers for the integration targets: synthetic data, an
//! exhaustive reference scorer and property checks.
#![allow(dead_code)]

pub mod props;

use std::collections::{BTreeMap, HashSet};

use graphex::{
    curate, tokenize, Alignment, CategoryId, CurateOptions, CuratedDataset, DefaultNormalizer, RawKeyphraseRow,
    RecommendOptions,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn word(i: usize) -> String {
    format!("w{i}")
}

/// Shape of a synthetic category set.
#[derive(Debug, Clone)]
pub struct Synth {
    pub leaves: Vec<(CategoryId, usize)>,
    pub vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Scores are drawn from `1..=score_range`; small ranges force ties.
    pub score_range: u32,
}

impl Synth {
    pub fn rows(&self, rng: &mut impl RngCore) -> Vec<RawKeyphraseRow> {
        let mut rows = Vec::new();
        for &(leaf, n) in &self.leaves {
            for _ in 0..n {
                let len = rng.random_range(self.min_len..=self.max_len);
                let words: Vec<String> = (0..len).map(|_| word(rng.random_range(0..self.vocab))).collect();
                rows.push(RawKeyphraseRow {
                    keyphrase: words.join(" "),
                    leaf_category: leaf,
                    search_score: rng.random_range(1..=self.score_range) as f64,
                    recall_score: rng.random_range(1..=self.score_range) as f64,
                });
            }
        }
        rows
    }

    pub fn dataset(&self, rng: &mut impl RngCore) -> CuratedDataset {
        curate(self.rows(rng), &CurateOptions::default(), &DefaultNormalizer::new()).dataset
    }
}

/// A title of `len` words, roughly `oov_rate` of them outside the vocabulary.
pub fn random_title(rng: &mut impl RngCore, vocab: usize, len: usize, oov_rate: f64) -> String {
    let mut words = Vec::with_capacity(len);
    for _ in 0..len {
        if rng.random_bool(oov_rate) {
            words.push(format!("oov{}", rng.random_range(0..1000)));
        } else {
            words.push(word(rng.random_range(0..vocab)));
        }
    }
    // Occasional case and punctuation noise exercises normalization.
    if !words.is_empty() && rng.random_bool(0.3) {
        let i = rng.random_range(0..words.len());
        words[i] = format!("{},", words[i].to_uppercase());
    }
    words.join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expected {
    pub keyphrase: String,
    pub align: f64,
    pub search: f64,
    pub recall: f64,
}

/// Score every keyphrase of `leaf` directly from its text, then prune and
/// rank with an independent implementation of the same rules.
pub fn brute_force(dataset: &CuratedDataset, leaf: CategoryId, title: &str, opts: &RecommendOptions) -> Vec<Expected> {
    let title: HashSet<String> = tokenize(title, &DefaultNormalizer::new()).into_iter().collect();
    let t_len = title.len() as f64;
    let Some(kps) = dataset.leaves.get(&leaf) else { return Vec::new() };

    struct Row<'a> {
        text: &'a str,
        c: u32,
        align: f64,
        search: f64,
        recall: f64,
    }
    let mut rows = Vec::new();
    for kp in kps {
        let toks: HashSet<&str> = kp.text.split(' ').collect();
        let c = toks.iter().filter(|t| title.contains(**t)).count() as u32;
        if c == 0 || c < opts.min_common_tokens {
            continue;
        }
        let (cf, l) = (c as f64, toks.len() as f64);
        let align = match opts.align {
            Alignment::Lta => cf / (l - cf + 1.0),
            Alignment::Wmr => cf / l,
            Alignment::Jac => cf / (l + t_len - cf),
        };
        rows.push(Row { text: &kp.text, c, align, search: kp.search, recall: kp.recall });
    }

    // Threshold: the common count of the k-th best candidate by count.
    if rows.len() > opts.k {
        let mut counts: Vec<u32> = rows.iter().map(|r| r.c).collect();
        counts.sort_unstable_by(|a, b| b.cmp(a));
        let threshold = counts[opts.k - 1];
        rows.retain(|r| r.c >= threshold);
    }

    rows.sort_by(|a, b| {
        b.align
            .partial_cmp(&a.align)
            .unwrap()
            .then(b.search.partial_cmp(&a.search).unwrap())
            .then(a.recall.partial_cmp(&b.recall).unwrap())
            .then(a.text.as_bytes().cmp(b.text.as_bytes()))
    });
    if let Some(cap) = opts.max_predictions {
        rows.truncate(cap);
    }
    let o = dataset.orientation;
    rows.into_iter()
        .map(|r| Expected {
            keyphrase: r.text.to_owned(),
            align: r.align,
            search: o.raw_search(r.search),
            recall: o.raw_recall(r.recall),
        })
        .collect()
}

/// Ordinary least squares fit of `y` on `x`; returns (slope, intercept, r²).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - (slope * x + intercept)).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    (slope, intercept, 1.0 - ss_res / ss_tot)
}

/// Nearest-rank percentile over sorted durations, in milliseconds.
pub fn percentile_ms(sorted: &[std::time::Duration], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank - 1].as_secs_f64() * 1e3
}

/// `keyphrase \t leaf \t search \t recall` lines for `rows`.
pub fn to_tsv(rows: &[RawKeyphraseRow]) -> String {
    let mut s = String::from("keyphrase\tleaf_category\tsearch_score\trecall_score\n");
    for r in rows {
        s.push_str(&format!("{}\t{}\t{}\t{}\n", r.keyphrase, r.leaf_category, r.search_score, r.recall_score));
    }
    s
}

pub fn leaf_texts(dataset: &CuratedDataset) -> BTreeMap<CategoryId, HashSet<String>> {
    dataset.leaves.iter().map(|(l, kps)| (*l, kps.iter().map(|k| k.text.clone()).collect())).collect()
}
