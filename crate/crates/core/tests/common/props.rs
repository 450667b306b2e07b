use std::cmp::Ordering;

use graphex::{
    build, curate, lta, prune_by_count_groups, ranking_order, Alignment, Candidate, CategoryId, CurateOptions,
    CuratedDataset, DefaultNormalizer, Model, RawKeyphraseRow, RecommendOptions, Recommender, Scratch,
};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const CASES: u32 = 10_000;

pub fn config() -> ProptestConfig {
    ProptestConfig { cases: CASES, failure_persistence: None, ..ProptestConfig::default() }
}

pub fn lta_inputs() -> impl Strategy<Value = (u32, u32)> {
    (1u32..5000).prop_flat_map(|l| (Just(l), 1..=l))
}

pub fn check_lta_monotonic((label_len, c): (u32, u32)) -> Result<(), TestCaseError> {
    let v = lta(c, label_len).unwrap();
    if c < label_len {
        prop_assert!(lta(c + 1, label_len).unwrap() > v, "not increasing in c at c={c}, |l|={label_len}");
    }
    prop_assert!(lta(c, label_len + 1).unwrap() < v, "not decreasing in |l| at c={c}, |l|={label_len}");
    prop_assert!(lta(0, label_len).is_err());
    prop_assert!(lta(label_len + 1, label_len).is_err());
    Ok(())
}

/// A small random model plus one query against it.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub rows: Vec<RawKeyphraseRow>,
    pub title: Vec<String>,
    pub shuffled: Vec<String>,
    pub leaf: CategoryId,
    pub k: usize,
    pub align: Alignment,
}

const VOCAB: usize = 30;

fn title_word(i: usize) -> String {
    if i < VOCAB {
        super::word(i)
    } else {
        format!("oov{i}")
    }
}

pub fn scenario() -> impl Strategy<Value = Scenario> {
    let kp = (prop::collection::vec(0..VOCAB, 1..=5), 1u64..=3, 1u32..=20, 1u32..=5);
    let align = prop_oneof![Just(Alignment::Lta), Just(Alignment::Wmr), Just(Alignment::Jac)];
    (prop::collection::vec(kp, 1..60), prop::collection::vec(0..VOCAB + 10, 0..15), 1u64..=3, 1usize..30, align)
        .prop_flat_map(|(kps, title, leaf, k, align)| {
            let title: Vec<String> = title.into_iter().map(title_word).collect();
            (Just(kps), Just(title.clone()), Just(title).prop_shuffle(), Just(leaf), Just(k), Just(align))
        })
        .prop_map(|(kps, title, shuffled, leaf, k, align)| Scenario {
            rows: kps
                .into_iter()
                .map(|(words, leaf, s, r)| RawKeyphraseRow {
                    keyphrase: words.into_iter().map(super::word).collect::<Vec<_>>().join(" "),
                    leaf_category: leaf,
                    search_score: s as f64,
                    recall_score: r as f64,
                })
                .collect(),
            title,
            shuffled,
            leaf,
            k,
            align,
        })
}

impl Scenario {
    pub fn dataset(&self) -> CuratedDataset {
        curate(self.rows.clone(), &CurateOptions::default(), &DefaultNormalizer::new()).dataset
    }

    pub fn options(&self) -> RecommendOptions {
        RecommendOptions { k: self.k, align: self.align, ..RecommendOptions::default() }
    }

    fn recommend(&self, model: &Model, title: &[String]) -> Vec<(String, f64, f64, f64)> {
        let rec = Recommender::new(model).with_options(self.options());
        match rec.recommend(&title.join(" "), self.leaf, &mut Scratch::new()) {
            Ok(p) => p.into_iter().map(|p| (p.keyphrase, p.align, p.search, p.recall)).collect(),
            Err(_) => Vec::new(),
        }
    }
}

pub fn check_permutation(s: Scenario) -> Result<(), TestCaseError> {
    let model = build(&s.dataset());
    prop_assert_eq!(s.recommend(&model, &s.title), s.recommend(&model, &s.shuffled));
    Ok(())
}

pub fn check_in_vocabulary(s: Scenario) -> Result<(), TestCaseError> {
    let dataset = s.dataset();
    let model = build(&dataset);
    let texts = super::leaf_texts(&dataset);
    for (kp, ..) in s.recommend(&model, &s.title) {
        prop_assert!(texts.get(&s.leaf).is_some_and(|t| t.contains(&kp)), "{kp:?} not in leaf {}", s.leaf);
    }
    // A direct check against the reference scorer keeps the two honest.
    let expected: Vec<_> = super::brute_force(&dataset, s.leaf, &s.title.join(" "), &s.options())
        .into_iter()
        .map(|e| (e.keyphrase, e.align, e.search, e.recall))
        .collect();
    prop_assert_eq!(s.recommend(&model, &s.title), expected);
    Ok(())
}

pub fn prune_inputs() -> impl Strategy<Value = (Vec<u32>, usize)> {
    (prop::collection::vec(1u32..8, 0..80), 1usize..40)
}

fn candidates(counts: &[u32]) -> Vec<Candidate> {
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| Candidate { kp_id: i as u32, common: c, align: c as f64, search: 0.0, recall: 0.0 })
        .collect()
}

pub fn check_prune_groups((counts, k): (Vec<u32>, usize)) -> Result<(), TestCaseError> {
    let kept = prune_by_count_groups(candidates(&counts), k);
    let n = counts.len();
    prop_assert!(kept.len() >= k.min(n));
    if kept.len() < k {
        prop_assert!(n < k);
    }
    if let Some(min_kept) = kept.iter().map(|c| c.common).min() {
        // Every candidate at or above the threshold count is present.
        let expected = counts.iter().filter(|&&c| c >= min_kept).count();
        prop_assert_eq!(kept.len(), expected);
        // Dropping the threshold group would leave fewer than k.
        let above = counts.iter().filter(|&&c| c > min_kept).count();
        prop_assert!(above < k);
    }
    Ok(())
}

pub fn order_inputs() -> impl Strategy<Value = Vec<Candidate>> {
    prop::collection::vec((0u32..4, 0u32..3, 0u32..3), 3..12).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (a, s, r))| Candidate {
                kp_id: (i % 5) as u32,
                common: 1,
                align: a as f64 / 2.0,
                search: s as f64,
                recall: r as f64,
            })
            .collect()
    })
}

pub fn check_total_order(cands: Vec<Candidate>) -> Result<(), TestCaseError> {
    for a in &cands {
        for b in &cands {
            let ab = ranking_order(a, b);
            prop_assert_eq!(ab, ranking_order(b, a).reverse());
            if ab == Ordering::Equal {
                prop_assert_eq!(a, b);
            }
            for c in &cands {
                if ab != Ordering::Greater && ranking_order(b, c) != Ordering::Greater {
                    prop_assert_ne!(ranking_order(a, c), Ordering::Greater);
                }
            }
        }
    }
    Ok(())
}
