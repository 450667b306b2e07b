use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use super::judge::JudgmentSet;
use super::run::{all_items, ModelRun};
use super::EvalError;

/// Search-count cut-off above which a keyphrase counts as head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeadThreshold {
    pub percentile: f64,
    pub threshold: f64,
}

impl HeadThreshold {
    #[inline]
    pub fn is_head(&self, search: f64) -> bool {
        search > self.threshold
    }
}

/// Nearest-rank percentile of the search counts of unique keyphrases.
pub fn head_threshold(search_counts: &[f64], percentile: f64) -> Result<HeadThreshold, EvalError> {
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(EvalError::InvalidPercentile(percentile));
    }
    if search_counts.is_empty() {
        return Err(EvalError::EmptyUniverse);
    }
    let mut sorted = search_counts.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((percentile / 100.0) * sorted.len() as f64).ceil() as usize;
    let threshold = sorted[rank.clamp(1, sorted.len()) - 1];
    Ok(HeadThreshold { percentile, threshold })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelMetrics {
    pub model: String,
    pub predictions: usize,
    pub relevant: usize,
    pub head: usize,
    pub avg_predictions: f64,
    pub avg_relevant: f64,
    pub avg_head: f64,
    pub rp: Option<f64>,
    pub hp: Option<f64>,
    /// Against the baseline; `None` when the baseline has no relevant predictions.
    pub rrr: Option<f64>,
    pub rhr: Option<f64>,
}

/// `model1` over `model2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRatio {
    pub model1: String,
    pub model2: String,
    pub rrr: Option<f64>,
    pub rhr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub baseline: String,
    pub items: usize,
    pub head_threshold: HeadThreshold,
    pub models: Vec<ModelMetrics>,
    pub pairwise: Vec<PairRatio>,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

fn lookup(judgments: &JudgmentSet, item: &str, kp: &str) -> Result<bool, EvalError> {
    judgments
        .get(item, kp)
        .ok_or_else(|| EvalError::MissingJudgment { item_id: item.to_owned(), keyphrase: kp.to_owned() })
}

/// Proportion and ratio metrics for every run.
///
/// Head predictions are relevant predictions whose search count exceeds
/// the threshold. Counts are averaged over the union of item ids before
/// ratios are taken.
pub fn compute_metrics(
    runs: &[ModelRun],
    judgments: &JudgmentSet,
    threshold: HeadThreshold,
    baseline: &str,
) -> Result<MetricsReport, EvalError> {
    let base_idx =
        runs.iter().position(|r| r.name == baseline).ok_or_else(|| EvalError::BaselineMissing(baseline.to_owned()))?;
    let items = all_items(runs).len();
    let per_item = |n: usize| if items == 0 { 0.0 } else { n as f64 / items as f64 };

    let mut models = Vec::with_capacity(runs.len());
    for run in runs {
        let (mut relevant, mut head) = (0, 0);
        for (item, preds) in &run.items {
            for p in preds {
                if lookup(judgments, item, &p.keyphrase)? {
                    relevant += 1;
                    if threshold.is_head(p.search) {
                        head += 1;
                    }
                }
            }
        }
        let predictions = run.num_predictions();
        models.push(ModelMetrics {
            model: run.name.clone(),
            predictions,
            relevant,
            head,
            avg_predictions: per_item(predictions),
            avg_relevant: per_item(relevant),
            avg_head: per_item(head),
            rp: ratio(relevant as f64, predictions as f64),
            hp: ratio(head as f64, predictions as f64),
            rrr: None,
            rhr: None,
        });
    }

    let mut pairwise = Vec::new();
    for a in &models {
        for b in &models {
            if a.model != b.model {
                pairwise.push(PairRatio {
                    model1: a.model.clone(),
                    model2: b.model.clone(),
                    rrr: ratio(a.avg_relevant, b.avg_relevant),
                    rhr: ratio(a.avg_head, b.avg_head),
                });
            }
        }
    }
    let (base_rel, base_head) = (models[base_idx].avg_relevant, models[base_idx].avg_head);
    for m in &mut models {
        m.rrr = ratio(m.avg_relevant, base_rel);
        m.rhr = ratio(m.avg_head, base_head);
    }

    Ok(MetricsReport { baseline: baseline.to_owned(), items, head_threshold: threshold, models, pairwise })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelDiversity {
    pub model: String,
    pub exclusive: usize,
    pub avg_exclusive: f64,
    pub ratio_vs_baseline: Option<f64>,
    /// Exclusive relevant head keyphrases per item, for items where there are any.
    #[serde(skip)]
    pub per_item: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityReport {
    pub baseline: Option<String>,
    pub items: usize,
    pub models: Vec<ModelDiversity>,
}

/// Relevant head keyphrases each model predicts for an item that no other
/// run predicts for that item, averaged per item.
pub fn exclusive_diversity(
    runs: &[ModelRun],
    judgments: &JudgmentSet,
    threshold: HeadThreshold,
    baseline: Option<&str>,
) -> Result<DiversityReport, EvalError> {
    if runs.len() < 2 {
        return Err(EvalError::TooFewRuns(runs.len()));
    }
    if let Some(b) = baseline {
        if !runs.iter().any(|r| r.name == b) {
            return Err(EvalError::BaselineMissing(b.to_owned()));
        }
    }
    let items = all_items(runs);
    let mut per_model: Vec<BTreeMap<String, usize>> = vec![BTreeMap::new(); runs.len()];

    for item in &items {
        let predicted: Vec<HashSet<&str>> =
            runs.iter().map(|r| r.predictions(item).iter().map(|p| p.keyphrase.as_str()).collect()).collect();
        for (i, run) in runs.iter().enumerate() {
            let mut n = 0;
            for p in run.predictions(item) {
                if !threshold.is_head(p.search) || !lookup(judgments, item, &p.keyphrase)? {
                    continue;
                }
                let elsewhere = predicted.iter().enumerate().any(|(j, set)| j != i && set.contains(p.keyphrase.as_str()));
                if !elsewhere {
                    n += 1;
                }
            }
            if n > 0 {
                per_model[i].insert(item.to_string(), n);
            }
        }
    }

    let n_items = items.len();
    let mut models: Vec<ModelDiversity> = runs
        .iter()
        .zip(per_model)
        .map(|(run, per_item)| {
            let exclusive: usize = per_item.values().sum();
            ModelDiversity {
                model: run.name.clone(),
                exclusive,
                avg_exclusive: if n_items == 0 { 0.0 } else { exclusive as f64 / n_items as f64 },
                ratio_vs_baseline: None,
                per_item,
            }
        })
        .collect();
    if let Some(b) = baseline {
        let base = models.iter().find(|m| m.model == b).map(|m| m.avg_exclusive).unwrap_or(0.0);
        for m in &mut models {
            m.ratio_vs_baseline = ratio(m.avg_exclusive, base);
        }
    }
    Ok(DiversityReport { baseline: baseline.map(str::to_owned), items: n_items, models })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_threshold() {
        let counts: Vec<f64> = (1..=10).map(f64::from).collect();
        let t = head_threshold(&counts, 90.0).unwrap();
        assert_eq!(t.threshold, 9.0);
        assert_eq!(counts.iter().filter(|&&c| t.is_head(c)).count(), 1);

        let flat = [4.0; 7];
        let t = head_threshold(&flat, 90.0).unwrap();
        assert_eq!(flat.iter().filter(|&&c| t.is_head(c)).count(), 0);

        let t = head_threshold(&[42.0], 90.0).unwrap();
        assert_eq!(t.threshold, 42.0);
        assert!(!t.is_head(42.0));
    }

    #[test]
    fn threshold_errors() {
        assert!(matches!(head_threshold(&[], 90.0), Err(EvalError::EmptyUniverse)));
        assert!(matches!(head_threshold(&[1.0], 0.0), Err(EvalError::InvalidPercentile(_))));
        assert!(matches!(head_threshold(&[1.0], 101.0), Err(EvalError::InvalidPercentile(_))));
    }

    #[test]
    fn ten_percent_exceed_on_distinct_counts() {
        // Oracle: sort and count strictly greater values.
        for n in 1..200usize {
            let counts: Vec<f64> = (0..n).map(|i| ((i * 7919) % n) as f64).collect();
            let t = head_threshold(&counts, 90.0).unwrap();
            let above = counts.iter().filter(|&&c| t.is_head(c)).count() as f64;
            assert!((above - 0.1 * n as f64).abs() <= 1.0, "n = {n}: {above}");
        }
    }

    fn single_run_fixture() -> (ModelRun, JudgmentSet) {
        let mut run = ModelRun::new("m");
        let mut j = JudgmentSet::new();
        // 10 predictions, 4 relevant, one of those above the threshold.
        let preds: Vec<(String, f64)> = (0..10).map(|i| (format!("kp{i}"), if i == 0 { 100.0 } else { 1.0 })).collect();
        for (i, (kp, _)) in preds.iter().enumerate() {
            j.insert("item", kp, i < 4);
        }
        run.push("item", preds);
        (run, j)
    }

    const T50: HeadThreshold = HeadThreshold { percentile: 90.0, threshold: 50.0 };

    #[test]
    fn rp_hp_direct() {
        let (run, j) = single_run_fixture();
        let r = compute_metrics(&[run], &j, T50, "m").unwrap();
        let m = &r.models[0];
        assert_eq!((m.predictions, m.relevant, m.head), (10, 4, 1));
        assert_eq!(m.rp, Some(0.4));
        assert_eq!(m.hp, Some(0.1));
        assert_eq!(m.rrr, Some(1.0));
    }

    #[test]
    fn rrr_ratio_and_undefined() {
        let mut a = ModelRun::new("a");
        let mut b = ModelRun::new("b");
        let mut c = ModelRun::new("c");
        let mut j = JudgmentSet::new();
        a.push("x", (0..6).map(|i| (format!("a{i}"), 1.0)));
        b.push("x", (0..3).map(|i| (format!("b{i}"), 1.0)));
        c.push("x", [("c0".to_string(), 1.0)]);
        for i in 0..6 {
            j.insert("x", &format!("a{i}"), true);
        }
        for i in 0..3 {
            j.insert("x", &format!("b{i}"), true);
        }
        j.insert("x", "c0", false);
        let r = compute_metrics(&[a, b, c], &j, T50, "b").unwrap();
        let pair = |m1: &str, m2: &str| r.pairwise.iter().find(|p| p.model1 == m1 && p.model2 == m2).unwrap().rrr;
        assert_eq!(pair("a", "b"), Some(2.0));
        assert_eq!(pair("b", "a"), Some(0.5));
        assert_eq!(pair("a", "c"), None);
        assert_eq!(r.models[0].rrr, Some(2.0));
        assert_eq!(r.models[0].rhr, None);
    }

    #[test]
    fn missing_baseline_or_judgment() {
        let (run, j) = single_run_fixture();
        assert!(matches!(compute_metrics(std::slice::from_ref(&run), &j, T50, "zz"), Err(EvalError::BaselineMissing(_))));
        assert!(matches!(
            compute_metrics(&[run], &JudgmentSet::new(), T50, "m"),
            Err(EvalError::MissingJudgment { .. })
        ));
    }

    fn set_run(name: &str, item: &str, kps: &[&str]) -> ModelRun {
        let mut r = ModelRun::new(name);
        r.push(item, kps.iter().map(|k| (k.to_string(), 100.0)));
        r
    }

    #[test]
    fn exclusive_identical_and_subset() {
        let mut j = JudgmentSet::new();
        j.insert("i", "x", true);
        j.insert("i", "y", true);
        let same = [set_run("a", "i", &["x", "y"]), set_run("b", "i", &["x", "y"])];
        let r = exclusive_diversity(&same, &j, T50, None).unwrap();
        assert!(r.models.iter().all(|m| m.exclusive == 0));

        let sub = [set_run("a", "i", &["x", "y"]), set_run("b", "i", &["y"])];
        let r = exclusive_diversity(&sub, &j, T50, Some("a")).unwrap();
        assert_eq!((r.models[0].exclusive, r.models[1].exclusive), (1, 0));
        assert_eq!(r.models[1].ratio_vs_baseline, Some(0.0));
        assert!(matches!(exclusive_diversity(&sub[..1], &j, T50, None), Err(EvalError::TooFewRuns(1))));
    }

    #[test]
    fn exclusive_ignores_tail_and_irrelevant() {
        let mut j = JudgmentSet::new();
        j.insert("i", "rel_tail", true);
        j.insert("i", "irrel_head", false);
        let mut a = ModelRun::new("a");
        a.push("i", [("rel_tail".to_string(), 1.0), ("irrel_head".to_string(), 100.0)]);
        let b = ModelRun::new("b");
        let r = exclusive_diversity(&[a, b], &j, T50, None).unwrap();
        assert_eq!(r.models[0].exclusive, 0);
    }
}
