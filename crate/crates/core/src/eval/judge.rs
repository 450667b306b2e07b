use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::Serialize;

use super::oracle::{OracleError, RelevanceOracle};
use super::run::ModelRun;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Judgment {
    pub item_id: String,
    pub keyphrase: String,
    pub relevant: bool,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct JudgeFailure {
    pub item_id: String,
    pub keyphrase: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct JudgeOutcome {
    pub judgments: Vec<Judgment>,
    pub failures: Vec<JudgeFailure>,
}

/// Relevance lookup by `(item_id, keyphrase)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JudgmentSet {
    relevant: HashMap<(String, String), bool>,
}

impl JudgmentSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, item_id: &str, keyphrase: &str, relevant: bool) {
        self.relevant.insert((item_id.to_owned(), keyphrase.to_owned()), relevant);
    }

    pub fn get(&self, item_id: &str, keyphrase: &str) -> Option<bool> {
        self.relevant.get(&(item_id.to_owned(), keyphrase.to_owned())).copied()
    }

    pub fn len(&self) -> usize {
        self.relevant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevant.is_empty()
    }
}

impl<'a> FromIterator<&'a Judgment> for JudgmentSet {
    fn from_iter<I: IntoIterator<Item = &'a Judgment>>(iter: I) -> Self {
        let mut set = JudgmentSet::new();
        for j in iter {
            set.insert(&j.item_id, &j.keyphrase, j.relevant);
        }
        set
    }
}

type CacheKey = (String, String);

/// Caching, retrying, concurrency-capped front end over an oracle.
pub struct Judge<'o> {
    oracle: &'o dyn RelevanceOracle,
    cache: Mutex<HashMap<CacheKey, bool>>,
    calls: AtomicUsize,
    retries: u32,
    backoff: Duration,
    max_in_flight: usize,
}

impl<'o> Judge<'o> {
    pub fn new(oracle: &'o dyn RelevanceOracle) -> Self {
        Self {
            oracle,
            cache: Mutex::new(HashMap::new()),
            calls: AtomicUsize::new(0),
            retries: 2,
            backoff: Duration::from_millis(50),
            max_in_flight: 4,
        }
    }

    pub fn with_retries(mut self, retries: u32, backoff: Duration) -> Self {
        self.retries = retries;
        self.backoff = backoff;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    /// Oracle invocations so far, retries included.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn cache_key(&self, item_id: &str, title: &str, keyphrase: &str) -> CacheKey {
        let scope = if self.oracle.keyed_by_title() { format!("t\u{0}{title}") } else { format!("i\u{0}{item_id}") };
        (scope, keyphrase.to_owned())
    }

    fn call(&self, item_id: &str, title: &str, keyphrase: &str) -> Result<bool, OracleError> {
        let mut attempt = 0;
        loop {
            self.calls.fetch_add(1, Ordering::Relaxed);
            match self.oracle.judge(item_id, title, keyphrase) {
                Err(e) if e.is_transient() && attempt < self.retries => {
                    attempt += 1;
                    log::debug!("oracle retry {attempt} for {item_id:?} / {keyphrase:?}: {e}");
                    thread::sleep(self.backoff * attempt);
                }
                other => return other,
            }
        }
    }

    /// Judge every distinct `(item, keyphrase)` across `runs`.
    ///
    /// `titles` maps item ids to titles; items without one are judged with
    /// an empty title. Pairs already in the cache are not sent to the oracle,
    /// and pairs sharing a cache key within this call are sent once.
    pub fn judge_runs(&self, runs: &[ModelRun], titles: &HashMap<String, String>) -> JudgeOutcome {
        let mut pairs: BTreeSet<(&str, &str)> = BTreeSet::new();
        for run in runs {
            for (item, preds) in &run.items {
                for p in preds {
                    pairs.insert((item.as_str(), p.keyphrase.as_str()));
                }
            }
        }
        let title_of = |item: &str| titles.get(item).map(String::as_str).unwrap_or("");

        let misses: Vec<(CacheKey, &str, &str)> = {
            let cache = self.cache.lock().unwrap();
            let mut seen = HashSet::new();
            pairs
                .iter()
                .filter_map(|&(item, kp)| {
                    let key = self.cache_key(item, title_of(item), kp);
                    (!cache.contains_key(&key) && seen.insert(key.clone())).then_some((key, item, kp))
                })
                .collect()
        };

        let errors: Mutex<HashMap<CacheKey, String>> = Mutex::new(HashMap::new());
        let next = AtomicUsize::new(0);
        let workers = self.max_in_flight.min(misses.len());
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some((key, item, kp)) = misses.get(i) else { break };
                    match self.call(item, title_of(item), kp) {
                        Ok(v) => {
                            self.cache.lock().unwrap().insert(key.clone(), v);
                        }
                        Err(e) => {
                            errors.lock().unwrap().insert(key.clone(), e.to_string());
                        }
                    }
                });
            }
        });

        let cache = self.cache.lock().unwrap();
        let errors = errors.into_inner().unwrap();
        let mut out = JudgeOutcome::default();
        for (item, kp) in pairs {
            let key = self.cache_key(item, title_of(item), kp);
            match cache.get(&key) {
                Some(&relevant) => out.judgments.push(Judgment {
                    item_id: item.to_owned(),
                    keyphrase: kp.to_owned(),
                    relevant,
                    source: self.oracle.id().to_owned(),
                }),
                None => out.failures.push(JudgeFailure {
                    item_id: item.to_owned(),
                    keyphrase: kp.to_owned(),
                    message: errors.get(&key).cloned().unwrap_or_else(|| "not judged".into()),
                }),
            }
        }
        out
    }

    pub fn judge(&self, run: &ModelRun, titles: &HashMap<String, String>) -> JudgeOutcome {
        self.judge_runs(std::slice::from_ref(run), titles)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::oracle::{FixtureOracle, HeuristicOracle};

    fn run(name: &str, items: &[(&str, &[&str])]) -> ModelRun {
        let mut r = ModelRun::new(name);
        for (id, kps) in items {
            r.push(*id, kps.iter().map(|k| (k.to_string(), 1.0)));
        }
        r
    }

    #[test]
    fn fixture_judgment() {
        let mut f = FixtureOracle::new();
        f.insert("item1", "audeze maxwell", true);
        let judge = Judge::new(&f);
        let out = judge.judge(&run("m", &[("item1", &["audeze maxwell"])]), &HashMap::new());
        assert_eq!(
            out.judgments,
            [Judgment { item_id: "item1".into(), keyphrase: "audeze maxwell".into(), relevant: true, source: "fixture".into() }]
        );
        assert!(out.failures.is_empty());
    }

    #[test]
    fn duplicate_pairs_across_runs_call_once() {
        let mut f = FixtureOracle::new();
        f.insert("i", "k", true);
        let judge = Judge::new(&f);
        let runs = [run("a", &[("i", &["k"])]), run("b", &[("i", &["k"])])];
        let out = judge.judge_runs(&runs, &HashMap::new());
        assert_eq!(out.judgments.len(), 1);
        assert_eq!(judge.calls(), 1);
    }

    #[test]
    fn warm_cache_issues_no_calls() {
        let judge = Judge::new(&HeuristicOracle).with_max_in_flight(3);
        let titles: HashMap<String, String> =
            [("i1", "red shoe size 9"), ("i2", "red shoe size 9")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        let r = run("a", &[("i1", &["red shoe", "blue hat"]), ("i2", &["red shoe"])]);
        let first = judge.judge(&r, &titles);
        // Same title, same keyphrase across items shares one call.
        assert_eq!(judge.calls(), 2);
        let second = judge.judge(&r, &titles);
        assert_eq!(judge.calls(), 2);
        assert_eq!(first.judgments, second.judgments);
        assert_eq!(first.judgments.len(), 3);
    }

    struct Flaky {
        fail_first: AtomicUsize,
        answer: Result<bool, OracleError>,
    }

    impl RelevanceOracle for Flaky {
        fn id(&self) -> &str {
            "flaky"
        }
        fn judge(&self, _: &str, _: &str, _: &str) -> Result<bool, OracleError> {
            if self.fail_first.load(Ordering::SeqCst) > 0 {
                self.fail_first.fetch_sub(1, Ordering::SeqCst);
                return Err(OracleError::Transient("down".into()));
            }
            self.answer.clone()
        }
    }

    #[test]
    fn transient_errors_are_retried() {
        let o = Flaky { fail_first: AtomicUsize::new(2), answer: Ok(true) };
        let judge = Judge::new(&o).with_retries(2, Duration::ZERO);
        let out = judge.judge(&run("a", &[("i", &["k"])]), &HashMap::new());
        assert_eq!(out.judgments.len(), 1);
        assert_eq!(judge.calls(), 3);
    }

    #[test]
    fn failures_are_recorded_not_defaulted() {
        let o = Flaky { fail_first: AtomicUsize::new(10), answer: Ok(true) };
        let judge = Judge::new(&o).with_retries(1, Duration::ZERO);
        let out = judge.judge(&run("a", &[("i", &["k"])]), &HashMap::new());
        assert!(out.judgments.is_empty());
        assert_eq!(out.failures.len(), 1);
        assert!(out.failures[0].message.contains("down"));

        let bad = Flaky { fail_first: AtomicUsize::new(0), answer: Err(OracleError::BadAnswer("perhaps".into())) };
        let judge = Judge::new(&bad);
        let out = judge.judge(&run("a", &[("i", &["k"])]), &HashMap::new());
        assert_eq!(judge.calls(), 1);
        assert!(out.failures[0].message.contains("perhaps"));
    }
}
