use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RunPrediction {
    pub keyphrase: String,
    pub search: f64,
}

/// Predictions of one system, keyed by item id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelRun {
    pub name: String,
    pub items: BTreeMap<String, Vec<RunPrediction>>,
}

#[derive(Deserialize)]
struct RunLine {
    item_id: String,
    #[serde(default)]
    predictions: Vec<RunPrediction>,
}

impl ModelRun {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), items: BTreeMap::new() }
    }

    /// Add an item's predictions. Repeated keyphrases within the item are dropped.
    pub fn push(&mut self, item_id: impl Into<String>, preds: impl IntoIterator<Item = (String, f64)>) {
        let entry = self.items.entry(item_id.into()).or_default();
        for (keyphrase, search) in preds {
            if !entry.iter().any(|p| p.keyphrase == keyphrase) {
                entry.push(RunPrediction { keyphrase, search });
            }
        }
    }

    /// Parse the JSONL written by `graphex infer`: one
    /// `{"item_id": .., "predictions": [{"keyphrase": .., "search": ..}, ..]}` per line.
    pub fn from_jsonl<R: BufRead>(name: &str, reader: R, source: &str) -> Result<Self, EvalError> {
        let mut run = ModelRun::new(name);
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: RunLine = serde_json::from_str(&line).map_err(|e| EvalError::Parse {
                path: source.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })?;
            run.push(parsed.item_id, parsed.predictions.into_iter().map(|p| (p.keyphrase, p.search)));
        }
        Ok(run)
    }

    pub fn load(name: &str, path: &Path) -> Result<Self, EvalError> {
        let file = File::open(path)?;
        Self::from_jsonl(name, BufReader::new(file), &path.display().to_string())
    }

    pub fn num_predictions(&self) -> usize {
        self.items.values().map(Vec::len).sum()
    }

    pub fn predictions(&self, item_id: &str) -> &[RunPrediction] {
        self.items.get(item_id).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Union of item ids over all runs.
pub(crate) fn all_items(runs: &[ModelRun]) -> BTreeSet<&str> {
    runs.iter().flat_map(|r| r.items.keys().map(String::as_str)).collect()
}
