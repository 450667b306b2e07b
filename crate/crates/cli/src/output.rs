use graphex::{BatchResult, Prediction};
use serde::Serialize;

/// Compact JSON for a prediction list. Both `infer` and `serve` emit
/// predictions through this function so their bytes match.
pub fn predictions_json(preds: &[Prediction]) -> String {
    serde_json::to_string(preds).expect("predictions serialize")
}

/// One line of batch inference output.
#[derive(Debug, Serialize)]
pub struct InferLine<'a> {
    pub item_id: &'a str,
    pub predictions: &'a [Prediction],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl<'a> InferLine<'a> {
    pub fn from_result(r: &'a BatchResult) -> Self {
        match &r.outcome {
            Ok(p) => Self { item_id: &r.item_id, predictions: p, error: None },
            Err(e) => Self { item_id: &r.item_id, predictions: &[], error: Some(e.to_string()) },
        }
    }
}
