use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Duration;

use thiserror::Error;

use super::EvalError;
use crate::vocab::{tokenize, DefaultNormalizer};

/// Relevance prompt with `{title}` and `{keyphrase}` placeholders.
pub const PROMPT_TEMPLATE: &str = include_str!("../../prompts/relevance.txt");

pub fn render_prompt(template: &str, title: &str, keyphrase: &str) -> String {
    template.replace("{title}", title).replace("{keyphrase}", keyphrase)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    /// Worth retrying: transport failure, timeout, server error.
    #[error("oracle unavailable: {0}")]
    Transient(String),

    /// The oracle answered but not with yes or no.
    #[error("unparseable oracle answer: {0:?}")]
    BadAnswer(String),

    /// The oracle has no opinion on this pair.
    #[error("no judgment available: {0}")]
    Missing(String),
}

impl OracleError {
    pub fn is_transient(&self) -> bool {
        matches!(self, OracleError::Transient(_))
    }
}

pub trait RelevanceOracle: Send + Sync {
    /// Identifier stored on every judgment.
    fn id(&self) -> &str;

    /// Whether `keyphrase` is relevant to the item.
    fn judge(&self, item_id: &str, title: &str, keyphrase: &str) -> Result<bool, OracleError>;

    /// Whether answers depend on the title rather than the item id. Cached
    /// answers are shared across items with the same title only when true.
    fn keyed_by_title(&self) -> bool {
        true
    }
}

/// `yes`/`no`, case-insensitive, tolerant of surrounding whitespace and a
/// trailing period.
pub fn parse_yes_no(text: &str) -> Option<bool> {
    let t = text.trim().trim_end_matches(['.', '!']).trim().to_ascii_lowercase();
    match t.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Judgments read from a TSV of `item_id \t keyphrase \t yes|no`.
#[derive(Debug, Clone, Default)]
pub struct FixtureOracle {
    answers: HashMap<(String, String), bool>,
}

impl FixtureOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, item_id: &str, keyphrase: &str, relevant: bool) {
        self.answers.insert((item_id.to_owned(), keyphrase.to_owned()), relevant);
    }

    pub fn from_reader<R: BufRead>(reader: R, source: &str) -> Result<Self, EvalError> {
        let mut oracle = Self::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let parsed = (cols.len() == 3).then(|| parse_yes_no(cols[2])).flatten();
            match parsed {
                Some(v) => oracle.insert(cols[0].trim(), cols[1].trim(), v),
                // Tolerate a header on the first line.
                None if i == 0 => continue,
                None => {
                    return Err(EvalError::Parse {
                        path: source.to_owned(),
                        line: i + 1,
                        message: "expected item_id, keyphrase, yes|no".into(),
                    })
                }
            }
        }
        Ok(oracle)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        Self::from_reader(BufReader::new(File::open(path)?), &path.display().to_string())
    }
}

impl RelevanceOracle for FixtureOracle {
    fn id(&self) -> &str {
        "fixture"
    }

    fn judge(&self, item_id: &str, _title: &str, keyphrase: &str) -> Result<bool, OracleError> {
        self.answers
            .get(&(item_id.to_owned(), keyphrase.to_owned()))
            .copied()
            .ok_or_else(|| OracleError::Missing(format!("{item_id} / {keyphrase}")))
    }

    fn keyed_by_title(&self) -> bool {
        false
    }
}

/// Relevant iff at least half of the keyphrase's tokens occur in the title.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicOracle;

impl RelevanceOracle for HeuristicOracle {
    fn id(&self) -> &str {
        "heuristic"
    }

    fn judge(&self, _item_id: &str, title: &str, keyphrase: &str) -> Result<bool, OracleError> {
        let n = DefaultNormalizer::new();
        let title: HashSet<String> = tokenize(title, &n).into_iter().collect();
        let kp: HashSet<String> = tokenize(keyphrase, &n).into_iter().collect();
        if kp.is_empty() {
            return Ok(false);
        }
        let hits = kp.iter().filter(|t| title.contains(*t)).count();
        Ok(2 * hits >= kp.len())
    }
}

/// Completion endpoint client.
///
/// POSTs `{"prompt": "<rendered template>"}` and reads the answer from the
/// response: a JSON object with `text`, `response`, `completion`,
/// `choices[0].text` or `choices[0].message.content`, or else the raw body.
pub struct HttpOracle {
    url: String,
    template: String,
    agent: ureq::Agent,
}

impl HttpOracle {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self { url: url.into(), template: PROMPT_TEMPLATE.to_owned(), agent }
    }

    pub fn with_template(mut self, template: impl Into<String>) -> Self {
        self.template = template.into();
        self
    }
}

fn extract_answer(body: &str) -> String {
    let Ok(value) = serde_json::from_str::<serde_json::Value>(body) else {
        return body.to_owned();
    };
    let pointers = ["/text", "/response", "/completion", "/choices/0/text", "/choices/0/message/content"];
    pointers
        .iter()
        .find_map(|p| value.pointer(p).and_then(|v| v.as_str()))
        .map(str::to_owned)
        .unwrap_or_else(|| value.as_str().map(str::to_owned).unwrap_or_else(|| body.to_owned()))
}

impl RelevanceOracle for HttpOracle {
    fn id(&self) -> &str {
        "http"
    }

    fn judge(&self, _item_id: &str, title: &str, keyphrase: &str) -> Result<bool, OracleError> {
        let prompt = render_prompt(&self.template, title, keyphrase);
        let body = serde_json::json!({ "prompt": prompt }).to_string();
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| match e {
                ureq::Error::StatusCode(code) if (400..500).contains(&code) && code != 429 => {
                    OracleError::BadAnswer(format!("HTTP {code}"))
                }
                other => OracleError::Transient(other.to_string()),
            })?;
        let text = resp.body_mut().read_to_string().map_err(|e| OracleError::Transient(e.to_string()))?;
        let answer = extract_answer(&text);
        parse_yes_no(&answer).ok_or(OracleError::BadAnswer(answer))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yes_no_parsing() {
        assert_eq!(parse_yes_no(" Yes\n"), Some(true));
        assert_eq!(parse_yes_no("NO."), Some(false));
        assert_eq!(parse_yes_no("maybe"), None);
        assert_eq!(parse_yes_no("yes, because"), None);
        assert_eq!(parse_yes_no(""), None);
    }

    #[test]
    fn template_placeholders() {
        assert!(PROMPT_TEMPLATE.starts_with("Below is an instruction that describes a task."));
        assert!(PROMPT_TEMPLATE.contains("### Instruction:\n"));
        assert!(PROMPT_TEMPLATE.trim_end().ends_with("### Response:"));
        let p = render_prompt(PROMPT_TEMPLATE, "audeze maxwell", "xbox headset");
        assert!(p.contains("title: \"audeze maxwell\", determine whether the keyphrase: \"xbox headset\", is relevant"));
        assert!(!p.contains('{'));
    }

    #[test]
    fn fixture_passthrough() {
        let o = FixtureOracle::from_reader("item_id\tkeyphrase\tlabel\nitem1\taudeze maxwell\tyes\nitem1\tfoo\tNo\n".as_bytes(), "f")
            .unwrap();
        assert_eq!(o.judge("item1", "", "audeze maxwell"), Ok(true));
        assert_eq!(o.judge("item1", "", "foo"), Ok(false));
        assert!(matches!(o.judge("item2", "", "foo"), Err(OracleError::Missing(_))));
        assert!(FixtureOracle::from_reader("a\tb\tyes\na\tb\tperhaps\n".as_bytes(), "f").is_err());
    }

    #[test]
    fn heuristic_half_rule() {
        let h = HeuristicOracle;
        assert_eq!(h.judge("", "Audeze Maxwell gaming headphones", "audeze maxwell"), Ok(true));
        assert_eq!(h.judge("", "audeze maxwell", "audeze wireless"), Ok(true));
        assert_eq!(h.judge("", "audeze maxwell", "bose wireless audeze"), Ok(false));
        assert_eq!(h.judge("", "audeze", ""), Ok(false));
    }

    #[test]
    fn answer_extraction() {
        assert_eq!(extract_answer(r#"{"text":" yes"}"#), " yes");
        assert_eq!(extract_answer(r#"{"choices":[{"message":{"content":"No"}}]}"#), "No");
        assert_eq!(extract_answer("yes"), "yes");
        assert_eq!(extract_answer(r#""no""#), "no");
    }
}
