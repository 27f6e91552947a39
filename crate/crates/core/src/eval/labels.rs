use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phase::Phase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    PartialPass,
}

impl Outcome {
    /// Row order used in report tables.
    pub const ALL: [Outcome; 3] = [Outcome::Pass, Outcome::Fail, Outcome::PartialPass];

    pub fn label(self) -> &'static str {
        match self {
            Outcome::Pass => "pass",
            Outcome::Fail => "fail",
            Outcome::PartialPass => "partial_pass",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Outcome::Pass => "Pass",
            Outcome::Fail => "Fail",
            Outcome::PartialPass => "Partial Pass",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown outcome {0:?} (expected pass, fail or partial_pass)")]
pub struct UnknownOutcome(pub String);

impl FromStr for Outcome {
    type Err = UnknownOutcome;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace([' ', '-'], "_").as_str() {
            "pass" => Ok(Outcome::Pass),
            "fail" => Ok(Outcome::Fail),
            "partial_pass" | "partial" => Ok(Outcome::PartialPass),
            _ => Err(UnknownOutcome(s.to_string())),
        }
    }
}

/// One human judgement. Label files and the service feedback log are JSON
/// Lines of these records; later lines supersede earlier ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    pub phase: Phase,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    pub labeler: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("{0}")]
    Io(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no label for {phase}: {}", .ids.join(", "))]
    Missing { phase: Phase, ids: Vec<String> },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelStore {
    records: Vec<LabelRecord>,
}

impl LabelStore {
    pub fn new(records: Vec<LabelRecord>) -> Self {
        LabelStore { records }
    }

    /// JSON Lines; blank lines are skipped.
    pub fn parse_jsonl(source: &str) -> Result<Self, LabelError> {
        let mut records = Vec::new();
        for (i, line) in source.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record =
                serde_json::from_str(line).map_err(|e| LabelError::Parse { line: i + 1, message: e.to_string() })?;
            records.push(record);
        }
        Ok(LabelStore { records })
    }

    /// A missing file is an empty store.
    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, LabelError> {
        let path = path.as_ref();
        match std::fs::read_to_string(path) {
            Ok(source) => Self::parse_jsonl(&source),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(LabelError::Io(format!("{}: {e}", path.display()))),
        }
    }

    pub fn records(&self) -> &[LabelRecord] {
        &self.records
    }

    pub fn push(&mut self, record: LabelRecord) {
        self.records.push(record);
    }

    /// Latest record per (id, phase, labeler).
    pub fn current_by_labeler(&self) -> HashMap<(String, Phase, String), &LabelRecord> {
        let mut out = HashMap::new();
        for r in &self.records {
            out.insert((r.id.clone(), r.phase, r.labeler.clone()), r);
        }
        out
    }

    /// The most recent record for a case in a phase, across labelers.
    pub fn latest(&self, id: &str, phase: Phase) -> Option<&LabelRecord> {
        self.records.iter().rev().find(|r| r.id == id && r.phase == phase)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_spellings() {
        assert_eq!("Partial Pass".parse::<Outcome>(), Ok(Outcome::PartialPass));
        assert_eq!("partial-pass".parse::<Outcome>(), Ok(Outcome::PartialPass));
        assert_eq!("PASS".parse::<Outcome>(), Ok(Outcome::Pass));
        assert!("maybe".parse::<Outcome>().is_err());
        assert!(serde_json::from_str::<Outcome>("\"maybe\"").is_err());
    }

    #[test]
    fn latest_record_wins() {
        let src = r#"{"id": "q17", "phase": "phase2", "outcome": "fail", "labeler": "ana"}

{"id": "q17", "phase": "phase2", "outcome": "pass", "labeler": "ana", "rationale": "runs as is"}
{"id": "q17", "phase": "phase1", "outcome": "fail", "labeler": "bo"}"#;
        let store = LabelStore::parse_jsonl(src).unwrap();
        assert_eq!(store.records().len(), 3);
        assert_eq!(store.latest("q17", Phase::SchemaPlusContext).unwrap().outcome, Outcome::Pass);
        assert_eq!(store.current_by_labeler().len(), 2);
        assert!(store.latest("q18", Phase::SchemaOnly).is_none());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = LabelStore::parse_jsonl("{}\n").unwrap_err();
        assert!(matches!(err, LabelError::Parse { line: 1, .. }));
    }

    #[test]
    fn missing_file_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(LabelStore::load_file(dir.path().join("none.jsonl")).unwrap().records().is_empty());
    }
}
