use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sql::{categorize_scores, complexity_score, BandThresholds, ComplexityInput, ComplexityScore, SqlAnalysis, SqlError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{0}")]
    Io(String),
    #[error("invalid dataset: {0}")]
    Parse(String),
    #[error("dataset is empty")]
    Empty,
    #[error("duplicate case id {0}")]
    DuplicateId(String),
    #[error("case {0} has an empty question")]
    EmptyQuestion(String),
    #[error("case id is empty")]
    EmptyId,
    #[error("reference SQL for case {id}: {source}")]
    ReferenceSql { id: String, source: SqlError },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NlqCase {
    pub id: String,
    #[serde(alias = "text")]
    pub nlq: String,
    #[serde(default)]
    pub time_to_create: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_sql: Option<String>,
}

impl NlqCase {
    /// Complexity of the reference answer, when one is given.
    pub fn reference_score(&self) -> Option<Result<ComplexityScore, SqlError>> {
        self.reference_sql.as_deref().map(|sql| {
            let features = SqlAnalysis::parse(sql)?.features();
            Ok(complexity_score(&ComplexityInput { features, time_to_create: self.time_to_create }))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Dataset {
    pub cases: Vec<NlqCase>,
}

impl Dataset {
    pub fn new(cases: Vec<NlqCase>) -> Result<Self, DatasetError> {
        if cases.is_empty() {
            return Err(DatasetError::Empty);
        }
        let mut seen = HashSet::new();
        for c in &cases {
            if c.id.trim().is_empty() {
                return Err(DatasetError::EmptyId);
            }
            if c.nlq.trim().is_empty() {
                return Err(DatasetError::EmptyQuestion(c.id.clone()));
            }
            if !seen.insert(c.id.as_str()) {
                return Err(DatasetError::DuplicateId(c.id.clone()));
            }
            if let Some(Err(source)) = c.reference_score() {
                return Err(DatasetError::ReferenceSql { id: c.id.clone(), source });
            }
        }
        Ok(Dataset { cases })
    }

    pub fn parse(source: &str) -> Result<Self, DatasetError> {
        let cases: Vec<NlqCase> = serde_json::from_str(source).map_err(|e| DatasetError::Parse(e.to_string()))?;
        Self::new(cases)
    }

    pub fn load_file(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&source)
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&NlqCase> {
        self.cases.iter().find(|c| c.id == id)
    }

    /// Band thresholds over the reference-SQL scores, if any case has one.
    pub fn reference_thresholds(&self) -> Option<BandThresholds<f64>> {
        let scores: Vec<f64> =
            self.cases.iter().filter_map(|c| c.reference_score()?.ok()).map(f64::from).collect();
        categorize_scores(&scores).ok().map(|b| b.thresholds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_and_scores_reference() {
        let d = Dataset::parse(
            r#"[{"id": "q1", "nlq": "How many families?", "time_to_create": 3,
                 "reference_sql": "SELECT COUNT(*) FROM PRODUCT_FAMILY WHERE DELETED IS NULL"},
                {"id": "q2", "text": "List groups"}]"#,
        )
        .unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.cases[0].reference_score().unwrap().unwrap(), ComplexityScore(6));
        assert_eq!(d.get("q2").unwrap().time_to_create, 0);
        assert!(d.cases[1].reference_score().is_none());
        assert_eq!(d.reference_thresholds(), Some(BandThresholds { p25: 6.0, p75: 6.0 }));
    }

    #[test]
    fn rejects_bad_datasets() {
        assert!(matches!(Dataset::parse("[]"), Err(DatasetError::Empty)));
        let dup = r#"[{"id": "a", "nlq": "x"}, {"id": "a", "nlq": "y"}]"#;
        assert!(matches!(Dataset::parse(dup), Err(DatasetError::DuplicateId(id)) if id == "a"));
        assert!(matches!(Dataset::parse(r#"[{"id": "a", "nlq": " "}]"#), Err(DatasetError::EmptyQuestion(_))));
        let bad_sql = r#"[{"id": "a", "nlq": "x", "reference_sql": "DELETE FROM T"}]"#;
        assert!(matches!(Dataset::parse(bad_sql), Err(DatasetError::ReferenceSql { .. })));
    }
}
