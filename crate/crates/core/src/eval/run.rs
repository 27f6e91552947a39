use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::{Dataset, NlqCase};
use super::labels::{LabelError, LabelStore, Outcome};
use crate::llm::{ExtractionKind, ProviderMode};
use crate::phase::Phase;
use crate::pipeline::{PartialProvenance, PhaseEnvironment, QueryRequest, QueryResult, Stage, Workbench};
use crate::scalar::VectorScalar;
use crate::util::bounded_map;

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CaseResult {
    Answered { result: Box<QueryResult> },
    Errored { stage: Stage, error: String, partial: PartialProvenance },
}

impl CaseResult {
    pub fn answered(&self) -> Option<&QueryResult> {
        match self {
            CaseResult::Answered { result } => Some(result),
            CaseResult::Errored { .. } => None,
        }
    }
}

/// Results of one phase over a dataset, keyed by case id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRun {
    pub phase: Phase,
    pub seed: u64,
    pub provider_id: String,
    pub provider_mode: ProviderMode,
    pub embedder_id: String,
    pub corpus_hash: String,
    pub top_k: usize,
    /// Order the cases were presented in.
    pub presentation_order: Vec<String>,
    pub results: BTreeMap<String, CaseResult>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("environment is for {found}, run requested {expected}")]
    PhaseMismatch { expected: Phase, found: Phase },
}

/// Seeded permutation of case ids.
pub fn presentation_order(dataset: &Dataset, seed: u64) -> Vec<String> {
    let mut ids: Vec<String> = dataset.cases.iter().map(|c| c.id.clone()).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids
}

/// Answer every case of `dataset` under `phase`, in a seeded random order
/// with at most `max_in_flight` concurrent requests. Provider failures are
/// recorded per case and do not stop the run.
pub fn run_phase<T: VectorScalar>(
    dataset: &Dataset,
    phase: Phase,
    env: &PhaseEnvironment<T>,
    workbench: &Workbench<T>,
    seed: u64,
    max_in_flight: usize,
) -> Result<PhaseRun, RunError> {
    if env.phase != phase {
        return Err(RunError::PhaseMismatch { expected: phase, found: env.phase });
    }
    let order = presentation_order(dataset, seed);
    let cases: Vec<&NlqCase> = order.iter().filter_map(|id| dataset.get(id)).collect();
    let outcomes = bounded_map(&cases, max_in_flight, |case| {
        let request = QueryRequest {
            nlq: case.nlq.clone(),
            phase,
            time_to_create: Some(case.time_to_create),
            nlq_id: Some(case.id.clone()),
        };
        match workbench.answer_nlq(&request, env) {
            Ok(result) => CaseResult::Answered { result: Box::new(result) },
            Err(e) => CaseResult::Errored { stage: e.stage, error: e.source.to_string(), partial: e.partial },
        }
    });
    Ok(PhaseRun {
        phase,
        seed,
        provider_id: workbench.completer.id(),
        provider_mode: workbench.completer.mode(),
        embedder_id: env.embedder_id.clone(),
        corpus_hash: env.corpus_hash(),
        top_k: workbench.top_k,
        results: cases.iter().map(|c| c.id.clone()).zip(outcomes).collect(),
        presentation_order: order,
    })
}

impl PhaseRun {
    pub fn file_name(phase: Phase) -> String {
        format!("{}.run.json", phase.id())
    }

    pub fn save_in(&self, dir: &Path) -> Result<PathBuf, RunError> {
        let path = dir.join(Self::file_name(self.phase));
        let io = |e: std::io::Error| RunError::Io { path: path.clone(), message: e.to_string() };
        std::fs::create_dir_all(dir).map_err(io)?;
        let json = serde_json::to_string_pretty(self).expect("run serializes");
        std::fs::write(&path, json).map_err(io)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let err = |message: String| RunError::Io { path: path.to_path_buf(), message };
        let source = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&source).map_err(|e| err(e.to_string()))
    }

    /// Every `phaseN.run.json` in `dir`, in phase order.
    pub fn load_dir(dir: &Path) -> Result<Vec<Self>, RunError> {
        let mut runs = Vec::new();
        for phase in Phase::ALL {
            let path = dir.join(Self::file_name(phase));
            if path.exists() {
                runs.push(Self::load(&path)?);
            }
        }
        Ok(runs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum LabelSource {
    Human { labeler: String },
    /// Machine-suggested from the result shape; never overrides a human.
    Suggested { rule: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCase {
    pub id: String,
    pub phase: Phase,
    pub outcome: Outcome,
    pub label: LabelSource,
}

/// Auto-label rule for a result without a human label.
pub fn suggest_outcome(result: &CaseResult) -> (Outcome, &'static str) {
    match result {
        CaseResult::Errored { .. } => (Outcome::Fail, "provider error"),
        CaseResult::Answered { result } => match result.extraction.kind {
            ExtractionKind::Refusal => (Outcome::Fail, "refusal"),
            ExtractionKind::Unparseable => (Outcome::Fail, "unparseable response"),
            ExtractionKind::Sql => match &result.validation {
                Some(v) if v.ok => (Outcome::Pass, "sql validates against schema"),
                _ => (Outcome::PartialPass, "sql references unknown identifiers"),
            },
        },
    }
}

/// Attach one outcome to every case of a run. Human labels win; without one
/// a suggested label is used when `auto_label` is set, otherwise the missing
/// ids are reported.
pub fn apply_labels(run: &PhaseRun, labels: &LabelStore, auto_label: bool) -> Result<Vec<LabeledCase>, LabelError> {
    let mut out = Vec::with_capacity(run.results.len());
    let mut missing = Vec::new();
    for (id, result) in &run.results {
        let (outcome, label) = match labels.latest(id, run.phase) {
            Some(r) => (r.outcome, LabelSource::Human { labeler: r.labeler.clone() }),
            None if auto_label => {
                let (outcome, rule) = suggest_outcome(result);
                (outcome, LabelSource::Suggested { rule: rule.to_string() })
            }
            None => {
                missing.push(id.clone());
                continue;
            }
        };
        out.push(LabeledCase { id: id.clone(), phase: run.phase, outcome, label });
    }
    if !missing.is_empty() {
        return Err(LabelError::Missing { phase: run.phase, ids: missing });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::context::{ChunkParams, TrigramEmbedder};
    use crate::eval::labels::LabelRecord;
    use crate::llm::ReplayProvider;
    use crate::pipeline::build_environments;
    use crate::pipeline::tests::sources;
    use crate::util::FixedClock;

    const REPLAY: &str = r#"[
      {"phase": "phase2", "nlq_id": "a", "response": "SELECT NAME FROM PRODUCT_FAMILY"},
      {"phase": "phase2", "nlq_id": "b", "response": "I cannot create the query."},
      {"phase": "phase2", "nlq_id": "c", "response": "SELECT p.BOGUS FROM PRODUCT_FAMILY p"}
    ]"#;

    fn dataset() -> Dataset {
        Dataset::parse(
            r#"[{"id": "a", "nlq": "names"}, {"id": "b", "nlq": "counts"}, {"id": "c", "nlq": "bogus"}, {"id": "d", "nlq": "missing"}]"#,
        )
        .unwrap()
    }

    fn run(seed: u64) -> PhaseRun {
        let envs = build_environments(&sources(), ChunkParams::default(), &TrigramEmbedder::default()).unwrap();
        let mut wb: Workbench<f64> =
            Workbench::new(Arc::new(TrigramEmbedder::default()), Arc::new(ReplayProvider::parse(REPLAY).unwrap()));
        wb.clock = Arc::new(FixedClock(0));
        run_phase(&dataset(), Phase::SchemaPlusContext, &envs[&Phase::SchemaPlusContext], &wb, seed, 3).unwrap()
    }

    #[test]
    fn seeded_order_and_order_independent_results() {
        let r1 = run(1);
        let r2 = run(2);
        assert_eq!(r1, run(1));
        assert_ne!(r1.presentation_order, r2.presentation_order);
        assert_eq!(r1.results, r2.results);
        assert!(matches!(r1.results["d"], CaseResult::Errored { stage: Stage::Completion, .. }));
    }

    #[test]
    fn auto_labels_follow_result_shape() {
        let labeled = apply_labels(&run(1), &LabelStore::default(), true).unwrap();
        let outcomes: Vec<(&str, Outcome)> = labeled.iter().map(|l| (l.id.as_str(), l.outcome)).collect();
        assert_eq!(
            outcomes,
            vec![("a", Outcome::Pass), ("b", Outcome::Fail), ("c", Outcome::PartialPass), ("d", Outcome::Fail)]
        );
        assert!(labeled.iter().all(|l| matches!(l.label, LabelSource::Suggested { .. })));
    }

    #[test]
    fn human_labels_win_and_gaps_are_reported() {
        let mut store = LabelStore::default();
        store.push(LabelRecord {
            id: "b".into(),
            phase: Phase::SchemaPlusContext,
            outcome: Outcome::PartialPass,
            rationale: None,
            labeler: "expert".into(),
            timestamp_ms: None,
        });
        let labeled = apply_labels(&run(1), &store, true).unwrap();
        assert_eq!(labeled[1].outcome, Outcome::PartialPass);
        assert_eq!(labeled[1].label, LabelSource::Human { labeler: "expert".into() });
        let err = apply_labels(&run(1), &store, false).unwrap_err();
        assert_eq!(err, LabelError::Missing { phase: Phase::SchemaPlusContext, ids: vec!["a".into(), "c".into(), "d".into()] });
    }

    #[test]
    fn run_files_round_trip() {
        let r = run(5);
        let dir = tempfile::tempdir().unwrap();
        let path = r.save_in(dir.path()).unwrap();
        assert!(path.ends_with("phase2.run.json"));
        assert_eq!(PhaseRun::load_dir(dir.path()).unwrap(), vec![r]);
    }
}
