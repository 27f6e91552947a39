use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::Dataset;
use super::fisher::{fisher_exact_rxc, ContingencyTable, FisherMethod, FisherOptions};
use super::labels::{LabelError, LabelStore, Outcome};
use super::run::{apply_labels, CaseResult, LabelSource, PhaseRun};
use crate::llm::ProviderMode;
use crate::phase::Phase;
use crate::sql::{categorize_scores, five_number_summary, Band, ComplexityScore, FiveNumberSummary};

/// `100 * count / total` in tenths of a percent, rounded half up.
pub fn percent_tenths(count: u64, total: u64) -> Option<u64> {
    (total > 0).then(|| (1000 * count + total / 2) / total)
}

/// One-decimal percentage such as `"8.3%"`; `"n/a"` when `total` is 0.
pub fn format_percent(count: u64, total: u64) -> String {
    match percent_tenths(count, total) {
        Some(t) => format!("{}.{}%", t / 10, t % 10),
        None => "n/a".to_string(),
    }
}

pub fn format_p_value(p: f64) -> String {
    if p >= 1e-3 {
        format!("{p:.4}")
    } else {
        format!("{p:.3e}")
    }
}

/// Outcome x band counts, indexed `[Outcome::index()][Band::index()]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts(pub [[u64; 3]; 3]);

impl OutcomeCounts {
    pub fn add(&mut self, outcome: Outcome, band: Band) {
        self.0[outcome.index()][band.index()] += 1;
    }

    pub fn outcome_total(&self, outcome: Outcome) -> u64 {
        self.0[outcome.index()].iter().sum()
    }

    pub fn band_total(&self, band: Band) -> u64 {
        self.0.iter().map(|r| r[band.index()]).sum()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub outcome: Outcome,
    /// Low, medium, high.
    pub by_band: [u64; 3],
    pub total: u64,
    pub percent: String,
}

/// Outcome rates over the low and medium bands only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetRates {
    pub total: u64,
    pub pass: u64,
    pub fail: u64,
    pub partial_pass: u64,
    pub pass_percent: String,
    pub fail_percent: String,
    pub partial_pass_percent: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub table: ContingencyTable,
    pub p_value: f64,
    pub method: FisherMethod,
}

pub fn run_test(name: &str, table: ContingencyTable, options: &FisherOptions) -> TestReport {
    let result = fisher_exact_rxc::<f64>(&table.cells, options).expect("report tables are at least 2x2");
    TestReport { name: name.to_string(), table, p_value: result.p_value, method: result.method }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: Phase,
    pub title: String,
    pub counts: OutcomeCounts,
    pub rows: Vec<OutcomeRow>,
    pub band_totals: [u64; 3],
    pub total: u64,
    pub excluding_high: SubsetRates,
    pub human_labels: u64,
    pub suggested_labels: u64,
    pub errored: u64,
    pub outcome_by_band: TestReport,
}

fn outcome_by_band_table(counts: &OutcomeCounts) -> ContingencyTable {
    ContingencyTable::new(
        Outcome::ALL.iter().map(|o| o.title().to_string()).collect(),
        Band::ALL.iter().map(|b| b.label().to_string()).collect(),
        counts.0.iter().map(|r| r.to_vec()).collect(),
    )
    .expect("3x3")
}

impl PhaseSummary {
    /// Rows, totals, percentages and the outcome x band test for one
    /// phase's counts.
    pub fn from_counts(phase: Phase, counts: OutcomeCounts, options: &FisherOptions) -> Self {
        let total = counts.total();
        let rows = Outcome::ALL
            .iter()
            .map(|&o| {
                let n = counts.outcome_total(o);
                OutcomeRow { outcome: o, by_band: counts.0[o.index()], total: n, percent: format_percent(n, total) }
            })
            .collect();
        let sub = |o: Outcome| counts.0[o.index()][Band::Low.index()] + counts.0[o.index()][Band::Medium.index()];
        let (pass, fail, partial_pass) = (sub(Outcome::Pass), sub(Outcome::Fail), sub(Outcome::PartialPass));
        let sub_total = pass + fail + partial_pass;
        PhaseSummary {
            phase,
            title: phase.title().to_string(),
            counts,
            rows,
            band_totals: Band::ALL.map(|b| counts.band_total(b)),
            total,
            excluding_high: SubsetRates {
                total: sub_total,
                pass,
                fail,
                partial_pass,
                pass_percent: format_percent(pass, sub_total),
                fail_percent: format_percent(fail, sub_total),
                partial_pass_percent: format_percent(partial_pass, sub_total),
            },
            human_labels: 0,
            suggested_labels: 0,
            errored: 0,
            outcome_by_band: run_test("outcome x complexity band", outcome_by_band_table(&counts), options),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseComparison {
    pub first: Phase,
    pub second: Phase,
    pub tests: Vec<TestReport>,
}

/// The three phase-pair constructions: pass vs the rest, fail vs the rest,
/// and the full outcome table.
pub fn compare_phases(a: (Phase, &OutcomeCounts), b: (Phase, &OutcomeCounts), options: &FisherOptions) -> PhaseComparison {
    let rows = vec![a.0.id().to_string(), b.0.id().to_string()];
    let split = |o: Outcome| -> Vec<Vec<u64>> {
        [a.1, b.1].iter().map(|c| vec![c.outcome_total(o), c.total() - c.outcome_total(o)]).collect()
    };
    let full: Vec<Vec<u64>> =
        [a.1, b.1].iter().map(|c| Outcome::ALL.iter().map(|&o| c.outcome_total(o)).collect()).collect();
    let table = |cols: Vec<&str>, cells| {
        ContingencyTable::new(rows.clone(), cols.into_iter().map(String::from).collect(), cells).expect("2xN")
    };
    PhaseComparison {
        first: a.0,
        second: b.0,
        tests: vec![
            run_test("pass vs non-pass (2x2)", table(vec!["pass", "non-pass"], split(Outcome::Pass)), options),
            run_test("fail vs non-fail (2x2)", table(vec!["fail", "non-fail"], split(Outcome::Fail)), options),
            run_test(
                "full outcome (2x3)",
                table(Outcome::ALL.iter().map(|o| o.label()).collect(), full),
                options,
            ),
        ],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    Reference,
    Generated { phase: Phase },
    TimeOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasePhaseRow {
    pub phase: Phase,
    pub outcome: Outcome,
    pub label: LabelSource,
    /// Extraction kind, or `"error"` for provider failures.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_score: Option<ComplexityScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub id: String,
    pub score: ComplexityScore,
    pub score_source: ScoreSource,
    pub band: Band,
    pub phases: Vec<CasePhaseRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandingReport {
    pub method: String,
    pub p25: ComplexityScore,
    pub p75: ComplexityScore,
    /// Low, medium, high.
    pub counts: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxPoint {
    pub id: String,
    pub score: ComplexityScore,
    pub band: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotData {
    pub summary: FiveNumberSummary,
    pub points: Vec<BoxPoint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInfo {
    pub phase: Phase,
    pub seed: u64,
    pub provider_id: String,
    pub provider_mode: ProviderMode,
    pub embedder_id: String,
    pub corpus_hash: String,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub dataset_size: usize,
    pub runs: Vec<RunInfo>,
    pub auto_label: bool,
    pub fisher_max_tables: u64,
    pub monte_carlo_draws: u64,
    pub monte_carlo_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    pub banding: BandingReport,
    pub boxplot: BoxplotData,
    pub phases: Vec<PhaseSummary>,
    pub comparisons: Vec<PhaseComparison>,
    pub cases: Vec<CaseRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportOptions {
    pub auto_label: bool,
    pub fisher: FisherOptions,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { auto_label: true, fisher: FisherOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("no phase runs to report on")]
    NoRuns,
    #[error("two runs for {0}")]
    DuplicatePhase(Phase),
    #[error("run for {phase} does not match the dataset: {message}")]
    Mismatch { phase: Phase, message: String },
    #[error(transparent)]
    Labels(#[from] LabelError),
}

fn generated_score(result: &CaseResult) -> Option<ComplexityScore> {
    result.answered().and_then(|r| r.score)
}

fn case_score(
    dataset: &Dataset,
    id: &str,
    runs: &BTreeMap<Phase, &PhaseRun>,
) -> (ComplexityScore, ScoreSource) {
    let case = dataset.get(id).expect("checked");
    if let Some(Ok(score)) = case.reference_score() {
        return (score, ScoreSource::Reference);
    }
    for phase in [Phase::SchemaPlusContext, Phase::NarrowedSchema, Phase::SchemaOnly] {
        if let Some(score) = runs.get(&phase).and_then(|r| r.results.get(id)).and_then(generated_score) {
            return (score, ScoreSource::Generated { phase });
        }
    }
    (ComplexityScore(case.time_to_create), ScoreSource::TimeOnly)
}

/// Label, band and summarize phase runs.
///
/// Each case is banded once: by the score of its reference SQL, else by
/// the score of SQL generated in phase 2, 3 or 1 (first available), else
/// by its creation time alone. Bands are shared by every phase table.
pub fn build_report(
    dataset: &Dataset,
    runs: &[PhaseRun],
    labels: &LabelStore,
    options: &ReportOptions,
) -> Result<EvalReport, ReportError> {
    if runs.is_empty() {
        return Err(ReportError::NoRuns);
    }
    let mut by_phase = BTreeMap::new();
    for run in runs {
        if by_phase.insert(run.phase, run).is_some() {
            return Err(ReportError::DuplicatePhase(run.phase));
        }
        let ids: Vec<&String> = run.results.keys().collect();
        let mut expected: Vec<&String> = dataset.cases.iter().map(|c| &c.id).collect();
        expected.sort();
        if ids != expected {
            return Err(ReportError::Mismatch {
                phase: run.phase,
                message: format!("{} results for {} cases", ids.len(), expected.len()),
            });
        }
    }

    let mut ids: Vec<String> = dataset.cases.iter().map(|c| c.id.clone()).collect();
    ids.sort();
    let scored: Vec<(ComplexityScore, ScoreSource)> = ids.iter().map(|id| case_score(dataset, id, &by_phase)).collect();
    let scores: Vec<ComplexityScore> = scored.iter().map(|s| s.0).collect();
    let banding = categorize_scores(&scores).expect("dataset is non-empty");
    let bands: BTreeMap<&str, Band> = ids.iter().map(String::as_str).zip(banding.bands.iter().copied()).collect();

    let mut cases: Vec<CaseRow> = ids
        .iter()
        .zip(&scored)
        .map(|(id, &(score, score_source))| CaseRow {
            id: id.clone(),
            score,
            score_source,
            band: bands[id.as_str()],
            phases: Vec::new(),
        })
        .collect();

    let mut phases = Vec::new();
    let mut counts_by_phase = BTreeMap::new();
    for (&phase, run) in &by_phase {
        let labeled = apply_labels(run, labels, options.auto_label)?;
        let mut counts = OutcomeCounts::default();
        let (mut human, mut suggested, mut errored) = (0, 0, 0);
        for (row, l) in cases.iter_mut().zip(&labeled) {
            debug_assert_eq!(row.id, l.id);
            counts.add(l.outcome, row.band);
            match l.label {
                LabelSource::Human { .. } => human += 1,
                LabelSource::Suggested { .. } => suggested += 1,
            }
            let result = &run.results[&l.id];
            let kind = match result {
                CaseResult::Answered { result } => result.extraction.kind.label(),
                CaseResult::Errored { .. } => {
                    errored += 1;
                    "error"
                }
            };
            row.phases.push(CasePhaseRow {
                phase,
                outcome: l.outcome,
                label: l.label.clone(),
                kind: kind.to_string(),
                generated_score: generated_score(result),
            });
        }
        let mut summary = PhaseSummary::from_counts(phase, counts, &options.fisher);
        summary.human_labels = human;
        summary.suggested_labels = suggested;
        summary.errored = errored;
        phases.push(summary);
        counts_by_phase.insert(phase, counts);
    }

    let present: Vec<Phase> = counts_by_phase.keys().copied().collect();
    let mut comparisons = Vec::new();
    for (i, &a) in present.iter().enumerate() {
        for &b in &present[i + 1..] {
            comparisons.push(compare_phases((a, &counts_by_phase[&a]), (b, &counts_by_phase[&b]), &options.fisher));
        }
    }

    Ok(EvalReport {
        metadata: ReportMetadata {
            dataset_size: dataset.len(),
            runs: by_phase
                .values()
                .map(|r| RunInfo {
                    phase: r.phase,
                    seed: r.seed,
                    provider_id: r.provider_id.clone(),
                    provider_mode: r.provider_mode,
                    embedder_id: r.embedder_id.clone(),
                    corpus_hash: r.corpus_hash.clone(),
                    top_k: r.top_k,
                })
                .collect(),
            auto_label: options.auto_label,
            fisher_max_tables: options.fisher.max_tables,
            monte_carlo_draws: options.fisher.mc_draws,
            monte_carlo_seed: options.fisher.seed,
        },
        banding: BandingReport {
            method: banding.method.clone(),
            p25: banding.thresholds.p25,
            p75: banding.thresholds.p75,
            counts: banding.counts,
        },
        boxplot: BoxplotData {
            summary: five_number_summary(&scores).expect("non-empty"),
            points: cases.iter().map(|c| BoxPoint { id: c.id.clone(), score: c.score, band: c.band }).collect(),
        },
        phases,
        comparisons,
        cases,
    })
}

fn describe_method(method: &FisherMethod) -> String {
    match method {
        FisherMethod::Exact { tables } => format!("exact, {tables} tables"),
        FisherMethod::MonteCarlo { draws, std_error, .. } => format!("Monte Carlo, {draws} draws, s.e. {std_error:.2e}"),
        FisherMethod::Degenerate => "degenerate margins".to_string(),
    }
}

fn write_phase_table(out: &mut String, s: &PhaseSummary) {
    let _ = writeln!(out, "{}", s.title);
    let _ = writeln!(out, "{:<14}{:>6}{:>8}{:>6}{:>7}  Percent", "Result", "Low", "Medium", "High", "Total");
    for row in &s.rows {
        let [l, m, h] = row.by_band;
        let _ = writeln!(
            out,
            "{:<14}{:>6}{:>8}{:>6}{:>7}  ({})",
            row.outcome.title(),
            l,
            m,
            h,
            row.total,
            row.percent
        );
    }
    let [l, m, h] = s.band_totals;
    let _ = writeln!(out, "{:<14}{:>6}{:>8}{:>6}{:>7}", "Total", l, m, h, s.total);
    let e = &s.excluding_high;
    let _ = writeln!(
        out,
        "Low and medium only: pass {}/{} ({}), fail {}/{} ({}), partial pass {}/{} ({})",
        e.pass, e.total, e.pass_percent, e.fail, e.total, e.fail_percent, e.partial_pass, e.total, e.partial_pass_percent
    );
    let _ = writeln!(
        out,
        "Labels: {} human, {} suggested; provider errors: {}",
        s.human_labels, s.suggested_labels, s.errored
    );
    let t = &s.outcome_by_band;
    let _ = writeln!(out, "Fisher exact, {}: p = {} ({})", t.name, format_p_value(t.p_value), describe_method(&t.method));
}

/// Plain-text rendering of the report tables.
pub fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    let b = &report.banding;
    let _ = writeln!(
        out,
        "Complexity bands ({}): p25 = {}, p75 = {}; low {}, medium {}, high {} of {}",
        b.method,
        b.p25.value(),
        b.p75.value(),
        b.counts[0],
        b.counts[1],
        b.counts[2],
        report.metadata.dataset_size
    );
    let s = &report.boxplot.summary;
    let _ = writeln!(
        out,
        "Score summary: min {}, p25 {}, median {}, p75 {}, max {}",
        s.min, s.p25, s.median, s.p75, s.max
    );
    for phase in &report.phases {
        out.push('\n');
        write_phase_table(&mut out, phase);
    }
    if !report.comparisons.is_empty() {
        let _ = writeln!(out, "\nPhase comparisons (Fisher exact)");
        for c in &report.comparisons {
            for t in &c.tests {
                let _ = writeln!(
                    out,
                    "{} vs {}, {}: [{}] p = {} ({})",
                    c.first,
                    c.second,
                    t.name,
                    t.table,
                    format_p_value(t.p_value),
                    describe_method(&t.method)
                );
            }
        }
    }
    let _ = writeln!(out, "\nRuns");
    for r in &report.metadata.runs {
        let _ = writeln!(
            out,
            "{}: seed {}, provider {} ({}), embedder {}, k {}, corpus {}",
            r.phase,
            r.seed,
            r.provider_id,
            r.provider_mode.label(),
            r.embedder_id,
            r.top_k,
            &r.corpus_hash[..16.min(r.corpus_hash.len())]
        );
    }
    out
}

/// One CSV row per phase and outcome, plus band totals.
pub fn render_csv(report: &EvalReport) -> String {
    let mut out = String::from("phase,result,low,medium,high,total,percent\n");
    for s in &report.phases {
        for row in &s.rows {
            let [l, m, h] = row.by_band;
            let _ = writeln!(out, "{},{},{l},{m},{h},{},{}", s.phase, row.outcome, row.total, row.percent);
        }
        let [l, m, h] = s.band_totals;
        let _ = writeln!(out, "{},total,{l},{m},{h},{},", s.phase, s.total);
    }
    out
}

/// Raw points for external boxplot rendering.
pub fn render_boxplot_csv(report: &EvalReport) -> String {
    let mut out = String::from("id,score,band\n");
    for p in &report.boxplot.points {
        let _ = writeln!(out, "{},{},{}", p.id, p.score.value(), p.band.label().to_lowercase());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(rows: [[u64; 3]; 3]) -> OutcomeCounts {
        OutcomeCounts(rows)
    }

    #[test]
    fn percent_rounding() {
        assert_eq!(format_percent(5, 60), "8.3%");
        assert_eq!(format_percent(47, 60), "78.3%");
        assert_eq!(format_percent(8, 60), "13.3%");
        assert_eq!(format_percent(6, 60), "10.0%");
        assert_eq!(format_percent(41, 48), "85.4%");
        assert_eq!(format_percent(1, 8), "12.5%");
        assert_eq!(format_percent(1, 0), "n/a");
    }

    #[test]
    fn phase_two_style_table() {
        let s = PhaseSummary::from_counts(
            Phase::SchemaPlusContext,
            counts([[16, 25, 6], [0, 5, 0], [1, 1, 6]]),
            &FisherOptions::default(),
        );
        let pct: Vec<&str> = s.rows.iter().map(|r| r.percent.as_str()).collect();
        assert_eq!(pct, vec!["78.3%", "8.3%", "13.3%"]);
        assert_eq!(s.band_totals, [17, 31, 12]);
        assert_eq!((s.excluding_high.pass, s.excluding_high.total), (41, 48));
        assert_eq!(s.excluding_high.pass_percent, "85.4%");
        assert_eq!(s.excluding_high.fail_percent, "10.4%");
    }

    #[test]
    fn comparison_constructions() {
        let a = counts([[3, 2, 0], [11, 27, 9], [3, 2, 3]]);
        let b = counts([[16, 25, 6], [0, 5, 0], [1, 1, 6]]);
        let c = compare_phases((Phase::SchemaOnly, &a), (Phase::SchemaPlusContext, &b), &FisherOptions::default());
        assert_eq!(c.tests.len(), 3);
        assert_eq!(c.tests[0].table.cells, vec![vec![5, 55], vec![47, 13]]);
        assert_eq!(c.tests[1].table.cells, vec![vec![47, 13], vec![5, 55]]);
        assert_eq!(c.tests[2].table.cells, vec![vec![5, 47, 8], vec![47, 5, 8]]);
        assert!(c.tests.iter().all(|t| t.p_value < 1e-10));
    }

    #[test]
    fn p_value_formatting() {
        assert_eq!(format_p_value(0.170065), "0.1701");
        assert_eq!(format_p_value(0.000662), "6.620e-4");
    }
}
