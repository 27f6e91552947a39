//! Three-phase evaluation: running datasets, labels, complexity banding,
//! exact tests and report rendering.

mod dataset;
mod fisher;
mod labels;
mod report;
mod run;

pub use dataset::{Dataset, DatasetError, NlqCase};
pub use fisher::{
    fisher_exact_2x2, fisher_exact_rxc, table_count_bound, ContingencyTable, FisherError, FisherMethod, FisherOptions,
    FisherResult, DEFAULT_MAX_TABLES, DEFAULT_MC_DRAWS, DEFAULT_MC_SEED,
};
pub use labels::{LabelError, LabelRecord, LabelStore, Outcome, UnknownOutcome};
pub use report::{
    build_report, compare_phases, format_p_value, format_percent, percent_tenths, render_boxplot_csv, render_csv,
    render_text, run_test, BandingReport, BoxPoint, BoxplotData, CasePhaseRow, CaseRow, EvalReport, OutcomeCounts,
    OutcomeRow, PhaseComparison, PhaseSummary, ReportError, ReportMetadata, ReportOptions, RunInfo, ScoreSource,
    SubsetRates, TestReport,
};
pub use run::{
    apply_labels, presentation_order, run_phase, suggest_outcome, CaseResult, LabelSource, LabeledCase, PhaseRun,
    RunError, DEFAULT_MAX_IN_FLIGHT,
};
