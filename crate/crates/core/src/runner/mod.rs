//! Batch experiments: configuration, the three-case protocol, parallel
//! model execution with per-model failure isolation, and report output.

mod bundle;
mod config;
mod run;

pub use bundle::{emit_reports, ClsEval, ClsReport, LeakageAudit, LstmReport, ModelReport, RegReport, ReportBundle, ReportFormat, BUNDLE_FILE, TIMINGS_FILE};
pub use config::{
    AnnSettings, CnnSettings, DataSection, ExperimentConfig, ExperimentSection, KnnSettings, LogitSettings, ModelName, ModelSettings, OlsSettings, SvrSettings, SynthSource,
};
pub use run::{audit_case_split, audit_walk_forward, execute, load_series, prepare, run_experiment, run_prepared, PreparedData, YearData};
