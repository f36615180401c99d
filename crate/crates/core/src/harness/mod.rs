//! Experiment configuration, seeded Monte Carlo ensembles and report output.

mod config;
mod ensemble;
mod report;

pub use config::{
    parse_config, DecoupleConfig, DenoiserConfig, DenoiserKind, ExperimentConfig, FactorSpec, Format, Mode,
    ModelConfig, OutputConfig, ScheduleConfig, SymmetricConfig,
};
pub use ensemble::{
    replicate_instance, run_ensemble, DECOUPLING_OBSERVABLES, MP_OBSERVABLE, RELATIVE_FLOOR, Z_THRESHOLD,
};
pub use report::{
    emit_csv, emit_report, format_float, parse_json_report, write_report, DivergedReplicate, EnsembleReport,
    ReportMetadata, ReportRow, RowFlag, SeSummary, Tolerances, CSV_HEADER,
};
