//! Experiment orchestration: TOML configs, the canned studies and their reports.

mod config;
mod report;
mod studies;

pub use config::{
    CoefficientsConfig, CompatibilityConfig, ContinuityConfig, DataConfig, EnsembleConfig, ExperimentConfig,
    ExperimentKind, Family, GridConfig, HalflineConfig, OutputConfig, Overrides, RefinementConfig, SchauderConfig,
    SolverConfig, StabilityConfig, StabilityPair,
};
pub use report::{PlotRow, StudyReport, StudyRow, Verdict};
pub use studies::{
    build_forcing, run_compatibility, run_continuity, run_halfline_lemma, run_pipeline, run_schauder_ratio,
    run_stability, run_study, run_with_workers,
};
