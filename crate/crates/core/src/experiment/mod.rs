//! End-to-end experiment driver: config, staged runs, gradient-check suite
//! and reports.

mod config;
mod gradcheck_suite;
mod report;
mod run;
pub mod svg;

pub use config::{ExperimentConfig, ProposalConfig, DEFAULT_LAMBDA_SWEEP};
pub use gradcheck_suite::{
    gradcheck_suite, GradCheckItem, LAYER_TOLERANCE, MODEL_COORDS_PER_TENSOR, MODEL_TOLERANCE, SUITE_SEEDS,
};
pub use report::{cmd_report, ReportOutput, LOSS_PLOT_FILE, MAP_PLOT_FILE, REPORT_FILE};
pub use run::{
    cmd_run, comparison_csv, detect_videos, stage_detect, stage_eval, stage_gen_data, stage_train, summary_csv,
    write_config, RunOptions, RunReport, VariantResult, CONFIG_FILE, DETECTIONS_FILE, EVAL_FILE, FAILED_MARKER,
    LAMBDA_SWEEP_FILE, LOG_FILE, LOSS_COMPARISON_FILE, SUMMARY_FILE,
};
