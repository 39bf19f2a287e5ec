//! Running experiments: configuration, the training loop, multi-seed suites,
//! sweeps, and their CSV/SVG outputs.

pub mod cli;
mod config;
mod plot;
mod record;
mod runner;
mod suite;
mod sweeps;

pub use config::{
    apply_overrides, AuxSpec, DatasetKind, DatasetSpec, ExperimentConfig, ModelSpec, PreparedData,
    SchedulerSpec, OUTPUT_DIR_ENV,
};
pub use plot::{LineChart, Series};
pub use record::{
    neuron_dump_csv, parse_run_csv, records_to_csv, source_velocity_csv, CsvRow, RunRecord,
    CSV_HEADER,
};
pub use runner::{run_training, RunOutcome, RunStatus, Trainer};
pub use suite::{
    ensure_writable, pearson, ranks, run_suite, run_suite_with, spearman, summary_text,
    write_run_outputs, MeanStd, SuiteSummary,
};
pub use sweeps::{
    aux_sweep, compare, epsilon_chart, epsilon_sweep, epsilon_table, optim_compare, sweep_chart,
    sweep_table, CompareSpec, SweepRow,
};
