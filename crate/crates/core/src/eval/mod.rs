//! Metrics, the Monte-Carlo harness and image output.

mod experiment;
mod metrics;
mod render;

pub use experiment::{
    rows_to_csv, run_experiment, run_experiment_csv, CaseSpec, ExperimentRow, ExperimentSpec,
    Method, CSV_HEADER,
};
pub use metrics::{nmse, nmse_normalized};
pub use render::{render_gray, write_pgm, write_png, DEFAULT_DYNAMIC_RANGE_DB};
