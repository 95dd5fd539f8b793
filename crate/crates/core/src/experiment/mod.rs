//! Synthetic data, `key = value` configuration and grid sweeps.

pub mod config;
pub mod sweep;
pub mod synth;

pub use config::{parse_config, parse_list, read_config, Config};
pub use sweep::{
    rmse, run_sweep, run_sweep_on, validate_csv_schema, write_sweep_csv, DataSource, ExperimentConfig, SigmaUnit,
    SweepAxis, SweepResult, SweepRow, CSV_HEADER,
};
pub use synth::{gen_synthetic, SyntheticData, SyntheticSpec};
