//! Experiment configuration, dataset loading and sweeps.

pub mod cifar;
pub mod config;
pub mod run;

pub use cifar::{load_cifar10, load_cifar10_dir, load_cifar10_files, CifarData, CifarError, ClassFilter};
pub use config::{load_config, ConfigError, DatasetKind, ExperimentConfig};
pub use run::{
    prepare_data, round_channels, run_experiment, setup_for, system_for, write_channels_csv, CellSummary,
    HarnessError, RunSummary, ScenarioSummary, CSV_HEADER, SUMMARY_FILE, TRACES_FILE,
};
