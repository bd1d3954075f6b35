//! Desk-scale federated training on top of the robust aggregation pipeline.

mod config;
mod data;
mod model;
mod report;
mod train;

pub use config::{
    AggregationMode, ClientsConfig, ConfigError, DataConfig, DataSource, DefenseConfig,
    ExperimentConfig, GraphKind, ModelConfig, ProtocolConfig, ScriptedDropout, Stage,
    SCHEMA_VERSION,
};
pub use data::{gen_synthetic_data, ingest_csv_dataset, CsvSchema, DataError, Dataset, Shard, SyntheticSpec};
pub use model::{local_step, parameter_count, Architecture, Model};
pub use report::{metrics_csv, summary_json, Summary, Totals};
pub use train::{
    byzantine_clients, load_dataset, run_training, RoundMetrics, RunOptions, TrainingReport,
    TranscriptRecord,
};

use thiserror::Error;

use crate::adversary::AttackError;
use crate::fixed::NumericError;
use crate::robust::RobustnessError;
use crate::secagg::AggregationError;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("client shard is empty")]
    EmptyShard,
    #[error("training diverged: non-finite gradient or parameters")]
    Divergence,
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("protocol aborted: {0}")]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Robustness(#[from] RobustnessError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}
