//! Experiment plumbing: configuration, metrics, evaluation and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod gradcheck;
pub mod metrics;
pub mod run;

pub use checkpoint::{load_checkpoint, read_manifest, save_checkpoint, CheckpointDir, LoadedCheckpoint, Manifest};
pub use config::{parse_config, parse_config_str, RunConfig};
pub use gradcheck::{run_gradcheck_suite, GradcheckReport};
pub use eval::{evaluate, rollout, Episode, EvalResult, ScriptedMazeController};
pub use metrics::{read_metrics, CsvSink, MemorySink, MetricsRow, MetricsSink, METRICS_HEADER};
pub use run::{ablation_config, run_many, sweep_configs, train_run, SweepParam, CONFIG_FILE, METRICS_FILE};
