//! Experiment orchestration: configs, the three tracks, sweeps, JSONL
//! records and reports.

mod config;
mod record;
mod report;
mod runner;

pub use config::{expand_sweep, DatasetConfig, ExperimentConfig, SweepPoint, Track, DEFAULT_BUDGETS};
pub use record::{load_dir, load_jsonl, read_jsonl, save_jsonl, write_jsonl, RunRecord};
pub use report::{curve_rows, curves, leaderboard, report, survival_matrix, ReportKind};
pub use runner::{run_sweep, run_track};
