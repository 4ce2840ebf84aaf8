//! Graph Backup value estimation for tabular reinforcement learning.
//!
//! The library treats recorded transition data as an explicit multigraph over
//! seen states and (state, action) pairs, and computes bootstrapped backup
//! targets over that graph instead of over single trajectories. Alongside the
//! graph operator it ships the standard baselines (one-step, n-step-Q, Tree
//! Backup), a mixed variant, double and categorical-distributional forms, a
//! tabular learner harness, a small catalog of Markovian environments with an
//! exact value-iteration oracle, and transition-graph analysis tools.
//!
//! Modules:
//! - [`state`]: canonical state encodings and keys.
//! - [`env`]: environment trait, built-in environments, exact q* oracle.
//! - [`graph`]: the transition multigraph with frequency counters.
//! - [`value`]: scalar and categorical tabular value models.
//! - [`backup`]: the backup target operators and local graph expansion.
//! - [`learner`]: online and offline training loops, replay, metrics.
//! - [`analysis`]: density statistics, correlation, radial layout, DOT export.

pub mod analysis;
pub mod backup;
mod bytes;
pub mod env;
pub mod graph;
pub mod learner;
pub mod state;
pub mod value;

pub use bytes::FormatError;

pub use backup::{BackupConfig, BackupOperator, PolicyMode};
pub use env::{EnvError, EnvSpec, Environment, StepOutcome};
pub use graph::{EdgeEntry, TransitionGraph};
pub use learner::{LearnerConfig, RunMetrics, TrainingOutput};
pub use state::{StateKey, TransitionRecord};
pub use value::{CategoricalQTable, ScalarQTable, Snapshot};
