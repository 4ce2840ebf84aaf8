//! Markovian environments with canonical state encodings.
//!
//! Environments are single-owner mutable objects driven by `reset`/`step`.
//! Every built-in has a finite, enumerable state space and exposes its exact
//! transition kernel through [`Environment::dynamics`], which feeds the
//! value-iteration oracle in [`oracle`].

mod chains;
mod grids;
pub mod oracle;

pub use chains::{ChainMdp, CrossoverMdp, LoopMdp};
pub use grids::{DoorKeyGrid, EmptyGrid, SlipperyGrid};
pub use oracle::{bellman_residual, optimal_q_oracle, KernelBranch, MdpDynamics};

use crate::state::StateKey;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("action {action} out of range, environment has {action_count} actions")]
    InvalidAction { action: u32, action_count: u32 },
    #[error("step called on a finished episode; reset the environment first")]
    EpisodeOver,
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("invalid environment configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
}

/// Static description of an environment.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub name: String,
    pub action_count: u32,
    pub max_episode_steps: u32,
    pub stochastic: bool,
}

/// Result of one environment step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub reward: f64,
    pub next: StateKey,
    pub terminal: bool,
}

/// A Markovian environment over canonically encoded states.
///
/// Identical seeds must reproduce identical start states and identical future
/// stochastic draws. Deterministic environments ignore the seed entirely.
pub trait Environment {
    fn spec(&self) -> &EnvSpec;

    /// Start a new episode; returns the start state.
    fn reset(&mut self, seed: u64) -> StateKey;

    /// Advance one step. Stepping a finished episode is a contract violation.
    fn step(&mut self, action: u32) -> Result<StepOutcome, EnvError>;

    /// Exact transition kernel for exhaustive-state environments.
    fn dynamics(&self) -> Result<MdpDynamics, EnvError> {
        Err(EnvError::Unsupported(format!(
            "{} does not enumerate its state space",
            self.spec().name
        )))
    }

    /// Fresh copy of this environment (episode state not carried over).
    fn clone_env(&self) -> Box<dyn Environment>;
}

/// Build a catalog environment from its name and parameters.
///
/// `n` is the size parameter (grid side or chain length), `p` the slip
/// probability for `SlipperyGrid`.
pub fn from_name(name: &str, n: Option<u32>, p: Option<f64>) -> Result<Box<dyn Environment>, EnvError> {
    let need_n = || n.ok_or_else(|| EnvError::InvalidConfig(format!("env `{name}` requires parameter n")));
    match name {
        "EmptyGrid" => Ok(Box::new(EmptyGrid::new(need_n()?)?)),
        "DoorKeyGrid" => Ok(Box::new(DoorKeyGrid::new(need_n()?)?)),
        "SlipperyGrid" => {
            let p = p.ok_or_else(|| {
                EnvError::InvalidConfig("env `SlipperyGrid` requires parameter p".into())
            })?;
            Ok(Box::new(SlipperyGrid::new(need_n()?, p)?))
        }
        "ChainMDP" => Ok(Box::new(ChainMdp::new(need_n()?)?)),
        "LoopMDP" => Ok(Box::new(LoopMdp::new())),
        "CrossoverMDP" => Ok(Box::new(CrossoverMdp::new())),
        other => Err(EnvError::UnknownEnv(other.to_string())),
    }
}

/// Parse an environment spec string like `EmptyGrid:8` or `SlipperyGrid:5:0.2`.
pub fn parse_spec_string(s: &str) -> Result<Box<dyn Environment>, EnvError> {
    let mut parts = s.split(':');
    let name = parts.next().unwrap_or_default();
    let n = parts
        .next()
        .map(|v| {
            v.parse::<u32>()
                .map_err(|_| EnvError::InvalidConfig(format!("bad size parameter `{v}` in `{s}`")))
        })
        .transpose()?;
    let p = parts
        .next()
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| EnvError::InvalidConfig(format!("bad probability `{v}` in `{s}`")))
        })
        .transpose()?;
    if parts.next().is_some() {
        return Err(EnvError::InvalidConfig(format!("too many parameters in `{s}`")));
    }
    from_name(name, n, p)
}
