//! Exact q* computation by value iteration over an enumerated kernel.

use super::{EnvError, Environment};
use crate::state::StateKey;
use crate::value::ScalarQTable;

/// One branch of the exact transition kernel at some (state, action).
///
/// `next` is an index into [`MdpDynamics::states`]; terminal branches carry no
/// successor because the absorbing endpoint is worth zero by definition.
#[derive(Clone, Debug)]
pub struct KernelBranch {
    pub prob: f64,
    pub reward: f64,
    pub next: Option<usize>,
    pub terminal: bool,
}

/// Exhaustive enumeration of a finite MDP: every non-terminal state with its
/// exact per-action outcome distribution.
pub struct MdpDynamics {
    pub states: Vec<StateKey>,
    pub action_count: u32,
    /// Indexed `[state][action] -> branches`.
    pub branches: Vec<Vec<Vec<KernelBranch>>>,
}

const SWEEP_TOLERANCE: f64 = 1e-13;
const MAX_SWEEPS: usize = 1_000_000;

/// Compute q* for every enumerated (state, action) by value iteration.
///
/// Runs synchronous sweeps until the sup-norm change falls below 1e-13, which
/// leaves the Bellman residual of the result far below 1e-10 for any gamma in
/// [0, 1).
pub fn optimal_q_oracle(env: &dyn Environment, gamma: f64) -> Result<ScalarQTable, EnvError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(EnvError::InvalidConfig(format!(
            "discount must lie in [0, 1), got {gamma}"
        )));
    }
    let dynamics = env.dynamics()?;
    let actions = dynamics.action_count as usize;
    let n = dynamics.states.len();
    let mut q = vec![vec![0.0f64; actions]; n];
    for _ in 0..MAX_SWEEPS {
        let mut delta = 0.0f64;
        let mut next = vec![vec![0.0f64; actions]; n];
        for s in 0..n {
            for a in 0..actions {
                let value = backup(&dynamics.branches[s][a], &q, gamma);
                delta = delta.max((value - q[s][a]).abs());
                next[s][a] = value;
            }
        }
        q = next;
        if delta < SWEEP_TOLERANCE {
            break;
        }
    }
    let mut table = ScalarQTable::new(dynamics.action_count);
    for (s, key) in dynamics.states.iter().enumerate() {
        for a in 0..actions {
            table.set(key, a as u32, q[s][a]);
        }
    }
    Ok(table)
}

/// Sup-norm Bellman optimality residual of `q` under the exact kernel.
pub fn bellman_residual(env: &dyn Environment, q: &ScalarQTable, gamma: f64) -> Result<f64, EnvError> {
    let dynamics = env.dynamics()?;
    let actions = dynamics.action_count as usize;
    let values: Vec<Vec<f64>> = dynamics
        .states
        .iter()
        .map(|key| (0..actions).map(|a| q.q(key, a as u32)).collect())
        .collect();
    let mut residual = 0.0f64;
    for s in 0..dynamics.states.len() {
        for a in 0..actions {
            let backed = backup(&dynamics.branches[s][a], &values, gamma);
            residual = residual.max((backed - values[s][a]).abs());
        }
    }
    Ok(residual)
}

fn backup(branches: &[KernelBranch], q: &[Vec<f64>], gamma: f64) -> f64 {
    branches
        .iter()
        .map(|b| {
            let bootstrap = match (b.terminal, b.next) {
                (true, _) | (false, None) => 0.0,
                (false, Some(next)) => q[next].iter().copied().fold(f64::NEG_INFINITY, f64::max),
            };
            b.prob * (b.reward + gamma * bootstrap)
        })
        .sum()
}
