//! Scalar backup targets: one-step, n-step-Q, Tree Backup, Graph Backup (with
//! its mixed variant), and the exhaustive recursive oracle.

use super::expand::{expand_local_graph, ExpandedPair, ExpansionList};
use super::{BackupConfig, BackupError, PolicyMode};
use crate::graph::{EdgeEntry, TransitionGraph};
use crate::state::{DigestMap, StateKey, TransitionRecord};
use crate::value::ScalarQTable;
use indexmap::IndexMap;
use rand::Rng;
use std::collections::{HashMap, HashSet};

fn max_over_actions(action_count: u32, mut value: impl FnMut(u32) -> f64) -> f64 {
    let mut best = value(0);
    for a in 1..action_count {
        let v = value(a);
        if v > best {
            best = v;
        }
    }
    best
}

fn argmax_over_actions(action_count: u32, value: impl Fn(u32) -> f64) -> u32 {
    let mut best = 0;
    let mut best_value = value(0);
    for a in 1..action_count {
        let v = value(a);
        if v > best_value {
            best = a;
            best_value = v;
        }
    }
    best
}

/// One-step bootstrapped target: r + gamma * max_a' q'(s', a'); just r on
/// terminal transitions.
pub fn one_step_target(rec: &TransitionRecord, target: &ScalarQTable, gamma: f64) -> f64 {
    if rec.terminal {
        rec.reward
    } else {
        rec.reward + gamma * target.max_q(&rec.next_state)
    }
}

/// n-step-Q target over a trajectory slice starting at the source transition.
///
/// Sums up to n discounted rewards and bootstraps at the state reached; the
/// bootstrap is dropped when the episode terminates inside the window. A slice
/// shorter than n without a terminal (episode truncation) bootstraps at its
/// last next state.
pub fn n_step_q_target(
    slice: &[TransitionRecord],
    n: usize,
    target: &ScalarQTable,
    gamma: f64,
) -> Result<f64, BackupError> {
    if slice.is_empty() || n == 0 {
        return Err(BackupError::EmptySlice);
    }
    let mut value = 0.0;
    let mut discount = 1.0;
    let mut last = &slice[0];
    for rec in slice.iter().take(n) {
        value += discount * rec.reward;
        discount *= gamma;
        last = rec;
        if rec.terminal {
            return Ok(value);
        }
    }
    Ok(value + discount * target.max_q(&last.next_state))
}

/// Tree Backup target over a trajectory slice (greedy target policy).
///
/// Recursively applies the one-step backup along the taken actions while
/// bootstrapping the not-taken actions with the target table; truncated at
/// episode end like [`n_step_q_target`].
pub fn tree_backup_target(
    slice: &[TransitionRecord],
    n: usize,
    target: &ScalarQTable,
    gamma: f64,
) -> Result<f64, BackupError> {
    if slice.is_empty() || n == 0 {
        return Err(BackupError::EmptySlice);
    }
    let mut horizon = n.min(slice.len());
    for (k, rec) in slice.iter().take(horizon).enumerate() {
        if rec.terminal {
            horizon = k + 1;
            break;
        }
    }
    let last = &slice[horizon - 1];
    let mut value = if last.terminal {
        0.0
    } else {
        target.max_q(&last.next_state)
    };
    for k in (1..horizon).rev() {
        let rec = &slice[k];
        let continued = rec.reward + gamma * value;
        value = max_over_actions(target.action_count(), |a| {
            if a == rec.action {
                continued
            } else {
                target.q(&rec.state, a)
            }
        });
    }
    Ok(slice[0].reward + gamma * value)
}

/// Bottom-up evaluation state for graph targets. The memo holds the refined
/// value of every evaluated pair; unevaluated pairs read from the frozen
/// target table (and, for double selection, the online table). Memo rows are
/// keyed by state to keep lookups clone-free on the hot path.
struct ScalarEval<'a> {
    online: &'a ScalarQTable,
    target: &'a ScalarQTable,
    cfg: &'a BackupConfig,
    memo: DigestMap<StateKey, Vec<Option<f64>>>,
    online_memo: DigestMap<StateKey, Vec<Option<f64>>>,
}

/// Per-state view combining the memo row with the backing table row; absent
/// values fall back to the table default.
#[derive(Clone, Copy)]
struct RowView<'a> {
    memo: Option<&'a Vec<Option<f64>>>,
    table: Option<&'a [f64]>,
}

impl RowView<'_> {
    fn value(&self, a: u32) -> f64 {
        self.memo
            .and_then(|row| row[a as usize])
            .unwrap_or_else(|| self.table.map_or(0.0, |row| row[a as usize]))
    }
}

impl ScalarEval<'_> {
    fn rows(&self, s: &StateKey, online_view: bool) -> RowView<'_> {
        if online_view {
            RowView { memo: self.online_memo.get(s), table: self.online.row(s) }
        } else {
            RowView { memo: self.memo.get(s), table: self.target.row(s) }
        }
    }

    fn target_value(&self, s: &StateKey, a: u32) -> f64 {
        self.rows(s, false).value(a)
    }

    /// Value of a successor state under the configured target policy.
    fn state_value(&self, s: &StateKey, online_view: bool) -> f64 {
        let actions = self.target.action_count();
        let rows = self.rows(s, online_view);
        match (&self.cfg.policy, self.cfg.double) {
            (PolicyMode::Explicit(pi), _) => {
                (0..actions).map(|a| pi.prob(s, a) * rows.value(a)).sum()
            }
            (PolicyMode::Greedy, false) => max_over_actions(actions, |a| rows.value(a)),
            (PolicyMode::Greedy, true) => {
                // Double backup: the online view picks the action, the
                // requested view supplies its value.
                let online_rows = self.rows(s, true);
                let a_star = argmax_over_actions(actions, |a| online_rows.value(a));
                rows.value(a_star)
            }
        }
    }

    /// Frequency-weighted mean over the pair's sampled transitions,
    /// renormalized by the sampled visits.
    fn aggregate(&self, pair: &ExpandedPair, online_view: bool) -> f64 {
        let gamma = self.cfg.gamma;
        let mut sum = 0.0;
        for e in &pair.selected {
            let contribution = if e.terminal {
                e.reward
            } else {
                e.reward + gamma * self.state_value(&e.next, online_view)
            };
            sum += e.freq as f64 * contribution;
        }
        sum / pair.selected_visits() as f64
    }
}

/// Graph Backup target for the source pair of an already-computed expansion.
///
/// Pairs are evaluated bottom-up in reverse list order; re-occurring pairs are
/// re-evaluated at each occurrence, shallower results overwriting deeper ones
/// so that shallow reads see refined children. Self-loops read the memo value
/// current at evaluation time (initially the target table), which keeps the
/// evaluation finite on cyclic data.
pub fn graph_backup_from_expansion(
    expansion: &ExpansionList,
    online: &ScalarQTable,
    target: &ScalarQTable,
    cfg: &BackupConfig,
) -> f64 {
    let source = expansion.source();
    if source.selected.is_empty() {
        return target.q(&source.state, source.action);
    }
    let actions = target.action_count() as usize;
    let mut eval = ScalarEval {
        online,
        target,
        cfg,
        memo: DigestMap::default(),
        online_memo: DigestMap::default(),
    };
    for pair in expansion.pairs_rev() {
        if pair.selected.is_empty() {
            continue;
        }
        let refined = eval.aggregate(pair, false);
        let refined_online = cfg.double.then(|| eval.aggregate(pair, true));
        eval.memo
            .entry(pair.state.clone())
            .or_insert_with(|| vec![None; actions])[pair.action as usize] = Some(refined);
        if let Some(v) = refined_online {
            eval.online_memo
                .entry(pair.state.clone())
                .or_insert_with(|| vec![None; actions])[pair.action as usize] = Some(v);
        }
    }
    eval.target_value(&source.state, source.action)
}

/// Graph Backup target: expand the local graph under the config's limits and
/// evaluate it bottom-up. Unseen source pairs fall back to the target table.
pub fn graph_backup_target(
    graph: &TransitionGraph,
    source: (&StateKey, u32),
    online: &ScalarQTable,
    target: &ScalarQTable,
    cfg: &BackupConfig,
    rng: &mut impl Rng,
) -> f64 {
    let expansion = expand_local_graph(
        graph,
        source,
        cfg.depth,
        cfg.breadth,
        cfg.per_pair_breadth,
        rng,
    );
    graph_backup_from_expansion(&expansion, online, target, cfg)
}

/// Mixed Graph Backup target: interior states average all their sampled
/// outgoing transitions by frequency (no interior max); the max is applied
/// only when bootstrapping boundary states from the target table.
pub fn mixed_graph_backup_target(
    graph: &TransitionGraph,
    source: (&StateKey, u32),
    target: &ScalarQTable,
    cfg: &BackupConfig,
    rng: &mut impl Rng,
) -> f64 {
    let expansion = expand_local_graph(
        graph,
        source,
        cfg.depth,
        cfg.breadth,
        cfg.per_pair_breadth,
        rng,
    );
    let source_pair = expansion.source();
    if source_pair.selected.is_empty() {
        return target.q(&source_pair.state, source_pair.action);
    }
    let actions = target.action_count();
    let gamma = cfg.gamma;
    let mut memo: DigestMap<StateKey, f64> = DigestMap::default();
    let state_value = |memo: &DigestMap<StateKey, f64>, s: &StateKey| {
        memo.get(s)
            .copied()
            .unwrap_or_else(|| max_over_actions(actions, |a| target.q(s, a)))
    };
    for level in expansion.levels[1..].iter().rev() {
        // Interior states pool the sampled transitions of all their actions.
        let mut grouped: IndexMap<StateKey, Vec<&EdgeEntry>> = IndexMap::new();
        for pair in level {
            grouped.entry(pair.state.clone()).or_default().extend(pair.selected.iter());
        }
        for (state, edges) in grouped.iter().rev() {
            let visits: u64 = edges.iter().map(|e| e.freq).sum();
            let mut sum = 0.0;
            for e in edges {
                let contribution = if e.terminal {
                    e.reward
                } else {
                    e.reward + gamma * state_value(&memo, &e.next)
                };
                sum += e.freq as f64 * contribution;
            }
            memo.insert(state.clone(), sum / visits as f64);
        }
    }
    let mut sum = 0.0;
    for e in &source_pair.selected {
        let contribution = if e.terminal {
            e.reward
        } else {
            e.reward + gamma * state_value(&memo, &e.next)
        };
        sum += e.freq as f64 * contribution;
    }
    sum / source_pair.selected_visits() as f64
}

/// Exhaustive recursive evaluation of the graph target with no breadth limit.
///
/// This is the verification oracle for limited expansion: exact on acyclic
/// data, and an error on cycles unless a depth cap bounds the recursion.
pub fn naive_recursive_target(
    graph: &TransitionGraph,
    source: (&StateKey, u32),
    target: &ScalarQTable,
    gamma: f64,
    depth_cap: Option<usize>,
) -> Result<f64, BackupError> {
    match depth_cap {
        None => {
            let mut memo = HashMap::new();
            let mut stack = HashSet::new();
            exact_recursion(graph, source.0, source.1, target, gamma, &mut memo, &mut stack)
        }
        Some(cap) => {
            let mut memo = HashMap::new();
            Ok(capped_recursion(graph, source.0, source.1, target, gamma, cap, &mut memo))
        }
    }
}

fn exact_recursion(
    graph: &TransitionGraph,
    state: &StateKey,
    action: u32,
    target: &ScalarQTable,
    gamma: f64,
    memo: &mut HashMap<(StateKey, u32), f64>,
    stack: &mut HashSet<(StateKey, u32)>,
) -> Result<f64, BackupError> {
    let entries = graph.outgoing(state, action);
    if entries.is_empty() {
        return Ok(target.q(state, action));
    }
    let key = (state.clone(), action);
    if let Some(v) = memo.get(&key) {
        return Ok(*v);
    }
    if !stack.insert(key.clone()) {
        return Err(BackupError::CycleDetected);
    }
    let mut sum = 0.0;
    for e in entries {
        let contribution = if e.terminal {
            e.reward
        } else {
            let mut best =
                exact_recursion(graph, &e.next, 0, target, gamma, memo, stack)?;
            for a in 1..target.action_count() {
                let v = exact_recursion(graph, &e.next, a, target, gamma, memo, stack)?;
                if v > best {
                    best = v;
                }
            }
            e.reward + gamma * best
        };
        sum += e.freq as f64 * contribution;
    }
    stack.remove(&key);
    let visits: u64 = entries.iter().map(|e| e.freq).sum();
    let value = sum / visits as f64;
    memo.insert(key, value);
    Ok(value)
}

fn capped_recursion(
    graph: &TransitionGraph,
    state: &StateKey,
    action: u32,
    target: &ScalarQTable,
    gamma: f64,
    remaining: usize,
    memo: &mut HashMap<(StateKey, u32, usize), f64>,
) -> f64 {
    let entries = graph.outgoing(state, action);
    if entries.is_empty() || remaining == 0 {
        return target.q(state, action);
    }
    let key = (state.clone(), action, remaining);
    if let Some(v) = memo.get(&key) {
        return *v;
    }
    let mut sum = 0.0;
    for e in entries {
        let contribution = if e.terminal {
            e.reward
        } else {
            let best = max_over_actions(target.action_count(), |a| {
                capped_recursion(graph, &e.next, a, target, gamma, remaining - 1, memo)
            });
            e.reward + gamma * best
        };
        sum += e.freq as f64 * contribution;
    }
    let visits: u64 = entries.iter().map(|e| e.freq).sum();
    let value = sum / visits as f64;
    memo.insert(key, value);
    value
}
