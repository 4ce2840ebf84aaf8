//! Shared dataset generators for the integration and acceptance suites.

use gbl_core::graph::TransitionGraph;
use gbl_core::state::{StateKey, TransitionRecord};
use gbl_core::value::ScalarQTable;
use gbl_core::Environment;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

pub fn key(i: u32) -> StateKey {
    StateKey::new(i.to_le_bytes().to_vec())
}

pub struct Dataset {
    pub graph: TransitionGraph,
    pub records: Vec<TransitionRecord>,
    pub action_count: u32,
    pub states: Vec<StateKey>,
}

/// Random acyclic dataset: transitions only run from lower- to higher-indexed
/// states, so the data graph is a DAG. Rewards are uniform in [0, 1], some
/// edges are terminal, and duplicate insertions create frequencies above one.
pub fn random_acyclic_dataset(
    rng: &mut ChaCha8Rng,
    max_states: u32,
    max_actions: u32,
) -> Dataset {
    let n = rng.gen_range(4..=max_states);
    let action_count = rng.gen_range(1..=max_actions);
    let mut graph = TransitionGraph::new();
    let mut records = Vec::new();
    graph.observe_initial(&key(0));
    for i in 0..n - 1 {
        for a in 0..action_count {
            if rng.gen_bool(0.3) {
                continue;
            }
            let branches = rng.gen_range(1..=2);
            for _ in 0..branches {
                let next = rng.gen_range(i + 1..n);
                let rec = TransitionRecord {
                    state: key(i),
                    action: a,
                    reward: rng.gen::<f64>(),
                    next_state: key(next),
                    terminal: rng.gen_bool(0.15),
                };
                for _ in 0..rng.gen_range(1..=3) {
                    graph.insert(&rec);
                }
                records.push(rec);
            }
        }
    }
    let states = (0..n).map(key).collect();
    Dataset { graph, records, action_count, states }
}

/// Longest directed path (in transitions) reachable in an acyclic graph.
pub fn longest_path(graph: &TransitionGraph) -> usize {
    fn depth_of(
        graph: &TransitionGraph,
        s: &StateKey,
        memo: &mut HashMap<StateKey, usize>,
    ) -> usize {
        if let Some(d) = memo.get(s) {
            return *d;
        }
        let mut best = 0;
        for (_, entries) in graph.actions_at(s) {
            for e in entries {
                let d = if e.terminal { 1 } else { 1 + depth_of(graph, &e.next, memo) };
                best = best.max(d);
            }
        }
        memo.insert(s.clone(), best);
        best
    }
    let mut memo = HashMap::new();
    let states: Vec<StateKey> = graph.states().cloned().collect();
    states
        .iter()
        .map(|s| depth_of(graph, s, &mut memo))
        .max()
        .unwrap_or(0)
}

/// Random value table over the given states.
pub fn random_table(rng: &mut ChaCha8Rng, states: &[StateKey], action_count: u32) -> ScalarQTable {
    let mut table = ScalarQTable::new(action_count);
    for s in states {
        for a in 0..action_count {
            table.set(s, a, rng.gen::<f64>());
        }
    }
    table
}

/// One trajectory over fresh, never-repeating states.
pub fn single_trajectory(
    rng: &mut ChaCha8Rng,
    base: u32,
    len: usize,
    action_count: u32,
) -> Vec<TransitionRecord> {
    let terminal_end = rng.gen_bool(0.5);
    (0..len)
        .map(|i| TransitionRecord {
            state: key(base + i as u32),
            action: rng.gen_range(0..action_count),
            reward: rng.gen::<f64>(),
            next_state: key(base + i as u32 + 1),
            terminal: terminal_end && i == len - 1,
        })
        .collect()
}

/// Drive an environment through a fixed action sequence from reset.
pub fn replay_actions(env: &mut dyn Environment, seed: u64, actions: &[u32]) -> Vec<TransitionRecord> {
    let mut state = env.reset(seed);
    let mut out = Vec::new();
    for &a in actions {
        let step = env.step(a).expect("scripted actions stay in bounds");
        out.push(TransitionRecord {
            state: state.clone(),
            action: a,
            reward: step.reward,
            next_state: step.next.clone(),
            terminal: step.terminal,
        });
        state = step.next;
        if step.terminal {
            break;
        }
    }
    out
}
