//! Categorical-distributional graph backup.
//!
//! Applies the distributional one-step update at every expanded pair, bottom
//! up over the expansion list: each sampled transition shifts the successor's
//! value distribution by its reward and discount, projects the shifted atoms
//! back onto the fixed support (mass split linearly between the two nearest
//! atoms), and the pair's distributions are mixed by transition frequency.
//! Successor distributions come from a memo initialized with the target
//! table, so deeper refinements feed shallower ones exactly as in the scalar
//! operator; the greedy successor action is chosen by the expected value of
//! the online view when `double` is set, and of the target view otherwise.

use super::expand::{ExpandedPair, ExpansionList};
use super::{BackupConfig, BackupError};
use crate::state::StateKey;
use crate::value::{expected_value, CategoricalQTable};
use std::collections::HashMap;

struct DistEval<'a> {
    online: &'a CategoricalQTable,
    target: &'a CategoricalQTable,
    memo: HashMap<(StateKey, u32), Vec<f64>>,
    online_memo: HashMap<(StateKey, u32), Vec<f64>>,
}

impl DistEval<'_> {
    fn read(&self, s: &StateKey, a: u32, online_view: bool) -> &[f64] {
        let (memo, table) = if online_view {
            (&self.online_memo, self.online)
        } else {
            (&self.memo, self.target)
        };
        memo.get(&(s.clone(), a))
            .map(Vec::as_slice)
            .unwrap_or_else(|| table.dist(s, a))
    }

    fn greedy_successor(&self, s: &StateKey, selection_view_online: bool) -> u32 {
        let atoms = self.target.atoms();
        let mut best = 0u32;
        let mut best_value = expected_value(self.read(s, 0, selection_view_online), atoms);
        for a in 1..self.target.action_count() {
            let v = expected_value(self.read(s, a, selection_view_online), atoms);
            if v > best_value {
                best = a;
                best_value = v;
            }
        }
        best
    }

    fn project(&self, pair: &ExpandedPair, cfg: &BackupConfig, online_view: bool) -> Vec<f64> {
        let atoms = self.target.atoms();
        let n = atoms.len();
        let v_min = self.target.v_min();
        let v_max = self.target.v_max();
        let dz = self.target.delta_z();
        let visits = pair.selected_visits() as f64;
        let mut m = vec![0.0; n];
        let spread = |m: &mut Vec<f64>, z: f64, mass: f64| {
            let b = ((z - v_min) / dz).clamp(0.0, (n - 1) as f64);
            let low = b.floor() as usize;
            let high = b.ceil() as usize;
            if low == high {
                m[low] += mass;
            } else {
                m[low] += mass * (high as f64 - b);
                m[high] += mass * (b - low as f64);
            }
        };
        for e in &pair.selected {
            let weight = e.freq as f64 / visits;
            if e.terminal {
                spread(&mut m, e.reward.clamp(v_min, v_max), weight);
                continue;
            }
            let a_star = self.greedy_successor(&e.next, cfg.double);
            let child = self.read(&e.next, a_star, online_view);
            for (j, &p) in child.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let z = (e.reward + cfg.gamma * atoms[j]).clamp(v_min, v_max);
                spread(&mut m, z, weight * p);
            }
        }
        m
    }
}

/// Distributional Graph Backup over a precomputed expansion; returns the
/// source pair's projected value distribution.
pub fn distributional_graph_backup(
    expansion: &ExpansionList,
    online: &CategoricalQTable,
    target: &CategoricalQTable,
    cfg: &BackupConfig,
) -> Result<Vec<f64>, BackupError> {
    if online.atoms() != target.atoms() {
        return Err(BackupError::Config(
            "online and target tables must share the same atom support".into(),
        ));
    }
    let source = expansion.source();
    if source.selected.is_empty() {
        return Ok(target.dist(&source.state, source.action).to_vec());
    }
    let mut eval = DistEval {
        online,
        target,
        memo: HashMap::new(),
        online_memo: HashMap::new(),
    };
    for pair in expansion.pairs_rev() {
        if pair.selected.is_empty() {
            continue;
        }
        let m = eval.project(pair, cfg, false);
        let total: f64 = m.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(BackupError::InternalConsistency(format!(
                "projected distribution sums to {total}"
            )));
        }
        let m_online = cfg.double.then(|| eval.project(pair, cfg, true));
        eval.memo.insert((pair.state.clone(), pair.action), m);
        if let Some(mo) = m_online {
            eval.online_memo.insert((pair.state.clone(), pair.action), mo);
        }
    }
    Ok(eval.memo[&(source.state.clone(), source.action)].clone())
}
