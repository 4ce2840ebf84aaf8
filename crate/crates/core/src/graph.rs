//! The transition multigraph: a bipartite graph over seen states and
//! (state, action) nodes whose edges carry rewards and visit frequencies.
//!
//! Distinct transitions are keyed by the full (s, a, r, s', terminal) tuple;
//! re-observing an identical tuple increments its frequency instead of adding
//! a duplicate edge. Rewards compare bit-exactly for this merge, since the
//! environments emit exact values. Counters satisfy
//! `c(s, a) = sum of entry frequencies` and `c(s) = sum over actions of c(s, a)`.
//!
//! Concurrency contract: many concurrent readers or one writer. Backup target
//! computation holds a shared reference for its whole expansion; inserts only
//! happen between learner steps.

use crate::bytes::{FormatError, ReadCursor, WriteBuf};
use crate::state::{StateKey, TransitionRecord};
use indexmap::IndexMap;
use rand::Rng;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8] = b"TGPH1";

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph holds no observations")]
    Empty,
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One distinct stored transition out of a (state, action) node.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeEntry {
    pub reward: f64,
    pub next: StateKey,
    pub terminal: bool,
    pub freq: u64,
}

#[derive(Debug, Default)]
struct PairEdges {
    entries: Vec<EdgeEntry>,
    count: u64,
}

#[derive(Debug, Default)]
struct StateNode {
    actions: BTreeMap<u32, PairEdges>,
    count: u64,
    obs_count: u64,
    initial_count: u64,
}

/// Multigraph of all recorded transitions with frequency counters.
#[derive(Debug, Default)]
pub struct TransitionGraph {
    states: IndexMap<StateKey, StateNode>,
    total_transitions: u64,
    total_observations: u64,
    observed_unique: u64,
}

impl TransitionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    fn observe(&mut self, state: &StateKey) {
        let first = {
            let node = self.states.entry(state.clone()).or_default();
            node.obs_count += 1;
            node.obs_count == 1
        };
        if first {
            self.observed_unique += 1;
        }
        self.total_observations += 1;
    }

    /// Record an episode start. Start states count toward the novel-state
    /// ratio exactly like every observed next state.
    pub fn observe_initial(&mut self, state: &StateKey) {
        self.observe(state);
        self.states.get_mut(state).unwrap().initial_count += 1;
    }

    /// Insert one recorded transition, merging identical tuples by frequency.
    pub fn insert(&mut self, rec: &TransitionRecord) {
        self.observe(&rec.next_state);
        self.states.entry(rec.state.clone()).or_default();
        let node = self.states.get_mut(&rec.state).unwrap();
        let pair = node.actions.entry(rec.action).or_default();
        let existing = pair.entries.iter_mut().find(|e| {
            e.reward.to_bits() == rec.reward.to_bits()
                && e.terminal == rec.terminal
                && e.next == rec.next_state
        });
        match existing {
            Some(e) => e.freq += 1,
            None => pair.entries.push(EdgeEntry {
                reward: rec.reward,
                next: rec.next_state.clone(),
                terminal: rec.terminal,
                freq: 1,
            }),
        }
        pair.count += 1;
        node.count += 1;
        self.total_transitions += 1;
    }

    /// Stored entries for (state, action) in insertion order; empty when the
    /// pair was never seen.
    pub fn outgoing(&self, state: &StateKey, action: u32) -> &[EdgeEntry] {
        self.states
            .get(state)
            .and_then(|n| n.actions.get(&action))
            .map(|p| p.entries.as_slice())
            .unwrap_or(&[])
    }

    /// c(s, a): total visits of the pair, with multiplicity.
    pub fn pair_visits(&self, state: &StateKey, action: u32) -> u64 {
        self.states
            .get(state)
            .and_then(|n| n.actions.get(&action))
            .map_or(0, |p| p.count)
    }

    /// c(s): total visits of all pairs conditioned on the state.
    pub fn state_visits(&self, state: &StateKey) -> u64 {
        self.states.get(state).map_or(0, |n| n.count)
    }

    /// All inserted transitions, with multiplicity.
    pub fn total_transitions(&self) -> u64 {
        self.total_transitions
    }

    /// Number of distinct state nodes.
    pub fn state_node_count(&self) -> usize {
        self.states.len()
    }

    /// Distinct states observed as an episode start or a next state.
    pub fn unique_states_seen(&self) -> u64 {
        self.observed_unique
    }

    /// All state observations (episode starts and next states), with
    /// multiplicity.
    pub fn total_states_seen(&self) -> u64 {
        self.total_observations
    }

    /// Unique states seen divided by all states seen.
    pub fn novel_state_ratio(&self) -> Result<f64, GraphError> {
        if self.total_observations == 0 {
            return Err(GraphError::Empty);
        }
        Ok(self.observed_unique as f64 / self.total_observations as f64)
    }

    /// Distinct stored entries whose endpoint equals their source state.
    pub fn self_loop_count(&self) -> u64 {
        self.pairs()
            .map(|(s, _, entries)| entries.iter().filter(|e| &e.next == s).count() as u64)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// State keys in insertion order.
    pub fn states(&self) -> impl Iterator<Item = &StateKey> {
        self.states.keys()
    }

    pub fn state_index(&self, state: &StateKey) -> Option<usize> {
        self.states.get_index_of(state)
    }

    /// Every stored (state, action) node with its entries, states in insertion
    /// order and actions ascending.
    pub fn pairs(&self) -> impl Iterator<Item = (&StateKey, u32, &[EdgeEntry])> {
        self.states.iter().flat_map(|(s, node)| {
            node.actions
                .iter()
                .map(move |(a, p)| (s, *a, p.entries.as_slice()))
        })
    }

    /// Actions recorded at a state, ascending, with their entries.
    pub fn actions_at<'a>(
        &'a self,
        state: &StateKey,
    ) -> impl Iterator<Item = (u32, &'a [EdgeEntry])> + 'a {
        self.states
            .get(state)
            .into_iter()
            .flat_map(|n| n.actions.iter().map(|(a, p)| (*a, p.entries.as_slice())))
    }

    /// States recorded as episode starts, in insertion order.
    pub fn initial_states(&self) -> Vec<&StateKey> {
        self.states
            .iter()
            .filter(|(_, n)| n.initial_count > 0)
            .map(|(s, _)| s)
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = WriteBuf::new(MAGIC);
        w.u64(self.states.len() as u64);
        for (key, node) in &self.states {
            w.bytes(key.bytes());
            w.u64(node.obs_count);
            w.u64(node.initial_count);
        }
        let pair_count: u64 = self.states.values().map(|n| n.actions.len() as u64).sum();
        w.u64(pair_count);
        for (idx, (_, node)) in self.states.iter().enumerate() {
            for (action, pair) in &node.actions {
                w.u64(idx as u64);
                w.u32(*action);
                w.u64(pair.entries.len() as u64);
                for e in &pair.entries {
                    w.f64(e.reward);
                    w.u64(self.states.get_index_of(&e.next).unwrap() as u64);
                    w.u8(e.terminal as u8);
                    w.u64(e.freq);
                }
            }
        }
        w.buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, GraphError> {
        let mut r = ReadCursor::new(buf);
        r.expect_magic(MAGIC)?;
        let mut graph = TransitionGraph::new();
        let state_count = r.u64()?;
        for _ in 0..state_count {
            let len = r.u32()? as usize;
            let key = StateKey::new(r.take(len)?.to_vec());
            let obs = r.u64()?;
            let initial = r.u64()?;
            let node = graph.states.entry(key).or_default();
            node.obs_count = obs;
            node.initial_count = initial;
            if obs > 0 {
                graph.observed_unique += 1;
            }
            graph.total_observations += obs;
        }
        if graph.states.len() as u64 != state_count {
            return Err(FormatError {
                offset: r.offset(),
                message: "duplicate state encodings in state table".into(),
            }
            .into());
        }
        let pair_count = r.u64()?;
        for _ in 0..pair_count {
            let state_idx = r.u64()? as usize;
            if state_idx >= graph.states.len() {
                return Err(FormatError {
                    offset: r.offset(),
                    message: format!("state index {state_idx} out of range"),
                }
                .into());
            }
            let action = r.u32()?;
            let entry_count = r.u64()?;
            let mut entries = Vec::with_capacity(entry_count as usize);
            let mut visits = 0u64;
            for _ in 0..entry_count {
                let reward = r.f64()?;
                let next_idx = r.u64()? as usize;
                if next_idx >= graph.states.len() {
                    return Err(FormatError {
                        offset: r.offset(),
                        message: format!("next-state index {next_idx} out of range"),
                    }
                    .into());
                }
                let terminal = match r.u8()? {
                    0 => false,
                    1 => true,
                    b => {
                        return Err(FormatError {
                            offset: r.offset(),
                            message: format!("terminal flag must be 0 or 1, got {b}"),
                        }
                        .into())
                    }
                };
                let freq = r.u64()?;
                if freq == 0 {
                    return Err(FormatError {
                        offset: r.offset(),
                        message: "entry frequency must be positive".into(),
                    }
                    .into());
                }
                visits += freq;
                let next = graph.states.get_index(next_idx).unwrap().0.clone();
                entries.push(EdgeEntry { reward, next, terminal, freq });
            }
            let node = graph.states.get_index_mut(state_idx).unwrap().1;
            node.actions.insert(action, PairEdges { entries, count: visits });
            node.count += visits;
            graph.total_transitions += visits;
        }
        r.done()?;
        Ok(graph)
    }

    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Text export, one line per stored entry:
    /// `hex(s) action reward hex(s') terminal freq`.
    pub fn write_edge_list(&self, mut w: impl Write) -> std::io::Result<()> {
        for (s, action, entries) in self.pairs() {
            for e in entries {
                writeln!(
                    w,
                    "{} {} {} {} {} {}",
                    s.to_hex(),
                    action,
                    e.reward,
                    e.next.to_hex(),
                    e.terminal as u8,
                    e.freq
                )?;
            }
        }
        Ok(())
    }
}

/// Sample up to `budget` items without replacement, each draw proportional to
/// the item's weight among those remaining. When the budget covers all
/// candidates they are returned as-is.
///
/// Draws are sequential: every draw picks among the remaining items with
/// probability weight / remaining-total. A Fenwick tree over the weights keeps
/// each draw at O(log n).
pub fn weighted_sample<T>(
    candidates: Vec<(T, u64)>,
    budget: usize,
    rng: &mut impl Rng,
) -> Vec<T> {
    if candidates.len() <= budget {
        return candidates.into_iter().map(|(t, _)| t).collect();
    }
    let n = candidates.len();
    let mut items: Vec<Option<T>> = Vec::with_capacity(n);
    let mut weights: Vec<u64> = Vec::with_capacity(n);
    for (t, w) in candidates {
        items.push(Some(t));
        weights.push(w);
    }
    // One-based Fenwick tree holding prefix sums of the remaining weights;
    // built in O(n) by propagating each node's sum to its parent once.
    let mut tree = vec![0u64; n + 1];
    for i in 0..n {
        let j = i + 1;
        tree[j] += weights[i];
        let parent = j + (j & j.wrapping_neg());
        if parent <= n {
            tree[parent] += tree[j];
        }
    }
    let mut total: u64 = weights.iter().sum();
    let highest_bit = usize::BITS - 1 - n.leading_zeros();
    let mut picked = Vec::with_capacity(budget);
    for _ in 0..budget {
        if total == 0 {
            break;
        }
        let mut x = rng.gen_range(0..total);
        // Descend the tree to the first index whose cumulative weight
        // exceeds x.
        let mut pos = 0usize;
        let mut step = 1usize << highest_bit;
        while step > 0 {
            let next = pos + step;
            if next <= n && tree[next] <= x {
                x -= tree[next];
                pos = next;
            }
            step >>= 1;
        }
        let index = pos; // 0-based: pos is the count of skipped prefix
        let w = weights[index];
        // Remove the weight from the tree.
        let mut j = index + 1;
        while j <= n {
            tree[j] -= w;
            j += j & j.wrapping_neg();
        }
        weights[index] = 0;
        total -= w;
        picked.push(items[index].take().expect("each index drawn once"));
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn key(i: u8) -> StateKey {
        StateKey::new(vec![i])
    }

    fn rec(s: u8, a: u32, r: f64, next: u8) -> TransitionRecord {
        TransitionRecord {
            state: key(s),
            action: a,
            reward: r,
            next_state: key(next),
            terminal: false,
        }
    }

    #[test]
    fn first_insert_creates_nodes_and_counters() {
        let mut g = TransitionGraph::new();
        g.insert(&rec(0, 0, 0.0, 1));
        assert_eq!(g.pair_visits(&key(0), 0), 1);
        assert_eq!(g.state_node_count(), 2);
        assert_eq!(g.total_transitions(), 1);
    }

    #[test]
    fn identical_records_merge_by_frequency() {
        let mut g = TransitionGraph::new();
        g.insert(&rec(0, 0, 0.0, 1));
        g.insert(&rec(0, 0, 0.0, 1));
        let out = g.outgoing(&key(0), 0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].freq, 2);
        assert_eq!(g.pair_visits(&key(0), 0), 2);
    }

    #[test]
    fn stochastic_branches_stay_distinct() {
        let mut g = TransitionGraph::new();
        g.insert(&rec(0, 0, 0.0, 1));
        g.insert(&rec(0, 0, 0.0, 2));
        let out = g.outgoing(&key(0), 0);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|e| e.freq == 1));
        assert_eq!(g.pair_visits(&key(0), 0), 2);
    }

    #[test]
    fn differing_rewards_stay_distinct() {
        let mut g = TransitionGraph::new();
        g.insert(&rec(0, 0, 0.0, 1));
        g.insert(&rec(0, 0, 1.0, 1));
        assert_eq!(g.outgoing(&key(0), 0).len(), 2);
    }

    #[test]
    fn unseen_pair_has_no_entries() {
        let g = TransitionGraph::new();
        assert!(g.outgoing(&key(0), 3).is_empty());
        assert_eq!(g.pair_visits(&key(0), 3), 0);
    }

    #[test]
    fn triple_insert_merges_to_single_entry() {
        let mut g = TransitionGraph::new();
        for _ in 0..3 {
            g.insert(&rec(0, 1, 0.5, 2));
        }
        let out = g.outgoing(&key(0), 1);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].freq, 3);
    }

    #[test]
    fn novel_state_ratio_counts_observations() {
        let mut g = TransitionGraph::new();
        assert!(g.novel_state_ratio().is_err());
        // One start plus three self-loop arrivals: 4 observations, 1 unique.
        g.observe_initial(&key(0));
        for _ in 0..3 {
            g.insert(&rec(0, 0, 0.0, 0));
        }
        assert_eq!(g.novel_state_ratio().unwrap(), 0.25);
    }

    #[test]
    fn all_distinct_observations_give_ratio_one() {
        let mut g = TransitionGraph::new();
        g.observe_initial(&key(0));
        g.insert(&rec(0, 0, 0.0, 1));
        g.insert(&rec(1, 0, 0.0, 2));
        assert_eq!(g.novel_state_ratio().unwrap(), 1.0);
    }

    #[test]
    fn ratio_example_seven_of_ten() {
        let mut g = TransitionGraph::new();
        g.observe_initial(&key(0));
        for next in [1, 2, 3, 4, 5, 6] {
            g.insert(&rec(0, 0, 0.0, next));
        }
        for next in [1, 2, 3] {
            g.insert(&rec(0, 1, 0.0, next));
        }
        assert_eq!(g.total_states_seen(), 10);
        assert_eq!(g.unique_states_seen(), 7);
        assert_eq!(g.novel_state_ratio().unwrap(), 0.7);
    }

    #[test]
    fn round_trip_preserves_everything() {
        let mut g = TransitionGraph::new();
        g.observe_initial(&key(0));
        g.insert(&rec(0, 0, 0.25, 1));
        g.insert(&rec(0, 0, 0.25, 1));
        g.insert(&TransitionRecord {
            state: key(1),
            action: 3,
            reward: 1.0,
            next_state: key(2),
            terminal: true,
        });
        let back = TransitionGraph::from_bytes(&g.to_bytes()).unwrap();
        assert_eq!(back.to_bytes(), g.to_bytes());
        assert_eq!(back.total_transitions(), 3);
        assert_eq!(back.pair_visits(&key(0), 0), 2);
        assert_eq!(back.state_visits(&key(0)), 2);
        assert_eq!(back.novel_state_ratio().unwrap(), g.novel_state_ratio().unwrap());
        assert_eq!(back.initial_states(), vec![&key(0)]);
        assert!(back.outgoing(&key(1), 3)[0].terminal);
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let mut g = TransitionGraph::new();
        g.insert(&rec(0, 0, 0.0, 1));
        let bytes = g.to_bytes();
        let err = TransitionGraph::from_bytes(&bytes[..bytes.len() - 2]).unwrap_err();
        assert!(matches!(err, GraphError::Format(_)));
    }

    #[test]
    fn empty_valid_file_loads_empty_graph() {
        let g = TransitionGraph::new();
        let back = TransitionGraph::from_bytes(&g.to_bytes()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.total_transitions(), 0);
    }

    #[test]
    fn self_loops_are_counted() {
        let mut g = TransitionGraph::new();
        g.insert(&rec(0, 0, 0.0, 0));
        g.insert(&rec(0, 0, 0.0, 0));
        g.insert(&rec(0, 1, 0.0, 1));
        assert_eq!(g.self_loop_count(), 1);
    }

    #[test]
    fn budget_covering_all_returns_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let picked = weighted_sample(vec![("a", 1), ("b", 1)], 2, &mut rng);
        assert_eq!(picked, vec!["a", "b"]);
        let empty: Vec<(&str, u64)> = vec![];
        assert!(weighted_sample(empty, 5, &mut rng).is_empty());
    }

    #[test]
    fn draw_frequency_tracks_weights() {
        // P(pick the weight-3 item) = 3/4; check the Monte Carlo rate.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut hits = 0u32;
        let draws = 100_000;
        for _ in 0..draws {
            let picked = weighted_sample(vec![("heavy", 3u64), ("light", 1)], 1, &mut rng);
            if picked[0] == "heavy" {
                hits += 1;
            }
        }
        let rate = hits as f64 / draws as f64;
        assert!((rate - 0.75).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let items: Vec<(u32, u64)> = (0..20).map(|i| (i, (i % 5 + 1) as u64)).collect();
        let a = weighted_sample(items.clone(), 7, &mut ChaCha8Rng::seed_from_u64(42));
        let b = weighted_sample(items, 7, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }
}
