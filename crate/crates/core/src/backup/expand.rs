//! Local graph expansion under depth and breadth limits.
//!
//! Expansion walks the data graph outward from a source (state, action) pair
//! for `depth` levels. Level 0 considers only the source pair's own
//! transitions; each later level gathers every stored transition leaving the
//! current boundary states, samples at most `breadth` of them proportionally
//! to frequency (without replacement), appends their (state, action) pairs to
//! the expansion list, and advances the boundary to the sampled next states.
//! Endpoints of terminal transitions are absorbing and never join the
//! boundary.

use crate::graph::{weighted_sample, EdgeEntry, TransitionGraph};
use crate::state::{DigestSet, StateKey};
use indexmap::IndexMap;
use rand::Rng;

/// One expanded (state, action) pair with the transitions sampled for it.
#[derive(Clone, Debug)]
pub struct ExpandedPair {
    pub state: StateKey,
    pub action: u32,
    pub selected: Vec<EdgeEntry>,
}

impl ExpandedPair {
    /// Total frequency of the sampled transitions (the renormalizer).
    pub fn selected_visits(&self) -> u64 {
        self.selected.iter().map(|e| e.freq).sum()
    }
}

/// Depth-ordered list of expanded pairs. Level 0 always holds exactly the
/// source pair (with no selected transitions when the pair is unseen).
#[derive(Clone, Debug)]
pub struct ExpansionList {
    pub levels: Vec<Vec<ExpandedPair>>,
}

impl ExpansionList {
    pub fn source(&self) -> &ExpandedPair {
        &self.levels[0][0]
    }

    /// Flattened list order: level by level, in sampling order.
    pub fn pairs(&self) -> impl Iterator<Item = &ExpandedPair> {
        self.levels.iter().flatten()
    }

    /// Reverse list order, the evaluation order for bottom-up backups.
    pub fn pairs_rev(&self) -> impl Iterator<Item = &ExpandedPair> {
        self.levels.iter().rev().flat_map(|level| level.iter().rev())
    }

    pub fn pair_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }
}

/// Expand the local graph around `source` for `depth` levels with a breadth
/// budget of `breadth` sampled transitions per level (or per boundary pair
/// when `per_pair_breadth` is set).
pub fn expand_local_graph(
    graph: &TransitionGraph,
    source: (&StateKey, u32),
    depth: usize,
    breadth: usize,
    per_pair_breadth: bool,
    rng: &mut impl Rng,
) -> ExpansionList {
    debug_assert!(depth >= 1 && breadth >= 1);
    let mut levels: Vec<Vec<ExpandedPair>> = Vec::new();

    // Level 0: only the source pair's own transitions are candidates.
    let candidates: Vec<(&EdgeEntry, u64)> =
        graph.outgoing(source.0, source.1).iter().map(|e| (e, e.freq)).collect();
    let selected = weighted_sample(candidates, breadth, rng);
    let mut boundary = frontier_of(&selected);
    levels.push(vec![ExpandedPair {
        state: source.0.clone(),
        action: source.1,
        selected: selected.into_iter().cloned().collect(),
    }]);

    for _ in 1..depth {
        if boundary.is_empty() {
            break;
        }
        let mut candidates: Vec<((&StateKey, u32, &EdgeEntry), u64)> = Vec::new();
        for s in &boundary {
            for (a, entries) in graph.actions_at(s) {
                for e in entries {
                    candidates.push(((*s, a, e), e.freq));
                }
            }
        }
        let sampled = if per_pair_breadth {
            // Per-pair budget: each boundary pair samples from its own
            // transitions.
            let mut groups: IndexMap<(&StateKey, u32), Vec<((&StateKey, u32, &EdgeEntry), u64)>> =
                IndexMap::new();
            for c in candidates {
                groups.entry((c.0 .0, c.0 .1)).or_default().push(c);
            }
            let mut out = Vec::new();
            for (_, group) in groups {
                out.extend(weighted_sample(group, breadth, rng));
            }
            out
        } else {
            weighted_sample(candidates, breadth, rng)
        };
        if sampled.is_empty() {
            break;
        }
        let mut pairs: IndexMap<(&StateKey, u32), Vec<&EdgeEntry>> = IndexMap::new();
        for (s, a, e) in &sampled {
            pairs.entry((s, *a)).or_default().push(e);
        }
        boundary = frontier_of_refs(&sampled);
        levels.push(
            pairs
                .into_iter()
                .map(|((state, action), selected)| ExpandedPair {
                    state: state.clone(),
                    action,
                    selected: selected.into_iter().cloned().collect(),
                })
                .collect(),
        );
    }
    ExpansionList { levels }
}

/// Distinct non-terminal endpoints of the sampled transitions, first-seen
/// order.
fn frontier_of<'g>(selected: &[&'g EdgeEntry]) -> Vec<&'g StateKey> {
    let mut seen = DigestSet::default();
    let mut out = Vec::new();
    for e in selected {
        if !e.terminal && seen.insert(&e.next) {
            out.push(&e.next);
        }
    }
    out
}

fn frontier_of_refs<'g>(sampled: &[(&'g StateKey, u32, &'g EdgeEntry)]) -> Vec<&'g StateKey> {
    let mut seen = DigestSet::default();
    let mut out = Vec::new();
    for (_, _, e) in sampled {
        if !e.terminal && seen.insert(&e.next) {
            out.push(&e.next);
        }
    }
    out
}
