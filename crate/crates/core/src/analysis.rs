//! Transition-graph analysis: density statistics, crossover probability,
//! correlation, the radial layout, and DOT export.

use crate::graph::TransitionGraph;
use crate::learner::RunMetrics;
use crate::state::StateKey;
use indexmap::IndexMap;
use std::collections::VecDeque;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("graph holds no states")]
    EmptyGraph,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("no stability estimates recorded")]
    NoStability,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Probability that a backup within `horizon` steps meets at least one
/// duplicated state, assuming duplicates occur independently with rate
/// (1 - novel_ratio) per step: 1 - novel_ratio^horizon.
pub fn crossover_probability(novel_ratio: f64, horizon: u32) -> f64 {
    debug_assert!(novel_ratio > 0.0 && novel_ratio <= 1.0 && horizon >= 1);
    1.0 - novel_ratio.powi(horizon as i32)
}

/// Standard Pearson correlation coefficient.
pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> Result<f64, AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::Degenerate("length mismatch".into()));
    }
    if xs.len() < 2 {
        return Err(AnalysisError::Degenerate("need at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(AnalysisError::Degenerate("zero variance".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Aggregated stability of recent target estimates: per-pair mean and sample
/// standard deviation over the last-10 ring, averaged across pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub pair_count: usize,
    pub mean_of_means: f64,
    pub mean_of_stds: f64,
}

/// Summarize the per-pair rings of a run. Pairs with fewer than two estimates
/// are skipped (their sample deviation is undefined).
pub fn stability_report(metrics: &RunMetrics) -> Result<StabilityReport, AnalysisError> {
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for (_, ring) in metrics.stability.rings() {
        if ring.len() < 2 {
            continue;
        }
        let (mean, std) = mean_and_sample_std(ring);
        means.push(mean);
        stds.push(std);
    }
    if means.is_empty() {
        return Err(AnalysisError::NoStability);
    }
    let n = means.len() as f64;
    Ok(StabilityReport {
        pair_count: means.len(),
        mean_of_means: means.iter().sum::<f64>() / n,
        mean_of_stds: stds.iter().sum::<f64>() / n,
    })
}

fn mean_and_sample_std(values: &VecDeque<f64>) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Radial placement of the transition graph around a synthetic meta-initial
/// root that points at every episode start state.
pub struct RadialLayout {
    /// Polar position (radius, angle) per state, radius = BFS depth.
    pub positions: IndexMap<StateKey, (f64, f64)>,
    pub depth: IndexMap<StateKey, u32>,
    /// Self-loop transitions (state, action), excluded from layout edges.
    pub self_loops: Vec<(StateKey, u32)>,
    /// DOT identifier of the synthetic root.
    pub root: &'static str,
    /// States unreachable from every initial state, placed on an outer ring.
    pub unreached: Vec<StateKey>,
}

pub const META_ROOT: &str = "meta_root";

/// BFS layout: radius is depth under the meta-initial root; children split
/// their parent's angular sector proportionally to descendant leaf counts.
pub fn compute_radial_layout(graph: &TransitionGraph, initial_states: &[StateKey]) -> RadialLayout {
    // Breadth-first discovery over state-to-state reachability via action
    // nodes; self-loop entries are flagged and never act as layout edges.
    let mut self_loops = Vec::new();
    for (s, a, entries) in graph.pairs() {
        if entries.iter().any(|e| &e.next == s) {
            self_loops.push((s.clone(), a));
        }
    }
    let mut depth: IndexMap<StateKey, u32> = IndexMap::new();
    let mut children: IndexMap<StateKey, Vec<StateKey>> = IndexMap::new();
    let mut roots: Vec<StateKey> = Vec::new();
    let mut queue = VecDeque::new();
    for s in initial_states {
        if graph.state_index(s).is_some() && !depth.contains_key(s) {
            depth.insert(s.clone(), 1);
            roots.push(s.clone());
            queue.push_back(s.clone());
        }
    }
    while let Some(s) = queue.pop_front() {
        let d = depth[&s];
        for (_, entries) in graph.actions_at(&s) {
            for e in entries {
                if e.next == s || depth.contains_key(&e.next) {
                    continue;
                }
                if graph.state_index(&e.next).is_none() {
                    continue;
                }
                depth.insert(e.next.clone(), d + 1);
                children.entry(s.clone()).or_default().push(e.next.clone());
                queue.push_back(e.next.clone());
            }
        }
    }
    let max_depth = depth.values().copied().max().unwrap_or(0);
    let unreached: Vec<StateKey> = graph
        .states()
        .filter(|s| !depth.contains_key(*s))
        .cloned()
        .collect();

    // Leaf counts of the BFS tree drive the sector widths.
    let mut leaves: IndexMap<StateKey, u64> = IndexMap::new();
    for s in depth.keys().rev() {
        let count = children
            .get(s)
            .map(|cs| cs.iter().map(|c| leaves[c]).sum::<u64>())
            .filter(|&c| c > 0)
            .unwrap_or(1);
        leaves.insert(s.clone(), count);
    }
    let mut positions: IndexMap<StateKey, (f64, f64)> = IndexMap::new();
    let total_root_leaves: u64 = roots.iter().map(|r| leaves[r]).sum::<u64>().max(1);
    let full = std::f64::consts::TAU;
    let mut stack: Vec<(StateKey, f64, f64)> = Vec::new();
    let mut cursor = 0.0;
    for r in &roots {
        let width = full * leaves[r] as f64 / total_root_leaves as f64;
        stack.push((r.clone(), cursor, width));
        cursor += width;
    }
    while let Some((s, start, width)) = stack.pop() {
        positions.insert(s.clone(), (depth[&s] as f64, start + width / 2.0));
        if let Some(cs) = children.get(&s) {
            let child_leaves: u64 = cs.iter().map(|c| leaves[c]).sum();
            let mut offset = start;
            for c in cs {
                let w = width * leaves[c] as f64 / child_leaves as f64;
                stack.push((c.clone(), offset, w));
                offset += w;
            }
        }
    }
    // Unreachable states sit evenly spaced on one ring past the frontier.
    let outer = (max_depth + 1) as f64;
    let n_unreached = unreached.len().max(1) as f64;
    for (i, s) in unreached.iter().enumerate() {
        positions.insert(s.clone(), (outer, full * i as f64 / n_unreached));
    }
    RadialLayout {
        positions,
        depth,
        self_loops,
        root: META_ROOT,
        unreached,
    }
}

/// Write the graph with its layout as a DOT digraph: fixed node positions
/// (polar converted to cartesian), one edge per stored distinct transition
/// with `penwidth` scaled by log frequency, a dashed edge from the meta-root
/// to each initial state, and self-loops drawn as loop edges.
pub fn export_dot(
    graph: &TransitionGraph,
    layout: &RadialLayout,
    initial_states: &[StateKey],
    mut w: impl Write,
) -> Result<(), AnalysisError> {
    if graph.is_empty() {
        return Err(AnalysisError::EmptyGraph);
    }
    let id_of = |s: &StateKey| format!("s{}", graph.state_index(s).expect("state in graph"));
    writeln!(w, "digraph transition_graph {{")?;
    writeln!(w, "  node [shape=point, width=0.06];")?;
    writeln!(
        w,
        "  {} [pos=\"0.000000,0.000000!\", shape=circle, width=0.12, label=\"\"];",
        layout.root
    )?;
    for (s, (radius, angle)) in &layout.positions {
        let x = radius * angle.cos();
        let y = radius * angle.sin();
        writeln!(
            w,
            "  {} [pos=\"{:.6},{:.6}!\", tooltip=\"{}\"];",
            id_of(s),
            x,
            y,
            s.to_hex()
        )?;
    }
    for s in initial_states {
        if graph.state_index(s).is_some() {
            writeln!(w, "  {} -> {} [style=dashed];", layout.root, id_of(s))?;
        }
    }
    for (s, _, entries) in graph.pairs() {
        for e in entries {
            let penwidth = 1.0 + (e.freq as f64).ln();
            writeln!(
                w,
                "  {} -> {} [penwidth={:.4}];",
                id_of(s),
                id_of(&e.next),
                penwidth
            )?;
        }
    }
    writeln!(w, "}}")?;
    Ok(())
}
