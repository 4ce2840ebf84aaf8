//! Property tests for the graph, value tables, and operator invariants.

mod common;

use common::*;
use gbl_core::backup::{
    expand_local_graph, graph_backup_target, n_step_q_target, one_step_target, tree_backup_target,
    BackupConfig,
};
use gbl_core::graph::{weighted_sample, TransitionGraph};
use gbl_core::state::{StateKey, TransitionRecord};
use gbl_core::value::{CategoricalQTable, ScalarQTable};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{HashMap, HashSet};

fn record_strategy() -> impl Strategy<Value = TransitionRecord> {
    (0u32..6, 0u32..3, 0usize..4, 0u32..6, proptest::bool::ANY).prop_map(
        |(s, a, r_idx, next, terminal)| TransitionRecord {
            state: key(s),
            action: a,
            reward: [0.0, 0.5, 1.0, 0.25][r_idx],
            next_state: key(next),
            terminal,
        },
    )
}

type EntryTuple = (Vec<u8>, u32, u64, Vec<u8>, bool, u64);

fn entry_multiset(graph: &TransitionGraph) -> Vec<EntryTuple> {
    let mut out: Vec<EntryTuple> = graph
        .pairs()
        .flat_map(|(s, a, entries)| {
            entries.iter().map(move |e| {
                (
                    s.bytes().to_vec(),
                    a,
                    e.reward.to_bits(),
                    e.next.bytes().to_vec(),
                    e.terminal,
                    e.freq,
                )
            })
        })
        .collect();
    out.sort();
    out
}

proptest! {
    #[test]
    fn counters_match_an_independent_recount(records in proptest::collection::vec(record_strategy(), 1..120)) {
        let mut graph = TransitionGraph::new();
        graph.observe_initial(&records[0].state);
        for r in &records {
            graph.insert(r);
        }
        // c(s, a) recounted from the raw log.
        let mut pair_counts: HashMap<(Vec<u8>, u32), u64> = HashMap::new();
        for r in &records {
            *pair_counts.entry((r.state.bytes().to_vec(), r.action)).or_default() += 1;
        }
        for ((s_bytes, a), count) in &pair_counts {
            let s = StateKey::new(s_bytes.clone());
            prop_assert_eq!(graph.pair_visits(&s, *a), *count);
        }
        // c(s) = sum over actions of c(s, a).
        for s in graph.states() {
            let per_action: u64 = (0..3).map(|a| graph.pair_visits(s, a)).sum();
            prop_assert_eq!(graph.state_visits(s), per_action);
        }
        prop_assert_eq!(graph.total_transitions(), records.len() as u64);
        // Entry frequencies sum to the pair counts.
        for (s, a, entries) in graph.pairs() {
            let freq_sum: u64 = entries.iter().map(|e| e.freq).sum();
            prop_assert_eq!(freq_sum, graph.pair_visits(s, a));
        }
        // Novel-state ratio recounted from scratch.
        let mut seen: HashSet<Vec<u8>> = HashSet::new();
        seen.insert(records[0].state.bytes().to_vec());
        let mut total = 1u64;
        for r in &records {
            seen.insert(r.next_state.bytes().to_vec());
            total += 1;
        }
        let ratio = seen.len() as f64 / total as f64;
        prop_assert_eq!(graph.novel_state_ratio().unwrap(), ratio);
    }

    #[test]
    fn permuted_episode_order_preserves_the_entry_set(
        episodes in proptest::collection::vec(proptest::collection::vec(record_strategy(), 1..12), 1..6),
        swap in proptest::bool::ANY,
    ) {
        let build = |order: &[&Vec<TransitionRecord>]| {
            let mut g = TransitionGraph::new();
            for ep in order {
                g.observe_initial(&ep[0].state);
                for r in ep.iter() {
                    g.insert(r);
                }
            }
            g
        };
        let forward: Vec<&Vec<TransitionRecord>> = episodes.iter().collect();
        let mut permuted = forward.clone();
        if swap {
            permuted.reverse();
        }
        let a = build(&forward);
        let b = build(&permuted);
        prop_assert_eq!(entry_multiset(&a), entry_multiset(&b));
        prop_assert_eq!(a.novel_state_ratio().unwrap(), b.novel_state_ratio().unwrap());
    }

    #[test]
    fn weighted_sample_respects_budget_and_candidates(
        weights in proptest::collection::vec(1u64..9, 0..25),
        budget in 1usize..30,
        seed in 0u64..64,
    ) {
        let candidates: Vec<(usize, u64)> = weights.iter().copied().enumerate().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picked = weighted_sample(candidates.clone(), budget, &mut rng);
        prop_assert_eq!(picked.len(), budget.min(candidates.len()));
        let unique: HashSet<usize> = picked.iter().copied().collect();
        prop_assert_eq!(unique.len(), picked.len());
        if budget >= candidates.len() {
            let all: Vec<usize> = candidates.iter().map(|(i, _)| *i).collect();
            prop_assert_eq!(picked, all);
        }
    }

    #[test]
    fn scalar_update_contracts_toward_target(
        q0 in -5.0f64..5.0,
        target in -5.0f64..5.0,
        alpha in 0.01f64..1.0,
    ) {
        let mut table = ScalarQTable::new(1);
        table.set(&key(0), 0, q0);
        table.update(&key(0), 0, target, alpha).unwrap();
        let gap_new = (table.q(&key(0), 0) - target).abs();
        let gap_old = (q0 - target).abs();
        prop_assert!((gap_new - (1.0 - alpha) * gap_old).abs() < 1e-12 * (1.0 + gap_old));
    }

    #[test]
    fn categorical_updates_stay_normalized(
        masses in proptest::collection::vec((0u8..5, 0.0f64..1.0), 1..20),
    ) {
        let mut table = CategoricalQTable::new(1, 5, 0.0, 1.0).unwrap();
        for (atom, alpha) in masses {
            let mut m = vec![0.0; 5];
            m[atom as usize] = 1.0;
            let alpha = alpha.max(0.05);
            table.update(&key(0), 0, &m, alpha).unwrap();
            let sum: f64 = table.dist(&key(0), 0).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(table.dist(&key(0), 0).iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn greedy_action_ignores_constant_shifts(
        values in proptest::collection::vec(-3.0f64..3.0, 4),
        shift in -10.0f64..10.0,
    ) {
        let mut a = ScalarQTable::new(4);
        let mut b = ScalarQTable::new(4);
        for (i, v) in values.iter().enumerate() {
            a.set(&key(0), i as u32, *v);
            b.set(&key(0), i as u32, *v + shift);
        }
        prop_assert_eq!(a.greedy_action(&key(0)), b.greedy_action(&key(0)));
    }

    #[test]
    fn state_key_equality_matches_byte_equality(
        left in proptest::collection::vec(proptest::num::u8::ANY, 0..12),
        right in proptest::collection::vec(proptest::num::u8::ANY, 0..12),
    ) {
        let a = StateKey::new(left.clone());
        let b = StateKey::new(right.clone());
        prop_assert_eq!(a == b, left == right);
        let c = StateKey::new(left.clone());
        prop_assert_eq!(a.clone(), c.clone());
        // Symmetry and hash consistency on equals.
        prop_assert_eq!(c, a);
    }

    #[test]
    fn graph_bytes_round_trip(records in proptest::collection::vec(record_strategy(), 0..60)) {
        let mut g = TransitionGraph::new();
        if let Some(first) = records.first() {
            g.observe_initial(&first.state);
        }
        for r in &records {
            g.insert(r);
        }
        let bytes = g.to_bytes();
        let back = TransitionGraph::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn expansion_respects_level_budget_and_connectivity(
        dataset_seed in 0u64..500,
        depth in 1usize..5,
        breadth in 1usize..8,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(dataset_seed);
        let data = random_acyclic_dataset(&mut rng, 14, 3);
        if data.records.is_empty() {
            return Ok(());
        }
        let source = &data.records[0];
        let mut expansion_rng = ChaCha8Rng::seed_from_u64(dataset_seed ^ 0xE);
        let list = expand_local_graph(
            &data.graph,
            (&source.state, source.action),
            depth,
            breadth,
            false,
            &mut expansion_rng,
        );
        prop_assert!(list.levels.len() <= depth);
        prop_assert_eq!(list.levels[0].len(), 1);
        prop_assert_eq!(&list.levels[0][0].state, &source.state);
        for (i, level) in list.levels.iter().enumerate() {
            let selected: usize = level.iter().map(|p| p.selected.len()).sum();
            prop_assert!(selected <= breadth);
            if i + 1 < list.levels.len() {
                let frontier: HashSet<StateKey> = level
                    .iter()
                    .flat_map(|p| p.selected.iter())
                    .filter(|e| !e.terminal)
                    .map(|e| e.next.clone())
                    .collect();
                for pair in &list.levels[i + 1] {
                    prop_assert!(frontier.contains(&pair.state));
                }
            }
        }
    }

    #[test]
    fn targets_are_monotone_in_gamma_with_zero_bootstrap(
        dataset_seed in 0u64..200,
        lower_idx in 0usize..3,
    ) {
        let gammas = [0.0, 0.3, 0.6, 0.9];
        let (g_low, g_high) = (gammas[lower_idx], gammas[lower_idx + 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(dataset_seed);
        let data = random_acyclic_dataset(&mut rng, 12, 3);
        if data.records.is_empty() {
            return Ok(());
        }
        let zeros = ScalarQTable::new(data.action_count);
        for (i, rec) in data.records.iter().enumerate().take(6) {
            prop_assert!(one_step_target(rec, &zeros, g_low) <= one_step_target(rec, &zeros, g_high));
            let slice = std::slice::from_ref(rec);
            prop_assert!(
                n_step_q_target(slice, 1, &zeros, g_low).unwrap()
                    <= n_step_q_target(slice, 1, &zeros, g_high).unwrap()
            );
            prop_assert!(
                tree_backup_target(slice, 1, &zeros, g_low).unwrap()
                    <= tree_backup_target(slice, 1, &zeros, g_high).unwrap()
            );
            let cfg_low = BackupConfig { depth: 3, breadth: 4, gamma: g_low, ..BackupConfig::default() };
            let cfg_high = BackupConfig { gamma: g_high, ..cfg_low.clone() };
            let mut rng_a = ChaCha8Rng::seed_from_u64(i as u64);
            let mut rng_b = ChaCha8Rng::seed_from_u64(i as u64);
            let low = graph_backup_target(&data.graph, (&rec.state, rec.action), &zeros, &zeros, &cfg_low, &mut rng_a);
            let high = graph_backup_target(&data.graph, (&rec.state, rec.action), &zeros, &zeros, &cfg_high, &mut rng_b);
            prop_assert!(low <= high + 1e-15);
        }
    }
}
