//! Run metrics: per-step rows (CSV-serializable) and per-pair ring buffers of
//! recent target estimates for the stability analysis.

use crate::state::StateKey;
use indexmap::IndexMap;
use std::collections::VecDeque;
use std::io::Write;

/// Window length of the per-pair target-estimate rings.
pub const STABILITY_WINDOW: usize = 10;

/// One metrics row. Optional fields stay empty in the CSV when the step had
/// no episode end, evaluation, or optimization event.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub episode: u32,
    pub episode_return: Option<f64>,
    pub eval_return: Option<f64>,
    pub op: String,
    pub seed: u64,
    pub target_mean: Option<f64>,
    pub target_std: Option<f64>,
    pub nsr: f64,
    /// Which frozen target snapshot served this step's targets. Not part of
    /// the CSV; used to assert snapshot immutability between update events.
    pub snapshot_version: u64,
}

/// Per-(state, action) history of computed backup targets.
#[derive(Default)]
pub struct StabilityTracker {
    rings: IndexMap<(StateKey, u32), VecDeque<f64>>,
    history: IndexMap<(StateKey, u32), Vec<f64>>,
}

impl StabilityTracker {
    pub fn record(&mut self, state: &StateKey, action: u32, value: f64) {
        let key = (state.clone(), action);
        let ring = self.rings.entry(key.clone()).or_default();
        if ring.len() == STABILITY_WINDOW {
            ring.pop_front();
        }
        ring.push_back(value);
        self.history.entry(key).or_default().push(value);
    }

    pub fn is_empty(&self) -> bool {
        self.rings.is_empty()
    }

    /// Latest up-to-10 estimates per pair.
    pub fn rings(&self) -> impl Iterator<Item = (&(StateKey, u32), &VecDeque<f64>)> {
        self.rings.iter()
    }

    /// Full estimate history per pair (for recomputing reports from scratch).
    pub fn history(&self) -> impl Iterator<Item = (&(StateKey, u32), &Vec<f64>)> {
        self.history.iter()
    }
}

/// Append-only record of a single run.
pub struct RunMetrics {
    pub rows: Vec<MetricsRow>,
    pub stability: StabilityTracker,
    pub final_eval: Option<f64>,
}

impl RunMetrics {
    pub fn new() -> Self {
        RunMetrics {
            rows: Vec::new(),
            stability: StabilityTracker::default(),
            final_eval: None,
        }
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "step,episode,return,eval_return,op,seed,target_mean,target_std,nsr")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.step,
                r.episode,
                opt(r.episode_return),
                opt(r.eval_return),
                r.op,
                r.seed,
                opt(r.target_mean),
                opt(r.target_std),
                r.nsr
            )?;
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("writing to a Vec cannot fail");
        String::from_utf8(out).expect("CSV is ASCII")
    }
}

impl Default for RunMetrics {
    fn default() -> Self {
        Self::new()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rings_keep_the_last_ten() {
        let mut t = StabilityTracker::default();
        let s = StateKey::new(vec![1]);
        for i in 0..15 {
            t.record(&s, 0, i as f64);
        }
        let (_, ring) = t.rings().next().unwrap();
        assert_eq!(ring.len(), 10);
        assert_eq!(*ring.front().unwrap(), 5.0);
        assert_eq!(*ring.back().unwrap(), 14.0);
        let (_, hist) = t.history().next().unwrap();
        assert_eq!(hist.len(), 15);
    }

    #[test]
    fn csv_has_pinned_header_and_empty_optionals() {
        let mut m = RunMetrics::new();
        m.rows.push(MetricsRow {
            step: 1,
            episode: 0,
            episode_return: None,
            eval_return: Some(1.0),
            op: "graph".into(),
            seed: 3,
            target_mean: None,
            target_std: None,
            nsr: 0.5,
            snapshot_version: 0,
        });
        let csv = m.csv_string();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,episode,return,eval_return,op,seed,target_mean,target_std,nsr"
        );
        assert_eq!(lines.next().unwrap(), "1,0,,1,graph,3,,,0.5");
    }
}
