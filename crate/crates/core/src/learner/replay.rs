//! Episode-ordered replay storage and the line-delimited trajectory log.
//!
//! The buffer keeps whole episodes so the chain operators can read contiguous
//! trajectory slices, while a flat index supports uniform sampling over all
//! stored transitions. Capacity equals the run's total steps, so nothing is
//! ever evicted.

use super::LearnerError;
use crate::state::{StateKey, TransitionRecord};
use std::io::{BufRead, Write};

#[derive(Default)]
pub struct TrajectoryBuffer {
    episodes: Vec<Vec<TransitionRecord>>,
    flat: Vec<(u32, u32)>,
}

impl TrajectoryBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, episode: usize, rec: TransitionRecord) {
        while self.episodes.len() <= episode {
            self.episodes.push(Vec::new());
        }
        let offset = self.episodes[episode].len() as u32;
        self.episodes[episode].push(rec);
        self.flat.push((episode as u32, offset));
    }

    pub fn len(&self) -> usize {
        self.flat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flat.is_empty()
    }

    pub fn get(&self, index: usize) -> &TransitionRecord {
        let (e, o) = self.flat[index];
        &self.episodes[e as usize][o as usize]
    }

    /// Up to `n` records starting at `index`, truncated at the episode end.
    pub fn slice_from(&self, index: usize, n: usize) -> &[TransitionRecord] {
        let (e, o) = self.flat[index];
        let episode = &self.episodes[e as usize];
        let start = o as usize;
        &episode[start..(start + n).min(episode.len())]
    }

    pub fn episodes(&self) -> &[Vec<TransitionRecord>] {
        &self.episodes
    }
}

/// Write episodes as `episode step hex(s) a r hex(s') done` lines.
pub fn write_trajectory_log(
    episodes: &[Vec<TransitionRecord>],
    mut w: impl Write,
) -> std::io::Result<()> {
    for (e, episode) in episodes.iter().enumerate() {
        for (step, rec) in episode.iter().enumerate() {
            writeln!(
                w,
                "{} {} {} {} {} {} {}",
                e,
                step,
                rec.state.to_hex(),
                rec.action,
                rec.reward,
                rec.next_state.to_hex(),
                rec.terminal as u8
            )?;
        }
    }
    Ok(())
}

/// Parse a trajectory log written by [`write_trajectory_log`].
pub fn read_trajectory_log(r: impl BufRead) -> Result<Vec<Vec<TransitionRecord>>, LearnerError> {
    let mut episodes: Vec<Vec<TransitionRecord>> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(|e| LearnerError::LogParse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| LearnerError::LogParse { line: lineno + 1, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(fail(format!("expected 7 fields, got {}", fields.len())));
        }
        let episode: usize = fields[0].parse().map_err(|_| fail("bad episode index".into()))?;
        let step: usize = fields[1].parse().map_err(|_| fail("bad step index".into()))?;
        let state = StateKey::from_hex(fields[2]).map_err(|e| fail(format!("bad state hex: {e}")))?;
        let action: u32 = fields[3].parse().map_err(|_| fail("bad action".into()))?;
        let reward: f64 = fields[4].parse().map_err(|_| fail("bad reward".into()))?;
        let next_state =
            StateKey::from_hex(fields[5]).map_err(|e| fail(format!("bad next-state hex: {e}")))?;
        let terminal = match fields[6] {
            "0" => false,
            "1" => true,
            other => return Err(fail(format!("done flag must be 0 or 1, got {other}"))),
        };
        if episode > episodes.len() {
            return Err(fail(format!("episode index {episode} skips ahead")));
        }
        if episode == episodes.len() {
            episodes.push(Vec::new());
        }
        if step != episodes[episode].len() {
            return Err(fail(format!(
                "step {step} out of order within episode {episode}"
            )));
        }
        episodes[episode].push(TransitionRecord { state, action, reward, next_state, terminal });
    }
    Ok(episodes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(i: u8) -> StateKey {
        StateKey::new(vec![i])
    }

    fn rec(s: u8, next: u8, terminal: bool) -> TransitionRecord {
        TransitionRecord {
            state: key(s),
            action: 1,
            reward: 0.5,
            next_state: key(next),
            terminal,
        }
    }

    #[test]
    fn slices_stop_at_episode_boundaries() {
        let mut buf = TrajectoryBuffer::new();
        buf.push(0, rec(0, 1, false));
        buf.push(0, rec(1, 2, true));
        buf.push(1, rec(5, 6, false));
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.slice_from(0, 5).len(), 2);
        assert_eq!(buf.slice_from(1, 5).len(), 1);
        assert_eq!(buf.slice_from(2, 5).len(), 1);
        assert_eq!(buf.get(2).state, key(5));
    }

    #[test]
    fn log_round_trips() {
        let episodes = vec![
            vec![rec(0, 1, false), rec(1, 2, true)],
            vec![rec(7, 8, false)],
        ];
        let mut bytes = Vec::new();
        write_trajectory_log(&episodes, &mut bytes).unwrap();
        let back = read_trajectory_log(bytes.as_slice()).unwrap();
        assert_eq!(back, episodes);
    }

    #[test]
    fn malformed_log_lines_name_the_line() {
        let err = read_trajectory_log("0 0 00 1 nope 01 0".as_bytes()).unwrap_err();
        match err {
            LearnerError::LogParse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
