//! Grid environments: empty room, door-key room, slippery empty room.
//!
//! All grids use 4 move actions (0 up, 1 down, 2 left, 3 right), a fixed goal
//! corner paying reward 1.0 on entry (episode ends there), reward 0 elsewhere,
//! and a step budget of 4n². Moves off the grid or into walls leave the agent
//! in place. State encodings are fixed-width little-endian fields so that the
//! same state always serializes to the same bytes.

use super::{EnvError, EnvSpec, Environment, KernelBranch, MdpDynamics, StepOutcome};
use crate::state::StateKey;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ACTIONS: u32 = 4;

fn moved(n: u32, r: u32, c: u32, action: u32) -> (u32, u32) {
    match action {
        0 => (r.saturating_sub(1), c),
        1 => ((r + 1).min(n - 1), c),
        2 => (r, c.saturating_sub(1)),
        3 => (r, (c + 1).min(n - 1)),
        _ => unreachable!("action validated by caller"),
    }
}

fn encode_pos(r: u32, c: u32) -> StateKey {
    let mut b = Vec::with_capacity(8);
    b.extend_from_slice(&r.to_le_bytes());
    b.extend_from_slice(&c.to_le_bytes());
    StateKey::new(b)
}

/// n×n empty room; goal at (n-1, n-1).
#[derive(Clone)]
pub struct EmptyGrid {
    n: u32,
    pos: (u32, u32),
    steps: u32,
    done: bool,
    spec: EnvSpec,
}

impl EmptyGrid {
    pub fn new(n: u32) -> Result<Self, EnvError> {
        if n < 2 {
            return Err(EnvError::InvalidConfig("EmptyGrid requires n >= 2".into()));
        }
        Ok(EmptyGrid {
            n,
            pos: (0, 0),
            steps: 0,
            done: true,
            spec: EnvSpec {
                name: format!("EmptyGrid:{n}"),
                action_count: ACTIONS,
                max_episode_steps: 4 * n * n,
                stochastic: false,
            },
        })
    }

    fn goal(&self) -> (u32, u32) {
        (self.n - 1, self.n - 1)
    }

    fn advance(&mut self, effective: u32) -> StepOutcome {
        let (r, c) = moved(self.n, self.pos.0, self.pos.1, effective);
        self.pos = (r, c);
        self.steps += 1;
        let terminal = (r, c) == self.goal();
        if terminal || self.steps >= self.spec.max_episode_steps {
            self.done = true;
        }
        StepOutcome {
            reward: if terminal { 1.0 } else { 0.0 },
            next: encode_pos(r, c),
            terminal,
        }
    }
}

impl Environment for EmptyGrid {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> StateKey {
        self.pos = (0, 0);
        self.steps = 0;
        self.done = false;
        encode_pos(0, 0)
    }

    fn step(&mut self, action: u32) -> Result<StepOutcome, EnvError> {
        check_step(self.done, action, ACTIONS)?;
        Ok(self.advance(action))
    }

    fn dynamics(&self) -> Result<MdpDynamics, EnvError> {
        let goal = self.goal();
        let states: Vec<(u32, u32)> = (0..self.n)
            .flat_map(|r| (0..self.n).map(move |c| (r, c)))
            .filter(|&p| p != goal)
            .collect();
        let keys: Vec<StateKey> = states.iter().map(|&(r, c)| encode_pos(r, c)).collect();
        let index_of = |p: (u32, u32)| states.iter().position(|&q| q == p).unwrap();
        let branches = states
            .iter()
            .map(|&(r, c)| {
                (0..ACTIONS)
                    .map(|a| {
                        let next = moved(self.n, r, c, a);
                        let terminal = next == goal;
                        vec![KernelBranch {
                            prob: 1.0,
                            reward: if terminal { 1.0 } else { 0.0 },
                            next: (!terminal).then(|| index_of(next)),
                            terminal,
                        }]
                    })
                    .collect()
            })
            .collect();
        Ok(MdpDynamics {
            states: keys,
            action_count: ACTIONS,
            branches,
        })
    }

    fn clone_env(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

fn check_step(done: bool, action: u32, action_count: u32) -> Result<(), EnvError> {
    if done {
        return Err(EnvError::EpisodeOver);
    }
    if action >= action_count {
        return Err(EnvError::InvalidAction { action, action_count });
    }
    Ok(())
}

/// As [`EmptyGrid`], but with probability `p` the commanded action is replaced
/// by a uniformly random one (which may coincide with the command).
#[derive(Clone)]
pub struct SlipperyGrid {
    inner: EmptyGrid,
    p: f64,
    rng: ChaCha8Rng,
    spec: EnvSpec,
}

impl SlipperyGrid {
    pub fn new(n: u32, p: f64) -> Result<Self, EnvError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(EnvError::InvalidConfig("SlipperyGrid requires p in [0,1]".into()));
        }
        let inner = EmptyGrid::new(n)?;
        let spec = EnvSpec {
            name: format!("SlipperyGrid:{n}:{p}"),
            stochastic: true,
            ..inner.spec.clone()
        };
        Ok(SlipperyGrid {
            inner,
            p,
            rng: ChaCha8Rng::seed_from_u64(0),
            spec,
        })
    }
}

impl Environment for SlipperyGrid {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> StateKey {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.inner.reset(seed)
    }

    fn step(&mut self, action: u32) -> Result<StepOutcome, EnvError> {
        check_step(self.inner.done, action, ACTIONS)?;
        let effective = if self.rng.gen::<f64>() < self.p {
            self.rng.gen_range(0..ACTIONS)
        } else {
            action
        };
        Ok(self.inner.advance(effective))
    }

    fn dynamics(&self) -> Result<MdpDynamics, EnvError> {
        let base = self.inner.dynamics()?;
        let n = self.inner.n;
        let goal = self.inner.goal();
        let states: Vec<(u32, u32)> = (0..n)
            .flat_map(|r| (0..n).map(move |c| (r, c)))
            .filter(|&p| p != goal)
            .collect();
        let index_of = |p: (u32, u32)| states.iter().position(|&q| q == p).unwrap();
        let branches = states
            .iter()
            .map(|&(r, c)| {
                (0..ACTIONS)
                    .map(|a| {
                        // Effective-action distribution: commanded keeps
                        // 1 - p + p/4, each other action gets p/4. Outcomes
                        // landing on the same cell are merged.
                        let mut merged: Vec<KernelBranch> = Vec::new();
                        for eff in 0..ACTIONS {
                            let prob = if eff == a {
                                1.0 - self.p + self.p / 4.0
                            } else {
                                self.p / 4.0
                            };
                            if prob == 0.0 {
                                continue;
                            }
                            let next = moved(n, r, c, eff);
                            let terminal = next == goal;
                            let next_idx = (!terminal).then(|| index_of(next));
                            match merged.iter_mut().find(|b| b.next == next_idx && b.terminal == terminal) {
                                Some(b) => b.prob += prob,
                                None => merged.push(KernelBranch {
                                    prob,
                                    reward: if terminal { 1.0 } else { 0.0 },
                                    next: next_idx,
                                    terminal,
                                }),
                            }
                        }
                        merged
                    })
                    .collect()
            })
            .collect();
        Ok(MdpDynamics { branches, ..base })
    }

    fn clone_env(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

/// n×n room split by a vertical wall with a single door; a key on the start
/// side opens it; the goal sits behind it.
///
/// Layout: wall at column n/2 with the door at row n/2, key at (n-1, 0),
/// goal at (n-1, n-1), start at (0, 0). Walking onto the key cell picks the
/// key up; walking onto the door cell with the key opens the door. The state
/// is (position, has_key, door_open).
#[derive(Clone)]
pub struct DoorKeyGrid {
    n: u32,
    pos: (u32, u32),
    has_key: bool,
    door_open: bool,
    steps: u32,
    done: bool,
    spec: EnvSpec,
}

impl DoorKeyGrid {
    pub fn new(n: u32) -> Result<Self, EnvError> {
        if n < 4 {
            return Err(EnvError::InvalidConfig("DoorKeyGrid requires n >= 4".into()));
        }
        Ok(DoorKeyGrid {
            n,
            pos: (0, 0),
            has_key: false,
            door_open: false,
            steps: 0,
            done: true,
            spec: EnvSpec {
                name: format!("DoorKeyGrid:{n}"),
                action_count: ACTIONS,
                max_episode_steps: 4 * n * n,
                stochastic: false,
            },
        })
    }

    fn wall_col(&self) -> u32 {
        self.n / 2
    }

    fn door(&self) -> (u32, u32) {
        (self.n / 2, self.wall_col())
    }

    fn key(&self) -> (u32, u32) {
        (self.n - 1, 0)
    }

    fn goal(&self) -> (u32, u32) {
        (self.n - 1, self.n - 1)
    }

    fn is_wall(&self, p: (u32, u32)) -> bool {
        p.1 == self.wall_col() && p != self.door()
    }

    fn encode(n: u32, pos: (u32, u32), has_key: bool, door_open: bool) -> StateKey {
        let _ = n;
        let mut b = Vec::with_capacity(10);
        b.extend_from_slice(&pos.0.to_le_bytes());
        b.extend_from_slice(&pos.1.to_le_bytes());
        b.push(has_key as u8);
        b.push(door_open as u8);
        StateKey::new(b)
    }

    /// Pure transition function over (pos, has_key, door_open).
    fn transition(
        &self,
        pos: (u32, u32),
        has_key: bool,
        door_open: bool,
        action: u32,
    ) -> ((u32, u32), bool, bool, f64, bool) {
        let target = moved(self.n, pos.0, pos.1, action);
        let mut next = target;
        let mut key = has_key;
        let mut open = door_open;
        if self.is_wall(target) {
            next = pos;
        } else if target == self.door() && !door_open {
            if has_key {
                open = true;
            } else {
                next = pos;
            }
        }
        if next == self.key() && !key {
            key = true;
        }
        let terminal = next == self.goal();
        (next, key, open, if terminal { 1.0 } else { 0.0 }, terminal)
    }
}

impl Environment for DoorKeyGrid {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> StateKey {
        self.pos = (0, 0);
        self.has_key = false;
        self.door_open = false;
        self.steps = 0;
        self.done = false;
        Self::encode(self.n, self.pos, false, false)
    }

    fn step(&mut self, action: u32) -> Result<StepOutcome, EnvError> {
        check_step(self.done, action, ACTIONS)?;
        let (next, key, open, reward, terminal) =
            self.transition(self.pos, self.has_key, self.door_open, action);
        self.pos = next;
        self.has_key = key;
        self.door_open = open;
        self.steps += 1;
        if terminal || self.steps >= self.spec.max_episode_steps {
            self.done = true;
        }
        Ok(StepOutcome {
            reward,
            next: Self::encode(self.n, next, key, open),
            terminal,
        })
    }

    fn dynamics(&self) -> Result<MdpDynamics, EnvError> {
        let goal = self.goal();
        let mut states: Vec<((u32, u32), bool, bool)> = Vec::new();
        for r in 0..self.n {
            for c in 0..self.n {
                let p = (r, c);
                if self.is_wall(p) || p == goal {
                    continue;
                }
                for key in [false, true] {
                    for open in [false, true] {
                        states.push((p, key, open));
                    }
                }
            }
        }
        let keys: Vec<StateKey> = states
            .iter()
            .map(|&(p, k, o)| Self::encode(self.n, p, k, o))
            .collect();
        let index_of = |s: ((u32, u32), bool, bool)| states.iter().position(|&q| q == s).unwrap();
        let branches = states
            .iter()
            .map(|&(p, k, o)| {
                (0..ACTIONS)
                    .map(|a| {
                        let (next, nk, no, reward, terminal) = self.transition(p, k, o, a);
                        vec![KernelBranch {
                            prob: 1.0,
                            reward,
                            next: (!terminal).then(|| index_of((next, nk, no))),
                            terminal,
                        }]
                    })
                    .collect()
            })
            .collect();
        Ok(MdpDynamics {
            states: keys,
            action_count: ACTIONS,
            branches,
        })
    }

    fn clone_env(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
