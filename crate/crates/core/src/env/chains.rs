//! Small hand-built MDPs: a linear chain, a looped chain, and a two-trajectory
//! crossover task.

use super::{EnvError, EnvSpec, Environment, KernelBranch, MdpDynamics, StepOutcome};
use crate::state::StateKey;

fn encode_node(i: u32) -> StateKey {
    StateKey::new(i.to_le_bytes().to_vec())
}

/// Linear chain of `n` states. Action 0 moves left (bounded), action 1 moves
/// right; taking action 1 at the right end pays reward 1 and ends the episode.
#[derive(Clone)]
pub struct ChainMdp {
    n: u32,
    pos: u32,
    steps: u32,
    done: bool,
    spec: EnvSpec,
}

impl ChainMdp {
    pub fn new(n: u32) -> Result<Self, EnvError> {
        if n < 2 {
            return Err(EnvError::InvalidConfig("ChainMDP requires n >= 2".into()));
        }
        Ok(ChainMdp {
            n,
            pos: 0,
            steps: 0,
            done: true,
            spec: EnvSpec {
                name: format!("ChainMDP:{n}"),
                action_count: 2,
                max_episode_steps: 4 * n,
                stochastic: false,
            },
        })
    }
}

impl Environment for ChainMdp {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> StateKey {
        self.pos = 0;
        self.steps = 0;
        self.done = false;
        encode_node(0)
    }

    fn step(&mut self, action: u32) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        if action >= 2 {
            return Err(EnvError::InvalidAction { action, action_count: 2 });
        }
        self.steps += 1;
        let (next, reward, terminal) = match action {
            0 => (self.pos.saturating_sub(1), 0.0, false),
            _ if self.pos == self.n - 1 => (self.n, 1.0, true),
            _ => (self.pos + 1, 0.0, false),
        };
        self.pos = next;
        if terminal || self.steps >= self.spec.max_episode_steps {
            self.done = true;
        }
        Ok(StepOutcome {
            reward,
            next: encode_node(next),
            terminal,
        })
    }

    fn dynamics(&self) -> Result<MdpDynamics, EnvError> {
        let states: Vec<StateKey> = (0..self.n).map(encode_node).collect();
        let branches = (0..self.n)
            .map(|i| {
                vec![
                    vec![KernelBranch {
                        prob: 1.0,
                        reward: 0.0,
                        next: Some(i.saturating_sub(1) as usize),
                        terminal: false,
                    }],
                    if i == self.n - 1 {
                        vec![KernelBranch { prob: 1.0, reward: 1.0, next: None, terminal: true }]
                    } else {
                        vec![KernelBranch {
                            prob: 1.0,
                            reward: 0.0,
                            next: Some(i as usize + 1),
                            terminal: false,
                        }]
                    },
                ]
            })
            .collect();
        Ok(MdpDynamics {
            states,
            action_count: 2,
            branches,
        })
    }

    fn clone_env(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

/// Four-node MDP with self-loops: nodes 0, 1, 2 plus an absorbing goal node 3.
/// Action 0 stays in place (a self-loop transition), action 1 advances;
/// advancing from node 2 pays reward 1 and ends the episode.
#[derive(Clone)]
pub struct LoopMdp {
    pos: u32,
    steps: u32,
    done: bool,
    spec: EnvSpec,
}

impl LoopMdp {
    pub fn new() -> Self {
        LoopMdp {
            pos: 0,
            steps: 0,
            done: true,
            spec: EnvSpec {
                name: "LoopMDP".into(),
                action_count: 2,
                max_episode_steps: 64,
                stochastic: false,
            },
        }
    }
}

impl Default for LoopMdp {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for LoopMdp {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> StateKey {
        self.pos = 0;
        self.steps = 0;
        self.done = false;
        encode_node(0)
    }

    fn step(&mut self, action: u32) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        if action >= 2 {
            return Err(EnvError::InvalidAction { action, action_count: 2 });
        }
        self.steps += 1;
        let (next, reward, terminal) = match (action, self.pos) {
            (0, p) => (p, 0.0, false),
            (_, 2) => (3, 1.0, true),
            (_, p) => (p + 1, 0.0, false),
        };
        self.pos = next;
        if terminal || self.steps >= self.spec.max_episode_steps {
            self.done = true;
        }
        Ok(StepOutcome {
            reward,
            next: encode_node(next),
            terminal,
        })
    }

    fn dynamics(&self) -> Result<MdpDynamics, EnvError> {
        let states: Vec<StateKey> = (0..3).map(encode_node).collect();
        let branches = (0..3u32)
            .map(|i| {
                vec![
                    vec![KernelBranch {
                        prob: 1.0,
                        reward: 0.0,
                        next: Some(i as usize),
                        terminal: false,
                    }],
                    if i == 2 {
                        vec![KernelBranch { prob: 1.0, reward: 1.0, next: None, terminal: true }]
                    } else {
                        vec![KernelBranch {
                            prob: 1.0,
                            reward: 0.0,
                            next: Some(i as usize + 1),
                            terminal: false,
                        }]
                    },
                ]
            })
            .collect();
        Ok(MdpDynamics {
            states,
            action_count: 2,
            branches,
        })
    }

    fn clone_env(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}

/// Two-trajectory crossover task.
///
/// Node map (2 actions):
///
/// ```text
/// 0 --a0--> 1 --a0--> 2 --a0--> 3 --a0--> goal 4 (r = 1, terminal)
/// 0 --a1--> 5 --a0--> 2 --a1--> 6 (dead end, self-loops)
/// ```
///
/// The rewarded path and the dead-end path intersect at node 2, so data from
/// the rewarded path can flow to states of the unrewarded one through the
/// transition graph. Unlisted actions stay in place.
#[derive(Clone)]
pub struct CrossoverMdp {
    pos: u32,
    steps: u32,
    done: bool,
    spec: EnvSpec,
}

impl CrossoverMdp {
    pub fn new() -> Self {
        CrossoverMdp {
            pos: 0,
            steps: 0,
            done: true,
            spec: EnvSpec {
                name: "CrossoverMDP".into(),
                action_count: 2,
                max_episode_steps: 20,
                stochastic: false,
            },
        }
    }

    /// (next, reward, terminal) for each (node, action).
    fn table(pos: u32, action: u32) -> (u32, f64, bool) {
        match (pos, action) {
            (0, 0) => (1, 0.0, false),
            (0, 1) => (5, 0.0, false),
            (1, 0) => (2, 0.0, false),
            (5, 0) => (2, 0.0, false),
            (2, 0) => (3, 0.0, false),
            (2, 1) => (6, 0.0, false),
            (3, 0) => (4, 1.0, true),
            (p, _) => (p, 0.0, false),
        }
    }
}

impl Default for CrossoverMdp {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for CrossoverMdp {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: u64) -> StateKey {
        self.pos = 0;
        self.steps = 0;
        self.done = false;
        encode_node(0)
    }

    fn step(&mut self, action: u32) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        if action >= 2 {
            return Err(EnvError::InvalidAction { action, action_count: 2 });
        }
        self.steps += 1;
        let (next, reward, terminal) = Self::table(self.pos, action);
        self.pos = next;
        if terminal || self.steps >= self.spec.max_episode_steps {
            self.done = true;
        }
        Ok(StepOutcome {
            reward,
            next: encode_node(next),
            terminal,
        })
    }

    fn dynamics(&self) -> Result<MdpDynamics, EnvError> {
        let nodes = [0u32, 1, 2, 3, 5, 6];
        let states: Vec<StateKey> = nodes.iter().copied().map(encode_node).collect();
        let index_of = |n: u32| nodes.iter().position(|&m| m == n).unwrap();
        let branches = nodes
            .iter()
            .map(|&i| {
                (0..2)
                    .map(|a| {
                        let (next, reward, terminal) = Self::table(i, a);
                        vec![KernelBranch {
                            prob: 1.0,
                            reward,
                            next: (!terminal).then(|| index_of(next)),
                            terminal,
                        }]
                    })
                    .collect()
            })
            .collect();
        Ok(MdpDynamics {
            states,
            action_count: 2,
            branches,
        })
    }

    fn clone_env(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
