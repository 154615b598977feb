//! Dec-POMDP environments in agent-environment-cycle form.
//!
//! Agents act one at a time and cyclically: agent `t mod n` acts at turn `t`.
//! Observations and actions are indices into per-agent [`LabelMap`]s.

mod predator_prey;
mod warehouse;
mod wrapper;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{AgentId, LabelMap};

pub use predator_prey::{PredatorPrey, PredatorPreyConfig};
pub use warehouse::{Warehouse, WarehouseConfig};
pub use wrapper::{MaskDecision, OrgLayer, OrgWrapper, Reshaping, StepInfo, StepOutcome, WrapperError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("episode is over; call reset")]
    EpisodeOver,
    #[error("action index {0} is out of range")]
    InvalidAction(usize),
}

/// Result of one agent turn in the bare environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub reward: f64,
    /// Terminal state reached.
    pub done: bool,
    /// Horizon reached without a terminal state.
    pub truncated: bool,
    /// Observation index of the agent that acts next.
    pub next_obs: usize,
}

impl Transition {
    pub fn finished(&self) -> bool {
        self.done || self.truncated
    }
}

pub trait DecPomdp {
    fn agents(&self) -> &[AgentId];

    fn labels(&self, agent: usize) -> &LabelMap;

    fn discount(&self) -> f64;

    /// Maximum number of turns per agent in an episode.
    fn horizon(&self) -> usize;

    /// Starts a new episode and returns agent 0's observation.
    fn reset(&mut self, seed: u64) -> usize;

    fn current_agent(&self) -> usize;

    /// Observation of the agent whose turn it is.
    fn observe(&self) -> usize;

    fn step(&mut self, action: usize) -> Result<Transition, EnvError>;

    /// Whether the episode ended in its success state.
    fn success(&self) -> bool;

    /// Lowest achievable episode return.
    fn return_floor(&self) -> f64;

    /// Action a disabled agent takes.
    fn idle_action(&self, agent: usize) -> usize;

    fn num_agents(&self) -> usize {
        self.agents().len()
    }
}

impl<T: DecPomdp + ?Sized> DecPomdp for Box<T> {
    fn agents(&self) -> &[AgentId] {
        (**self).agents()
    }
    fn labels(&self, agent: usize) -> &LabelMap {
        (**self).labels(agent)
    }
    fn discount(&self) -> f64 {
        (**self).discount()
    }
    fn horizon(&self) -> usize {
        (**self).horizon()
    }
    fn reset(&mut self, seed: u64) -> usize {
        (**self).reset(seed)
    }
    fn current_agent(&self) -> usize {
        (**self).current_agent()
    }
    fn observe(&self) -> usize {
        (**self).observe()
    }
    fn step(&mut self, action: usize) -> Result<Transition, EnvError> {
        (**self).step(action)
    }
    fn success(&self) -> bool {
        (**self).success()
    }
    fn return_floor(&self) -> f64 {
        (**self).return_floor()
    }
    fn idle_action(&self, agent: usize) -> usize {
        (**self).idle_action(agent)
    }
}

/// Environment block of a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    PredatorPrey(PredatorPreyConfig),
    Warehouse(WarehouseConfig),
}

impl EnvConfig {
    pub fn build(&self) -> Result<Box<dyn DecPomdp + Send>, EnvError> {
        Ok(match self {
            EnvConfig::PredatorPrey(c) => Box::new(PredatorPrey::new(c.clone())?),
            EnvConfig::Warehouse(c) => Box::new(Warehouse::new(c.clone())?),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::PredatorPrey(_) => "predator_prey",
            EnvConfig::Warehouse(_) => "warehouse",
        }
    }
}

/// Compass sectors used by both grid worlds, indexed 1..=8 after the
/// "close" sector 0.
pub(crate) const SECTORS: [&str; 8] = ["n", "ne", "e", "se", "s", "sw", "w", "nw"];

/// Sector of displacement `(dx, dy)` (y grows downwards), ignoring the close
/// case.
pub(crate) fn sector(dx: i64, dy: i64) -> usize {
    let sx = dx.signum();
    let sy = dy.signum();
    1 + match (sx, sy) {
        (0, -1) => 0,
        (1, -1) => 1,
        (1, 0) => 2,
        (1, 1) => 3,
        (0, 1) => 4,
        (-1, 1) => 5,
        (-1, 0) => 6,
        (-1, -1) => 7,
        _ => 0,
    }
}

pub(crate) const MOVES: [(i64, i64); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];
