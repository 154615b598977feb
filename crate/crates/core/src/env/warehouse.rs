//! Agents fetch items from shelves and deliver them to demand points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sector, DecPomdp, EnvError, Transition, MOVES, SECTORS};
use crate::trajectory::{AgentId, LabelMap};

pub const ACTIONS: [&str; 6] = ["up", "down", "left", "right", "pick", "drop"];
const PICK: usize = 4;
const DROP: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarehouseConfig {
    pub size: usize,
    pub agents: usize,
    /// Rounds per episode.
    pub horizon: usize,
    pub delivery_reward: f64,
    pub step_cost: f64,
    /// Items each demand point wants before the episode ends.
    pub demand_per_point: u32,
    /// Start agents on random cells instead of the depot.
    pub random_start: bool,
    pub gamma: f64,
}

impl Default for WarehouseConfig {
    fn default() -> Self {
        WarehouseConfig {
            size: 7,
            agents: 2,
            horizon: 200,
            delivery_reward: 5.0,
            step_cost: 0.05,
            demand_per_point: 3,
            random_start: true,
            gamma: 0.95,
        }
    }
}

type Cell = (i64, i64);

#[derive(Debug, Clone)]
pub struct Warehouse {
    cfg: WarehouseConfig,
    agents: Vec<AgentId>,
    labels: LabelMap,
    shelves: Vec<Cell>,
    demand_points: Vec<Cell>,
    depot: Cell,
    pos: Vec<Cell>,
    carrying: Vec<bool>,
    outstanding: Vec<u32>,
    turn: usize,
    over: bool,
}

impl Warehouse {
    pub fn new(cfg: WarehouseConfig) -> Result<Self, EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        if cfg.size < 5 {
            return bad("grid side must be at least 5");
        }
        if !(1..=4).contains(&cfg.agents) {
            return bad("between 1 and 4 agents are supported");
        }
        if cfg.horizon == 0 || cfg.demand_per_point == 0 {
            return bad("horizon and demand_per_point must be positive");
        }
        if !(0.0..=1.0).contains(&cfg.gamma) {
            return bad("gamma must lie in [0,1]");
        }
        let s = cfg.size as i64;
        let agents = (0..cfg.agents)
            .map(|i| AgentId::new(&format!("worker_{i}")).unwrap())
            .collect();
        let mut obs = Vec::with_capacity(18);
        for carry in ["empty", "loaded"] {
            for d in std::iter::once("here").chain(SECTORS) {
                obs.push(format!("{carry}_{d}"));
            }
        }
        let obs: Vec<&str> = obs.iter().map(String::as_str).collect();
        let labels = LabelMap::from_strs(&obs, &ACTIONS).expect("static labels are valid");
        let mut env = Warehouse {
            agents,
            labels,
            shelves: vec![(1, 1), (1, s - 2)],
            demand_points: vec![(s - 2, 1), (s - 2, s - 2)],
            depot: (s / 2, s - 1),
            pos: Vec::new(),
            carrying: Vec::new(),
            outstanding: Vec::new(),
            turn: 0,
            over: false,
            cfg,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &WarehouseConfig {
        &self.cfg
    }

    pub fn positions(&self) -> &[(i64, i64)] {
        &self.pos
    }

    pub fn carrying(&self) -> &[bool] {
        &self.carrying
    }

    pub fn shelves(&self) -> &[(i64, i64)] {
        &self.shelves
    }

    pub fn demand_points(&self) -> &[(i64, i64)] {
        &self.demand_points
    }

    pub fn outstanding(&self) -> &[u32] {
        &self.outstanding
    }

    /// Places agents explicitly; used by tests.
    pub fn set_positions(&mut self, pos: &[(i64, i64)], carrying: &[bool]) {
        assert_eq!(pos.len(), self.cfg.agents);
        self.pos = pos.to_vec();
        self.carrying = carrying.to_vec();
        self.outstanding = vec![self.cfg.demand_per_point; self.demand_points.len()];
        self.turn = 0;
        self.over = false;
    }

    fn target(&self, i: usize) -> Option<Cell> {
        let me = self.pos[i];
        let dist = |c: &Cell| (c.0 - me.0).abs() + (c.1 - me.1).abs();
        if self.carrying[i] {
            self.demand_points
                .iter()
                .zip(&self.outstanding)
                .filter(|(_, &o)| o > 0)
                .map(|(c, _)| *c)
                .min_by_key(dist)
        } else {
            self.shelves.iter().copied().min_by_key(dist)
        }
    }

    fn obs_of(&self, i: usize) -> usize {
        let me = self.pos[i];
        let d = match self.target(i) {
            Some(t) if t == me => 0,
            Some(t) => sector(t.0 - me.0, t.1 - me.1),
            None => 0,
        };
        usize::from(self.carrying[i]) * 9 + d
    }
}

impl DecPomdp for Warehouse {
    fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    fn labels(&self, _agent: usize) -> &LabelMap {
        &self.labels
    }

    fn discount(&self) -> f64 {
        self.cfg.gamma
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn reset(&mut self, seed: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = self.cfg.size as i64;
        self.pos = (0..self.cfg.agents)
            .map(|_| {
                if self.cfg.random_start {
                    (rng.gen_range(0..s), rng.gen_range(0..s))
                } else {
                    self.depot
                }
            })
            .collect();
        self.carrying = vec![false; self.cfg.agents];
        self.outstanding = vec![self.cfg.demand_per_point; self.demand_points.len()];
        self.turn = 0;
        self.over = false;
        self.observe()
    }

    fn current_agent(&self) -> usize {
        self.turn % self.cfg.agents
    }

    fn observe(&self) -> usize {
        self.obs_of(self.current_agent())
    }

    fn step(&mut self, action: usize) -> Result<Transition, EnvError> {
        if self.over {
            return Err(EnvError::EpisodeOver);
        }
        if action >= ACTIONS.len() {
            return Err(EnvError::InvalidAction(action));
        }
        let i = self.current_agent();
        let s = self.cfg.size as i64;
        let mut reward = -self.cfg.step_cost;
        match action {
            PICK => {
                if !self.carrying[i] && self.shelves.contains(&self.pos[i]) {
                    self.carrying[i] = true;
                }
            }
            DROP => {
                if self.carrying[i] {
                    self.carrying[i] = false;
                    if let Some(k) = self.demand_points.iter().position(|&c| c == self.pos[i]) {
                        if self.outstanding[k] > 0 {
                            self.outstanding[k] -= 1;
                            reward = self.cfg.delivery_reward;
                        }
                    }
                }
            }
            _ => {
                let (dx, dy) = MOVES[action];
                let (x, y) = self.pos[i];
                self.pos[i] = ((x + dx).clamp(0, s - 1), (y + dy).clamp(0, s - 1));
            }
        }
        self.turn += 1;
        let done = self.success();
        let truncated = !done && self.turn >= self.cfg.horizon * self.cfg.agents;
        self.over = done || truncated;
        Ok(Transition {
            reward,
            done,
            truncated,
            next_obs: self.observe(),
        })
    }

    fn success(&self) -> bool {
        self.outstanding.iter().all(|&o| o == 0)
    }

    fn return_floor(&self) -> f64 {
        -self.cfg.step_cost * (self.cfg.horizon * self.cfg.agents) as f64
    }

    fn idle_action(&self, _agent: usize) -> usize {
        PICK
    }
}
