//! Predators on a torus grid cooperating to corner one scripted prey.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sector, DecPomdp, EnvError, Transition, MOVES, SECTORS};
use crate::trajectory::{AgentId, LabelMap};

pub const ACTIONS: [&str; 5] = ["up", "down", "left", "right", "stay"];
const STAY: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredatorPreyConfig {
    pub size: usize,
    pub predators: usize,
    /// Rounds per episode.
    pub horizon: usize,
    pub capture_reward: f64,
    /// Charged on every turn without a capture.
    pub step_cost: f64,
    /// The prey moves after every `prey_period`-th round.
    pub prey_period: usize,
    pub gamma: f64,
}

impl Default for PredatorPreyConfig {
    fn default() -> Self {
        PredatorPreyConfig {
            size: 7,
            predators: 3,
            horizon: 100,
            capture_reward: 10.0,
            step_cost: 0.1,
            prey_period: 2,
            gamma: 0.95,
        }
    }
}

type Cell = (i64, i64);

#[derive(Debug, Clone)]
pub struct PredatorPrey {
    cfg: PredatorPreyConfig,
    agents: Vec<AgentId>,
    labels: LabelMap,
    prey: Cell,
    preds: Vec<Cell>,
    turn: usize,
    captured: bool,
    over: bool,
}

impl PredatorPrey {
    pub fn new(cfg: PredatorPreyConfig) -> Result<Self, EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        if cfg.size < 4 {
            return bad("grid side must be at least 4");
        }
        if !(2..=4).contains(&cfg.predators) {
            return bad("between 2 and 4 predators are supported");
        }
        if cfg.horizon == 0 || cfg.prey_period == 0 {
            return bad("horizon and prey_period must be positive");
        }
        if !(0.0..=1.0).contains(&cfg.gamma) {
            return bad("gamma must lie in [0,1]");
        }
        let agents = (0..cfg.predators)
            .map(|i| AgentId::new(&format!("predator_{i}")).unwrap())
            .collect();
        let dirs: Vec<&str> = std::iter::once("adj").chain(SECTORS).collect();
        let mut obs = Vec::with_capacity(81);
        for p in &dirs {
            for m in &dirs {
                obs.push(format!("prey-{p}_mate-{m}"));
            }
        }
        let obs: Vec<&str> = obs.iter().map(String::as_str).collect();
        let labels = LabelMap::from_strs(&obs, &ACTIONS).expect("static labels are valid");
        let mut env = PredatorPrey {
            agents,
            labels,
            prey: (0, 0),
            preds: Vec::new(),
            turn: 0,
            captured: false,
            over: false,
            cfg,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &PredatorPreyConfig {
        &self.cfg
    }

    pub fn prey(&self) -> (i64, i64) {
        self.prey
    }

    pub fn predators(&self) -> &[(i64, i64)] {
        &self.preds
    }

    /// Places prey and predators explicitly; used by tests.
    pub fn set_positions(&mut self, prey: (i64, i64), preds: &[(i64, i64)]) {
        assert_eq!(preds.len(), self.cfg.predators);
        self.prey = prey;
        self.preds = preds.to_vec();
        self.turn = 0;
        self.captured = false;
        self.over = false;
    }

    fn wrap(&self, v: i64) -> i64 {
        v.rem_euclid(self.cfg.size as i64)
    }

    /// Shortest signed displacement from `a` to `b` on the torus.
    fn delta(&self, a: Cell, b: Cell) -> (i64, i64) {
        let n = self.cfg.size as i64;
        let d = |x: i64| {
            let r = x.rem_euclid(n);
            if r > n / 2 {
                r - n
            } else {
                r
            }
        };
        (d(b.0 - a.0), d(b.1 - a.1))
    }

    fn dist(&self, a: Cell, b: Cell) -> i64 {
        let (dx, dy) = self.delta(a, b);
        dx.abs() + dy.abs()
    }

    fn direction(&self, from: Cell, to: Cell) -> usize {
        let (dx, dy) = self.delta(from, to);
        if dx.abs() + dy.abs() <= 1 {
            0
        } else {
            sector(dx, dy)
        }
    }

    fn obs_of(&self, i: usize) -> usize {
        let me = self.preds[i];
        let p = self.direction(me, self.prey);
        let mate = (0..self.preds.len())
            .filter(|&j| j != i)
            .min_by_key(|&j| (self.dist(me, self.preds[j]), j))
            .expect("at least two predators");
        let m = self.direction(me, self.preds[mate]);
        p * 9 + m
    }

    fn is_captured(&self) -> bool {
        self.preds.iter().filter(|&&c| self.dist(c, self.prey) == 1).count() >= 2
    }

    fn move_prey(&mut self) {
        let candidates = std::iter::once((0, 0)).chain(MOVES);
        let mut best = self.prey;
        let mut best_score = i64::MIN;
        for (dx, dy) in candidates {
            let c = (self.wrap(self.prey.0 + dx), self.wrap(self.prey.1 + dy));
            if self.preds.contains(&c) {
                continue;
            }
            let score = self.preds.iter().map(|&p| self.dist(p, c)).min().unwrap_or(0);
            if score > best_score {
                best_score = score;
                best = c;
            }
        }
        self.prey = best;
    }
}

impl DecPomdp for PredatorPrey {
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
        let n = self.cfg.size as i64;
        loop {
            let mut cells: Vec<Cell> = Vec::with_capacity(self.cfg.predators + 1);
            while cells.len() < self.cfg.predators + 1 {
                let c = (rng.gen_range(0..n), rng.gen_range(0..n));
                if !cells.contains(&c) {
                    cells.push(c);
                }
            }
            self.prey = cells[0];
            self.preds = cells[1..].to_vec();
            if !self.is_captured() {
                break;
            }
        }
        self.turn = 0;
        self.captured = false;
        self.over = false;
        self.observe()
    }

    fn current_agent(&self) -> usize {
        self.turn % self.cfg.predators
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
        let n_agents = self.cfg.predators;
        let i = self.current_agent();
        if action != STAY {
            let (dx, dy) = MOVES[action];
            let (x, y) = self.preds[i];
            let target = (self.wrap(x + dx), self.wrap(y + dy));
            if target != self.prey {
                self.preds[i] = target;
            }
        }
        self.turn += 1;
        self.captured = self.is_captured();
        if !self.captured && self.turn.is_multiple_of(n_agents) && (self.turn / n_agents).is_multiple_of(self.cfg.prey_period) {
            self.move_prey();
            self.captured = self.is_captured();
        }
        let truncated = !self.captured && self.turn >= self.cfg.horizon * n_agents;
        self.over = self.captured || truncated;
        let reward = if self.captured { self.cfg.capture_reward } else { -self.cfg.step_cost };
        Ok(Transition {
            reward,
            done: self.captured,
            truncated,
            next_obs: self.observe(),
        })
    }

    fn success(&self) -> bool {
        self.captured
    }

    fn return_floor(&self) -> f64 {
        -self.cfg.step_cost * (self.cfg.horizon * self.cfg.predators) as f64
    }

    fn idle_action(&self, _agent: usize) -> usize {
        STAY
    }
}
