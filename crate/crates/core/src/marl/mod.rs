//! Tabular multi-agent learners over label alphabets.

mod eval;
mod iql;
mod reinforce;

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{DecPomdp, OrgWrapper, WrapperError};
use crate::trajectory::{AgentId, Label};

pub use eval::{evaluate, evaluate_with, EpisodeSummary, EvalLog, EvalOptions};

pub const POLICY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MarlError {
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("policy does not fit the environment: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Wrapper(#[from] WrapperError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Iql,
    Reinforce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub episodes: usize,
    pub learning_rate: f64,
    /// Falls back to the environment's discount when absent.
    pub gamma: Option<f64>,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the episodes over which epsilon decays linearly.
    pub epsilon_decay: f64,
    /// Episodes averaged into the REINFORCE baseline.
    pub baseline_window: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algorithm: Algorithm::Iql,
            episodes: 5000,
            learning_rate: 0.1,
            gamma: None,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 0.5,
            baseline_window: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MarlError> {
        let bad = |m: &str| Err(MarlError::Config(m.to_string()));
        if let Some(g) = self.gamma {
            if !(0.0..1.0).contains(&g) {
                return bad("gamma must lie in [0,1)");
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must lie in (0,1]");
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.epsilon_start) || !unit.contains(&self.epsilon_end) || !unit.contains(&self.epsilon_decay) {
            return bad("epsilon parameters must lie in [0,1]");
        }
        if self.epsilon_end > self.epsilon_start {
            return bad("epsilon schedule must be non-increasing");
        }
        if self.baseline_window == 0 {
            return bad("baseline_window must be positive");
        }
        Ok(())
    }

    pub fn epsilon(&self, episode: usize) -> f64 {
        let span = (self.epsilon_decay * self.episodes as f64).max(1.0);
        let frac = episode as f64 / span;
        if frac >= 1.0 {
            return self.epsilon_end;
        }
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }

    fn gamma_for<E: DecPomdp>(&self, env: &OrgWrapper<E>) -> f64 {
        self.gamma.unwrap_or_else(|| env.inner().discount()).min(1.0 - 1e-9)
    }
}

/// Seed of the `index`-th episode derived from a base seed (splitmix64).
pub fn episode_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableKind {
    Values,
    Probabilities,
}

/// Deterministic per-agent policy: greedy over a value or probability row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub kind: TableKind,
    pub observations: Vec<Label>,
    pub actions: Vec<Label>,
    /// One row per observation, one entry per action.
    pub table: Vec<Vec<f64>>,
}

impl TabularPolicy {
    pub fn zeros(kind: TableKind, observations: Vec<Label>, actions: Vec<Label>) -> Self {
        let row = match kind {
            TableKind::Values => vec![0.0; actions.len()],
            TableKind::Probabilities => vec![1.0 / actions.len() as f64; actions.len()],
        };
        TabularPolicy {
            table: vec![row; observations.len()],
            kind,
            observations,
            actions,
        }
    }

    /// Highest-scoring admissible action; ties go to the lowest index.
    pub fn greedy(&self, obs: usize, mask: &[bool]) -> usize {
        argmax_masked(&self.table[obs], mask)
    }
}

pub(crate) fn argmax_masked(row: &[f64], mask: &[bool]) -> usize {
    let mut best = None;
    for (a, &v) in row.iter().enumerate() {
        if !mask[a] {
            continue;
        }
        match best {
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((a, v)),
        }
    }
    best.expect("masks are never empty").0
}

pub(crate) fn uniform_masked<R: Rng>(rng: &mut R, mask: &[bool]) -> usize {
    let count = mask.iter().filter(|&&m| m).count();
    let k = rng.gen_range(0..count);
    mask.iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .nth(k)
        .map(|(i, _)| i)
        .expect("k < count")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointPolicy {
    pub version: u32,
    pub algorithm: Algorithm,
    pub agents: Vec<AgentId>,
    pub policies: Vec<TabularPolicy>,
}

impl JointPolicy {
    pub fn check_env<E: DecPomdp>(&self, env: &E) -> Result<(), MarlError> {
        if self.agents != env.agents() {
            return Err(MarlError::Mismatch("agent lists differ".into()));
        }
        for (i, p) in self.policies.iter().enumerate() {
            let labels = env.labels(i);
            if p.observations != labels.obs_labels() || p.actions != labels.act_labels() {
                return Err(MarlError::Mismatch(format!("alphabet of agent {} differs", self.agents[i])));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policies serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, MarlError> {
        let p: JointPolicy = serde_json::from_str(text)?;
        if p.version != POLICY_FORMAT_VERSION {
            return Err(MarlError::Mismatch(format!("unsupported policy version {}", p.version)));
        }
        if p.agents.len() != p.policies.len() {
            return Err(MarlError::Mismatch("one policy per agent expected".into()));
        }
        for pol in &p.policies {
            if pol.table.len() != pol.observations.len() || pol.table.iter().any(|r| r.len() != pol.actions.len()) {
                return Err(MarlError::Mismatch("table shape does not match alphabets".into()));
            }
        }
        Ok(p)
    }
}

/// Per-episode returns recorded during training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingCurve {
    /// Return including guide penalties and bonuses.
    pub shaped: Vec<f64>,
    /// Environment return alone.
    pub raw: Vec<f64>,
}

impl TrainingCurve {
    pub fn len(&self) -> usize {
        self.shaped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shaped.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "episode,cumulative_reward,raw_return")?;
        for (i, (s, r)) in self.shaped.iter().zip(&self.raw).enumerate() {
            writeln!(w, "{i},{s},{r}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, MarlError> {
        let mut curve = TrainingCurve::default();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let parse = |k: usize| -> Result<f64, MarlError> {
                fields
                    .get(k)
                    .and_then(|f| f.trim().parse().ok())
                    .ok_or_else(|| MarlError::Config(format!("curve line {}: bad field {k}", n + 1)))
            };
            curve.shaped.push(parse(1)?);
            curve.raw.push(if fields.len() > 2 { parse(2)? } else { parse(1)? });
        }
        Ok(curve)
    }
}

pub fn train<E: DecPomdp>(env: &mut OrgWrapper<E>, cfg: &TrainConfig) -> Result<(JointPolicy, TrainingCurve), MarlError> {
    cfg.validate()?;
    match cfg.algorithm {
        Algorithm::Iql => iql::train(env, cfg),
        Algorithm::Reinforce => reinforce::train(env, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_respects_mask_and_ties() {
        assert_eq!(argmax_masked(&[1.0, 3.0, 3.0], &[true, true, true]), 1);
        assert_eq!(argmax_masked(&[1.0, 3.0, 3.0], &[true, false, true]), 2);
        assert_eq!(argmax_masked(&[5.0, 3.0], &[false, true]), 1);
    }

    #[test]
    fn epsilon_decays_linearly_then_holds() {
        let cfg = TrainConfig { episodes: 100, epsilon_decay: 0.5, ..Default::default() };
        assert_eq!(cfg.epsilon(0), 1.0);
        assert!((cfg.epsilon(25) - 0.525).abs() < 1e-12);
        assert_eq!(cfg.epsilon(50), 0.05);
        assert_eq!(cfg.epsilon(99), 0.05);
    }

    #[test]
    fn rejects_invalid_configs() {
        for cfg in [
            TrainConfig { gamma: Some(1.0), ..Default::default() },
            TrainConfig { learning_rate: 0.0, ..Default::default() },
            TrainConfig { epsilon_start: 0.1, epsilon_end: 0.2, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn episode_seeds_differ() {
        assert_ne!(episode_seed(0, 0), episode_seed(0, 1));
        assert_ne!(episode_seed(0, 1), episode_seed(1, 0));
    }

    #[test]
    fn curve_csv_round_trips() {
        let c = TrainingCurve { shaped: vec![1.5, -0.25], raw: vec![1.0, -0.5] };
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(TrainingCurve::read_csv(&buf[..]).unwrap(), c);
    }
}
