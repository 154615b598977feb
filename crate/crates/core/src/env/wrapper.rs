//! Organizational wrapper: action masking and reward reshaping on top of any
//! [`DecPomdp`].

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{DecPomdp, EnvError};
use crate::guides::{Allowed, GoalRewardGuide, GuideError, Linkers, RagDecision, RoleGuides, PRIORITY_EPSILON};
use crate::org_model::{OrgSpec, TimeConstraint};
use crate::trajectory::{AgentId, History, Label, LabelMap, Step};

/// Mixed into the episode seed so the masking stream differs from the
/// environment's own stream.
const MASK_STREAM: u64 = 0x6d61_736b_5f72_6e67;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WrapperError {
    #[error("agent {agent} acted out of turn (expected agent {expected})")]
    OutOfTurn { agent: usize, expected: usize },
    #[error("action index {action} is outside agent {agent}'s alphabet")]
    UnknownAction { agent: usize, action: usize },
    #[error("action label {0:?} is not in the agent's alphabet")]
    UnknownLabel(String),
    #[error("action {action} violates the enforced mask")]
    MaskViolation { action: String },
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// The outcome of the masking draw for the current turn.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskDecision {
    pub rag: RagDecision,
    /// True when the restricted set is enforced this turn.
    pub enforced: bool,
    /// Admissible action indices (all true unless enforced).
    pub mask: Vec<bool>,
}

impl MaskDecision {
    /// Whether a rag rule restricted this observation (enforced or not).
    pub fn constrained(&self) -> bool {
        self.rag.rule.is_some()
    }

    pub fn admissible(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    pub raw_reward: f64,
    pub penalty: f64,
    pub bonus: f64,
    pub mask_applied: bool,
    /// A rag rule fired for this turn.
    pub constrained: bool,
    /// The action lies outside the rag allowed set.
    pub violation: bool,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Observation of the agent acting next.
    pub obs: Label,
    pub obs_index: usize,
    pub next_agent: usize,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

impl StepOutcome {
    pub fn finished(&self) -> bool {
        self.done || self.info.truncated
    }
}

#[derive(Debug, Clone)]
struct BoundRelation {
    time: TimeConstraint,
    priority: f64,
    goals: Vec<(f64, usize)>,
}

#[derive(Debug, Clone, Default)]
struct AgentSlot {
    guides: RoleGuides,
    relations: Vec<BoundRelation>,
}

/// First step at which a once-per-episode goal matched.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Tracker {
    Unmatched { known_len: Option<usize> },
    FirstAt(usize),
    Before(usize),
}

impl Tracker {
    const FRESH: Tracker = Tracker::Unmatched { known_len: None };

    /// Same value as `grg_query` for histories that grow one step at a time.
    fn query(&mut self, guide: &GoalRewardGuide, steps: &[Step]) -> f64 {
        let n = steps.len();
        if !guide.once_per_episode {
            return if guide.pattern.matches_steps(steps) { guide.bonus } else { 0.0 };
        }
        match *self {
            Tracker::FirstAt(k) => return if k == n { guide.bonus } else { 0.0 },
            Tracker::Before(k) if k <= n => return 0.0,
            _ => {}
        }
        if !guide.pattern.matches_steps(steps) {
            *self = Tracker::Unmatched { known_len: Some(n) };
            return 0.0;
        }
        let fresh = match *self {
            Tracker::Unmatched { known_len: Some(k) } if k + 1 == n => true,
            _ => n == 0 || !guide.pattern.matches_steps(&steps[..n - 1]),
        };
        if fresh {
            *self = Tracker::FirstAt(n);
            guide.bonus
        } else {
            *self = Tracker::Before(n);
            0.0
        }
    }
}

/// Label-level organizational state shared by [`OrgWrapper`] and the bridge:
/// per-agent histories, the masking stream and the goal trackers.
#[derive(Debug, Clone)]
pub struct OrgLayer {
    spec: Arc<OrgSpec>,
    linkers: Arc<Linkers>,
    labels: Vec<LabelMap>,
    slots: Vec<AgentSlot>,
    goals: Vec<GoalRewardGuide>,
    trackers: Vec<Vec<Tracker>>,
    histories: Vec<History>,
    t: u64,
    rng: ChaCha8Rng,
    pending: Option<MaskDecision>,
}

/// Reshaping terms of one committed turn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reshaping {
    pub penalty: f64,
    pub bonus: f64,
    pub mask_applied: bool,
    pub constrained: bool,
    pub violation: bool,
}

impl OrgLayer {
    /// Binds the linkers to agents with the given alphabets.
    pub fn new(agents: &[AgentId], labels: Vec<LabelMap>, spec: Arc<OrgSpec>, linkers: Arc<Linkers>) -> Result<Self, GuideError> {
        let n = agents.len();
        let mut goal_names: Vec<&String> = linkers.gcg.keys().collect();
        goal_names.sort();
        let goals: Vec<GoalRewardGuide> = goal_names.iter().map(|g| linkers.gcg[*g].clone()).collect();
        let mut slots = Vec::with_capacity(n);
        if linkers.is_empty() {
            slots.resize(n, AgentSlot::default());
        } else {
            for a in linkers.ar.keys() {
                if !agents.contains(a) {
                    return Err(GuideError::UnknownAgent(a.to_string()));
                }
            }
            for (i, agent) in agents.iter().enumerate() {
                let role = linkers
                    .role_of(agent)
                    .ok_or_else(|| GuideError::MissingAgent(agent.to_string()))?;
                let guides = linkers.rcg.get(role).cloned().unwrap_or_default();
                let rags = guides.rag.iter().chain(guides.rrg.iter().map(|r| &r.source_rag));
                for rag in rags {
                    for rule in &rag.rules {
                        for a in &rule.actions {
                            if labels[i].act_index(a).is_none() {
                                return Err(GuideError::UnknownAction {
                                    agent: agent.to_string(),
                                    action: a.to_string(),
                                });
                            }
                        }
                    }
                }
                let ancestors = spec.ancestors(role);
                let mut relations = Vec::new();
                if linkers.goals_enabled {
                    for rel in spec.deontic.iter().filter(|d| ancestors.contains(&d.role)) {
                        let mission = spec
                            .mission(&rel.mission)
                            .ok_or_else(|| GuideError::Spec(format!("undeclared mission {:?}", rel.mission)))?;
                        let goals = mission
                            .goals
                            .iter()
                            .map(|mg| {
                                goal_names
                                    .iter()
                                    .position(|g| **g == mg.goal)
                                    .map(|k| (mg.weight, k))
                                    .ok_or_else(|| GuideError::MissingGoalGuide(mg.goal.clone()))
                            })
                            .collect::<Result<_, _>>()?;
                        relations.push(BoundRelation {
                            time: rel.time_constraint.clone(),
                            priority: rel.priority(),
                            goals,
                        });
                    }
                }
                slots.push(AgentSlot { guides, relations });
            }
        }
        let mut layer = OrgLayer {
            trackers: vec![vec![Tracker::FRESH; goals.len()]; n],
            histories: vec![History::new(); n],
            spec,
            linkers,
            labels,
            slots,
            goals,
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(MASK_STREAM),
            pending: None,
        };
        layer.reset(0);
        Ok(layer)
    }

    pub fn spec(&self) -> &OrgSpec {
        &self.spec
    }

    pub fn linkers(&self) -> &Linkers {
        &self.linkers
    }

    pub fn labels(&self, agent: usize) -> &LabelMap {
        &self.labels[agent]
    }

    pub fn num_agents(&self) -> usize {
        self.labels.len()
    }

    pub fn histories(&self) -> &[History] {
        &self.histories
    }

    pub fn turn(&self) -> u64 {
        self.t
    }

    /// Agent expected to act next, `t mod n`.
    pub fn expected_agent(&self) -> usize {
        (self.t % self.labels.len().max(1) as u64) as usize
    }

    pub fn reset(&mut self, seed: u64) {
        for h in &mut self.histories {
            h.clear();
        }
        for tr in &mut self.trackers {
            tr.fill(Tracker::FRESH);
        }
        self.t = 0;
        self.rng = ChaCha8Rng::seed_from_u64(seed ^ MASK_STREAM);
        self.pending = None;
    }

    /// rag decision for `agent` observing `obs`, ignoring the hardness draw.
    pub fn rag_decision(&self, agent: usize, obs: &Label) -> RagDecision {
        match &self.slots[agent].guides.rag {
            Some(rag) => rag.query_steps(self.histories[agent].steps(), obs),
            None => RagDecision::unconstrained(),
        }
    }

    /// Mask for this turn. The hardness draw happens once per turn; repeated
    /// calls return the same decision.
    pub fn action_mask(&mut self, agent: usize, obs: &Label) -> &MaskDecision {
        if self.pending.is_none() {
            let rag = self.rag_decision(agent, obs);
            let enforced = match &rag.allowed {
                Allowed::All => false,
                Allowed::Only(_) => self.rng.gen::<f64>() < rag.hardness,
            };
            let labels = &self.labels[agent];
            let mask = match (&rag.allowed, enforced) {
                (Allowed::Only(set), true) => labels.act_labels().iter().map(|a| set.contains(a)).collect(),
                _ => vec![true; labels.act_labels().len()],
            };
            self.pending = Some(MaskDecision { rag, enforced, mask });
        }
        self.pending.as_ref().expect("just filled")
    }

    /// Checks `action` against this turn's mask without consuming it.
    pub fn admit(&mut self, agent: usize, obs: &Label, action: usize) -> Result<(), WrapperError> {
        let expected = self.expected_agent();
        if agent != expected {
            return Err(WrapperError::OutOfTurn { agent, expected });
        }
        let n_actions = self.labels[agent].act_labels().len();
        let decision = self.action_mask(agent, obs);
        if action >= n_actions {
            return Err(WrapperError::UnknownAction { agent, action });
        }
        if decision.enforced && !decision.mask[action] {
            let action = self.labels[agent].act_label(action).to_string();
            return Err(WrapperError::MaskViolation { action });
        }
        Ok(())
    }

    /// Records an admitted turn and returns its reshaping terms.
    pub fn commit(&mut self, agent: usize, obs: &Label, action: usize) -> Result<Reshaping, WrapperError> {
        self.admit(agent, obs, action)?;
        let decision = self.pending.take().expect("admit computed the mask");
        let act = self.labels[agent].act_label(action).clone();
        let slot = &self.slots[agent];
        let violation = !decision.rag.allowed.contains(&act);
        let rrg_value = match &slot.guides.rrg {
            None => 0.0,
            Some(rrg) => match &slot.guides.rag {
                Some(rag) if Arc::ptr_eq(rag, &rrg.source_rag) => {
                    if violation {
                        rrg.penalty
                    } else {
                        0.0
                    }
                }
                _ => rrg.query_steps(self.histories[agent].steps(), obs, &act),
            },
        };
        let penalty = (1.0 - decision.rag.hardness) * rrg_value;
        self.histories[agent].push(Step::new(obs.clone(), act));
        let bonus = self.bonus(agent);
        self.t += 1;
        Ok(Reshaping {
            penalty,
            bonus,
            mask_applied: decision.enforced,
            constrained: decision.constrained(),
            violation,
        })
    }

    fn bonus(&mut self, agent: usize) -> f64 {
        let slot = &self.slots[agent];
        if slot.relations.is_empty() {
            return 0.0;
        }
        let steps = self.histories[agent].steps();
        let trackers = &mut self.trackers[agent];
        let goals = &self.goals;
        let mut values: Vec<Option<f64>> = vec![None; goals.len()];
        let mut total = 0.0;
        for rel in &slot.relations {
            if !rel.time.contains(self.t) {
                continue;
            }
            let mut grg_m = 0.0;
            for &(w, k) in &rel.goals {
                let v = *values[k].get_or_insert_with(|| trackers[k].query(&goals[k], steps));
                grg_m += w * v;
            }
            total += grg_m / (1.0 - rel.priority + PRIORITY_EPSILON);
        }
        total
    }
}

/// Wraps an environment with an organizational specification.
///
/// With empty linkers the wrapper is a transparent pass-through.
#[derive(Debug, Clone)]
pub struct OrgWrapper<E> {
    inner: E,
    layer: OrgLayer,
    obs: usize,
    over: bool,
}

impl<E: DecPomdp> OrgWrapper<E> {
    pub fn new(inner: E, spec: Arc<OrgSpec>, linkers: Arc<Linkers>) -> Result<Self, GuideError> {
        let labels = (0..inner.num_agents()).map(|i| inner.labels(i).clone()).collect();
        let layer = OrgLayer::new(inner.agents(), labels, spec, linkers)?;
        let mut w = OrgWrapper { obs: inner.observe(), inner, layer, over: false };
        w.reset(0);
        Ok(w)
    }

    /// Pass-through wrapper without any organizational constraint.
    pub fn bare(inner: E) -> Self {
        Self::new(inner, Arc::new(OrgSpec::default()), Arc::new(Linkers::empty()))
            .expect("empty linkers always bind")
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn layer(&self) -> &OrgLayer {
        &self.layer
    }

    pub fn spec(&self) -> &OrgSpec {
        self.layer.spec()
    }

    pub fn linkers(&self) -> &Linkers {
        self.layer.linkers()
    }

    pub fn num_agents(&self) -> usize {
        self.inner.num_agents()
    }

    pub fn histories(&self) -> &[History] {
        self.layer.histories()
    }

    pub fn turn(&self) -> u64 {
        self.layer.turn()
    }

    pub fn current_agent(&self) -> usize {
        self.inner.current_agent()
    }

    pub fn observation(&self) -> usize {
        self.obs
    }

    pub fn observation_label(&self) -> &Label {
        self.inner.labels(self.current_agent()).obs_label(self.obs)
    }

    pub fn is_over(&self) -> bool {
        self.over
    }

    pub fn reset(&mut self, seed: u64) -> usize {
        self.obs = self.inner.reset(seed);
        self.layer.reset(seed);
        self.over = false;
        self.obs
    }

    /// rag decision for the current agent, ignoring the hardness draw.
    pub fn rag_decision(&self) -> RagDecision {
        self.layer.rag_decision(self.current_agent(), self.observation_label())
    }

    /// Mask for the agent whose turn it is. The hardness draw happens once
    /// per turn; repeated calls return the same decision.
    pub fn action_mask(&mut self, agent: usize) -> Result<&MaskDecision, WrapperError> {
        let expected = self.current_agent();
        if agent != expected {
            return Err(WrapperError::OutOfTurn { agent, expected });
        }
        let obs = self.inner.labels(agent).obs_label(self.obs);
        Ok(self.layer.action_mask(agent, obs))
    }

    pub fn step_label(&mut self, agent: usize, action: &Label) -> Result<StepOutcome, WrapperError> {
        let idx = self
            .inner
            .labels(agent.min(self.num_agents() - 1))
            .act_index(action)
            .ok_or_else(|| WrapperError::UnknownLabel(action.to_string()))?;
        self.step(agent, idx)
    }

    pub fn step(&mut self, agent: usize, action: usize) -> Result<StepOutcome, WrapperError> {
        if self.over {
            return Err(EnvError::EpisodeOver.into());
        }
        let expected = self.current_agent();
        if agent != expected {
            return Err(WrapperError::OutOfTurn { agent, expected });
        }
        let obs = self.inner.labels(agent).obs_label(self.obs).clone();
        self.layer.admit(agent, &obs, action)?;
        let tr = self.inner.step(action)?;
        let r = self.layer.commit(agent, &obs, action)?;
        let raw_reward = tr.reward;
        let reward = raw_reward + r.penalty + r.bonus;
        self.obs = tr.next_obs;
        self.over = tr.finished();
        let next_agent = self.inner.current_agent();
        Ok(StepOutcome {
            obs: self.inner.labels(next_agent).obs_label(self.obs).clone(),
            obs_index: self.obs,
            next_agent,
            reward,
            done: tr.done,
            info: StepInfo {
                raw_reward,
                penalty: r.penalty,
                bonus: r.bonus,
                mask_applied: r.mask_applied,
                constrained: r.constrained,
                violation: r.violation,
                truncated: tr.truncated,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{PredatorPrey, PredatorPreyConfig};

    #[test]
    fn bare_wrapper_passes_rewards_through() {
        let env = PredatorPrey::new(PredatorPreyConfig::default()).unwrap();
        let mut w = OrgWrapper::bare(env);
        w.reset(3);
        let out = w.step(0, 4).unwrap();
        assert_eq!(out.reward, out.info.raw_reward);
        assert!(!out.info.mask_applied);
        assert_eq!(w.histories()[0].len(), 1);
        assert_eq!(w.turn(), 1);
    }

    #[test]
    fn out_of_turn_is_rejected() {
        let env = PredatorPrey::new(PredatorPreyConfig::default()).unwrap();
        let mut w = OrgWrapper::bare(env);
        assert_eq!(w.step(1, 0), Err(WrapperError::OutOfTurn { agent: 1, expected: 0 }));
        assert_eq!(w.step(0, 9), Err(WrapperError::UnknownAction { agent: 0, action: 9 }));
    }
}
