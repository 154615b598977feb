//! Constraint guides and linkers.
//!
//! A role action guide (rag) restricts the actions a role may take given its
//! history and latest observation; a role reward guide (rrg) penalizes actions
//! outside that set; a goal reward guide (grg) pays a bonus once the agent's
//! history contains a goal's characteristic sub-sequence. Linkers bind agents
//! to roles (`ar`), roles to guides (`rcg`) and goals to guides (`gcg`).

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::org_model::OrgSpec;
use crate::trajectory::{AgentId, History, Label, LabelPat, Pattern, Step};

/// Added to `1 - p` in the mission weighting factor to keep it finite.
pub const PRIORITY_EPSILON: f64 = 1e-6;

/// Set of admissible actions: everything, or an explicit subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Allowed {
    All,
    Only(BTreeSet<Label>),
}

impl Allowed {
    pub fn contains(&self, action: &Label) -> bool {
        match self {
            Allowed::All => true,
            Allowed::Only(set) => set.contains(action),
        }
    }

    pub fn is_all(&self) -> bool {
        matches!(self, Allowed::All)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RagRule {
    /// History condition; `None` fires on any history.
    #[serde(default)]
    pub pattern: Option<Pattern>,
    /// Latest-observation condition (`#any` for every observation).
    pub observation: LabelPat,
    pub actions: BTreeSet<Label>,
    #[serde(default = "default_hardness")]
    pub hardness: f64,
}

fn default_hardness() -> f64 {
    1.0
}

fn default_once() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct RagDecision {
    pub allowed: Allowed,
    pub hardness: f64,
    /// Index of the rule that fired.
    pub rule: Option<usize>,
}

impl RagDecision {
    pub fn unconstrained() -> Self {
        RagDecision { allowed: Allowed::All, hardness: 0.0, rule: None }
    }
}

/// Ordered rule bank; the first matching rule wins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleActionGuide {
    pub rules: Vec<RagRule>,
}

impl RoleActionGuide {
    pub fn new(rules: Vec<RagRule>) -> Self {
        RoleActionGuide { rules }
    }

    pub fn query_steps(&self, history: &[Step], obs: &Label) -> RagDecision {
        for (i, rule) in self.rules.iter().enumerate() {
            if !rule.observation.accepts(obs) {
                continue;
            }
            if let Some(p) = &rule.pattern {
                if !p.matches_steps(history) {
                    continue;
                }
            }
            return RagDecision {
                allowed: Allowed::Only(rule.actions.clone()),
                hardness: rule.hardness,
                rule: Some(i),
            };
        }
        RagDecision::unconstrained()
    }

    fn with_hardness(&self, hardness: f64) -> Self {
        RoleActionGuide {
            rules: self
                .rules
                .iter()
                .map(|r| RagRule { hardness, ..r.clone() })
                .collect(),
        }
    }
}

/// `rag(h, ω)`: allowed actions and constraint hardness.
pub fn rag_query(guide: &RoleActionGuide, history: &History, obs: &Label) -> RagDecision {
    guide.query_steps(history.steps(), obs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoleRewardGuide {
    /// `r_m ≤ 0`.
    pub penalty: f64,
    pub source_rag: Arc<RoleActionGuide>,
}

impl RoleRewardGuide {
    pub fn query_steps(&self, history: &[Step], obs: &Label, action: &Label) -> f64 {
        if self.source_rag.query_steps(history, obs).allowed.contains(action) {
            0.0
        } else {
            self.penalty
        }
    }
}

/// `rrg(h, ω, a)`: `r_m` when `a` is outside the rag's allowed set, else 0.
pub fn rrg_query(guide: &RoleRewardGuide, history: &History, obs: &Label, action: &Label) -> f64 {
    guide.query_steps(history.steps(), obs, action)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalRewardGuide {
    /// Characteristic sub-sequence `h_g`.
    pub pattern: Pattern,
    pub bonus: f64,
    #[serde(default = "default_once", rename = "once")]
    pub once_per_episode: bool,
}

impl GoalRewardGuide {
    pub fn query_steps(&self, history: &[Step]) -> f64 {
        if !self.pattern.matches_steps(history) {
            return 0.0;
        }
        if self.once_per_episode && !history.is_empty() && self.pattern.matches_steps(&history[..history.len() - 1]) {
            // matched already at an earlier step
            return 0.0;
        }
        self.bonus
    }
}

/// `grg(h)`: the bonus when `h` contains the goal's characteristic
/// sub-sequence (only at the first such step when `once_per_episode`).
pub fn grg_query(guide: &GoalRewardGuide, history: &History) -> f64 {
    guide.query_steps(history.steps())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoleGuides {
    pub rag: Option<Arc<RoleActionGuide>>,
    pub rrg: Option<RoleRewardGuide>,
}

/// Resolved linkers, validated against an [`OrgSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Linkers {
    pub ar: BTreeMap<AgentId, String>,
    pub rcg: BTreeMap<String, RoleGuides>,
    pub gcg: BTreeMap<String, GoalRewardGuide>,
    /// When false every goal bonus is zero (roles-only ablation).
    pub goals_enabled: bool,
}

impl Default for Linkers {
    fn default() -> Self {
        Linkers {
            ar: BTreeMap::new(),
            rcg: BTreeMap::new(),
            gcg: BTreeMap::new(),
            goals_enabled: true,
        }
    }
}

impl Linkers {
    /// No agents, roles or goals: the wrapper reduces to the bare environment.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.ar.is_empty() && self.rcg.is_empty() && self.gcg.is_empty()
    }

    pub fn role_of(&self, agent: &AgentId) -> Option<&str> {
        self.ar.get(agent).map(String::as_str)
    }

    /// Copy with every rag rule's hardness replaced by `hardness`.
    pub fn with_hardness(&self, hardness: f64) -> Linkers {
        let mut cache: Vec<(Arc<RoleActionGuide>, Arc<RoleActionGuide>)> = Vec::new();
        let mut swap = |g: &Arc<RoleActionGuide>| -> Arc<RoleActionGuide> {
            if let Some((_, new)) = cache.iter().find(|(old, _)| Arc::ptr_eq(old, g)) {
                return new.clone();
            }
            let new = Arc::new(g.with_hardness(hardness));
            cache.push((g.clone(), new.clone()));
            new
        };
        let rcg = self
            .rcg
            .iter()
            .map(|(role, guides)| {
                let rag = guides.rag.as_ref().map(&mut swap);
                let rrg = guides.rrg.as_ref().map(|r| RoleRewardGuide {
                    penalty: r.penalty,
                    source_rag: swap(&r.source_rag),
                });
                (role.clone(), RoleGuides { rag, rrg })
            })
            .collect();
        Linkers { rcg, ..self.clone() }
    }

    /// Copy with all goal reward guides disabled.
    pub fn without_goals(&self) -> Linkers {
        Linkers {
            gcg: BTreeMap::new(),
            goals_enabled: false,
            ..self.clone()
        }
    }
}

/// Sum over temporally valid missions of the agent's role of
/// `grg_m(h) / (1 - p + ε)`, where `grg_m` is the weighted sum of the
/// mission's goal bonuses.
pub fn mission_bonus(
    spec: &OrgSpec,
    linkers: &Linkers,
    agent: &AgentId,
    history: &History,
    step: u64,
) -> Result<f64, GuideError> {
    let role = linkers
        .role_of(agent)
        .ok_or_else(|| GuideError::UnassignedAgent(agent.to_string()))?;
    if !linkers.goals_enabled {
        return Ok(0.0);
    }
    let relations = spec.rds_lookup(role, step).map_err(|e| GuideError::Spec(e.to_string()))?;
    let mut total = 0.0;
    for rel in relations {
        let mission = spec
            .mission(&rel.mission)
            .ok_or_else(|| GuideError::Spec(format!("undeclared mission {:?}", rel.mission)))?;
        let mut grg_m = 0.0;
        for mg in &mission.goals {
            let guide = linkers
                .gcg
                .get(&mg.goal)
                .ok_or_else(|| GuideError::MissingGoalGuide(mg.goal.clone()))?;
            grg_m += mg.weight * grg_query(guide, history);
        }
        total += grg_m / (1.0 - rel.priority() + PRIORITY_EPSILON);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GuideError {
    #[error("agent {0} has no role")]
    UnassignedAgent(String),
    #[error("agent {agent} is mapped to undeclared role {role}")]
    UndeclaredRole { agent: String, role: String },
    #[error("guide reference {0:?} does not resolve")]
    UnknownGuide(String),
    #[error("role {0} carries a deontic relation but has no rcg entry and is not listed as unconstrained")]
    UnlinkedRole(String),
    #[error("goal {0} is used by a mission but has no gcg entry")]
    MissingGoalGuide(String),
    #[error("rag {guide} rule {rule}: {message}")]
    InvalidRule { guide: String, rule: usize, message: String },
    #[error("rrg {0}: penalty must be <= 0")]
    PositivePenalty(String),
    #[error("grg {0}: bonus must be finite")]
    NonFiniteBonus(String),
    #[error("{0}")]
    Spec(String),
    #[error("agent {agent}: action {action} is not in its action alphabet")]
    UnknownAction { agent: String, action: String },
    #[error("agent {0} is not part of the environment")]
    UnknownAgent(String),
    #[error("environment agent {0} has no role assignment")]
    MissingAgent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RrgDecl {
    pub penalty: f64,
    pub rag: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcgDecl {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rrg: Option<String>,
}

/// Guide banks and linkers as declared in the organization document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuideBank {
    pub rag: BTreeMap<String, RoleActionGuide>,
    pub rrg: BTreeMap<String, RrgDecl>,
    pub grg: BTreeMap<String, GoalRewardGuide>,
    pub ar: BTreeMap<AgentId, String>,
    pub rcg: BTreeMap<String, RcgDecl>,
    pub gcg: BTreeMap<String, String>,
    /// Roles that carry deontic relations but deliberately have no guides.
    pub unconstrained: BTreeSet<String>,
    /// Optional reference behaviour per role, used by the consistency score.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub references: BTreeMap<String, Pattern>,
}

impl GuideBank {
    /// Resolves names and checks every setup-time invariant against `spec`.
    pub fn bind(&self, spec: &OrgSpec) -> Result<Linkers, GuideError> {
        let mut rags: BTreeMap<&str, Arc<RoleActionGuide>> = BTreeMap::new();
        for (name, guide) in &self.rag {
            for (i, rule) in guide.rules.iter().enumerate() {
                let bad = |message: &str| GuideError::InvalidRule {
                    guide: name.clone(),
                    rule: i,
                    message: message.to_string(),
                };
                if rule.actions.is_empty() {
                    return Err(bad("allowed action set is empty"));
                }
                if !(0.0..=1.0).contains(&rule.hardness) {
                    return Err(bad("hardness outside [0,1]"));
                }
            }
            rags.insert(name, Arc::new(guide.clone()));
        }
        let resolve_rag = |name: &str| {
            rags.get(name)
                .cloned()
                .ok_or_else(|| GuideError::UnknownGuide(name.to_string()))
        };
        let mut rrgs = BTreeMap::new();
        for (name, decl) in &self.rrg {
            if decl.penalty > 0.0 || decl.penalty.is_nan() {
                return Err(GuideError::PositivePenalty(name.clone()));
            }
            rrgs.insert(
                name.as_str(),
                RoleRewardGuide { penalty: decl.penalty, source_rag: resolve_rag(&decl.rag)? },
            );
        }
        for (name, g) in &self.grg {
            if !g.bonus.is_finite() {
                return Err(GuideError::NonFiniteBonus(name.clone()));
            }
        }
        let mut linkers = Linkers::empty();
        for (agent, role) in &self.ar {
            if spec.role(role).is_none() {
                return Err(GuideError::UndeclaredRole { agent: agent.to_string(), role: role.clone() });
            }
            linkers.ar.insert(agent.clone(), role.clone());
        }
        for (role, decl) in &self.rcg {
            if spec.role(role).is_none() {
                return Err(GuideError::Spec(format!("rcg references undeclared role {role:?}")));
            }
            let rag = decl.rag.as_deref().map(resolve_rag).transpose()?;
            let rrg = match decl.rrg.as_deref() {
                Some(n) => Some(rrgs.get(n).cloned().ok_or_else(|| GuideError::UnknownGuide(n.to_string()))?),
                None => None,
            };
            linkers.rcg.insert(role.clone(), RoleGuides { rag, rrg });
        }
        for (goal, grg) in &self.gcg {
            if !spec.has_goal(goal) {
                return Err(GuideError::Spec(format!("gcg references undeclared goal {goal:?}")));
            }
            let guide = self.grg.get(grg).ok_or_else(|| GuideError::UnknownGuide(grg.clone()))?;
            linkers.gcg.insert(goal.clone(), guide.clone());
        }
        for role in &self.unconstrained {
            if spec.role(role).is_none() {
                return Err(GuideError::Spec(format!("unconstrained list names undeclared role {role:?}")));
            }
        }
        for rel in &spec.deontic {
            if !linkers.rcg.contains_key(&rel.role) && !self.unconstrained.contains(&rel.role) {
                return Err(GuideError::UnlinkedRole(rel.role.clone()));
            }
            if let Some(m) = spec.mission(&rel.mission) {
                for mg in &m.goals {
                    if !linkers.gcg.contains_key(&mg.goal) {
                        return Err(GuideError::MissingGoalGuide(mg.goal.clone()));
                    }
                }
            }
        }
        Ok(linkers)
    }
}

/// An organization document: the specification plus its guide banks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrgDocument {
    #[serde(flatten)]
    pub spec: OrgSpec,
    #[serde(default)]
    pub guides: GuideBank,
}

impl OrgDocument {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents serialize")
    }

    pub fn bind(&self) -> Result<Linkers, GuideError> {
        self.guides.bind(&self.spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::org_model::{DeonticKind, DeonticRelation, Goal, Mission, MissionGoal, Role};
    use crate::trajectory::parse_pattern;

    fn l(s: &str) -> Label {
        Label::new(s).unwrap()
    }

    fn rule(pattern: Option<&str>, obs: &str, actions: &[&str], hardness: f64) -> RagRule {
        RagRule {
            pattern: pattern.map(|p| parse_pattern(p).unwrap()),
            observation: LabelPat::parse(obs).unwrap(),
            actions: actions.iter().map(|a| l(a)).collect(),
            hardness,
        }
    }

    #[test]
    fn unconditional_rule_fires() {
        let g = RoleActionGuide::new(vec![rule(None, "o_prey_east", &["move_east"], 1.0)]);
        let d = rag_query(&g, &History::of(&[("x", "y")]), &l("o_prey_east"));
        assert_eq!(d.allowed, Allowed::Only([l("move_east")].into()));
        assert_eq!(d.hardness, 1.0);
        let d = rag_query(&g, &History::new(), &l("o_prey_west"));
        assert_eq!(d, RagDecision::unconstrained());
    }

    #[test]
    fn first_matching_rule_wins() {
        let g = RoleActionGuide::new(vec![
            rule(Some("[o,a]<1,1>"), "#any", &["a1"], 0.7),
            rule(None, "#any", &["a2"], 1.0),
        ]);
        let with = History::of(&[("o", "a")]);
        let without = History::of(&[("o", "b")]);
        assert_eq!(rag_query(&g, &with, &l("o")).rule, Some(0));
        assert_eq!(rag_query(&g, &without, &l("o")).rule, Some(1));
    }

    #[test]
    fn rrg_penalizes_only_disallowed_actions() {
        let rag = Arc::new(RoleActionGuide::new(vec![rule(None, "o_prey_east", &["move_east"], 1.0)]));
        let rrg = RoleRewardGuide { penalty: -1.0, source_rag: rag };
        let h = History::new();
        assert_eq!(rrg_query(&rrg, &h, &l("o_prey_east"), &l("move_west")), -1.0);
        assert_eq!(rrg_query(&rrg, &h, &l("o_prey_east"), &l("move_east")), 0.0);
        assert_eq!(rrg_query(&rrg, &h, &l("o_other"), &l("move_west")), 0.0);
    }

    #[test]
    fn grg_pays_on_match() {
        let g = GoalRewardGuide { pattern: parse_pattern("[g,x]<1,1>").unwrap(), bonus: 5.0, once_per_episode: false };
        assert_eq!(grg_query(&g, &History::of(&[("a", "b"), ("g", "x")])), 5.0);
        assert_eq!(grg_query(&g, &History::of(&[("a", "b")])), 0.0);
    }

    fn one_mission_spec(priority: Option<f64>) -> (OrgSpec, Linkers, AgentId) {
        let spec = OrgSpec {
            roles: vec![Role::new("predator")],
            goals: vec![Goal { name: "g".into() }],
            missions: vec![Mission {
                name: "m".into(),
                goals: vec![MissionGoal { goal: "g".into(), weight: 1.0 }],
                agent_cardinality: Default::default(),
            }],
            deontic: vec![DeonticRelation {
                priority,
                ..DeonticRelation::new("predator", "m", DeonticKind::Obligation)
            }],
            ..Default::default()
        };
        let agent = AgentId::new("p0").unwrap();
        let mut linkers = Linkers::empty();
        linkers.ar.insert(agent.clone(), "predator".into());
        linkers.gcg.insert(
            "g".into(),
            GoalRewardGuide { pattern: parse_pattern("[g,x]<1,1>").unwrap(), bonus: 5.0, once_per_episode: true },
        );
        (spec, linkers, agent)
    }

    #[test]
    fn obligation_bonus_is_scaled_by_priority() {
        let (spec, linkers, agent) = one_mission_spec(None);
        let h = History::of(&[("g", "x")]);
        let b = mission_bonus(&spec, &linkers, &agent, &h, 0).unwrap();
        assert!((b - 5.0 / (0.5 + 1e-6)).abs() < 1e-9);
        assert!((b - 9.99998).abs() < 1e-4);
        assert_eq!(mission_bonus(&spec, &linkers.without_goals(), &agent, &h, 0).unwrap(), 0.0);
    }

    #[test]
    fn inactive_missions_pay_nothing() {
        let (mut spec, linkers, agent) = one_mission_spec(None);
        spec.deontic[0].time_constraint = crate::org_model::TimeConstraint::Intervals(vec![
            crate::org_model::StepInterval { start: 5, end: 9 },
        ]);
        let h = History::of(&[("g", "x")]);
        assert_eq!(mission_bonus(&spec, &linkers, &agent, &h, 0).unwrap(), 0.0);
    }

    #[test]
    fn bind_checks_references() {
        let (spec, _, _) = one_mission_spec(None);
        let mut bank = GuideBank::default();
        bank.ar.insert(AgentId::new("p0").unwrap(), "predator".into());
        assert_eq!(bank.bind(&spec).unwrap_err(), GuideError::UnlinkedRole("predator".into()));
        bank.unconstrained.insert("predator".into());
        assert_eq!(bank.bind(&spec).unwrap_err(), GuideError::MissingGoalGuide("g".into()));
        bank.grg.insert(
            "gg".into(),
            GoalRewardGuide { pattern: parse_pattern("[g,x]<1,1>").unwrap(), bonus: 5.0, once_per_episode: true },
        );
        bank.gcg.insert("g".into(), "gg".into());
        assert!(bank.bind(&spec).is_ok());
        bank.rrg.insert("r".into(), RrgDecl { penalty: 1.0, rag: "nope".into() });
        assert_eq!(bank.bind(&spec).unwrap_err(), GuideError::PositivePenalty("r".into()));
        bank.rrg.insert("r".into(), RrgDecl { penalty: -1.0, rag: "nope".into() });
        assert_eq!(bank.bind(&spec).unwrap_err(), GuideError::UnknownGuide("nope".into()));
    }

    #[test]
    fn bind_rejects_empty_action_sets() {
        let mut bank = GuideBank::default();
        bank.rag.insert("r".into(), RoleActionGuide::new(vec![rule(None, "#any", &[], 1.0)]));
        assert!(matches!(bank.bind(&OrgSpec::default()), Err(GuideError::InvalidRule { .. })));
    }

    #[test]
    fn hardness_override_keeps_shared_rags_shared() {
        let rag = Arc::new(RoleActionGuide::new(vec![rule(None, "#any", &["a"], 1.0)]));
        let mut linkers = Linkers::empty();
        linkers.rcg.insert(
            "r".into(),
            RoleGuides {
                rag: Some(rag.clone()),
                rrg: Some(RoleRewardGuide { penalty: -1.0, source_rag: rag }),
            },
        );
        let soft = linkers.with_hardness(0.25);
        let g = &soft.rcg["r"];
        assert_eq!(g.rag.as_ref().unwrap().rules[0].hardness, 0.25);
        assert!(Arc::ptr_eq(g.rag.as_ref().unwrap(), &g.rrg.as_ref().unwrap().source_rag));
    }
}
