//! Trajectory-based evaluation of implicit organizations.
//!
//! From the trajectories of trained agents this module infers implicit roles
//! (clusters of similar histories and their common longest sequence), goals
//! (low-variance joint observations of successful episodes), plans, missions
//! and deontic relations, then scores how well a set of trajectories fits the
//! inferred organization.

mod dot;
mod goals;
mod kmeans;
mod roles;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::org_model::{
    DeonticKind, DeonticRelation, Goal, Mission, MissionGoal, OrgSpec, Plan, PlanChild, PlanOperator, Role,
    StepInterval, TimeConstraint,
};
use crate::trajectory::{lcs_len, AgentId, History, JointHistory};

pub use goals::{infer_goals, transition_graph, Encoder, GoalInference, ImplicitGoal, JointObs, TransitionGraph};
pub use kmeans::{kmeans, select_k, silhouette, sq_dist, KMeans};
pub use roles::{
    average_linkage, cut, distance_matrix, fold_cls, infer_roles, inheritance, lcs_distance, Dendrogram,
    ImplicitRole, Merge,
};

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// `(episode id, agent id)` of one agent history.
pub type MemberKey = (u64, AgentId);

#[derive(Debug, Error)]
pub enum TemmError {
    #[error("no trajectories to analyse")]
    EmptyLogs,
    #[error("insufficient data: no successful episodes to infer goals from")]
    InsufficientData,
    #[error(transparent)]
    Log(#[from] crate::trajectory::LogError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemmParams {
    /// Linkage distance at which the role dendrogram is cut.
    pub tau_r: f64,
    /// Fixed number of trajectory clusters; chosen by silhouette when absent.
    pub k: Option<usize>,
    pub k_max: usize,
    /// Normalized joint-observation distance within which a goal counts as
    /// reached.
    pub tau_g: f64,
    pub goals_per_cluster: usize,
    /// Fraction of a role's members that must reach a goal for it to join
    /// the role's mission.
    pub quorum: f64,
    /// Infer on even-positioned episodes and score fit on odd ones.
    pub holdout: bool,
    pub seed: u64,
}

impl Default for TemmParams {
    fn default() -> Self {
        TemmParams {
            tau_r: 0.5,
            k: None,
            k_max: 8,
            tau_g: 0.0,
            goals_per_cluster: 1,
            quorum: 0.5,
            holdout: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemmEpisode {
    pub id: u64,
    pub joint: JointHistory,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicitMission {
    pub id: String,
    pub goals: Vec<String>,
    /// Agents that reached the mission's goals.
    pub agents: Vec<AgentId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicitDeontic {
    pub role: String,
    pub mission: String,
    pub kind: DeonticKind,
    /// Agent-step window `[first, last]` in which goals were reached.
    pub window: (usize, usize),
}

/// Plans in sequence/choice form plus the synthetic goals heading them.
pub fn infer_plans(cluster_goals: &[Vec<String>], goals: &[ImplicitGoal]) -> (Vec<Plan>, Vec<String>) {
    let step_of = |id: &String| goals.iter().find(|g| &g.id == id).map_or(0, |g| g.typical_step);
    let mut heads = Vec::new();
    let mut chains: Vec<PlanChild> = Vec::new();
    for (c, ids) in cluster_goals.iter().enumerate() {
        if ids.is_empty() {
            continue;
        }
        let mut ordered = ids.clone();
        ordered.sort_by(|a, b| step_of(a).cmp(&step_of(b)).then_with(|| goal_order(a, b)));
        let chain = if ordered.len() == 1 {
            PlanChild::Goal(ordered.remove(0))
        } else {
            let head = format!("sequence_{c}");
            heads.push(head.clone());
            PlanChild::Plan(Plan {
                head,
                operator: PlanOperator::Sequence,
                children: ordered.into_iter().map(PlanChild::Goal).collect(),
            })
        };
        let duplicate = chains.iter().any(|x| same_chain(x, &chain));
        if duplicate {
            if let PlanChild::Plan(p) = &chain {
                heads.retain(|h| h != &p.head);
            }
        } else {
            chains.push(chain);
        }
    }
    let plans = if chains.len() > 1 {
        heads.push("choice_root".to_string());
        vec![Plan { head: "choice_root".into(), operator: PlanOperator::Choice, children: chains }]
    } else {
        match chains.pop() {
            Some(PlanChild::Plan(p)) => vec![p],
            _ => Vec::new(),
        }
    };
    (plans, heads)
}

fn same_chain(a: &PlanChild, b: &PlanChild) -> bool {
    match (a, b) {
        (PlanChild::Goal(x), PlanChild::Goal(y)) => x == y,
        (PlanChild::Plan(x), PlanChild::Plan(y)) => x.children == y.children,
        _ => false,
    }
}

/// Orders `goal_2` before `goal_10`.
fn goal_order(a: &str, b: &str) -> std::cmp::Ordering {
    let num = |s: &str| s.rsplit('_').next().and_then(|n| n.parse::<u64>().ok());
    match (num(a), num(b)) {
        (Some(x), Some(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        _ => a.cmp(b),
    }
}

fn reaches(encoder: &Encoder, jh: &JointHistory, goal: &ImplicitGoal, tau_g: f64) -> bool {
    let jo = encoder.joint_at(jh, goal.typical_step);
    goal.joint_observations
        .iter()
        .any(|v| encoder.normalized_distance(&jo, v) <= tau_g + 1e-12)
}

/// Missions and deontic relations of each role from the goals its members'
/// episodes reached.
pub fn infer_missions_deontics(
    roles: &[ImplicitRole],
    goals: &[ImplicitGoal],
    encoder: &Encoder,
    episodes: &BTreeMap<u64, &JointHistory>,
    params: &TemmParams,
) -> (Vec<ImplicitMission>, Vec<ImplicitDeontic>) {
    let mut missions: Vec<ImplicitMission> = Vec::new();
    let mut deontics = Vec::new();
    for role in roles {
        let mut reached: Vec<(usize, &MemberKey, BTreeSet<usize>)> = Vec::new();
        for key in &role.members {
            let Some(jh) = episodes.get(&key.0) else { continue };
            let set: BTreeSet<usize> = (0..goals.len())
                .filter(|&g| reaches(encoder, jh, &goals[g], params.tau_g))
                .collect();
            let len = jh.get(&key.1).map_or(0, History::len);
            reached.push((len, key, set));
        }
        if reached.is_empty() {
            continue;
        }
        let needed = params.quorum * reached.len() as f64;
        let mission_goals: BTreeSet<usize> = (0..goals.len())
            .filter(|g| reached.iter().filter(|(_, _, s)| s.contains(g)).count() as f64 >= needed - 1e-12)
            .filter(|g| reached.iter().any(|(_, _, s)| s.contains(g)))
            .collect();
        if mission_goals.is_empty() {
            continue;
        }
        let obligation = reached.iter().all(|(_, _, s)| s.is_subset(&mission_goals));
        let mut window: Option<(usize, usize)> = None;
        let mut agents = BTreeSet::new();
        for (len, key, s) in &reached {
            for g in s.intersection(&mission_goals) {
                let step = goals[*g].typical_step.min(len.saturating_sub(1));
                window = Some(window.map_or((step, step), |(a, b)| (a.min(step), b.max(step))));
                agents.insert(key.1.clone());
            }
        }
        let goal_ids: Vec<String> = mission_goals.iter().map(|&g| goals[g].id.clone()).collect();
        let mission_id = match missions.iter_mut().find(|m| m.goals == goal_ids) {
            Some(m) => {
                let merged: BTreeSet<AgentId> = m.agents.iter().cloned().chain(agents).collect();
                m.agents = merged.into_iter().collect();
                m.id.clone()
            }
            None => {
                let id = format!("mission_{}", missions.len());
                missions.push(ImplicitMission { id: id.clone(), goals: goal_ids, agents: agents.into_iter().collect() });
                id
            }
        };
        deontics.push(ImplicitDeontic {
            role: role.id.clone(),
            mission: mission_id,
            kind: if obligation { DeonticKind::Obligation } else { DeonticKind::Permission },
            window: window.unwrap_or((0, 0)),
        });
    }
    (missions, deontics)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrgFit {
    pub structural: f64,
    pub functional: f64,
    pub total: f64,
    /// Mean structural fit per agent.
    pub per_agent: BTreeMap<AgentId, f64>,
}

/// Structural fit of one history: the fraction of its nearest role's CLS it
/// contains. Roles with an empty CLS describe no behaviour and never match.
pub fn history_fit(h: &History, roles: &[ImplicitRole]) -> f64 {
    let mut best: Option<(f64, f64)> = None;
    for r in roles.iter().filter(|r| !r.cls.is_empty()) {
        let common = lcs_len(h.steps(), r.cls.steps()) as f64;
        let d = 1.0 - common / h.len().max(r.cls.len()) as f64;
        let fit = common / r.cls.len() as f64;
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, fit));
        }
    }
    best.map_or(0.0, |(_, f)| f)
}

/// Functional fit of one episode: one minus the normalized distance to the
/// closest goal vector at that goal's typical step.
pub fn episode_fit(encoder: &Encoder, jh: &JointHistory, goals: &[ImplicitGoal]) -> f64 {
    let mut best = f64::INFINITY;
    for g in goals {
        let jo = encoder.joint_at(jh, g.typical_step);
        for v in &g.joint_observations {
            best = best.min(encoder.normalized_distance(&jo, v));
        }
    }
    if best.is_finite() {
        1.0 - best
    } else {
        0.0
    }
}

pub fn organizational_fit(
    encoder: &Encoder,
    episodes: &[(u64, &JointHistory)],
    roles: &[ImplicitRole],
    goals: &[ImplicitGoal],
) -> OrgFit {
    let mut per_agent: BTreeMap<AgentId, (f64, usize)> = BTreeMap::new();
    let (mut s_sum, mut s_n) = (0.0, 0usize);
    let mut f_sum = 0.0;
    for (_, jh) in episodes {
        for (agent, h) in &jh.per_agent {
            let f = history_fit(h, roles);
            s_sum += f;
            s_n += 1;
            let e = per_agent.entry(agent.clone()).or_default();
            e.0 += f;
            e.1 += 1;
        }
        f_sum += episode_fit(encoder, jh, goals);
    }
    let structural = if s_n == 0 { 0.0 } else { s_sum / s_n as f64 };
    let functional = if episodes.is_empty() { 0.0 } else { f_sum / episodes.len() as f64 };
    OrgFit {
        structural,
        functional,
        total: (structural + functional) / 2.0,
        per_agent: per_agent.into_iter().map(|(a, (s, n))| (a, s / n as f64)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemmReport {
    pub version: u32,
    pub params: TemmParams,
    pub inferred_on: Vec<u64>,
    pub scored_on: Vec<u64>,
    pub roles: Vec<ImplicitRole>,
    pub dendrogram: Dendrogram,
    pub goals: Vec<ImplicitGoal>,
    /// Episode ids per trajectory cluster.
    pub trajectory_clusters: Vec<Vec<u64>>,
    pub silhouette: f64,
    pub plans: Vec<Plan>,
    pub plan_heads: Vec<String>,
    pub missions: Vec<ImplicitMission>,
    pub deontics: Vec<ImplicitDeontic>,
    pub transitions: TransitionGraph,
    pub structural_fit: f64,
    pub functional_fit: f64,
    pub org_fit: f64,
    pub per_agent_fit: BTreeMap<AgentId, f64>,
}

/// Runs every stage and scores the fit.
pub fn run_temm(episodes: &[TemmEpisode], params: &TemmParams) -> Result<TemmReport, TemmError> {
    if episodes.is_empty() {
        return Err(TemmError::EmptyLogs);
    }
    let mut sorted: Vec<&TemmEpisode> = episodes.iter().collect();
    sorted.sort_by_key(|e| e.id);
    let (infer, score): (Vec<&TemmEpisode>, Vec<&TemmEpisode>) = if params.holdout && sorted.len() >= 2 {
        let (a, b): (Vec<_>, Vec<_>) = sorted.iter().enumerate().partition(|(i, _)| i % 2 == 0);
        (a.into_iter().map(|(_, e)| *e).collect(), b.into_iter().map(|(_, e)| *e).collect())
    } else {
        (sorted.clone(), sorted.clone())
    };
    let encoder = Encoder::fit(sorted.iter().map(|e| &e.joint));

    let members: Vec<(MemberKey, History)> = infer
        .iter()
        .flat_map(|e| e.joint.per_agent.iter().map(move |(a, h)| ((e.id, a.clone()), h.clone())))
        .collect();
    let (roles, dendrogram) = infer_roles(&members, params.tau_r)?;

    let successes: Vec<(u64, &JointHistory)> = infer.iter().filter(|e| e.success).map(|e| (e.id, &e.joint)).collect();
    let goal_inf = infer_goals(&encoder, &successes, params)?;
    let (plans, plan_heads) = infer_plans(&goal_inf.cluster_goals, &goal_inf.goals);
    let by_id: BTreeMap<u64, &JointHistory> = infer.iter().map(|e| (e.id, &e.joint)).collect();
    let (missions, deontics) = infer_missions_deontics(&roles, &goal_inf.goals, &encoder, &by_id, params);

    let scored: Vec<(u64, &JointHistory)> = score.iter().map(|e| (e.id, &e.joint)).collect();
    let fit = organizational_fit(&encoder, &scored, &roles, &goal_inf.goals);
    Ok(TemmReport {
        version: REPORT_FORMAT_VERSION,
        params: params.clone(),
        inferred_on: infer.iter().map(|e| e.id).collect(),
        scored_on: score.iter().map(|e| e.id).collect(),
        roles,
        dendrogram,
        goals: goal_inf.goals,
        trajectory_clusters: goal_inf.clusters,
        silhouette: goal_inf.silhouette,
        plans,
        plan_heads,
        missions,
        deontics,
        transitions: goal_inf.graph,
        structural_fit: fit.structural,
        functional_fit: fit.functional,
        org_fit: fit.total,
        per_agent_fit: fit.per_agent,
    })
}

impl TemmReport {
    /// The inferred organization as an [`OrgSpec`].
    pub fn to_org_spec(&self) -> OrgSpec {
        let n_agents = self.per_agent_fit.len().max(1) as u64;
        let roles = self
            .roles
            .iter()
            .map(|r| Role {
                name: r.id.clone(),
                parents: r.parents.iter().cloned().collect(),
            })
            .collect();
        let goals = self
            .goals
            .iter()
            .map(|g| g.id.clone())
            .chain(self.plan_heads.iter().cloned())
            .map(|name| Goal { name })
            .collect();
        let missions = self
            .missions
            .iter()
            .map(|m| Mission {
                name: m.id.clone(),
                goals: m
                    .goals
                    .iter()
                    .map(|g| MissionGoal { goal: g.clone(), weight: 1.0 / m.goals.len() as f64 })
                    .collect(),
                agent_cardinality: Default::default(),
            })
            .collect();
        let deontic = self
            .deontics
            .iter()
            .map(|d| DeonticRelation {
                time_constraint: TimeConstraint::Intervals(vec![StepInterval {
                    start: d.window.0 as u64 * n_agents,
                    end: d.window.1 as u64 * n_agents + n_agents - 1,
                }]),
                ..DeonticRelation::new(&d.role, &d.mission, d.kind)
            })
            .collect();
        OrgSpec {
            roles,
            goals,
            plans: self.plans.clone(),
            missions,
            deontic,
            ..Default::default()
        }
    }

    pub fn roles_dot(&self) -> String {
        dot::roles_dot(self)
    }

    pub fn transitions_dot(&self) -> String {
        dot::transitions_dot(&self.transitions)
    }
}

/// Builds TEMM input from grouped logs and per-episode success flags.
pub fn episodes_from_logs(
    grouped: BTreeMap<u64, JointHistory>,
    success: &BTreeMap<u64, bool>,
) -> Vec<TemmEpisode> {
    grouped
        .into_iter()
        .map(|(id, joint)| TemmEpisode { id, success: success.get(&id).copied().unwrap_or(false), joint })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn goal(id: &str, step: usize) -> ImplicitGoal {
        ImplicitGoal { id: id.into(), joint_observations: vec![vec![None]], cluster: 0, typical_step: step }
    }

    #[test]
    fn single_cluster_two_goals_is_a_sequence() {
        let goals = vec![goal("goal_0", 5), goal("goal_1", 2)];
        let (plans, heads) = infer_plans(&[vec!["goal_0".into(), "goal_1".into()]], &goals);
        assert_eq!(plans.len(), 1);
        assert_eq!(plans[0].operator, PlanOperator::Sequence);
        assert_eq!(plans[0].children, vec![PlanChild::Goal("goal_1".into()), PlanChild::Goal("goal_0".into())]);
        assert_eq!(heads, vec!["sequence_0".to_string()]);
    }

    #[test]
    fn distinct_clusters_form_a_choice() {
        let goals = vec![goal("goal_0", 5), goal("goal_1", 2)];
        let (plans, _) = infer_plans(&[vec!["goal_0".into()], vec!["goal_1".into()]], &goals);
        assert_eq!(plans[0].operator, PlanOperator::Choice);
        assert_eq!(plans[0].children.len(), 2);
    }

    #[test]
    fn step_ties_order_by_goal_number() {
        let goals = vec![goal("goal_10", 1), goal("goal_2", 1), goal("goal_3", 1)];
        let ids = vec!["goal_10".into(), "goal_3".into(), "goal_2".into()];
        let (plans, _) = infer_plans(&[ids], &goals);
        let names: Vec<_> = plans[0]
            .children
            .iter()
            .map(|c| match c {
                PlanChild::Goal(g) => g.clone(),
                PlanChild::Plan(p) => p.head.clone(),
            })
            .collect();
        assert_eq!(names, vec!["goal_2", "goal_3", "goal_10"]);
    }

    #[test]
    fn empty_cls_roles_never_match() {
        let r = ImplicitRole { id: "role_0".into(), cls: History::new(), members: vec![], parents: vec![] };
        assert_eq!(history_fit(&History::of(&[("a", "b")]), &[r]), 0.0);
    }
}
