//! Organizational specification: roles and groups (structural), goals, plans
//! and missions (functional), obligations and permissions (deontic).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::trajectory::check_identifier;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Role {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub parents: BTreeSet<String>,
}

impl Role {
    pub fn new(name: &str) -> Self {
        Role { name: name.to_string(), parents: BTreeSet::new() }
    }

    pub fn inheriting(name: &str, parents: &[&str]) -> Self {
        Role {
            name: name.to_string(),
            parents: parents.iter().map(|p| p.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Acquaintance,
    Communication,
    Authority,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub source: String,
    pub target: String,
    pub kind: LinkKind,
}

/// Inclusive `(min, max)` count bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: u32,
    pub max: u32,
}

impl Bounds {
    pub fn new(min: u32, max: u32) -> Self {
        Bounds { min, max }
    }
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { min: 0, max: u32::MAX }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Group {
    pub name: String,
    pub roles: BTreeSet<String>,
    pub subgroups: BTreeSet<String>,
    pub intra_links: Vec<Link>,
    pub inter_links: Vec<Link>,
    pub intra_compat: Vec<(String, String)>,
    pub inter_compat: Vec<(String, String)>,
    /// `np`: role → count bounds.
    pub role_cardinality: BTreeMap<String, Bounds>,
    /// `ng`: subgroup → count bounds.
    pub subgroup_cardinality: BTreeMap<String, Bounds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Goal {
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanOperator {
    Sequence,
    Choice,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlanChild {
    Goal(String),
    Plan(Plan),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plan {
    pub head: String,
    #[serde(rename = "op")]
    pub operator: PlanOperator,
    pub children: Vec<PlanChild>,
}

impl Plan {
    fn collect_edges(&self, edges: &mut Vec<(String, String)>, out: &mut Vec<Diagnostic>) {
        if self.children.is_empty() {
            out.push(Diagnostic::new(
                DiagnosticKind::EmptyPlan,
                &self.head,
                "plan has no children",
            ));
        }
        for child in &self.children {
            match child {
                PlanChild::Goal(g) => edges.push((self.head.clone(), g.clone())),
                PlanChild::Plan(p) => {
                    edges.push((self.head.clone(), p.head.clone()));
                    p.collect_edges(edges, out);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionGoal {
    pub goal: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mission {
    pub name: String,
    /// `mo`: weighted goals.
    pub goals: Vec<MissionGoal>,
    /// `nm`: number of agents committed to the mission.
    #[serde(default)]
    pub agent_cardinality: Bounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeonticKind {
    Obligation,
    Permission,
}

impl DeonticKind {
    pub fn default_priority(self) -> f64 {
        match self {
            DeonticKind::Obligation => 0.5,
            DeonticKind::Permission => 0.0,
        }
    }
}

/// Closed step interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepInterval {
    pub start: u64,
    pub end: u64,
}

/// When a deontic relation is active. Serialized as `"any"` or as a list of
/// `[start, end]` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum TimeConstraint {
    #[default]
    Any,
    Intervals(Vec<StepInterval>),
}

impl TimeConstraint {
    pub fn contains(&self, step: u64) -> bool {
        match self {
            TimeConstraint::Any => true,
            TimeConstraint::Intervals(v) => v.iter().any(|i| i.start <= step && step <= i.end),
        }
    }
}

impl Serialize for TimeConstraint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            TimeConstraint::Any => s.serialize_str("any"),
            TimeConstraint::Intervals(v) => {
                let pairs: Vec<[u64; 2]> = v.iter().map(|i| [i.start, i.end]).collect();
                pairs.serialize(s)
            }
        }
    }
}

impl<'de> Deserialize<'de> for TimeConstraint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Keyword(String),
            Pairs(Vec<[u64; 2]>),
        }
        match Repr::deserialize(d)? {
            Repr::Keyword(k) if k.eq_ignore_ascii_case("any") => Ok(TimeConstraint::Any),
            Repr::Keyword(k) => Err(serde::de::Error::custom(format!(
                "unknown time constraint {k:?}, expected \"any\" or [[start,end],...]"
            ))),
            Repr::Pairs(p) => Ok(TimeConstraint::Intervals(
                p.into_iter().map(|[start, end]| StepInterval { start, end }).collect(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeonticRelation {
    pub role: String,
    pub mission: String,
    pub kind: DeonticKind,
    #[serde(default)]
    pub time_constraint: TimeConstraint,
    /// Mission priority `p` in `[0, 1)`; defaults by kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<f64>,
}

impl DeonticRelation {
    pub fn new(role: &str, mission: &str, kind: DeonticKind) -> Self {
        DeonticRelation {
            role: role.to_string(),
            mission: mission.to_string(),
            kind,
            time_constraint: TimeConstraint::Any,
            priority: None,
        }
    }

    pub fn priority(&self) -> f64 {
        self.priority.unwrap_or_else(|| self.kind.default_priority())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrgSpec {
    pub roles: Vec<Role>,
    pub groups: Vec<Group>,
    pub goals: Vec<Goal>,
    pub plans: Vec<Plan>,
    pub missions: Vec<Mission>,
    pub deontic: Vec<DeonticRelation>,
    /// Mission preference order; stored, not used by the constraint engine.
    pub preferences: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DiagnosticKind {
    InvalidIdentifier,
    DuplicateName,
    CyclicInheritance,
    UnresolvedRole,
    UnresolvedGroup,
    UnresolvedGoal,
    UnresolvedMission,
    InvalidCardinality,
    InvalidWeight,
    WeightSumExceeded,
    EmptyMission,
    EmptyPlan,
    CyclicPlan,
    InvalidInterval,
    InvalidPriority,
}

impl DiagnosticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticKind::InvalidIdentifier => "invalid identifier",
            DiagnosticKind::DuplicateName => "duplicate name",
            DiagnosticKind::CyclicInheritance => "cyclic inheritance",
            DiagnosticKind::UnresolvedRole => "unresolved role",
            DiagnosticKind::UnresolvedGroup => "unresolved group",
            DiagnosticKind::UnresolvedGoal => "unresolved goal",
            DiagnosticKind::UnresolvedMission => "unresolved mission",
            DiagnosticKind::InvalidCardinality => "invalid cardinality",
            DiagnosticKind::InvalidWeight => "invalid weight",
            DiagnosticKind::WeightSumExceeded => "weight sum exceeded",
            DiagnosticKind::EmptyMission => "empty mission",
            DiagnosticKind::EmptyPlan => "empty plan",
            DiagnosticKind::CyclicPlan => "cyclic plan",
            DiagnosticKind::InvalidInterval => "invalid interval",
            DiagnosticKind::InvalidPriority => "invalid priority",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// Offending element, e.g. the role or mission name.
    pub element: String,
    pub message: String,
}

impl Diagnostic {
    fn new(kind: DiagnosticKind, element: &str, message: impl Into<String>) -> Self {
        Diagnostic { kind, element: element.to_string(), message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.kind.as_str(), self.element, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrgError {
    #[error("undeclared role {0:?}")]
    UndeclaredRole(String),
    #[error("undeclared mission {0:?}")]
    UndeclaredMission(String),
}

impl OrgSpec {
    pub fn role(&self, name: &str) -> Option<&Role> {
        self.roles.iter().find(|r| r.name == name)
    }

    pub fn mission(&self, name: &str) -> Option<&Mission> {
        self.missions.iter().find(|m| m.name == name)
    }

    pub fn has_goal(&self, name: &str) -> bool {
        self.goals.iter().any(|g| g.name == name)
    }

    /// The role itself plus all transitive parents. Tolerates cycles.
    pub fn ancestors(&self, role: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![role.to_string()];
        while let Some(r) = stack.pop() {
            if !seen.insert(r.clone()) {
                continue;
            }
            if let Some(decl) = self.role(&r) {
                stack.extend(decl.parents.iter().cloned());
            }
        }
        seen
    }

    /// Deontic relations applying to `role` at `step`, including those
    /// inherited from ancestor roles, in declaration order.
    pub fn rds_lookup(&self, role: &str, step: u64) -> Result<Vec<&DeonticRelation>, OrgError> {
        if self.role(role).is_none() {
            return Err(OrgError::UndeclaredRole(role.to_string()));
        }
        let ancestors = self.ancestors(role);
        Ok(self
            .deontic
            .iter()
            .filter(|d| ancestors.contains(&d.role) && d.time_constraint.contains(step))
            .collect())
    }

    /// Checks every structural, functional and deontic invariant; an empty
    /// result means the specification is valid.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let role_names: BTreeSet<&str> = self.roles.iter().map(|r| r.name.as_str()).collect();
        let group_names: BTreeSet<&str> = self.groups.iter().map(|g| g.name.as_str()).collect();
        let goal_names: BTreeSet<&str> = self.goals.iter().map(|g| g.name.as_str()).collect();
        let mission_names: BTreeSet<&str> = self.missions.iter().map(|m| m.name.as_str()).collect();

        check_names(self.roles.iter().map(|r| r.name.as_str()), "role", &mut out);
        check_names(self.groups.iter().map(|g| g.name.as_str()), "group", &mut out);
        check_names(self.goals.iter().map(|g| g.name.as_str()), "goal", &mut out);
        check_names(self.missions.iter().map(|m| m.name.as_str()), "mission", &mut out);

        let unresolved_role = |name: &str, ctx: &str, out: &mut Vec<Diagnostic>| {
            if !role_names.contains(name) {
                out.push(Diagnostic::new(
                    DiagnosticKind::UnresolvedRole,
                    name,
                    format!("referenced by {ctx}"),
                ));
            }
        };

        for role in &self.roles {
            for p in &role.parents {
                unresolved_role(p, &format!("role {}", role.name), &mut out);
            }
        }
        self.check_inheritance_cycles(&mut out);

        for group in &self.groups {
            let ctx = format!("group {}", group.name);
            for r in &group.roles {
                unresolved_role(r, &ctx, &mut out);
            }
            for sg in group.subgroups.iter().chain(group.subgroup_cardinality.keys()) {
                if !group_names.contains(sg.as_str()) {
                    out.push(Diagnostic::new(DiagnosticKind::UnresolvedGroup, sg, format!("referenced by {ctx}")));
                }
            }
            for link in group.intra_links.iter().chain(&group.inter_links) {
                unresolved_role(&link.source, &ctx, &mut out);
                unresolved_role(&link.target, &ctx, &mut out);
            }
            for (a, b) in group.intra_compat.iter().chain(&group.inter_compat) {
                unresolved_role(a, &ctx, &mut out);
                unresolved_role(b, &ctx, &mut out);
            }
            for (r, b) in &group.role_cardinality {
                unresolved_role(r, &ctx, &mut out);
                check_bounds(*b, &format!("{}/{}", group.name, r), &mut out);
            }
            for (g, b) in &group.subgroup_cardinality {
                check_bounds(*b, &format!("{}/{}", group.name, g), &mut out);
            }
        }

        let mut plan_edges = Vec::new();
        for plan in &self.plans {
            plan.collect_edges(&mut plan_edges, &mut out);
        }
        for (head, child) in &plan_edges {
            for g in [head, child] {
                if !goal_names.contains(g.as_str()) {
                    out.push(Diagnostic::new(DiagnosticKind::UnresolvedGoal, g, "referenced by a plan"));
                }
            }
        }
        check_plan_cycles(&plan_edges, &mut out);

        for m in &self.missions {
            if m.goals.is_empty() {
                out.push(Diagnostic::new(DiagnosticKind::EmptyMission, &m.name, "mission has no goals"));
            }
            let mut sum = 0.0;
            for mg in &m.goals {
                if !goal_names.contains(mg.goal.as_str()) {
                    out.push(Diagnostic::new(
                        DiagnosticKind::UnresolvedGoal,
                        &mg.goal,
                        format!("referenced by mission {}", m.name),
                    ));
                }
                if !(mg.weight > 0.0 && mg.weight <= 1.0) {
                    out.push(Diagnostic::new(
                        DiagnosticKind::InvalidWeight,
                        &m.name,
                        format!("weight {} of goal {} outside (0,1]", mg.weight, mg.goal),
                    ));
                }
                sum += mg.weight;
            }
            if sum > m.goals.len() as f64 {
                out.push(Diagnostic::new(DiagnosticKind::WeightSumExceeded, &m.name, format!("weights sum to {sum}")));
            }
            check_bounds(m.agent_cardinality, &m.name, &mut out);
        }

        for d in &self.deontic {
            let element = format!("{}->{}", d.role, d.mission);
            unresolved_role(&d.role, &format!("deontic relation {element}"), &mut out);
            if !mission_names.contains(d.mission.as_str()) {
                out.push(Diagnostic::new(DiagnosticKind::UnresolvedMission, &d.mission, format!("referenced by deontic relation {element}")));
            }
            if let TimeConstraint::Intervals(v) = &d.time_constraint {
                for i in v {
                    if i.start > i.end {
                        out.push(Diagnostic::new(
                            DiagnosticKind::InvalidInterval,
                            &element,
                            format!("interval [{}, {}] has start > end", i.start, i.end),
                        ));
                    }
                }
            }
            let p = d.priority();
            if !(0.0..1.0).contains(&p) {
                out.push(Diagnostic::new(DiagnosticKind::InvalidPriority, &element, format!("priority {p} outside [0,1)")));
            }
        }

        for (a, b) in &self.preferences {
            for m in [a, b] {
                if !mission_names.contains(m.as_str()) {
                    out.push(Diagnostic::new(DiagnosticKind::UnresolvedMission, m, "referenced by a preference"));
                }
            }
        }
        out
    }

    fn check_inheritance_cycles(&self, out: &mut Vec<Diagnostic>) {
        let reach = |from: &str| -> BTreeSet<String> {
            let mut seen = BTreeSet::new();
            let mut stack: Vec<String> = self
                .role(from)
                .map(|r| r.parents.iter().cloned().collect())
                .unwrap_or_default();
            while let Some(r) = stack.pop() {
                if seen.insert(r.clone()) {
                    if let Some(decl) = self.role(&r) {
                        stack.extend(decl.parents.iter().cloned());
                    }
                }
            }
            seen
        };
        let reaches: BTreeMap<&str, BTreeSet<String>> =
            self.roles.iter().map(|r| (r.name.as_str(), reach(&r.name))).collect();
        let mut reported: BTreeSet<BTreeSet<String>> = BTreeSet::new();
        for role in &self.roles {
            if !reaches[role.name.as_str()].contains(&role.name) {
                continue;
            }
            // strongly connected component of the cycle, reported once
            let component: BTreeSet<String> = reaches[role.name.as_str()]
                .iter()
                .filter(|other| reaches.get(other.as_str()).is_some_and(|s| s.contains(&role.name)))
                .cloned()
                .collect();
            if reported.insert(component.clone()) {
                let members: Vec<&str> = component.iter().map(String::as_str).collect();
                out.push(Diagnostic::new(
                    DiagnosticKind::CyclicInheritance,
                    members[0],
                    format!("roles {} inherit from themselves", members.join(", ")),
                ));
            }
        }
    }
}

fn check_names<'a>(names: impl Iterator<Item = &'a str>, what: &str, out: &mut Vec<Diagnostic>) {
    let mut seen = BTreeSet::new();
    for name in names {
        if check_identifier(name).is_err() {
            out.push(Diagnostic::new(DiagnosticKind::InvalidIdentifier, name, format!("{what} name must match [A-Za-z0-9_-]+")));
        }
        if !seen.insert(name) {
            out.push(Diagnostic::new(DiagnosticKind::DuplicateName, name, format!("{what} declared twice")));
        }
    }
}

fn check_bounds(b: Bounds, element: &str, out: &mut Vec<Diagnostic>) {
    if b.min > b.max {
        out.push(Diagnostic::new(
            DiagnosticKind::InvalidCardinality,
            element,
            format!("min {} exceeds max {}", b.min, b.max),
        ));
    }
}

fn check_plan_cycles(edges: &[(String, String)], out: &mut Vec<Diagnostic>) {
    let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (h, c) in edges {
        adj.entry(h.as_str()).or_default().push(c.as_str());
    }
    let mut reported = BTreeSet::new();
    for &start in adj.keys() {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<&str> = adj[start].clone();
        while let Some(g) = stack.pop() {
            if g == start {
                if reported.insert(start) {
                    out.push(Diagnostic::new(DiagnosticKind::CyclicPlan, start, "goal is reachable from itself"));
                }
                break;
            }
            if seen.insert(g) {
                if let Some(next) = adj.get(g) {
                    stack.extend(next.iter().copied());
                }
            }
        }
    }
}
