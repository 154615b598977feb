//! Organization documents shipped for the built-in environments.

use std::collections::{BTreeMap, BTreeSet};

use crate::env::SECTORS;
use crate::guides::{GoalRewardGuide, GuideBank, OrgDocument, RagRule, RcgDecl, RoleActionGuide, RrgDecl};
use crate::org_model::{
    Bounds, DeonticKind, DeonticRelation, Goal, Group, Link, LinkKind, Mission, MissionGoal, OrgSpec, Plan,
    PlanChild, PlanOperator, Role,
};
use crate::trajectory::{AgentId, Label, LabelPat, Pattern};

fn label(s: &str) -> Label {
    Label::new(s).expect("preset labels are identifiers")
}

fn labels(items: &[&str]) -> BTreeSet<Label> {
    items.iter().map(|s| label(s)).collect()
}

fn pattern(text: &str) -> Pattern {
    text.parse().expect("preset patterns parse")
}

fn rule(obs: &str, actions: &[&str]) -> RagRule {
    RagRule {
        pattern: None,
        observation: LabelPat::Exact(label(obs)),
        actions: labels(actions),
        hardness: 1.0,
    }
}

/// Moves that close in on a target lying in `sector`. With `straight`,
/// diagonal sectors resolve to the horizontal move only.
fn approach(sector: &str, straight: bool) -> &'static [&'static str] {
    match (sector, straight) {
        ("n", _) => &["up"],
        ("s", _) => &["down"],
        ("e", _) => &["right"],
        ("w", _) => &["left"],
        ("ne", false) => &["up", "right"],
        ("nw", false) => &["up", "left"],
        ("se", false) => &["down", "right"],
        ("sw", false) => &["down", "left"],
        ("ne" | "se", true) => &["right"],
        ("nw" | "sw", true) => &["left"],
        _ => unreachable!("unknown sector {sector}"),
    }
}

fn pp_rag(straight: bool) -> RoleActionGuide {
    let mates: Vec<&str> = std::iter::once("adj").chain(SECTORS.iter().copied()).collect();
    let mut rules = Vec::new();
    for &m in &mates {
        for &p in SECTORS.iter() {
            rules.push(rule(&format!("prey-{p}_mate-{m}"), approach(p, straight)));
        }
    }
    RoleActionGuide::new(rules)
}

/// Agent `i` of a predator-prey team: even indices chase, odd ones flank.
pub fn predator_role(i: usize) -> &'static str {
    if i.is_multiple_of(2) {
        "chaser"
    } else {
        "flanker"
    }
}

/// Predator-prey organization for `predators` agents.
pub fn predator_prey(predators: usize) -> OrgDocument {
    let holds: Vec<String> = SECTORS.iter().map(|s| format!("hold_{s}")).collect();
    let weight = 1.0 / holds.len() as f64;
    let spec = OrgSpec {
        roles: vec![
            Role::new("predator"),
            Role::inheriting("chaser", &["predator"]),
            Role::inheriting("flanker", &["predator"]),
        ],
        groups: vec![Group {
            name: "pack".into(),
            roles: ["chaser", "flanker"].iter().map(|s| s.to_string()).collect(),
            intra_links: vec![
                Link { source: "chaser".into(), target: "flanker".into(), kind: LinkKind::Communication },
                Link { source: "flanker".into(), target: "chaser".into(), kind: LinkKind::Communication },
            ],
            intra_compat: vec![("chaser".into(), "flanker".into())],
            role_cardinality: BTreeMap::from([
                ("chaser".into(), Bounds::new(1, 2)),
                ("flanker".into(), Bounds::new(1, 2)),
            ]),
            ..Group::default()
        }],
        goals: std::iter::once("prey_surrounded")
            .chain(holds.iter().map(String::as_str))
            .map(|g| Goal { name: g.to_string() })
            .collect(),
        plans: vec![Plan {
            head: "prey_surrounded".into(),
            operator: PlanOperator::Choice,
            children: holds.iter().cloned().map(PlanChild::Goal).collect(),
        }],
        missions: vec![Mission {
            name: "surround".into(),
            goals: holds.iter().map(|g| MissionGoal { goal: g.clone(), weight }).collect(),
            agent_cardinality: Bounds::new(2, predators.max(2) as u32),
        }],
        deontic: vec![DeonticRelation::new("predator", "surround", DeonticKind::Obligation)],
        preferences: Vec::new(),
    };
    let mut guides = GuideBank {
        rag: BTreeMap::from([("chase".into(), pp_rag(false)), ("flank".into(), pp_rag(true))]),
        rrg: BTreeMap::from([
            ("chase_penalty".into(), RrgDecl { penalty: -1.0, rag: "chase".into() }),
            ("flank_penalty".into(), RrgDecl { penalty: -1.0, rag: "flank".into() }),
        ]),
        rcg: BTreeMap::from([
            ("chaser".into(), RcgDecl { rag: Some("chase".into()), rrg: Some("chase_penalty".into()) }),
            ("flanker".into(), RcgDecl { rag: Some("flank".into()), rrg: Some("flank_penalty".into()) }),
        ]),
        unconstrained: BTreeSet::from(["predator".to_string()]),
        ..GuideBank::default()
    };
    for (sector, goal) in SECTORS.iter().zip(&holds) {
        let grg = GoalRewardGuide {
            pattern: pattern(&format!("[prey-adj_mate-{sector},stay]<1,1>")),
            bonus: 4.0,
            once_per_episode: true,
        };
        guides.grg.insert(goal.clone(), grg);
        guides.gcg.insert(goal.clone(), goal.clone());
    }
    for i in 0..predators {
        let agent = AgentId::new(&format!("predator_{i}")).expect("identifier");
        guides.ar.insert(agent, predator_role(i).to_string());
    }
    OrgDocument { spec, guides }
}

/// Warehouse organization for `agents` transporters.
pub fn warehouse(agents: usize) -> OrgDocument {
    let spec = OrgSpec {
        roles: vec![Role::new("transporter")],
        groups: vec![Group {
            name: "floor".into(),
            roles: BTreeSet::from(["transporter".to_string()]),
            role_cardinality: BTreeMap::from([("transporter".into(), Bounds::new(1, 4))]),
            ..Group::default()
        }],
        goals: ["order_fulfilled", "item_picked", "item_delivered"]
            .iter()
            .map(|g| Goal { name: g.to_string() })
            .collect(),
        plans: vec![Plan {
            head: "order_fulfilled".into(),
            operator: PlanOperator::Sequence,
            children: vec![PlanChild::Goal("item_picked".into()), PlanChild::Goal("item_delivered".into())],
        }],
        missions: vec![Mission {
            name: "deliver".into(),
            goals: vec![
                MissionGoal { goal: "item_picked".into(), weight: 0.5 },
                MissionGoal { goal: "item_delivered".into(), weight: 0.5 },
            ],
            agent_cardinality: Bounds::new(1, agents.max(1) as u32),
        }],
        deontic: vec![DeonticRelation::new("transporter", "deliver", DeonticKind::Obligation)],
        preferences: Vec::new(),
    };
    let mut rules = vec![rule("empty_here", &["pick"]), rule("loaded_here", &["drop"])];
    for load in ["empty", "loaded"] {
        for &s in SECTORS.iter() {
            rules.push(rule(&format!("{load}_{s}"), approach(s, false)));
        }
    }
    let mut guides = GuideBank {
        rag: BTreeMap::from([("transport".into(), RoleActionGuide::new(rules))]),
        rrg: BTreeMap::from([("transport_penalty".into(), RrgDecl { penalty: -1.0, rag: "transport".into() })]),
        rcg: BTreeMap::from([(
            "transporter".into(),
            RcgDecl { rag: Some("transport".into()), rrg: Some("transport_penalty".into()) },
        )]),
        ..GuideBank::default()
    };
    for (goal, pat) in [("item_picked", "[empty_here,pick]<1,1>"), ("item_delivered", "[loaded_here,drop]<1,1>")] {
        guides.grg.insert(goal.into(), GoalRewardGuide { pattern: pattern(pat), bonus: 2.0, once_per_episode: true });
        guides.gcg.insert(goal.into(), goal.into());
    }
    for i in 0..agents {
        let agent = AgentId::new(&format!("worker_{i}")).expect("identifier");
        guides.ar.insert(agent, "transporter".into());
    }
    OrgDocument { spec, guides }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_bind() {
        for doc in [predator_prey(3), predator_prey(2), warehouse(2)] {
            assert!(doc.spec.validate().is_empty(), "{:?}", doc.spec.validate());
            doc.bind().unwrap();
            let back = OrgDocument::from_json(&doc.to_json()).unwrap();
            assert_eq!(back, doc);
        }
    }
}
