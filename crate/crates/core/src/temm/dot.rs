//! Graphviz exports of the role dendrogram and the transition graph.

use std::fmt::Write;

use super::{JointObs, TemmReport, TransitionGraph};

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn joint_label(jo: &JointObs) -> String {
    jo.iter()
        .map(|l| l.as_ref().map_or("-", |l| l.as_str()))
        .collect::<Vec<_>>()
        .join(" | ")
}

pub(super) fn roles_dot(report: &TemmReport) -> String {
    let d = &report.dendrogram;
    let n = d.leaves.len();
    let mut out = String::from("digraph roles {\n  rankdir=BT;\n  node [shape=box, fontsize=10];\n");
    for (i, (ep, agent)) in d.leaves.iter().enumerate() {
        let _ = writeln!(out, "  n{i} [label=\"{}\"];", escape(&format!("e{ep}:{agent}")));
    }
    for (k, m) in d.merges.iter().enumerate() {
        let id = n + k;
        let _ = writeln!(out, "  n{id} [shape=point, xlabel=\"{:.3}\"];", m.distance);
        let _ = writeln!(out, "  n{} -> n{id};", m.left);
        let _ = writeln!(out, "  n{} -> n{id};", m.right);
    }
    out.push_str("  subgraph cluster_roles {\n    label=\"implicit roles\";\n");
    for r in &report.roles {
        let _ = writeln!(
            out,
            "    {} [shape=ellipse, label=\"{}\\n{} members, cls {}\"];",
            r.id,
            r.id,
            r.members.len(),
            r.cls.len()
        );
    }
    for r in &report.roles {
        for p in &r.parents {
            let _ = writeln!(out, "    {} -> {} [style=dashed, label=\"inherits\"];", r.id, p);
        }
    }
    out.push_str("  }\n}\n");
    out
}

pub(super) fn transitions_dot(g: &TransitionGraph) -> String {
    let mut out = String::from("digraph transitions {\n  node [shape=box, fontsize=9];\n");
    for (i, jo) in g.nodes.iter().enumerate() {
        let _ = writeln!(out, "  j{i} [label=\"{}\"];", escape(&joint_label(jo)));
    }
    for (a, b, c) in &g.edges {
        let _ = writeln!(out, "  j{a} -> j{b} [label=\"{c}\"];");
    }
    out.push_str("}\n");
    out
}
