//! Goal inference from joint-observation trajectories of successful episodes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::kmeans::{select_k, KMeans};
use super::{TemmError, TemmParams};
use crate::trajectory::{AgentId, JointHistory, Label};

/// Joint observation in agent order; `None` for an agent absent from the
/// episode.
pub type JointObs = Vec<Option<Label>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicitGoal {
    pub id: String,
    pub joint_observations: Vec<JointObs>,
    /// Trajectory cluster the goal was sampled from.
    pub cluster: usize,
    pub typical_step: usize,
}

/// One-hot encoding of joint observations over a fixed agent list.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub agents: Vec<AgentId>,
    alphabets: Vec<Vec<Label>>,
    offsets: Vec<usize>,
    dim: usize,
}

impl Encoder {
    pub fn fit<'a>(episodes: impl IntoIterator<Item = &'a JointHistory>) -> Self {
        let mut seen: BTreeMap<AgentId, BTreeSet<Label>> = BTreeMap::new();
        for jh in episodes {
            for (agent, h) in &jh.per_agent {
                let set = seen.entry(agent.clone()).or_default();
                set.extend(h.steps().iter().map(|s| s.obs.clone()));
            }
        }
        let agents: Vec<AgentId> = seen.keys().cloned().collect();
        let alphabets: Vec<Vec<Label>> = seen.into_values().map(|s| s.into_iter().collect()).collect();
        let mut offsets = Vec::with_capacity(alphabets.len());
        let mut dim = 0;
        for a in &alphabets {
            offsets.push(dim);
            dim += a.len();
        }
        Encoder { agents, alphabets, offsets, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn arity(&self) -> usize {
        self.agents.len()
    }

    /// Joint observation at `step`, clamped to each agent's last observation.
    pub fn joint_at(&self, jh: &JointHistory, step: usize) -> JointObs {
        self.agents
            .iter()
            .map(|a| match jh.get(a) {
                Some(h) if !h.is_empty() => Some(h.steps()[step.min(h.len() - 1)].obs.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn encode_into(&self, jo: &JointObs, out: &mut [f64]) {
        for (k, label) in jo.iter().enumerate() {
            if let Some(l) = label {
                if let Ok(pos) = self.alphabets[k].binary_search(l) {
                    out[self.offsets[k] + pos] = 1.0;
                }
            }
        }
    }

    /// Euclidean distance between one-hot encodings divided by its maximum,
    /// `sqrt(2 * arity)`.
    pub fn normalized_distance(&self, a: &JointObs, b: &JointObs) -> f64 {
        if self.arity() == 0 {
            return 0.0;
        }
        let mut sq = 0usize;
        for (x, y) in a.iter().zip(b) {
            if x != y {
                sq += usize::from(x.is_some()) + usize::from(y.is_some());
            }
        }
        (sq as f64 / (2 * self.arity()) as f64).sqrt()
    }
}

/// Merged joint-observation transition graph.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionGraph {
    pub nodes: Vec<JointObs>,
    /// `(from, to, count)` over node indices.
    pub edges: Vec<(usize, usize, usize)>,
}

pub fn transition_graph(encoder: &Encoder, episodes: &[&JointHistory]) -> TransitionGraph {
    let mut index: BTreeMap<JointObs, usize> = BTreeMap::new();
    let mut nodes = Vec::new();
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut id = |jo: JointObs, nodes: &mut Vec<JointObs>| {
        *index.entry(jo.clone()).or_insert_with(|| {
            nodes.push(jo);
            nodes.len() - 1
        })
    };
    for jh in episodes {
        let mut prev = None;
        for s in 0..jh.len() {
            let cur = id(encoder.joint_at(jh, s), &mut nodes);
            if let Some(p) = prev {
                *counts.entry((p, cur)).or_default() += 1;
            }
            prev = Some(cur);
        }
    }
    TransitionGraph {
        nodes,
        edges: counts.into_iter().map(|((a, b), c)| (a, b, c)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalInference {
    pub goals: Vec<ImplicitGoal>,
    /// Episode ids per trajectory cluster.
    pub clusters: Vec<Vec<u64>>,
    /// Goal ids per cluster, ordered by typical step.
    pub cluster_goals: Vec<Vec<String>>,
    pub silhouette: f64,
    pub graph: TransitionGraph,
}

/// Clusters successful episodes and samples each cluster's lowest-variance
/// steps as goals.
pub fn infer_goals(
    encoder: &Encoder,
    episodes: &[(u64, &JointHistory)],
    params: &TemmParams,
) -> Result<GoalInference, TemmError> {
    if episodes.is_empty() {
        return Err(TemmError::InsufficientData);
    }
    let horizon = episodes.iter().map(|(_, jh)| jh.len()).max().unwrap_or(0).max(1);
    let dim = encoder.dim();
    let points: Vec<Vec<f64>> = episodes
        .iter()
        .map(|(_, jh)| {
            let mut v = vec![0.0; horizon * dim];
            for s in 0..horizon {
                encoder.encode_into(&encoder.joint_at(jh, s), &mut v[s * dim..(s + 1) * dim]);
            }
            v
        })
        .collect();
    let (km, silhouette) = match params.k {
        Some(k) => {
            let k = k.clamp(1, points.len());
            (super::kmeans::kmeans(&points, k, params.seed, 4), 0.0)
        }
        None => select_k(&points, 2..=params.k_max, params.seed),
    };
    let KMeans { k, assignment, centroids, .. } = km;

    let mut goals: Vec<ImplicitGoal> = Vec::new();
    let mut cluster_goals = vec![Vec::new(); k];
    let mut clusters = vec![Vec::new(); k];
    for (e, &c) in assignment.iter().enumerate() {
        clusters[c].push(episodes[e].0);
    }
    for c in 0..k {
        let members: Vec<usize> = (0..points.len()).filter(|&e| assignment[e] == c).collect();
        let mut variances: Vec<(f64, usize)> = (0..horizon)
            .map(|s| {
                let block = s * dim..(s + 1) * dim;
                let mu = &centroids[c][block.clone()];
                let v = members
                    .iter()
                    .map(|&e| super::kmeans::sq_dist(&points[e][block.clone()], mu))
                    .sum::<f64>()
                    / members.len() as f64;
                (v, s)
            })
            .collect();
        // lowest variance first; ties prefer the later step
        variances.sort_by(|a, b| {
            if (a.0 - b.0).abs() <= 1e-12 {
                b.1.cmp(&a.1)
            } else {
                a.0.total_cmp(&b.0)
            }
        });
        let mut chosen: Vec<usize> = variances.iter().take(params.goals_per_cluster.max(1)).map(|&(_, s)| s).collect();
        chosen.sort_unstable();
        for s in chosen {
            let set: BTreeSet<JointObs> = members.iter().map(|&e| encoder.joint_at(episodes[e].1, s)).collect();
            let set: Vec<JointObs> = set.into_iter().collect();
            let id = match goals.iter().find(|g| g.joint_observations == set) {
                Some(g) => g.id.clone(),
                None => {
                    let id = format!("goal_{}", goals.len());
                    goals.push(ImplicitGoal { id: id.clone(), joint_observations: set, cluster: c, typical_step: s });
                    id
                }
            };
            if !cluster_goals[c].contains(&id) {
                cluster_goals[c].push(id);
            }
        }
    }
    let graph = transition_graph(encoder, &episodes.iter().map(|(_, jh)| *jh).collect::<Vec<_>>());
    Ok(GoalInference { goals, clusters, cluster_goals, silhouette, graph })
}
