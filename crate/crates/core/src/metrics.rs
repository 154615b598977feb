//! Evaluation metrics computed from training curves, evaluation logs and
//! TEMM reports.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{DecPomdp, OrgWrapper};
use crate::guides::{GuideBank, Linkers, RoleActionGuide};
use crate::marl::{evaluate, evaluate_with, EvalLog, EvalOptions, JointPolicy, MarlError};
use crate::org_model::OrgSpec;
use crate::temm::{history_fit, TemmReport};
use crate::trajectory::{group_episodes, lcs_len, History, LogError, LogRecord, Pattern};

pub const CONVERGENCE_WINDOW: usize = 100;
pub const CONVERGENCE_BAND: f64 = 0.05;
pub const ROBUSTNESS_NOISE: f64 = 0.1;
pub const ROBUSTNESS_SEED_SHIFT: u64 = 1_000_003;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("missing input: {0}")]
    Missing(&'static str),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Marl(#[from] MarlError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cumulative_reward: f64,
    pub reward_std: f64,
    pub convergence_rate: f64,
    pub violation_rate: f64,
    pub consistency_score: f64,
    pub robustness_score: f64,
    pub org_fit_level: f64,
    /// Consistency against the TEMM-inferred roles instead of the declared
    /// specification.
    #[serde(default)]
    pub consistency_inferred: f64,
}

pub const METRICS_HEADER: &str = "cumulative_reward,reward_std,convergence_rate,violation_rate,consistency_score,robustness_score,org_fit_level";

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.cumulative_reward,
            self.reward_std,
            self.convergence_rate,
            self.violation_rate,
            self.consistency_score,
            self.robustness_score,
            self.org_fit_level
        )
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{METRICS_HEADER}")?;
        writeln!(w, "{}", self.csv_row())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}

/// Trailing moving averages; entry `i` averages `curve[i + 1 - window..=i]`.
pub fn moving_average(curve: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || curve.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(curve.len() + 1 - window);
    let mut sum: f64 = curve[..window].iter().sum();
    out.push(sum / window as f64);
    for i in window..curve.len() {
        sum += curve[i] - curve[i - window];
        out.push(sum / window as f64);
    }
    out
}

/// `1 - t*/T`, where `t*` is the episode count after which the moving average
/// stays within the band around its final value. A curve shorter than one
/// window, or one that only reaches the band at its last episode, scores 0.
pub fn convergence_rate(curve: &[f64]) -> f64 {
    let t = curve.len();
    let ma = moving_average(curve, CONVERGENCE_WINDOW);
    let Some(&last) = ma.last() else {
        return 0.0;
    };
    let band = CONVERGENCE_BAND * last.abs();
    let mut first = ma.len() - 1;
    while first > 0 && (ma[first - 1] - last).abs() <= band {
        first -= 1;
    }
    let t_star = first + CONVERGENCE_WINDOW;
    1.0 - t_star as f64 / t as f64
}

/// Turn counts for one member history: `(constrained, violations)`.
fn replay(rag: &RoleActionGuide, h: &History) -> (usize, usize) {
    let steps = h.steps();
    let (mut constrained, mut violations) = (0, 0);
    for k in 0..steps.len() {
        let d = rag.query_steps(&steps[..k], &steps[k].obs);
        if d.rule.is_some() && !d.allowed.is_all() {
            constrained += 1;
            if !d.allowed.contains(&steps[k].act) {
                violations += 1;
            }
        }
    }
    (constrained, violations)
}

fn role_rag<'a>(linkers: &'a Linkers, role: &str) -> Option<&'a RoleActionGuide> {
    let g = linkers.rcg.get(role)?;
    g.rag.as_deref().or_else(|| g.rrg.as_ref().map(|r| &*r.source_rag))
}

/// Fraction of constrained agent turns whose action lies outside the rag's
/// allowed set, replayed from the logged histories. 0 when no turn was
/// constrained.
pub fn violation_rate(records: &[LogRecord], linkers: &Linkers) -> Result<f64, MetricsError> {
    let (mut c, mut v) = (0usize, 0usize);
    for jh in group_episodes(records)?.values() {
        for (agent, h) in &jh.per_agent {
            let Some(rag) = linkers.role_of(agent).and_then(|r| role_rag(linkers, r)) else {
                continue;
            };
            let (ci, vi) = replay(rag, h);
            c += ci;
            v += vi;
        }
    }
    Ok(if c == 0 { 0.0 } else { v as f64 / c as f64 })
}

fn reference<'a>(spec: &OrgSpec, bank: &'a GuideBank, role: &str) -> Option<&'a Pattern> {
    bank.references.get(role).or_else(|| {
        spec.ancestors(role).iter().find_map(|a| bank.references.get(a))
    })
}

/// Mean over agent histories of the share of the role's reference sequence
/// they contain. Roles without a reference fall back to one minus the
/// history's violation rate; unassigned agents count as fully consistent.
pub fn consistency_score(records: &[LogRecord], spec: &OrgSpec, bank: &GuideBank, linkers: &Linkers) -> Result<f64, MetricsError> {
    let (mut sum, mut n) = (0.0, 0usize);
    for jh in group_episodes(records)?.values() {
        for (agent, h) in &jh.per_agent {
            let role = linkers.role_of(agent);
            let realized = role.and_then(|r| reference(spec, bank, r)).and_then(Pattern::realize);
            let score = match (realized, role.and_then(|r| role_rag(linkers, r))) {
                (Some(r), _) if !r.is_empty() => lcs_len(h.steps(), r.steps()) as f64 / r.len() as f64,
                (_, Some(rag)) => {
                    let (c, v) = replay(rag, h);
                    if c == 0 {
                        1.0
                    } else {
                        1.0 - v as f64 / c as f64
                    }
                }
                _ => 1.0,
            };
            sum += score;
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Consistency against the inferred roles: mean structural fit of every
/// logged history.
pub fn consistency_inferred(records: &[LogRecord], report: &TemmReport) -> Result<f64, MetricsError> {
    let (mut sum, mut n) = (0.0, 0usize);
    for jh in group_episodes(records)?.values() {
        for h in jh.per_agent.values() {
            sum += history_fit(h, &report.roles);
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Robustness {
    pub unperturbed: f64,
    pub floor: f64,
    /// Mean raw return per perturbation, in suite order.
    pub perturbed: BTreeMap<String, f64>,
    pub score: f64,
}

/// Runs the perturbation suite (observation noise, each agent frozen in turn,
/// shifted start states) and scores the mean perturbed return on the scale
/// from the environment's return floor (0) to the unperturbed return (1).
pub fn robustness<E: DecPomdp>(
    env: &mut OrgWrapper<E>,
    policy: &JointPolicy,
    episodes: usize,
    seed: u64,
) -> Result<Robustness, MetricsError> {
    let base = evaluate(env, policy, episodes, seed)?.mean_raw_return();
    let floor = env.inner().return_floor();
    let mut perturbed = BTreeMap::new();
    let noise = EvalOptions { obs_noise: ROBUSTNESS_NOISE, ..EvalOptions::default() };
    perturbed.insert("obs_noise".to_string(), evaluate_with(env, policy, episodes, seed, &noise)?.mean_raw_return());
    let mut frozen = 0.0;
    let n = env.num_agents();
    for i in 0..n {
        let opts = EvalOptions { frozen_agent: Some(i), ..EvalOptions::default() };
        frozen += evaluate_with(env, policy, episodes, seed, &opts)?.mean_raw_return();
    }
    perturbed.insert("frozen_agent".to_string(), frozen / n.max(1) as f64);
    let shift = EvalOptions { seed_offset: ROBUSTNESS_SEED_SHIFT, ..EvalOptions::default() };
    perturbed.insert("shifted_start".to_string(), evaluate_with(env, policy, episodes, seed, &shift)?.mean_raw_return());
    let mean = perturbed.values().sum::<f64>() / perturbed.len() as f64;
    let score = if base - floor <= f64::EPSILON {
        0.0
    } else {
        ((mean - floor) / (base - floor)).clamp(0.0, 1.0)
    };
    Ok(Robustness { unperturbed: base, floor, perturbed, score })
}

/// Inputs to a metrics report; every field must be present.
#[derive(Debug, Default)]
pub struct ReportInputs<'a> {
    pub curve: Option<&'a [f64]>,
    pub eval: Option<&'a EvalLog>,
    pub spec: Option<&'a OrgSpec>,
    pub bank: Option<&'a GuideBank>,
    pub linkers: Option<&'a Linkers>,
    pub temm: Option<&'a TemmReport>,
    pub robustness: Option<f64>,
}

pub fn report(inputs: &ReportInputs<'_>) -> Result<MetricsReport, MetricsError> {
    let curve = inputs.curve.ok_or(MetricsError::Missing("training curve"))?;
    let eval = inputs.eval.ok_or(MetricsError::Missing("evaluation log"))?;
    let spec = inputs.spec.ok_or(MetricsError::Missing("organizational specification"))?;
    let bank = inputs.bank.ok_or(MetricsError::Missing("guide bank"))?;
    let linkers = inputs.linkers.ok_or(MetricsError::Missing("linkers"))?;
    let temm = inputs.temm.ok_or(MetricsError::Missing("TEMM report"))?;
    let robustness_score = inputs.robustness.ok_or(MetricsError::Missing("robustness score"))?;
    Ok(MetricsReport {
        cumulative_reward: eval.mean_raw_return(),
        reward_std: eval.std_raw_return(),
        convergence_rate: convergence_rate(curve),
        violation_rate: violation_rate(&eval.records, linkers)?,
        consistency_score: consistency_score(&eval.records, spec, bank, linkers)?,
        robustness_score,
        org_fit_level: temm.org_fit,
        consistency_inferred: consistency_inferred(&eval.records, temm)?,
    })
}
