//! Run configuration and the reference-vs-organized experimental protocol.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{DecPomdp, EnvConfig, EnvError, OrgWrapper};
use crate::guides::{GuideBank, GuideError, Linkers, OrgDocument};
use crate::marl::{evaluate, train, EvalLog, JointPolicy, MarlError, TrainConfig, TrainingCurve};
use crate::metrics::{self, MetricsError, MetricsReport, ReportInputs, Robustness};
use crate::org_model::OrgSpec;
use crate::temm::{episodes_from_logs, run_temm, TemmError, TemmParams, TemmReport};
use crate::trajectory::{group_episodes, LogError};

pub type BoxedEnv = Box<dyn DecPomdp + Send>;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Guide(#[from] GuideError),
    #[error(transparent)]
    Marl(#[from] MarlError),
    #[error(transparent)]
    Temm(#[from] TemmError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Log(#[from] LogError),
}

/// An organization document given inline or as a path relative to the
/// config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrgRef {
    Path(PathBuf),
    Inline(Box<OrgDocument>),
}

impl OrgRef {
    pub fn resolve(&self, base: &Path) -> Result<OrgDocument, ExperimentError> {
        match self {
            OrgRef::Inline(doc) => Ok((**doc).clone()),
            OrgRef::Path(p) => {
                let path = base.join(p);
                let text = std::fs::read_to_string(&path).map_err(|source| ExperimentError::Io { path: path.clone(), source })?;
                OrgDocument::from_json(&text).map_err(|source| ExperimentError::Json { path, source })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Defaults to the training seed.
    pub seed: Option<u64>,
    /// Episodes per perturbation in the robustness suite.
    pub robustness_episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { episodes: 100, seed: None, robustness_episodes: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub org: Option<OrgRef>,
    /// Overrides every rule's constraint hardness.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hardness: Option<f64>,
    /// Train without the organization (reference baseline).
    #[serde(default)]
    pub no_org: bool,
    /// Disable goal bonuses (roles-only ablation).
    #[serde(default)]
    pub agr: bool,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub temm: TemmParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rb,
    Ob,
    Agr,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Rb => "rb",
            Mode::Ob => "ob",
            Mode::Agr => "agr",
        }
    }
}

impl RunConfig {
    pub fn new(env: EnvConfig, train: TrainConfig, org: Option<OrgDocument>) -> Self {
        RunConfig {
            env,
            train,
            org: org.map(|d| OrgRef::Inline(Box::new(d))),
            hardness: None,
            no_org: false,
            agr: false,
            eval: EvalConfig::default(),
            temm: TemmParams::default(),
        }
    }

    pub fn mode(&self) -> Mode {
        match (&self.org, self.no_org, self.agr) {
            (None, _, _) | (_, true, _) => Mode::Rb,
            (Some(_), false, true) => Mode::Agr,
            (Some(_), false, false) => Mode::Ob,
        }
    }

    pub fn eval_seed(&self) -> u64 {
        self.eval.seed.unwrap_or(self.train.seed)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.train.validate()?;
        if let Some(h) = self.hardness {
            if !(0.0..=1.0).contains(&h) {
                return Err(ExperimentError::Config(format!("hardness {h} outside [0,1]")));
            }
        }
        if self.eval.episodes == 0 {
            return Err(ExperimentError::Config("eval.episodes must be positive".into()));
        }
        Ok(())
    }

    /// Replaces a path reference by the document it points to.
    pub fn inline_org(&mut self, base: &Path) -> Result<(), ExperimentError> {
        if let Some(r @ OrgRef::Path(_)) = &self.org {
            self.org = Some(OrgRef::Inline(Box::new(r.resolve(base)?)));
        }
        Ok(())
    }

    pub fn document(&self) -> Result<Option<OrgDocument>, ExperimentError> {
        self.org.as_ref().map(|r| r.resolve(Path::new("."))).transpose()
    }
}

/// The organization a run is measured against, and the linkers it trains
/// with (empty for the reference baseline).
#[derive(Debug, Clone)]
pub struct Organization {
    pub spec: Arc<OrgSpec>,
    pub bank: GuideBank,
    /// Declared linkers with the config's hardness; used for metrics.
    pub declared: Arc<Linkers>,
    /// Linkers applied during training and evaluation.
    pub active: Arc<Linkers>,
}

impl Organization {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, ExperimentError> {
        let Some(doc) = cfg.document()? else {
            return Ok(Organization {
                spec: Arc::new(OrgSpec::default()),
                bank: GuideBank::default(),
                declared: Arc::new(Linkers::empty()),
                active: Arc::new(Linkers::empty()),
            });
        };
        let mut declared = doc.bind()?;
        if let Some(h) = cfg.hardness {
            declared = declared.with_hardness(h);
        }
        let active = match cfg.mode() {
            Mode::Rb => Linkers::empty(),
            Mode::Agr => declared.without_goals(),
            Mode::Ob => declared.clone(),
        };
        Ok(Organization {
            spec: Arc::new(doc.spec),
            bank: doc.guides,
            declared: Arc::new(declared),
            active: Arc::new(active),
        })
    }

    pub fn wrap(&self, env: BoxedEnv) -> Result<OrgWrapper<BoxedEnv>, ExperimentError> {
        Ok(OrgWrapper::new(env, self.spec.clone(), self.active.clone())?)
    }
}

pub fn build_wrapper(cfg: &RunConfig, org: &Organization) -> Result<OrgWrapper<BoxedEnv>, ExperimentError> {
    org.wrap(cfg.env.build()?)
}

pub fn train_run(cfg: &RunConfig, org: &Organization) -> Result<(JointPolicy, TrainingCurve), ExperimentError> {
    cfg.validate()?;
    let mut env = build_wrapper(cfg, org)?;
    Ok(train(&mut env, &cfg.train)?)
}

pub fn eval_run(cfg: &RunConfig, org: &Organization, policy: &JointPolicy, episodes: usize, seed: u64) -> Result<EvalLog, ExperimentError> {
    let mut env = build_wrapper(cfg, org)?;
    Ok(evaluate(&mut env, policy, episodes, seed)?)
}

pub fn temm_on_log(log: &EvalLog, params: &TemmParams) -> Result<TemmReport, ExperimentError> {
    let success: BTreeMap<u64, bool> = log.episodes.iter().map(|e| (e.episode, e.success)).collect();
    let episodes = episodes_from_logs(group_episodes(&log.records)?, &success);
    Ok(run_temm(&episodes, params)?)
}

pub fn robustness_run(cfg: &RunConfig, org: &Organization, policy: &JointPolicy) -> Result<Robustness, ExperimentError> {
    let mut env = build_wrapper(cfg, org)?;
    Ok(metrics::robustness(&mut env, policy, cfg.eval.robustness_episodes, cfg.eval_seed())?)
}

pub fn metrics_run(
    org: &Organization,
    curve: &TrainingCurve,
    log: &EvalLog,
    temm: &TemmReport,
    robustness: &Robustness,
) -> Result<MetricsReport, ExperimentError> {
    Ok(metrics::report(&ReportInputs {
        curve: Some(&curve.shaped),
        eval: Some(log),
        spec: Some(&org.spec),
        bank: Some(&org.bank),
        linkers: Some(&org.declared),
        temm: Some(temm),
        robustness: Some(robustness.score),
    })?)
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub policy: JointPolicy,
    pub curve: TrainingCurve,
    pub eval: EvalLog,
    pub temm: TemmReport,
    pub robustness: Robustness,
    pub metrics: MetricsReport,
}

/// Train, evaluate, analyse and score one configuration.
pub fn run(cfg: &RunConfig) -> Result<RunArtifacts, ExperimentError> {
    let org = Organization::from_config(cfg)?;
    let (policy, curve) = train_run(cfg, &org)?;
    let eval = eval_run(cfg, &org, &policy, cfg.eval.episodes, cfg.eval_seed())?;
    let temm = temm_on_log(&eval, &cfg.temm)?;
    let robustness = robustness_run(cfg, &org, &policy)?;
    let metrics = metrics_run(&org, &curve, &eval, &temm, &robustness)?;
    Ok(RunArtifacts { policy, curve, eval, temm, robustness, metrics })
}
