//! Labels, per-agent histories and the trajectory-pattern language.
//!
//! Observations and actions are handled through a label abstraction: every
//! environment publishes a [`LabelMap`] and histories are plain sequences of
//! `⟨observation label, action label⟩` pairs. Patterns ([`Pattern`]) describe
//! sets of histories intensionally and are matched against contiguous
//! sub-sequences of a history.

mod lcs;
mod log;
mod pattern;

use std::collections::BTreeMap;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use lcs::{is_subsequence, lcs_len, longest_common_subsequence};
pub use log::{group_episodes, read_log, write_log, LogError, LogRecord};
pub use pattern::{belongs, matches, parse_pattern, Cardinality, LabelPat, PairPat, Pattern, PatternError, PatternErrorKind, PatternKind};

/// Text of the wildcard label accepted inside patterns and guide rules.
pub const WILDCARD: &str = "#any";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("label is empty")]
    Empty,
    #[error("label {0:?} contains characters outside [A-Za-z0-9_-]")]
    InvalidChar(String),
    #[error("duplicate label {0:?}")]
    Duplicate(String),
}

pub(crate) fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

pub(crate) fn check_identifier(text: &str) -> Result<(), LabelError> {
    if text.is_empty() {
        return Err(LabelError::Empty);
    }
    if !text.chars().all(is_ident_char) {
        return Err(LabelError::InvalidChar(text.to_string()));
    }
    Ok(())
}

/// An observation or action label.
///
/// Cheap to clone. Equality first compares pointers, so labels handed out by
/// the same [`LabelMap`] compare in constant time.
#[derive(Clone)]
pub struct Label(Arc<str>);

impl Label {
    pub fn new(text: &str) -> Result<Self, LabelError> {
        check_identifier(text)?;
        Ok(Label(Arc::from(text)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || *self.0 == *other.0
    }
}

impl Eq for Label {}

impl Hash for Label {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.hash(state)
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.cmp(&other.0)
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for Label {
    type Err = LabelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::new(s)
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Label::new(&text).map_err(serde::de::Error::custom)
    }
}

/// Agent identifier, e.g. `predator_0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(String);

impl AgentId {
    pub fn new(text: &str) -> Result<Self, LabelError> {
        check_identifier(text)?;
        Ok(AgentId(text.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Bidirectional mapping between encoded observations/actions (indices) and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMap {
    obs: Vec<Label>,
    act: Vec<Label>,
}

impl LabelMap {
    /// Builds the map; each side must be injective.
    pub fn new(obs: Vec<Label>, act: Vec<Label>) -> Result<Self, LabelError> {
        for side in [&obs, &act] {
            let mut seen = std::collections::BTreeSet::new();
            for l in side.iter() {
                if !seen.insert(l.as_str()) {
                    return Err(LabelError::Duplicate(l.to_string()));
                }
            }
        }
        Ok(LabelMap { obs, act })
    }

    pub fn from_strs(obs: &[&str], act: &[&str]) -> Result<Self, LabelError> {
        let obs = obs.iter().map(|s| Label::new(s)).collect::<Result<Vec<_>, _>>()?;
        let act = act.iter().map(|s| Label::new(s)).collect::<Result<Vec<_>, _>>()?;
        LabelMap::new(obs, act)
    }

    pub fn obs_labels(&self) -> &[Label] {
        &self.obs
    }

    pub fn act_labels(&self) -> &[Label] {
        &self.act
    }

    pub fn obs_label(&self, index: usize) -> &Label {
        &self.obs[index]
    }

    pub fn act_label(&self, index: usize) -> &Label {
        &self.act[index]
    }

    pub fn obs_index(&self, label: &Label) -> Option<usize> {
        self.obs.iter().position(|l| l == label)
    }

    pub fn act_index(&self, label: &Label) -> Option<usize> {
        self.act.iter().position(|l| l == label)
    }
}

/// One history entry: the observation received and the action taken on it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Step {
    pub obs: Label,
    pub act: Label,
}

impl Step {
    pub fn new(obs: Label, act: Label) -> Self {
        Step { obs, act }
    }

    /// Convenience constructor for tests and presets; panics on invalid labels.
    pub fn of(obs: &str, act: &str) -> Self {
        Step {
            obs: Label::new(obs).expect("valid observation label"),
            act: Label::new(act).expect("valid action label"),
        }
    }
}

/// A single agent's sequence of `⟨observation, action⟩` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct History {
    steps: Vec<Step>,
}

impl History {
    pub fn new() -> Self {
        History { steps: Vec::new() }
    }

    pub fn from_steps(steps: Vec<Step>) -> Self {
        History { steps }
    }

    /// Builds a history from `(obs, act)` string pairs; panics on invalid labels.
    pub fn of(pairs: &[(&str, &str)]) -> Self {
        History {
            steps: pairs.iter().map(|(o, a)| Step::of(o, a)).collect(),
        }
    }

    pub fn push(&mut self, step: Step) {
        self.steps.push(step);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn last(&self) -> Option<&Step> {
        self.steps.last()
    }

    pub fn clear(&mut self) {
        self.steps.clear();
    }
}

impl From<Vec<Step>> for History {
    fn from(steps: Vec<Step>) -> Self {
        History { steps }
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{},{}", s.obs, s.act)?;
        }
        f.write_str("]")
    }
}

/// Histories of all agents of one team over one episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointHistory {
    pub per_agent: BTreeMap<AgentId, History>,
}

impl JointHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn agents(&self) -> impl Iterator<Item = &AgentId> {
        self.per_agent.keys()
    }

    pub fn get(&self, agent: &AgentId) -> Option<&History> {
        self.per_agent.get(agent)
    }

    /// Longest per-agent history length.
    pub fn len(&self) -> usize {
        self.per_agent.values().map(History::len).max().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Joint observation at history index `step`, clamped to each agent's
    /// last observation (terminal states are absorbing).
    pub fn joint_observation(&self, step: usize) -> Vec<Option<Label>> {
        self.per_agent
            .values()
            .map(|h| {
                if h.is_empty() {
                    None
                } else {
                    Some(h.steps()[step.min(h.len() - 1)].obs.clone())
                }
            })
            .collect()
    }
}
