//! Organization-aware multi-agent reinforcement learning.
//!
//! Organizational specifications constrain and reward agents through action
//! and reward guides during training; after training, trajectory analysis
//! recovers an organizational specification from the learned behaviour and
//! scores how well it fits.

pub mod bridge;
pub mod env;
pub mod experiment;
pub mod guides;
pub mod marl;
pub mod metrics;
pub mod org_model;
pub mod presets;
pub mod temm;
pub mod trajectory;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
