//! Greedy rollouts of a trained joint policy.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{episode_seed, JointPolicy, MarlError};
use crate::env::{DecPomdp, OrgWrapper};
use crate::trajectory::{group_episodes, write_log, JointHistory, LogError, LogRecord};

const EVAL_STREAM: u64 = 0x6576_616c_7561_7465;

/// Perturbations applied during evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalOptions {
    /// Probability that the policy sees a uniformly random observation.
    pub obs_noise: f64,
    /// Agent replaced by its idle action.
    pub frozen_agent: Option<usize>,
    /// Shifts the start-state seeds.
    pub seed_offset: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub episode: u64,
    pub success: bool,
    pub raw_return: f64,
    pub shaped_return: f64,
    /// Agent turns taken.
    pub length: usize,
    /// Turns on which a rag rule fired.
    pub constrained: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalLog {
    pub records: Vec<LogRecord>,
    pub episodes: Vec<EpisodeSummary>,
}

const EPISODE_HEADER: &str = "episode_id,success,raw_return,shaped_return,length,constrained,violations";

impl EvalLog {
    pub fn mean_raw_return(&self) -> f64 {
        mean(self.episodes.iter().map(|e| e.raw_return))
    }

    pub fn std_raw_return(&self) -> f64 {
        let m = self.mean_raw_return();
        let n = self.episodes.len();
        if n == 0 {
            return 0.0;
        }
        (self.episodes.iter().map(|e| (e.raw_return - m).powi(2)).sum::<f64>() / n as f64).sqrt()
    }

    pub fn success_rate(&self) -> f64 {
        mean(self.episodes.iter().map(|e| if e.success { 1.0 } else { 0.0 }))
    }

    pub fn joint_histories(&self) -> Result<Vec<(u64, JointHistory)>, LogError> {
        Ok(group_episodes(&self.records)?.into_iter().collect())
    }

    pub fn write_trajectories<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_log(w, &self.records)
    }

    pub fn write_episodes<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{EPISODE_HEADER}")?;
        for e in &self.episodes {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                e.episode, e.success, e.raw_return, e.shaped_return, e.length, e.constrained, e.violations
            )?;
        }
        Ok(())
    }

    pub fn read_episodes<R: BufRead>(r: R) -> Result<Vec<EpisodeSummary>, MarlError> {
        let mut out = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || MarlError::Config(format!("episodes log line {}: malformed", n + 1));
            if f.len() != 7 {
                return Err(bad());
            }
            out.push(EpisodeSummary {
                episode: f[0].parse().map_err(|_| bad())?,
                success: f[1].parse().map_err(|_| bad())?,
                raw_return: f[2].parse().map_err(|_| bad())?,
                shaped_return: f[3].parse().map_err(|_| bad())?,
                length: f[4].parse().map_err(|_| bad())?,
                constrained: f[5].parse().map_err(|_| bad())?,
                violations: f[6].parse().map_err(|_| bad())?,
            });
        }
        Ok(out)
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in it {
        s += x;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn evaluate<E: DecPomdp>(
    env: &mut OrgWrapper<E>,
    policy: &JointPolicy,
    episodes: usize,
    seed: u64,
) -> Result<EvalLog, MarlError> {
    evaluate_with(env, policy, episodes, seed, &EvalOptions::default())
}

pub fn evaluate_with<E: DecPomdp>(
    env: &mut OrgWrapper<E>,
    policy: &JointPolicy,
    episodes: usize,
    seed: u64,
    opts: &EvalOptions,
) -> Result<EvalLog, MarlError> {
    policy.check_env(env.inner())?;
    let base = seed.wrapping_add(opts.seed_offset) ^ EVAL_STREAM;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ EVAL_STREAM);
    let mut log = EvalLog::default();
    for ep in 0..episodes {
        env.reset(episode_seed(base, ep as u64));
        let mut summary = EpisodeSummary {
            episode: ep as u64,
            success: false,
            raw_return: 0.0,
            shaped_return: 0.0,
            length: 0,
            constrained: 0,
            violations: 0,
        };
        loop {
            let i = env.current_agent();
            let mut obs = env.observation();
            let idle = env.inner().idle_action(i);
            let decision = env.action_mask(i)?;
            let mask = &decision.mask;
            let action = if opts.frozen_agent == Some(i) {
                if mask[idle] {
                    idle
                } else {
                    decision.admissible().next().expect("masks are never empty")
                }
            } else {
                if opts.obs_noise > 0.0 && rng.gen::<f64>() < opts.obs_noise {
                    obs = rng.gen_range(0..policy.policies[i].observations.len());
                }
                policy.policies[i].greedy(obs, mask)
            };
            let step = env.histories()[i].len();
            let out = env.step(i, action)?;
            let last = env.histories()[i].last().expect("step appended a pair");
            log.records.push(LogRecord {
                episode: ep as u64,
                agent: env.inner().agents()[i].clone(),
                step,
                obs: last.obs.clone(),
                act: last.act.clone(),
            });
            summary.length += 1;
            summary.raw_return += out.info.raw_reward;
            summary.shaped_return += out.reward;
            summary.constrained += usize::from(out.info.constrained);
            summary.violations += usize::from(out.info.violation);
            if out.finished() {
                summary.success = env.inner().success();
                break;
            }
        }
        log.episodes.push(summary);
    }
    Ok(log)
}
