//! Independent tabular Q-learning.
//!
//! Each agent learns from the shared team reward accumulated between two of
//! its own turns. Exploration and bootstrapping both stay inside the
//! enforced mask.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    argmax_masked, episode_seed, uniform_masked, Algorithm, JointPolicy, MarlError, TableKind, TabularPolicy,
    TrainConfig, TrainingCurve, POLICY_FORMAT_VERSION,
};
use crate::env::{DecPomdp, OrgWrapper};

struct Pending {
    obs: usize,
    action: usize,
    reward: f64,
}

pub(super) fn train<E: DecPomdp>(
    env: &mut OrgWrapper<E>,
    cfg: &TrainConfig,
) -> Result<(JointPolicy, TrainingCurve), MarlError> {
    let n = env.num_agents();
    let gamma = cfg.gamma_for(env);
    let alpha = cfg.learning_rate;
    let mut policies: Vec<TabularPolicy> = (0..n)
        .map(|i| {
            let l = env.inner().labels(i);
            TabularPolicy::zeros(TableKind::Values, l.obs_labels().to_vec(), l.act_labels().to_vec())
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curve = TrainingCurve::default();
    let mut pending: Vec<Option<Pending>> = (0..n).map(|_| None).collect();

    for ep in 0..cfg.episodes {
        let eps = cfg.epsilon(ep);
        env.reset(episode_seed(cfg.seed, ep as u64));
        pending.iter_mut().for_each(|p| *p = None);
        let (mut shaped, mut raw) = (0.0, 0.0);
        loop {
            let i = env.current_agent();
            let obs = env.observation();
            let mask = env.action_mask(i)?.mask.clone();
            if let Some(p) = pending[i].take() {
                let q = &mut policies[i].table;
                let next = q[obs][argmax_masked(&q[obs], &mask)];
                let target = p.reward + gamma * next;
                q[p.obs][p.action] += alpha * (target - q[p.obs][p.action]);
            }
            let action = if rng.gen::<f64>() < eps {
                uniform_masked(&mut rng, &mask)
            } else {
                policies[i].greedy(obs, &mask)
            };
            debug_assert!(mask[action]);
            let out = env.step(i, action)?;
            pending[i] = Some(Pending { obs, action, reward: 0.0 });
            for p in pending.iter_mut().flatten() {
                p.reward += out.reward;
            }
            shaped += out.reward;
            raw += out.info.raw_reward;
            if out.finished() {
                // episode end is terminal for every agent's last transition
                for (j, slot) in pending.iter_mut().enumerate() {
                    if let Some(p) = slot.take() {
                        let q = &mut policies[j].table;
                        q[p.obs][p.action] += alpha * (p.reward - q[p.obs][p.action]);
                    }
                }
                break;
            }
        }
        curve.shaped.push(shaped);
        curve.raw.push(raw);
    }
    let policy = JointPolicy {
        version: POLICY_FORMAT_VERSION,
        algorithm: Algorithm::Iql,
        agents: env.inner().agents().to_vec(),
        policies,
    };
    Ok((policy, curve))
}
