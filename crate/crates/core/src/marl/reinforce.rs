//! Tabular softmax REINFORCE with a moving-average return baseline.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    episode_seed, Algorithm, JointPolicy, MarlError, TableKind, TabularPolicy, TrainConfig, TrainingCurve,
    POLICY_FORMAT_VERSION,
};
use crate::env::{DecPomdp, OrgWrapper};

struct Turn {
    obs: usize,
    action: usize,
    mask: Vec<bool>,
    reward: f64,
}

pub(crate) fn softmax_masked(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { (l - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = p.iter().sum();
    for x in &mut p {
        *x /= z;
    }
    p
}

fn sample<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (a, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = a;
        if u < acc {
            return a;
        }
    }
    last
}

pub(super) fn train<E: DecPomdp>(
    env: &mut OrgWrapper<E>,
    cfg: &TrainConfig,
) -> Result<(JointPolicy, TrainingCurve), MarlError> {
    let n = env.num_agents();
    let gamma = cfg.gamma_for(env);
    let lr = cfg.learning_rate;
    let mut logits: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| {
            let l = env.inner().labels(i);
            vec![vec![0.0; l.act_labels().len()]; l.obs_labels().len()]
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curve = TrainingCurve::default();
    let mut recent: Vec<VecDeque<f64>> = vec![VecDeque::new(); n];
    let mut turns: Vec<Vec<Turn>> = (0..n).map(|_| Vec::new()).collect();

    for ep in 0..cfg.episodes {
        env.reset(episode_seed(cfg.seed, ep as u64));
        turns.iter_mut().for_each(Vec::clear);
        let (mut shaped, mut raw) = (0.0, 0.0);
        loop {
            let i = env.current_agent();
            let obs = env.observation();
            let mask = env.action_mask(i)?.mask.clone();
            let probs = softmax_masked(&logits[i][obs], &mask);
            let action = sample(&mut rng, &probs);
            debug_assert!(mask[action]);
            let out = env.step(i, action)?;
            turns[i].push(Turn { obs, action, mask, reward: 0.0 });
            for t in turns.iter_mut().filter_map(|ts| ts.last_mut()) {
                t.reward += out.reward;
            }
            shaped += out.reward;
            raw += out.info.raw_reward;
            if out.finished() {
                break;
            }
        }
        for i in 0..n {
            let baseline = if recent[i].is_empty() {
                0.0
            } else {
                recent[i].iter().sum::<f64>() / recent[i].len() as f64
            };
            let mut g = 0.0;
            let mut first_return = 0.0;
            for (k, t) in turns[i].iter().enumerate().rev() {
                g = t.reward + gamma * g;
                if k == 0 {
                    first_return = g;
                }
                let row = &mut logits[i][t.obs];
                let probs = softmax_masked(row, &t.mask);
                let adv = g - baseline;
                for (a, p) in probs.iter().enumerate() {
                    if t.mask[a] {
                        let indicator = if a == t.action { 1.0 } else { 0.0 };
                        row[a] += lr * adv * (indicator - p);
                    }
                }
            }
            recent[i].push_back(first_return);
            if recent[i].len() > cfg.baseline_window {
                recent[i].pop_front();
            }
        }
        curve.shaped.push(shaped);
        curve.raw.push(raw);
    }
    let policies = logits
        .into_iter()
        .enumerate()
        .map(|(i, rows)| {
            let l = env.inner().labels(i);
            let all = vec![true; l.act_labels().len()];
            TabularPolicy {
                kind: TableKind::Probabilities,
                observations: l.obs_labels().to_vec(),
                actions: l.act_labels().to_vec(),
                table: rows.iter().map(|r| softmax_masked(r, &all)).collect(),
            }
        })
        .collect();
    let policy = JointPolicy {
        version: POLICY_FORMAT_VERSION,
        algorithm: Algorithm::Reinforce,
        agents: env.inner().agents().to_vec(),
        policies,
    };
    Ok((policy, curve))
}
