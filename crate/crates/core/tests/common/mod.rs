#![allow(dead_code)]

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use orgmarl::env::{DecPomdp, EnvError, Transition};
use orgmarl::trajectory::{
    AgentId, Cardinality, History, Label, LabelMap, LabelPat, PairPat, Pattern, PatternKind, Step,
};

pub const LABELS: [&str; 3] = ["a", "b", "c"];

/// A step over the 3-label alphabet, encoded as `obs * 3 + act`.
pub type Code = u8;

pub fn step_of(code: Code) -> Step {
    Step::of(LABELS[(code / 3) as usize], LABELS[(code % 3) as usize])
}

pub fn history_of(codes: &[Code]) -> History {
    History::from_steps(codes.iter().map(|&c| step_of(c)).collect())
}

fn pat_codes(p: &LabelPat) -> Vec<u8> {
    match p {
        LabelPat::Any => vec![0, 1, 2],
        LabelPat::Exact(l) => vec![LABELS.iter().position(|x| *x == l.as_str()).expect("alphabet label") as u8],
    }
}

fn concat(a: &HashSet<Vec<Code>>, b: &HashSet<Vec<Code>>, max_len: usize) -> HashSet<Vec<Code>> {
    let mut out = HashSet::new();
    for x in a {
        for y in b {
            if x.len() + y.len() <= max_len {
                let mut s = x.clone();
                s.extend_from_slice(y);
                out.insert(s);
            }
        }
    }
    out
}

/// Every concrete history of length `<= max_len` that realizes `p` as a
/// whole, built by expanding the grammar.
pub fn language(p: &Pattern, max_len: usize) -> HashSet<Vec<Code>> {
    let unit: HashSet<Vec<Code>> = match &p.kind {
        PatternKind::Leaf(pairs) => {
            let mut acc: HashSet<Vec<Code>> = [Vec::new()].into_iter().collect();
            for pair in pairs {
                let mut step_set = HashSet::new();
                for o in pat_codes(&pair.obs) {
                    for a in pat_codes(&pair.act) {
                        step_set.insert(vec![o * 3 + a]);
                    }
                }
                acc = concat(&acc, &step_set, max_len);
            }
            acc
        }
        PatternKind::Node(children) => {
            let mut acc: HashSet<Vec<Code>> = [Vec::new()].into_iter().collect();
            for c in children {
                acc = concat(&acc, &language(c, max_len), max_len);
            }
            acc
        }
    };
    let mut out = HashSet::new();
    let mut cur: HashSet<Vec<Code>> = [Vec::new()].into_iter().collect();
    let mut k = 0u32;
    loop {
        if k >= p.card.min {
            out.extend(cur.iter().cloned());
        }
        if p.card.max.is_some_and(|m| k >= m) {
            break;
        }
        let next = concat(&cur, &unit, max_len);
        k += 1;
        if next == cur && k > p.card.min {
            break;
        }
        if next.is_empty() {
            break;
        }
        cur = next;
    }
    out
}

/// Does some contiguous run of `h` lie in `lang`?
pub fn brute_matches(lang: &HashSet<Vec<Code>>, h: &[Code]) -> bool {
    (0..=h.len()).any(|i| (i..=h.len()).any(|j| lang.contains(&h[i..j])))
}

/// Pseudo-random pattern over the 3-label alphabet.
pub fn random_pattern(rng: &mut ChaCha8Rng, depth: u32) -> Pattern {
    let card = {
        let min = rng.gen_range(0..=2);
        let max = match rng.gen_range(0..4) {
            0 => None,
            _ => Some(min + rng.gen_range(0..=2)),
        };
        Cardinality::new(min, max)
    };
    let label = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.15) {
            LabelPat::Any
        } else {
            LabelPat::Exact(Label::new(LABELS[rng.gen_range(0..3)]).unwrap())
        }
    };
    if depth == 0 || rng.gen_bool(0.5) {
        let n = rng.gen_range(1..=2);
        let pairs = (0..n).map(|_| PairPat { obs: label(rng), act: label(rng) }).collect();
        Pattern::leaf(pairs, card)
    } else {
        let n = rng.gen_range(1..=3);
        Pattern::node((0..n).map(|_| random_pattern(rng, depth - 1)).collect(), card)
    }
}

pub fn patterns(seed: u64, count: usize) -> Vec<Pattern> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_pattern(&mut rng, 2)).collect()
}

/// Longest common subsequence length by enumerating every subsequence of `a`.
pub fn brute_lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    assert!(a.len() <= 16);
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let picked: Vec<&T> = (0..a.len()).filter(|i| mask & (1 << i) != 0).map(|i| &a[i]).collect();
        if picked.len() <= best {
            continue;
        }
        let mut it = b.iter();
        if picked.iter().all(|x| it.any(|y| y == *x)) {
            best = picked.len();
        }
    }
    best
}

/// Single-agent chain: states `0..len`, actions left/right, reward 1 on
/// reaching the right end, which terminates the episode.
#[derive(Debug, Clone)]
pub struct Chain {
    agents: Vec<AgentId>,
    labels: LabelMap,
    len: usize,
    horizon: usize,
    state: usize,
    turns: usize,
    gamma: f64,
}

impl Chain {
    pub fn new(len: usize, horizon: usize, gamma: f64) -> Self {
        let obs: Vec<String> = (0..len).map(|i| format!("s{i}")).collect();
        let obs: Vec<&str> = obs.iter().map(String::as_str).collect();
        Chain {
            agents: vec![AgentId::new("walker").unwrap()],
            labels: LabelMap::from_strs(&obs, &["left", "right"]).unwrap(),
            len,
            horizon,
            state: 0,
            turns: 0,
            gamma,
        }
    }

    /// Optimal greedy action per non-terminal state by value iteration.
    pub fn value_iteration(&self) -> Vec<usize> {
        let goal = self.len - 1;
        let next = |s: usize, a: usize| if a == 0 { s.saturating_sub(1) } else { (s + 1).min(goal) };
        let mut v = vec![0.0; self.len];
        for _ in 0..1000 {
            for s in 0..goal {
                v[s] = (0..2)
                    .map(|a| {
                        let n = next(s, a);
                        if n == goal { 1.0 } else { self.gamma * v[n] }
                    })
                    .fold(f64::MIN, f64::max);
            }
        }
        (0..goal)
            .map(|s| {
                let q = |a: usize| {
                    let n = next(s, a);
                    if n == goal { 1.0 } else { self.gamma * v[n] }
                };
                if q(1) >= q(0) { 1 } else { 0 }
            })
            .collect()
    }
}

impl DecPomdp for Chain {
    fn agents(&self) -> &[AgentId] {
        &self.agents
    }
    fn labels(&self, _agent: usize) -> &LabelMap {
        &self.labels
    }
    fn discount(&self) -> f64 {
        self.gamma
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn reset(&mut self, seed: u64) -> usize {
        self.state = (seed as usize) % (self.len - 1);
        self.turns = 0;
        self.state
    }
    fn current_agent(&self) -> usize {
        0
    }
    fn observe(&self) -> usize {
        self.state
    }
    fn step(&mut self, action: usize) -> Result<Transition, EnvError> {
        if action > 1 {
            return Err(EnvError::InvalidAction(action));
        }
        let goal = self.len - 1;
        self.state = if action == 0 { self.state.saturating_sub(1) } else { (self.state + 1).min(goal) };
        self.turns += 1;
        let done = self.state == goal;
        Ok(Transition {
            reward: if done { 1.0 } else { 0.0 },
            done,
            truncated: !done && self.turns >= self.horizon,
            next_obs: self.state,
        })
    }
    fn success(&self) -> bool {
        self.state == self.len - 1
    }
    fn return_floor(&self) -> f64 {
        0.0
    }
    fn idle_action(&self, _agent: usize) -> usize {
        0
    }
}

/// One-shot bandit with fixed arm payoffs.
#[derive(Debug, Clone)]
pub struct Bandit {
    agents: Vec<AgentId>,
    labels: LabelMap,
    payoffs: Vec<f64>,
    pulled: bool,
}

impl Bandit {
    pub fn new(payoffs: &[f64]) -> Self {
        let arms: Vec<String> = (0..payoffs.len()).map(|i| format!("arm{i}")).collect();
        let arms: Vec<&str> = arms.iter().map(String::as_str).collect();
        Bandit {
            agents: vec![AgentId::new("player").unwrap()],
            labels: LabelMap::from_strs(&["idle"], &arms).unwrap(),
            payoffs: payoffs.to_vec(),
            pulled: false,
        }
    }
}

impl DecPomdp for Bandit {
    fn agents(&self) -> &[AgentId] {
        &self.agents
    }
    fn labels(&self, _agent: usize) -> &LabelMap {
        &self.labels
    }
    fn discount(&self) -> f64 {
        0.9
    }
    fn horizon(&self) -> usize {
        1
    }
    fn reset(&mut self, _seed: u64) -> usize {
        self.pulled = false;
        0
    }
    fn current_agent(&self) -> usize {
        0
    }
    fn observe(&self) -> usize {
        0
    }
    fn step(&mut self, action: usize) -> Result<Transition, EnvError> {
        let r = *self.payoffs.get(action).ok_or(EnvError::InvalidAction(action))?;
        self.pulled = true;
        Ok(Transition { reward: r, done: true, truncated: false, next_obs: 0 })
    }
    fn success(&self) -> bool {
        self.pulled
    }
    fn return_floor(&self) -> f64 {
        self.payoffs.iter().cloned().fold(f64::INFINITY, f64::min)
    }
    fn idle_action(&self, _agent: usize) -> usize {
        0
    }
}
