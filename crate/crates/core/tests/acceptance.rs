//! Exit criteria. Each test prints one `PASS`/`FAIL` line to stdout
//! (uncaptured) and then asserts.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use orgmarl::env::{DecPomdp, EnvConfig, OrgWrapper, PredatorPrey, PredatorPreyConfig, Warehouse, WarehouseConfig};
use orgmarl::experiment::{self, RunConfig};
use orgmarl::guides::{GoalRewardGuide, GuideBank, OrgDocument, RagRule, RcgDecl, RoleActionGuide, RrgDecl};
use orgmarl::marl::TrainConfig;
use orgmarl::metrics;
use orgmarl::org_model::{DeonticKind, DeonticRelation, Goal, Mission, MissionGoal, OrgSpec, Role};
use orgmarl::presets;
use orgmarl::temm::{infer_roles, run_temm, select_k, TemmEpisode, TemmError, TemmParams};
use orgmarl::trajectory::{
    group_episodes, is_subsequence, lcs_len, parse_pattern, AgentId, History, Label, LabelPat, LogRecord, Step,
};

use common::{brute_lcs_len, brute_matches, language, patterns, Chain, Code};

fn verdict(name: &str, ok: bool, detail: &str) {
    let line = format!("\n{} {name}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(ok, "{name}: {detail}");
}

const SEEDS: u64 = 5;
const TRAIN_EPISODES: usize = 5000;
const FIT_GAP: f64 = 0.15;

/// Outcome of one trained run of the comparison protocol.
#[derive(Debug, Clone)]
struct RunSummary {
    convergence: f64,
    cumulative_reward: f64,
    /// `None` when no evaluation episode succeeded.
    org_fit: Option<f64>,
}

/// Every mode and seed of the comparison protocol.
struct Protocol {
    pp: BTreeMap<&'static str, Vec<RunSummary>>,
    wh: BTreeMap<&'static str, Vec<RunSummary>>,
    pp_elapsed: Duration,
}

fn run_mode(env: EnvConfig, doc: &OrgDocument, mode: &str, seed: u64) -> RunSummary {
    let train = TrainConfig { episodes: TRAIN_EPISODES, seed, ..TrainConfig::default() };
    let mut cfg = RunConfig::new(env, train, Some(doc.clone()));
    match mode {
        "rb" => cfg.no_org = true,
        "ch0" => cfg.hardness = Some(0.0),
        "ch05" => cfg.hardness = Some(0.5),
        "ob" => cfg.hardness = Some(1.0),
        "agr" => cfg.agr = true,
        _ => unreachable!(),
    }
    let org = experiment::Organization::from_config(&cfg).unwrap();
    let (policy, curve) = experiment::train_run(&cfg, &org).unwrap();
    let log = experiment::eval_run(&cfg, &org, &policy, cfg.eval.episodes, cfg.eval_seed()).unwrap();
    let org_fit = match experiment::temm_on_log(&log, &cfg.temm) {
        Ok(report) => Some(report.org_fit),
        Err(experiment::ExperimentError::Temm(TemmError::InsufficientData)) => None,
        Err(e) => panic!("trajectory analysis failed: {e}"),
    };
    RunSummary {
        convergence: metrics::convergence_rate(&curve.shaped),
        cumulative_reward: log.mean_raw_return(),
        org_fit,
    }
}

fn protocol() -> &'static Protocol {
    static CELL: OnceLock<Protocol> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let pp_env = EnvConfig::PredatorPrey(PredatorPreyConfig::default());
        let pp_doc = presets::predator_prey(3);
        let mut pp = BTreeMap::new();
        for mode in ["rb", "ch0", "ch05", "ob", "agr"] {
            pp.insert(mode, (0..SEEDS).map(|s| run_mode(pp_env.clone(), &pp_doc, mode, s)).collect());
        }
        let pp_elapsed = start.elapsed();
        let wh_env = EnvConfig::Warehouse(WarehouseConfig::default());
        let wh_doc = presets::warehouse(2);
        let mut wh = BTreeMap::new();
        for mode in ["rb", "ob"] {
            wh.insert(mode, (0..SEEDS).map(|s| run_mode(wh_env.clone(), &wh_doc, mode, s)).collect());
        }
        Protocol { pp, wh, pp_elapsed }
    })
}

/// Fit of a run; a run without any successful episode fits nothing.
fn fit(r: &RunSummary) -> f64 {
    r.org_fit.unwrap_or(0.0)
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt_series(v: &[RunSummary], f: impl Fn(&RunSummary) -> f64) -> String {
    v.iter().map(|m| format!("{:.3}", f(m))).collect::<Vec<_>>().join(",")
}

#[test]
fn matcher_agrees_with_grammar_expansion() {
    let start = Instant::now();
    let pats = patterns(0x7061_7474, 60);
    let max_len = 6;
    let mut disagreements = 0usize;
    let mut histories = 0usize;
    let mut buf: Vec<Step> = Vec::with_capacity(max_len);
    for p in &pats {
        assert_eq!(parse_pattern(&p.to_string()).unwrap(), *p);
        let lang = language(p, max_len);
        // results for the previous length, indexed most-significant-step first
        let mut prev: Vec<bool> = vec![brute_matches(&lang, &[])];
        if p.matches_steps(&[]) != prev[0] {
            disagreements += 1;
        }
        let mut codes: Vec<Code> = Vec::with_capacity(max_len);
        for len in 1..=max_len {
            let count = 9usize.pow(len as u32);
            let mut cur = Vec::with_capacity(count);
            for idx in 0..count {
                codes.clear();
                let mut x = idx;
                for _ in 0..len {
                    codes.push((x % 9) as Code);
                    x /= 9;
                }
                codes.reverse();
                // substrings of h are those of its prefix plus its suffixes
                let expected = prev[idx / 9] || (0..=len).any(|i| lang.contains(&codes[i..]));
                buf.clear();
                buf.extend(codes.iter().map(|&c| common::step_of(c)));
                if p.matches_steps(&buf) != expected {
                    disagreements += 1;
                }
                cur.push(expected);
            }
            histories += count;
            prev = cur;
        }
    }
    let elapsed = start.elapsed();
    let ok = disagreements == 0 && elapsed < Duration::from_secs(60);
    verdict(
        "trajectory pattern matcher vs brute force",
        ok,
        &format!(
            "{} patterns x {} histories (len<=6, 3 labels), {disagreements} disagreements, {:.1}s (limit 60s)",
            pats.len(),
            histories / pats.len() + 1,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn hard_masks_give_zero_violations() {
    let start = Instant::now();
    let env = EnvConfig::PredatorPrey(PredatorPreyConfig::default());
    let train = TrainConfig { episodes: TRAIN_EPISODES, seed: 0, ..TrainConfig::default() };
    let mut cfg = RunConfig::new(env, train, Some(presets::predator_prey(3)));
    cfg.hardness = Some(1.0);
    let org = experiment::Organization::from_config(&cfg).unwrap();
    let (policy, _) = experiment::train_run(&cfg, &org).unwrap();
    let log = experiment::eval_run(&cfg, &org, &policy, 100, 0).unwrap();
    let rate = metrics::violation_rate(&log.records, &org.declared).unwrap();
    let constrained: usize = log.episodes.iter().map(|e| e.constrained).sum();
    let elapsed = start.elapsed();
    let ok = rate == 0.0 && constrained > 0 && elapsed < Duration::from_secs(120);
    verdict(
        "mask soundness (predator-prey, ch=1, 100 episodes)",
        ok,
        &format!("violation_rate={rate} over {constrained} constrained turns, {:.1}s (limit 120s)", elapsed.as_secs_f64()),
    );
}

fn label(s: &str) -> Label {
    Label::new(s).unwrap()
}

/// One-agent chain with a soft "always right" role and a single weighted
/// goal on the first rightward move.
fn reward_fixture(hardness: f64, priority: f64, weight: f64, bonus: f64, penalty: f64) -> OrgWrapper<Chain> {
    let mut spec = OrgSpec::default();
    spec.roles.push(Role::new("walker"));
    spec.goals.push(Goal { name: "moved".into() });
    spec.missions.push(Mission {
        name: "advance".into(),
        goals: vec![MissionGoal { goal: "moved".into(), weight }],
        agent_cardinality: Default::default(),
    });
    let mut rel = DeonticRelation::new("walker", "advance", DeonticKind::Obligation);
    rel.priority = Some(priority);
    spec.deontic.push(rel);
    let mut bank = GuideBank::default();
    bank.rag.insert(
        "rightward".into(),
        RoleActionGuide::new(vec![RagRule {
            pattern: None,
            observation: LabelPat::Any,
            actions: [label("right")].into_iter().collect(),
            hardness,
        }]),
    );
    bank.rrg.insert("rightward_penalty".into(), RrgDecl { penalty, rag: "rightward".into() });
    bank.grg.insert(
        "moved".into(),
        GoalRewardGuide { pattern: parse_pattern("[s0,right]<1,1>").unwrap(), bonus, once_per_episode: true },
    );
    bank.ar.insert(AgentId::new("walker").unwrap(), "walker".into());
    bank.rcg.insert("walker".into(), RcgDecl { rag: Some("rightward".into()), rrg: Some("rightward_penalty".into()) });
    bank.gcg.insert("moved".into(), "moved".into());
    let doc = OrgDocument { spec, guides: bank };
    assert!(doc.spec.validate().is_empty());
    let linkers = doc.bind().unwrap();
    OrgWrapper::new(Chain::new(4, 10, 0.9), Arc::new(doc.spec), Arc::new(linkers)).unwrap()
}

#[test]
fn shaped_rewards_match_hand_computation() {
    // left (soft violation), right (goal reached), right, right (terminal)
    let mut w = reward_fixture(0.0, 0.5, 1.0, 5.0, -1.0);
    w.reset(0);
    let actions = [0usize, 1, 1, 1];
    let bonus = 5.0 * 1.0 / (1.0 - 0.5 + 1e-6);
    let expected = [(0.0, -1.0, 0.0), (0.0, 0.0, bonus), (0.0, 0.0, 0.0), (1.0, 0.0, 0.0)];
    let mut worst: f64 = 0.0;
    let mut got = Vec::new();
    for (a, (raw, pen, bon)) in actions.iter().zip(expected) {
        let out = w.step(0, *a).unwrap();
        worst = worst
            .max((out.info.raw_reward - raw).abs())
            .max((out.info.penalty - pen).abs())
            .max((out.info.bonus - bon).abs())
            .max((out.reward - (raw + pen + bon)).abs());
        got.push(out.reward);
    }
    let done = w.is_over();
    let ok = worst <= 1e-9 && done && (bonus - 9.99998).abs() < 1e-5;
    verdict(
        "reward decomposition (bonus p=0.5 w=1 r_b=5, soft penalty ch=0 r_m=-1)",
        ok,
        &format!("rewards {got:?}, bonus {bonus:.8}, max abs error {worst:e} (tol 1e-9)"),
    );
}

#[test]
fn organization_raises_fit_over_baseline() {
    let p = protocol();
    let rb = mean(p.pp["rb"].iter().map(fit));
    let ob = mean(p.pp["ob"].iter().map(fit));
    let gap = ob - rb;
    let ok = gap >= FIT_GAP && p.pp_elapsed < Duration::from_secs(15 * 60);
    verdict(
        "RB vs OB fit gap (predator-prey 7x7, IQL, 5000 episodes, 5 seeds)",
        ok,
        &format!(
            "mean fit OB {ob:.4} [{}] - RB {rb:.4} [{}] = {gap:.4} (need >= {FIT_GAP}), protocol {:.1}s",
            fmt_series(&p.pp["ob"], fit),
            fmt_series(&p.pp["rb"], fit),
            p.pp_elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn fit_is_monotone_in_hardness() {
    let p = protocol();
    let f: Vec<f64> = ["ch0", "ch05", "ob"].iter().map(|k| mean(p.pp[k].iter().map(fit))).collect();
    let ok = f[0] <= f[1] && f[1] <= f[2];
    verdict(
        "fit non-decreasing over ch in {0, 0.5, 1}",
        ok,
        &format!("mean fit {:.4} <= {:.4} <= {:.4} over {SEEDS} seeds", f[0], f[1], f[2]),
    );
}

#[test]
fn organization_converges_faster() {
    let p = protocol();
    let wins = |runs: &BTreeMap<&str, Vec<RunSummary>>| {
        runs["ob"].iter().zip(&runs["rb"]).filter(|(o, r)| o.convergence >= r.convergence).count()
    };
    let (pp, wh) = (wins(&p.pp), wins(&p.wh));
    let majority = SEEDS as usize / 2 + 1;
    let ok = pp >= majority && wh >= majority;
    verdict(
        "convergence OB >= RB on both environments (majority of 5 seeds)",
        ok,
        &format!(
            "predator-prey {pp}/{SEEDS} (OB [{}] RB [{}]), warehouse {wh}/{SEEDS} (OB [{}] RB [{}])",
            fmt_series(&p.pp["ob"], |m| m.convergence),
            fmt_series(&p.pp["rb"], |m| m.convergence),
            fmt_series(&p.wh["ob"], |m| m.convergence),
            fmt_series(&p.wh["rb"], |m| m.convergence),
        ),
    );
}

#[test]
fn goal_ablation_does_not_outperform_full_organization() {
    let p = protocol();
    let fit = |k: &str| mean(p.pp[k].iter().map(fit));
    let ret = |k: &str| mean(p.pp[k].iter().map(|m| m.cumulative_reward));
    let ok = fit("agr") <= fit("ob") && ret("agr") <= ret("ob");
    verdict(
        "roles-only ablation <= full organization (predator-prey, 5 seeds)",
        ok,
        &format!(
            "fit {:.4} vs {:.4}, cumulative reward {:.4} vs {:.4}",
            fit("agr"),
            fit("ob"),
            ret("agr"),
            ret("ob")
        ),
    );
}

/// Scripted two-role team: a scout marks an area while a carrier delivers an
/// item; both start with a few random wandering turns.
fn scripted_team() -> (OrgDocument, Vec<LogRecord>, Vec<TemmEpisode>, [Vec<Step>; 2]) {
    let scout_script: Vec<Step> =
        [("area_far", "walk"), ("area_near", "walk"), ("area_here", "mark"), ("marked", "wait")]
            .iter()
            .map(|(o, a)| Step::of(o, a))
            .collect();
    let carrier_script: Vec<Step> =
        [("item_far", "walk"), ("item_here", "lift"), ("dest_far", "carry"), ("dest_here", "drop")]
            .iter()
            .map(|(o, a)| Step::of(o, a))
            .collect();

    let mut spec = OrgSpec::default();
    spec.roles.push(Role::new("scout"));
    spec.roles.push(Role::new("carrier"));
    for g in ["area_marked", "item_delivered"] {
        spec.goals.push(Goal { name: g.into() });
    }
    spec.missions.push(Mission {
        name: "mark".into(),
        goals: vec![MissionGoal { goal: "area_marked".into(), weight: 1.0 }],
        agent_cardinality: Default::default(),
    });
    spec.missions.push(Mission {
        name: "deliver".into(),
        goals: vec![MissionGoal { goal: "item_delivered".into(), weight: 1.0 }],
        agent_cardinality: Default::default(),
    });
    spec.deontic.push(DeonticRelation::new("scout", "mark", DeonticKind::Obligation));
    spec.deontic.push(DeonticRelation::new("carrier", "deliver", DeonticKind::Obligation));
    let mut bank = GuideBank::default();
    for (role, script) in [("scout", &scout_script), ("carrier", &carrier_script)] {
        let rules = script
            .iter()
            .map(|s| RagRule {
                pattern: None,
                observation: LabelPat::Exact(s.obs.clone()),
                actions: [s.act.clone()].into_iter().collect(),
                hardness: 1.0,
            })
            .collect();
        bank.rag.insert(role.into(), RoleActionGuide::new(rules));
        bank.rcg.insert(role.into(), RcgDecl { rag: Some(role.into()), rrg: None });
    }
    for (goal, text) in [("area_marked", "[area_here,mark]<1,1>"), ("item_delivered", "[dest_here,drop]<1,1>")] {
        bank.grg.insert(goal.into(), GoalRewardGuide { pattern: parse_pattern(text).unwrap(), bonus: 1.0, once_per_episode: true });
        bank.gcg.insert(goal.into(), goal.into());
    }
    bank.ar.insert(AgentId::new("agent_0").unwrap(), "scout".into());
    bank.ar.insert(AgentId::new("agent_1").unwrap(), "carrier".into());
    let doc = OrgDocument { spec, guides: bank };

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut records = Vec::new();
    for episode in 0..40u64 {
        let wander = rng.gen_range(0..=2);
        for (agent, script) in [("agent_0", &scout_script), ("agent_1", &carrier_script)] {
            let mut steps: Vec<Step> = (0..wander).map(|_| Step::of(&format!("lost_{}", rng.gen_range(0..4)), "wait")).collect();
            steps.extend(script.iter().cloned());
            for (step, s) in steps.into_iter().enumerate() {
                records.push(LogRecord {
                    episode,
                    agent: AgentId::new(agent).unwrap(),
                    step,
                    obs: s.obs,
                    act: s.act,
                });
            }
        }
    }
    let episodes = group_episodes(&records)
        .unwrap()
        .into_iter()
        .map(|(id, joint)| TemmEpisode { id, joint, success: true })
        .collect();
    (doc, records, episodes, [scout_script, carrier_script])
}

#[test]
fn temm_recovers_a_scripted_organization() {
    let start = Instant::now();
    let (doc, records, episodes, scripts) = scripted_team();
    let report = run_temm(&episodes, &TemmParams::default()).unwrap();
    let linkers = doc.bind().unwrap();
    let consistency = metrics::consistency_score(&records, &doc.spec, &doc.guides, &linkers).unwrap();

    // declared role of each inferred role, by the script its CLS contains
    let declared = ["scout", "carrier"];
    let role_of: BTreeMap<&str, &str> = report
        .roles
        .iter()
        .filter_map(|r| {
            scripts
                .iter()
                .position(|s| is_subsequence(s, r.cls.steps()))
                .map(|k| (r.id.as_str(), declared[k]))
        })
        .collect();
    let two_roles = report.roles.len() == 2 && role_of.len() == 2 && role_of.values().collect::<BTreeSet<_>>().len() == 2;

    let terminal: Vec<Option<Label>> = vec![Some(label("marked")), Some(label("dest_here"))];
    let goals_ok = report.goals.iter().any(|g| g.joint_observations == vec![terminal.clone()]);

    let declared_kinds: BTreeMap<&str, DeonticKind> =
        doc.spec.deontic.iter().map(|d| (d.role.as_str(), d.kind)).collect();
    let inferred_kinds: BTreeMap<&str, DeonticKind> =
        report.deontics.iter().filter_map(|d| role_of.get(d.role.as_str()).map(|r| (*r, d.kind))).collect();
    let kinds_ok = inferred_kinds == declared_kinds;

    let elapsed = start.elapsed();
    let ok = two_roles && goals_ok && consistency >= 0.9 && kinds_ok && elapsed < Duration::from_secs(120);
    verdict(
        "trajectory analysis recovers a scripted 2-role/2-mission organization",
        ok,
        &format!(
            "roles {} (mapped {role_of:?}), terminal goal recovered {goals_ok}, consistency {consistency:.3} (need >= 0.9), deontics {inferred_kinds:?} vs {declared_kinds:?}, {:.2}s",
            report.roles.len(),
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn analysis_components_match_oracles() {
    // LCS against subsequence enumeration
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut lcs_bad = 0;
    let pairs = 400;
    for _ in 0..pairs {
        let a: Vec<u8> = (0..rng.gen_range(0..=12)).map(|_| rng.gen_range(0..3)).collect();
        let b: Vec<u8> = (0..rng.gen_range(0..=12)).map(|_| rng.gen_range(0..3)).collect();
        if lcs_len(&a, &b) != brute_lcs_len(&a, &b) {
            lcs_bad += 1;
        }
    }

    // planted partition: three tight blobs far apart
    let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
    let mut points = Vec::new();
    let mut planted = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..12 {
            points.push(vec![center[0] + rng.gen_range(-0.5..0.5), center[1] + rng.gen_range(-0.5..0.5)]);
            planted.push(c);
        }
    }
    let (km, _) = select_k(&points, 2..=8, 0);
    let same_partition = (0..points.len())
        .all(|i| (0..points.len()).all(|j| (planted[i] == planted[j]) == (km.assignment[i] == km.assignment[j])));
    let kmeans_ok = km.k == 3 && same_partition;

    // population B runs a prefix of population A's script
    let script: Vec<(String, String)> = (0..6).map(|i| (format!("o{i}"), format!("a{i}"))).collect();
    let member = |len: usize, tag: usize| {
        let mut steps: Vec<Step> = script[..len].iter().map(|(o, a)| Step::of(o, a)).collect();
        steps.push(Step::of(&format!("tail{tag}"), "stop"));
        History::from_steps(steps)
    };
    let mut members = Vec::new();
    for k in 0..5usize {
        members.push(((k as u64, AgentId::new("a").unwrap()), member(6, k)));
        members.push(((k as u64, AgentId::new("b").unwrap()), member(2, 10 + k)));
    }
    let (roles, dendrogram) = infer_roles(&members, 0.5).unwrap();
    let full: Vec<Step> = script.iter().map(|(o, a)| Step::of(o, a)).collect();
    let role_a = roles.iter().find(|r| r.cls.steps() == &full[..]);
    let role_b = roles.iter().find(|r| r.cls.steps() == &full[..2]);
    let inheritance_ok = match (role_a, role_b) {
        (Some(a), Some(b)) => roles.len() == 2 && b.parents == vec![a.id.clone()] && a.parents.is_empty(),
        _ => false,
    };
    // between-population pairs share exactly the 2-step prefix out of 7 steps
    let last = dendrogram.merges.last().map_or(f64::NAN, |m| m.distance);
    let merges_ok = dendrogram.merges.len() == members.len() - 1 && (last - 5.0 / 7.0).abs() < 1e-12;

    let ok = lcs_bad == 0 && kmeans_ok && inheritance_ok && merges_ok;
    verdict(
        "analysis component oracles (LCS, k-means planted k, prefix inheritance)",
        ok,
        &format!(
            "LCS {lcs_bad}/{pairs} mismatches (len<=12); k-means k={} planted=3 exact={same_partition}; inheritance exact={inheritance_ok}, final merge at 5/7={merges_ok}",
            km.k
        ),
    );
}

fn replay<E: DecPomdp + Clone>(env: &mut E, wrapped: &mut OrgWrapper<E>, seed: u64, rng: &mut ChaCha8Rng) -> Option<String> {
    let o1 = env.reset(seed);
    let o2 = wrapped.reset(seed);
    if o1 != o2 {
        return Some(format!("reset seed {seed}: obs {o1} vs {o2}"));
    }
    loop {
        let agent = env.current_agent();
        if agent != wrapped.current_agent() {
            return Some("turn order differs".into());
        }
        let n = env.labels(agent).act_labels().len();
        let a = rng.gen_range(0..n);
        let t = env.step(a).unwrap();
        let w = wrapped.step(agent, a).unwrap();
        if t.reward.to_bits() != w.reward.to_bits()
            || t.next_obs != w.obs_index
            || t.done != w.done
            || t.truncated != w.info.truncated
        {
            return Some(format!("seed {seed}: {t:?} vs {w:?}"));
        }
        if t.finished() {
            return None;
        }
    }
}

#[test]
fn empty_organization_is_transparent() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let empty = || (Arc::new(OrgSpec::default()), Arc::new(orgmarl::guides::Linkers::empty()));
    let mut failures = Vec::new();
    let episodes = 50;
    let mut pp = PredatorPrey::new(PredatorPreyConfig::default()).unwrap();
    let (s, l) = empty();
    let mut pp_w = OrgWrapper::new(pp.clone(), s, l).unwrap();
    let mut wh = Warehouse::new(WarehouseConfig::default()).unwrap();
    let (s, l) = empty();
    let mut wh_w = OrgWrapper::new(wh.clone(), s, l).unwrap();
    for seed in 0..episodes {
        failures.extend(replay(&mut pp, &mut pp_w, seed, &mut rng));
        failures.extend(replay(&mut wh, &mut wh_w, seed, &mut rng));
    }
    verdict(
        "empty organization leaves the environment bit-identical",
        failures.is_empty(),
        &format!("{} seeded full episodes per environment, {} mismatches {:?}", episodes, failures.len(), failures.first()),
    );
}
