use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use orgmarl::experiment::{self, Organization, RunConfig};
use orgmarl::guides::OrgDocument;
use orgmarl::marl::{EvalLog, JointPolicy, TrainingCurve, POLICY_FORMAT_VERSION};
use orgmarl::metrics::{MetricsReport, Robustness, METRICS_HEADER};
use orgmarl::presets;
use orgmarl::temm::{episodes_from_logs, run_temm, TemmParams, TemmReport, REPORT_FORMAT_VERSION};
use orgmarl::trajectory::{group_episodes, read_log, LogRecord};

use crate::RunFlags;

pub const CONFIG: &str = "config.json";
pub const MANIFEST: &str = "manifest.json";
pub const POLICY: &str = "policy.json";
pub const CURVE: &str = "curve.csv";
pub const TRAJECTORIES: &str = "eval/trajectories.log";
pub const EPISODES: &str = "eval/episodes.log";
pub const TEMM_DIR: &str = "temm";
pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSON: &str = "metrics.json";

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_new(path: &Path, bytes: &[u8]) -> Result<()> {
    if path.exists() {
        bail!("{} already exists; run artifacts are never overwritten", path.display());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("artifacts serialize");
    s.push('\n');
    s.into_bytes()
}

fn require(run: &Path, name: &str) -> Result<PathBuf> {
    let p = run.join(name);
    if !p.exists() {
        bail!("run {} is missing {name}", run.display());
    }
    Ok(p)
}

pub fn validate(path: &Path) -> Result<ExitCode> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc = OrgDocument::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    let diags = doc.spec.validate();
    for d in &diags {
        println!("{d}");
    }
    let bound = if diags.is_empty() { doc.bind().err() } else { None };
    if let Some(e) = &bound {
        println!("guides: {e}");
    }
    if diags.is_empty() && bound.is_none() {
        println!("ok: {} roles, {} missions, {} deontic relations", doc.spec.roles.len(), doc.spec.missions.len(), doc.spec.deontic.len());
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().context("seed range start")?;
        let b: u64 = b.trim().trim_start_matches('=').parse().context("seed range end")?;
        if b < a {
            bail!("empty seed range {text}");
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|s| s.trim().parse::<u64>().context("seed list")).collect()
}

/// Resolved configs and their run directories.
fn plan(flags: &RunFlags) -> Result<Vec<(RunConfig, PathBuf)>> {
    let mut cfg: RunConfig = read_json(&flags.config)?;
    let base = flags.config.parent().unwrap_or(Path::new("."));
    cfg.inline_org(base)?;
    cfg.no_org |= flags.no_org;
    cfg.agr |= flags.agr;
    if flags.hardness.is_some() {
        cfg.hardness = flags.hardness;
    }
    if let Some(e) = flags.episodes {
        cfg.train.episodes = e;
    }
    cfg.validate()?;
    match (&flags.seeds, flags.seed) {
        (Some(s), _) => Ok(parse_seeds(s)?
            .into_iter()
            .map(|seed| {
                let mut c = cfg.clone();
                c.train.seed = seed;
                c.eval.seed = None;
                (c, flags.out.join(format!("seed_{seed}")))
            })
            .collect()),
        (None, Some(seed)) => {
            cfg.train.seed = seed;
            cfg.eval.seed = None;
            Ok(vec![(cfg, flags.out.clone())])
        }
        (None, None) => Ok(vec![(cfg, flags.out.clone())]),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    tool: String,
    version: String,
    env: String,
    mode: String,
    seed: u64,
    policy_format: u32,
    report_format: u32,
}

pub fn train(flags: &RunFlags) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for (cfg, dir) in plan(flags)? {
        if dir.join(POLICY).exists() {
            bail!("{} already holds a trained run", dir.display());
        }
        let org = Organization::from_config(&cfg)?;
        let (policy, curve) = experiment::train_run(&cfg, &org)?;
        let manifest = Manifest {
            tool: "orgmarl".into(),
            version: orgmarl::VERSION.into(),
            env: cfg.env.name().into(),
            mode: cfg.mode().as_str().into(),
            seed: cfg.train.seed,
            policy_format: POLICY_FORMAT_VERSION,
            report_format: REPORT_FORMAT_VERSION,
        };
        write_new(&dir.join(CONFIG), &json_bytes(&cfg))?;
        write_new(&dir.join(MANIFEST), &json_bytes(&manifest))?;
        let mut p = policy.to_json();
        p.push('\n');
        write_new(&dir.join(POLICY), p.as_bytes())?;
        let mut c = Vec::new();
        curve.write_csv(&mut c)?;
        write_new(&dir.join(CURVE), &c)?;
        println!("{}", dir.display());
        dirs.push(dir);
    }
    Ok(dirs)
}

fn load_run(run: &Path) -> Result<(RunConfig, JointPolicy)> {
    let cfg: RunConfig = read_json(&require(run, CONFIG)?)?;
    let text = fs::read_to_string(require(run, POLICY)?)?;
    let policy = JointPolicy::from_json(&text).with_context(|| format!("parsing {}/{POLICY}", run.display()))?;
    Ok((cfg, policy))
}

pub fn eval(run: &Path, episodes: Option<usize>, seed: Option<u64>) -> Result<()> {
    let (cfg, policy) = load_run(run)?;
    let org = Organization::from_config(&cfg)?;
    let log = experiment::eval_run(&cfg, &org, &policy, episodes.unwrap_or(cfg.eval.episodes), seed.unwrap_or(cfg.eval_seed()))?;
    let mut t = Vec::new();
    log.write_trajectories(&mut t)?;
    write_new(&run.join(TRAJECTORIES), &t)?;
    let mut e = Vec::new();
    log.write_episodes(&mut e)?;
    write_new(&run.join(EPISODES), &e)?;
    println!(
        "{}: {} episodes, mean return {:.4}, success {:.3}",
        run.display(),
        log.episodes.len(),
        log.mean_raw_return(),
        log.success_rate()
    );
    Ok(())
}

fn load_eval(run: &Path) -> Result<EvalLog> {
    let records = read_log(BufReader::new(fs::File::open(require(run, TRAJECTORIES)?)?))?;
    let episodes = EvalLog::read_episodes(BufReader::new(fs::File::open(require(run, EPISODES)?)?))?;
    Ok(EvalLog { records, episodes })
}

#[derive(Args, Debug)]
pub struct TemmArgs {
    /// Trajectory logs or run directories.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output directory (default: `temm/` next to the first input's logs).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub tau_r: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub tau_g: Option<f64>,
    #[arg(long)]
    pub goals_per_cluster: Option<usize>,
    #[arg(long)]
    pub quorum: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Score the fit on the same episodes the organization is inferred from.
    #[arg(long)]
    pub no_holdout: bool,
}

impl TemmArgs {
    fn apply(&self, mut p: TemmParams) -> TemmParams {
        if let Some(v) = self.tau_r {
            p.tau_r = v;
        }
        if self.k.is_some() {
            p.k = self.k;
        }
        if let Some(v) = self.k_max {
            p.k_max = v;
        }
        if let Some(v) = self.tau_g {
            p.tau_g = v;
        }
        if let Some(v) = self.goals_per_cluster {
            p.goals_per_cluster = v;
        }
        if let Some(v) = self.quorum {
            p.quorum = v;
        }
        if let Some(v) = self.seed {
            p.seed = v;
        }
        if self.no_holdout {
            p.holdout = false;
        }
        p
    }
}

/// Records plus success flags of one input; logs without an episodes file
/// next to them count every episode as successful.
fn load_input(path: &Path) -> Result<(Vec<LogRecord>, std::collections::BTreeMap<u64, bool>, Option<TemmParams>, PathBuf)> {
    if path.is_dir() {
        let log = load_eval(path)?;
        let params = read_json::<RunConfig>(&path.join(CONFIG)).ok().map(|c| c.temm);
        let success = log.episodes.iter().map(|e| (e.episode, e.success)).collect();
        return Ok((log.records, success, params, path.join(TEMM_DIR)));
    }
    let records = read_log(BufReader::new(fs::File::open(path).with_context(|| format!("opening {}", path.display()))?))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let episodes = dir.join("episodes.log");
    let success = if episodes.exists() {
        EvalLog::read_episodes(BufReader::new(fs::File::open(&episodes)?))?
            .into_iter()
            .map(|e| (e.episode, e.success))
            .collect()
    } else {
        eprintln!("note: no episodes.log next to {}; treating every episode as successful", path.display());
        records.iter().map(|r| (r.episode, true)).collect()
    };
    Ok((records, success, None, dir.join(TEMM_DIR)))
}

pub fn temm(args: &TemmArgs) -> Result<PathBuf> {
    let mut all = Vec::new();
    let mut next_id = 0u64;
    let mut base_params = None;
    let mut default_out = None;
    for input in &args.inputs {
        let (records, success, params, out) = load_input(input)?;
        base_params = base_params.or(params);
        default_out.get_or_insert(out);
        // renumber so episodes from different inputs never collide
        for (id, joint) in group_episodes(&records)? {
            let ok = success.get(&id).copied().unwrap_or(false);
            all.push((next_id, joint, ok));
            next_id += 1;
        }
    }
    let params = args.apply(base_params.unwrap_or_default());
    let grouped = all.iter().map(|(id, j, _)| (*id, j.clone())).collect();
    let success = all.iter().map(|(id, _, ok)| (*id, *ok)).collect();
    let report = run_temm(&episodes_from_logs(grouped, &success), &params)?;
    let out = args.out.clone().or(default_out).expect("at least one input");
    write_temm(&out, &report)?;
    println!(
        "{}: {} roles, {} goals, org fit {:.4} (structural {:.4}, functional {:.4})",
        out.display(),
        report.roles.len(),
        report.goals.len(),
        report.org_fit,
        report.structural_fit,
        report.functional_fit
    );
    Ok(out)
}

fn write_temm(out: &Path, report: &TemmReport) -> Result<()> {
    write_new(&out.join("report.json"), &json_bytes(report))?;
    write_new(&out.join("roles.dot"), report.roles_dot().as_bytes())?;
    write_new(&out.join("transitions.dot"), report.transitions_dot().as_bytes())?;
    write_new(&out.join("inferred_spec.json"), &json_bytes(&report.to_org_spec()))?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct MetricsFile {
    metrics: MetricsReport,
    robustness: Robustness,
}

/// Metrics of one run, computed once and then read back.
fn run_metrics(run: &Path) -> Result<(RunConfig, MetricsReport)> {
    let (cfg, policy) = load_run(run)?;
    let stored = run.join(METRICS_JSON);
    if stored.exists() {
        let m: MetricsFile = read_json(&stored)?;
        return Ok((cfg, m.metrics));
    }
    let curve = TrainingCurve::read_csv(BufReader::new(fs::File::open(require(run, CURVE)?)?))?;
    let log = load_eval(run)?;
    let report: TemmReport = read_json(&require(run, &format!("{TEMM_DIR}/report.json"))?)?;
    let org = Organization::from_config(&cfg)?;
    let robustness = experiment::robustness_run(&cfg, &org, &policy)?;
    let metrics = experiment::metrics_run(&org, &curve, &log, &report, &robustness)?;
    let mut csv = Vec::new();
    metrics.write_csv(&mut csv)?;
    write_new(&run.join(METRICS_CSV), &csv)?;
    write_new(&stored, &json_bytes(&MetricsFile { metrics: metrics.clone(), robustness }))?;
    Ok((cfg, metrics))
}

pub fn report(runs: &[PathBuf], out: Option<&Path>, long: Option<&Path>) -> Result<()> {
    if runs.is_empty() {
        bail!("no run directories given");
    }
    let mut table = format!("run,env,mode,seed,hardness,{METRICS_HEADER}\n");
    let mut long_rows = String::from("run,mode,seed,metric,value\n");
    for run in runs {
        let (cfg, m) = run_metrics(run)?;
        let name = run.display().to_string();
        let mode = cfg.mode().as_str();
        let hardness = cfg.hardness.map(|h| h.to_string()).unwrap_or_default();
        table.push_str(&format!("{name},{},{mode},{},{hardness},{}\n", cfg.env.name(), cfg.train.seed, m.csv_row()));
        let values = [
            ("cumulative_reward", m.cumulative_reward),
            ("reward_std", m.reward_std),
            ("convergence_rate", m.convergence_rate),
            ("violation_rate", m.violation_rate),
            ("consistency_score", m.consistency_score),
            ("robustness_score", m.robustness_score),
            ("org_fit_level", m.org_fit_level),
        ];
        for (k, v) in values {
            long_rows.push_str(&format!("{name},{mode},{},{k},{v}\n", cfg.train.seed));
        }
    }
    match out {
        Some(p) => fs::write(p, &table).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().write_all(table.as_bytes())?,
    }
    if let Some(p) = long {
        fs::write(p, &long_rows).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

pub fn run_all(flags: &RunFlags) -> Result<()> {
    let dirs = train(flags)?;
    for dir in &dirs {
        eval(dir, None, None)?;
        let (cfg, _) = load_run(dir)?;
        let log = load_eval(dir)?;
        let report = experiment::temm_on_log(&log, &cfg.temm)?;
        write_temm(&dir.join(TEMM_DIR), &report)?;
    }
    report(&dirs, None, None)
}

pub fn preset(name: &str, agents: Option<usize>) -> Result<()> {
    let doc = match name {
        "predator-prey" => presets::predator_prey(agents.unwrap_or(3)),
        "warehouse" => presets::warehouse(agents.unwrap_or(2)),
        other => bail!("unknown preset {other}"),
    };
    println!("{}", doc.to_json());
    Ok(())
}
