use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::os::unix::net::UnixStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread::sleep;
use std::time::Duration;

use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn orgmarl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orgmarl")).args(args).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn small_config() -> String {
    root().join("configs/predator_prey_small.json").display().to_string()
}

fn digest(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

fn digests(dir: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), digest(&p)));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn shipped_specs_validate() {
    for name in ["predator_prey.json", "warehouse.json"] {
        let out = orgmarl(&["validate", root().join("specs").join(name).to_str().unwrap()]);
        assert!(ok(&out).starts_with("ok:"));
    }
}

#[test]
fn invalid_document_is_reported() {
    let tmp = TempDir::new().unwrap();
    let text = fs::read_to_string(root().join("specs/predator_prey.json")).unwrap();
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["deontic"][0]["role"] = "ghost".into();
    let path = tmp.path().join("bad.json");
    fs::write(&path, doc.to_string()).unwrap();
    let out = orgmarl(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ghost"));
}

#[test]
fn runs_are_reproducible_and_match_golden_digests() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        ok(&orgmarl(&["run", "--config", &small_config(), "--seed", "0", "--out", dir.to_str().unwrap()]));
    }
    let (da, db) = (digests(&a), digests(&b));
    let strip = |v: &[(String, String)]| v.iter().filter(|(f, _)| f != "config.json").cloned().collect::<Vec<_>>();
    assert_eq!(strip(&da), strip(&db));
    let golden = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/pp_small_seed0.sha256")).unwrap();
    for line in golden.lines() {
        let (hash, file) = line.split_once("  ").unwrap();
        assert_eq!(digest(&a.join(file)), hash, "{file}");
    }
}

#[test]
fn report_ranks_the_organization_above_the_baseline() {
    let tmp = TempDir::new().unwrap();
    let rb = tmp.path().join("rb");
    let ob = tmp.path().join("ob");
    ok(&orgmarl(&["run", "--config", &small_config(), "--no-org", "--out", rb.to_str().unwrap()]));
    ok(&orgmarl(&["run", "--config", &small_config(), "--hardness", "1", "--out", ob.to_str().unwrap()]));
    let long = tmp.path().join("long.csv");
    let table = ok(&orgmarl(&["report", rb.to_str().unwrap(), ob.to_str().unwrap(), "--long", long.to_str().unwrap()]));
    let mut lines = table.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let fit = |mode: &str| -> f64 {
        rows.iter().find(|r| r[col("mode")] == mode).unwrap()[col("org_fit_level")].parse().unwrap()
    };
    assert!(fit("ob") > fit("rb"), "{table}");
    let long = fs::read_to_string(long).unwrap();
    assert!(long.starts_with("run,mode,seed,metric,value"));
}

#[test]
fn existing_artifacts_are_not_overwritten() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("run");
    let args = ["train", "--config", &small_config(), "--episodes", "20", "--out", dir.to_str().unwrap()];
    ok(&orgmarl(&args));
    let before = digest(&dir.join("policy.json"));
    let again = orgmarl(&args);
    assert_eq!(again.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&again.stderr).contains("error:"));
    assert_eq!(digest(&dir.join("policy.json")), before);
}

#[test]
fn temm_reads_a_trajectory_log() {
    let tmp = TempDir::new().unwrap();
    let run = tmp.path().join("run");
    ok(&orgmarl(&["train", "--config", &small_config(), "--episodes", "200", "--out", run.to_str().unwrap()]));
    ok(&orgmarl(&["eval", run.to_str().unwrap()]));
    let out = tmp.path().join("analysis");
    ok(&orgmarl(&["temm", run.join("eval/trajectories.log").to_str().unwrap(), "--out", out.to_str().unwrap()]));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let fit = report["org_fit"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&fit));
    assert!(fs::read_to_string(out.join("roles.dot")).unwrap().starts_with("digraph"));
}

#[test]
fn serve_answers_over_a_unix_socket() {
    let tmp = TempDir::new().unwrap();
    let sock = tmp.path().join("bridge.sock");
    let transcript = tmp.path().join("frames.txt");
    let mut child = Command::new(env!("CARGO_BIN_EXE_orgmarl"))
        .args([
            "serve",
            "--org",
            root().join("specs/warehouse.json").to_str().unwrap(),
            "--env-config",
            root().join("configs/warehouse.json").to_str().unwrap(),
            "--listen",
            &format!("unix:{}", sock.display()),
            "--transcript",
            transcript.to_str().unwrap(),
            "--once",
        ])
        .spawn()
        .unwrap();
    let mut stream = None;
    for _ in 0..100 {
        if let Ok(s) = UnixStream::connect(&sock) {
            stream = Some(s);
            break;
        }
        sleep(Duration::from_millis(50));
    }
    let stream = stream.expect("server listening");
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut send = |frame: &str| -> serde_json::Value {
        writeln!(&stream, "{frame}").unwrap();
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        serde_json::from_str(&line).unwrap()
    };
    let v2 = send(r#"{"proto":2,"type":"bye"}"#);
    assert_eq!(v2["code"], "unsupported_proto");
    let early = send(r#"{"proto":1,"type":"reset","seed":0}"#);
    assert_eq!(early["code"], "protocol");
    let bad = send(r#"{"proto":1,"type":"hello","agents":[{"id":"robot_0","observations":["x"],"actions":["y"]}]}"#);
    assert_eq!(bad["code"], "alphabet");
    let _ = child.wait();
    let frames = fs::read_to_string(&transcript).unwrap();
    assert_eq!(frames.lines().count(), 6);
    assert!(frames.lines().all(|l| l.starts_with("> ") || l.starts_with("< ")));
}
