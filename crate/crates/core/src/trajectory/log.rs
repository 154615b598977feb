//! Canonical trajectory log: one step per line,
//! `episode_id,agent_id,step,obs_label,act_label`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use thiserror::Error;

use super::{AgentId, History, JointHistory, Label, Step};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub episode: u64,
    pub agent: AgentId,
    pub step: usize,
    pub obs: Label,
    pub act: Label,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("episode {episode}, agent {agent}: expected step {expected}, found {found}")]
    StepGap {
        episode: u64,
        agent: String,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_log<W: Write>(mut w: W, records: &[LogRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(w, "{},{},{},{},{}", r.episode, r.agent, r.step, r.obs, r.act)?;
    }
    Ok(())
}

/// Reads a canonical log. Blank lines are skipped.
pub fn read_log<R: BufRead>(r: R) -> Result<Vec<LogRecord>, LogError> {
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        let bad = |message: String| LogError::Malformed { line: lineno, message };
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", fields.len())));
        }
        let episode = fields[0]
            .parse::<u64>()
            .map_err(|e| bad(format!("episode id: {e}")))?;
        let agent = AgentId::new(fields[1]).map_err(|e| bad(e.to_string()))?;
        let step = fields[2].parse::<usize>().map_err(|e| bad(format!("step: {e}")))?;
        let obs = Label::new(fields[3]).map_err(|e| bad(e.to_string()))?;
        let act = Label::new(fields[4]).map_err(|e| bad(e.to_string()))?;
        out.push(LogRecord { episode, agent, step, obs, act });
    }
    Ok(out)
}

/// Groups records into joint histories keyed by episode id. Steps of each
/// agent must be contiguous from 0 (records may be interleaved).
pub fn group_episodes(records: &[LogRecord]) -> Result<BTreeMap<u64, JointHistory>, LogError> {
    let mut episodes: BTreeMap<u64, BTreeMap<AgentId, Vec<(usize, Step)>>> = BTreeMap::new();
    for r in records {
        episodes
            .entry(r.episode)
            .or_default()
            .entry(r.agent.clone())
            .or_default()
            .push((r.step, Step::new(r.obs.clone(), r.act.clone())));
    }
    let mut out = BTreeMap::new();
    for (episode, agents) in episodes {
        let mut joint = JointHistory::new();
        for (agent, mut steps) in agents {
            steps.sort_by_key(|(s, _)| *s);
            for (expected, (found, _)) in steps.iter().enumerate() {
                if *found != expected {
                    return Err(LogError::StepGap {
                        episode,
                        agent: agent.to_string(),
                        expected,
                        found: *found,
                    });
                }
            }
            joint
                .per_agent
                .insert(agent, History::from_steps(steps.into_iter().map(|(_, s)| s).collect()));
        }
        out.insert(episode, joint);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_and_reads_back() {
        let recs = vec![
            LogRecord {
                episode: 3,
                agent: AgentId::new("a0").unwrap(),
                step: 0,
                obs: Label::new("o1").unwrap(),
                act: Label::new("up").unwrap(),
            },
            LogRecord {
                episode: 3,
                agent: AgentId::new("a0").unwrap(),
                step: 1,
                obs: Label::new("o2").unwrap(),
                act: Label::new("stay").unwrap(),
            },
        ];
        let mut buf = Vec::new();
        write_log(&mut buf, &recs).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "3,a0,0,o1,up\n3,a0,1,o2,stay\n");
        assert_eq!(read_log(&buf[..]).unwrap(), recs);
        let eps = group_episodes(&recs).unwrap();
        assert_eq!(eps[&3].len(), 2);
    }

    #[test]
    fn rejects_malformed_lines() {
        let err = read_log("1,a0,0,o1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, LogError::Malformed { line: 1, .. }));
        let err = read_log("x,a0,0,o1,a\n".as_bytes()).unwrap_err();
        assert!(matches!(err, LogError::Malformed { line: 1, .. }));
    }

    #[test]
    fn detects_step_gaps() {
        let recs = read_log("0,a0,0,o,a\n0,a0,2,o,a\n".as_bytes()).unwrap();
        assert!(matches!(group_episodes(&recs), Err(LogError::StepGap { expected: 1, found: 2, .. })));
    }
}
