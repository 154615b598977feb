//! Engine side of the wire protocol that lets an external environment be
//! wrapped by the organizational layer.
//!
//! Frames are single-line JSON objects carrying `"proto": 1` and a `"type"`.
//! The engine owns the agent histories and the masking stream, so a replayed
//! transcript yields the same masks and reward deltas as [`OrgWrapper`]
//! running in-process with the same reset seed.
//!
//! [`OrgWrapper`]: crate::env::OrgWrapper

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::env::{OrgLayer, WrapperError};
use crate::guides::Linkers;
use crate::org_model::OrgSpec;
use crate::trajectory::{AgentId, Label, LabelMap};

pub const PROTO: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentAlphabet {
    pub id: AgentId,
    pub observations: Vec<Label>,
    pub actions: Vec<Label>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Hello { agents: Vec<AgentAlphabet> },
    Reset { seed: u64 },
    Observe { agent: AgentId, obs: Label },
    Act { agent: AgentId, action: Label, raw_reward: f64 },
    Bye,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    UnsupportedProto,
    Protocol,
    Alphabet,
    UnknownLabel,
    MaskViolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reply {
    Welcome {
        agents: Vec<AgentId>,
        roles: Vec<Option<String>>,
    },
    Ready {
        seed: u64,
    },
    Mask {
        agent: AgentId,
        turn: u64,
        mask: Vec<bool>,
        enforced: bool,
    },
    Reward {
        agent: AgentId,
        turn: u64,
        penalty: f64,
        bonus: f64,
        delta: f64,
        reward: f64,
        violation: bool,
    },
    Bye,
    Error {
        code: ErrorCode,
        message: String,
    },
}

impl Reply {
    fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        Reply::Error { code, message: message.into() }
    }

    /// The frame text, without the trailing newline.
    pub fn to_line(&self) -> String {
        let mut v = serde_json::to_value(self).expect("replies serialize");
        let obj = v.as_object_mut().expect("replies are objects");
        obj.insert("proto".into(), Value::from(PROTO));
        serde_json::to_string(&v).expect("values serialize")
    }

    pub fn from_line(line: &str) -> Result<Self, serde_json::Error> {
        let mut v: Value = serde_json::from_str(line)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("proto");
        }
        serde_json::from_value(v)
    }
}

impl Request {
    pub fn to_line(&self) -> String {
        let mut v = serde_json::to_value(self).expect("requests serialize");
        let obj = v.as_object_mut().expect("requests are objects");
        obj.insert("proto".into(), Value::from(PROTO));
        serde_json::to_string(&v).expect("values serialize")
    }

    /// Parses a frame, checking the protocol version.
    pub fn from_line(line: &str) -> Result<Self, Reply> {
        let mut v: Value =
            serde_json::from_str(line).map_err(|e| Reply::error(ErrorCode::Malformed, e.to_string()))?;
        let obj = v
            .as_object_mut()
            .ok_or_else(|| Reply::error(ErrorCode::Malformed, "frame is not a JSON object"))?;
        match obj.remove("proto") {
            Some(Value::Number(n)) if n.as_u64() == Some(PROTO) => {}
            Some(other) => {
                return Err(Reply::error(ErrorCode::UnsupportedProto, format!("unsupported proto {other}")));
            }
            None => return Err(Reply::error(ErrorCode::Malformed, "missing proto field")),
        }
        serde_json::from_value(v).map_err(|e| Reply::error(ErrorCode::Malformed, e.to_string()))
    }
}

#[derive(Debug)]
enum State {
    AwaitHello,
    Bound { agents: Vec<AgentId>, layer: Box<OrgLayer>, reset: bool, observed: Option<(usize, Label)> },
    Closed,
}

/// One bridge session: a handshake followed by resets and turns.
#[derive(Debug)]
pub struct Session {
    spec: Arc<OrgSpec>,
    linkers: Arc<Linkers>,
    expected: Option<Vec<(AgentId, LabelMap)>>,
    state: State,
}

impl Session {
    /// `expected`, when given, pins the exact agents and alphabets a client
    /// must announce.
    pub fn new(spec: Arc<OrgSpec>, linkers: Arc<Linkers>, expected: Option<Vec<(AgentId, LabelMap)>>) -> Self {
        Session { spec, linkers, expected, state: State::AwaitHello }
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.state, State::Closed)
    }

    fn hello(&mut self, agents: Vec<AgentAlphabet>) -> Reply {
        let refuse = |m: String| Reply::error(ErrorCode::Alphabet, m);
        let mut ids = Vec::with_capacity(agents.len());
        let mut maps = Vec::with_capacity(agents.len());
        for a in agents {
            let map = match LabelMap::new(a.observations, a.actions) {
                Ok(m) => m,
                Err(e) => return refuse(format!("agent {}: {e}", a.id)),
            };
            ids.push(a.id);
            maps.push(map);
        }
        if ids.is_empty() {
            return refuse("no agents announced".into());
        }
        if let Some(exp) = &self.expected {
            let same = exp.len() == ids.len() && exp.iter().zip(ids.iter().zip(&maps)).all(|((ea, em), (a, m))| ea == a && em == m);
            if !same {
                return refuse("announced agents or alphabets differ from the engine's environment".into());
            }
        }
        let layer = match OrgLayer::new(&ids, maps, self.spec.clone(), self.linkers.clone()) {
            Ok(l) => l,
            Err(e) => return refuse(e.to_string()),
        };
        let roles = ids.iter().map(|a| self.linkers.role_of(a).map(str::to_string)).collect();
        self.state = State::Bound { agents: ids.clone(), layer: Box::new(layer), reset: false, observed: None };
        Reply::Welcome { agents: ids, roles }
    }

    /// Handles one request frame.
    pub fn handle(&mut self, req: Request) -> Reply {
        let protocol = |m: &str| Reply::error(ErrorCode::Protocol, m);
        match (&mut self.state, req) {
            (State::Closed, _) => protocol("session is closed"),
            (_, Request::Bye) => {
                self.state = State::Closed;
                Reply::Bye
            }
            (State::AwaitHello, Request::Hello { agents }) => {
                let reply = self.hello(agents);
                if matches!(reply, Reply::Error { .. }) {
                    self.state = State::Closed;
                }
                reply
            }
            (State::AwaitHello, _) => protocol("expected hello"),
            (State::Bound { .. }, Request::Hello { .. }) => protocol("duplicate hello"),
            (State::Bound { layer, reset, observed, .. }, Request::Reset { seed }) => {
                layer.reset(seed);
                *reset = true;
                *observed = None;
                Reply::Ready { seed }
            }
            (State::Bound { reset: false, .. }, _) => protocol("expected reset"),
            (State::Bound { agents, layer, observed, .. }, Request::Observe { agent, obs }) => {
                let Some(i) = agents.iter().position(|a| *a == agent) else {
                    return Reply::error(ErrorCode::UnknownLabel, format!("unknown agent {agent}"));
                };
                if observed.is_some() {
                    return protocol("observe sent twice in one turn");
                }
                let expected = layer.expected_agent();
                if i != expected {
                    return protocol(&format!("agent {agent} observed out of turn (expected {})", agents[expected]));
                }
                if layer.labels(i).obs_index(&obs).is_none() {
                    return Reply::error(ErrorCode::UnknownLabel, format!("observation {obs} is not in agent {agent}'s alphabet"));
                }
                let turn = layer.turn();
                let d = layer.action_mask(i, &obs);
                let reply = Reply::Mask { agent, turn, mask: d.mask.clone(), enforced: d.enforced };
                *observed = Some((i, obs));
                reply
            }
            (State::Bound { agents, layer, observed, .. }, Request::Act { agent, action, raw_reward }) => {
                let Some((i, obs)) = observed.clone() else {
                    return protocol("act before observe");
                };
                if agents[i] != agent {
                    return protocol(&format!("act from {agent} but {} observed", agents[i]));
                }
                let Some(a) = layer.labels(i).act_index(&action) else {
                    return Reply::error(ErrorCode::UnknownLabel, format!("action {action} is not in agent {agent}'s alphabet"));
                };
                let turn = layer.turn();
                match layer.commit(i, &obs, a) {
                    Ok(r) => {
                        *observed = None;
                        let delta = r.penalty + r.bonus;
                        Reply::Reward {
                            agent,
                            turn,
                            penalty: r.penalty,
                            bonus: r.bonus,
                            delta,
                            reward: raw_reward + r.penalty + r.bonus,
                            violation: r.violation,
                        }
                    }
                    Err(WrapperError::MaskViolation { action }) => {
                        Reply::error(ErrorCode::MaskViolation, format!("action {action} violates the enforced mask"))
                    }
                    Err(e) => protocol(&e.to_string()),
                }
            }
        }
    }

    /// Handles one raw frame line.
    pub fn handle_line(&mut self, line: &str) -> Reply {
        match Request::from_line(line) {
            Ok(req) => self.handle(req),
            Err(reply) => reply,
        }
    }
}

/// Serves frames from `input` until `bye`, a refused handshake or end of
/// input. Blank lines are skipped.
pub fn serve<R: BufRead, W: Write>(session: &mut Session, input: R, mut output: W) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = session.handle_line(&line);
        writeln!(output, "{}", reply.to_line())?;
        output.flush()?;
        if session.is_closed() {
            break;
        }
    }
    Ok(())
}
