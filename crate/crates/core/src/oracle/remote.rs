//! OpenAI-style chat-completion client. One reprompt on a bad reply, then
//! the rule oracle with `degraded` set.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    parse_leader_reply, parse_member_reply, render_leader_prompt, render_member_prompt,
    validate_coordination, validate_proposal, CoordinationResult, Decided, LeaderContext,
    MemberContext, Oracle, OracleError, Proposal, RuleOracle,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Token budget per reply.
    #[serde(default = "default_budget")]
    pub max_tokens: u32,
}

fn default_timeout() -> u64 {
    30
}

fn default_budget() -> u32 {
    512
}

const REPROMPT: &str = "\n\nYour previous answer could not be used: ";

#[derive(Debug)]
pub struct RemoteOracle {
    config: RemoteConfig,
    agent: ureq::Agent,
    fallback: RuleOracle,
    /// Calls answered by the fallback.
    pub degraded_calls: u64,
}

impl RemoteOracle {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Self {
            config,
            agent,
            fallback: RuleOracle::default(),
            degraded_calls: 0,
        }
    }

    fn chat(&self, prompt: &str) -> Result<String, OracleError> {
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "max_tokens": self.config.max_tokens,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(var) = &self.config.api_key_env {
            if let Ok(key) = std::env::var(var) {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
        }
        let reply: serde_json::Value = req
            .send_json(&body)
            .map_err(|e| OracleError::Transport(e.to_string()))?
            .into_body()
            .read_json()
            .map_err(|e| OracleError::Transport(e.to_string()))?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| OracleError::ReplyParse("no message content".into()))
    }

    /// Asks, and asks once more with the error appended.
    fn ask<T>(&self, prompt: &str, accept: impl Fn(&str) -> Result<T, OracleError>) -> Option<T> {
        let mut text = prompt.to_string();
        for _ in 0..2 {
            let err = match self.chat(&text).and_then(|r| accept(&r)) {
                Ok(v) => return Some(v),
                Err(e) => e,
            };
            text = format!("{prompt}{REPROMPT}{err}");
        }
        None
    }
}

impl Oracle for RemoteOracle {
    fn propose(&mut self, ctx: &MemberContext) -> Result<Decided<Proposal>, OracleError> {
        if ctx.options.is_empty() {
            return Err(OracleError::NoCandidateRooms);
        }
        let prompt = render_member_prompt(ctx)?;
        let got = self.ask(&prompt, |r| {
            let p = parse_member_reply(r, ctx.agent)?;
            validate_proposal(ctx, &p)?;
            Ok(p)
        });
        match got {
            Some(value) => Ok(Decided { value, degraded: false }),
            None => {
                self.degraded_calls += 1;
                Ok(Decided {
                    value: self.fallback.propose_rule(ctx)?,
                    degraded: true,
                })
            }
        }
    }

    fn coordinate(&mut self, ctx: &LeaderContext) -> Result<Decided<CoordinationResult>, OracleError> {
        let prompt = render_leader_prompt(ctx)?;
        let got = self.ask(&prompt, |r| {
            let c = parse_leader_reply(r, ctx.requester())?;
            validate_coordination(ctx, &c)?;
            Ok(c)
        });
        match got {
            Some(value) => Ok(Decided { value, degraded: false }),
            None => {
                self.degraded_calls += 1;
                Ok(Decided {
                    value: self.fallback.coordinate_rule(ctx),
                    degraded: true,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Pos;
    use crate::oracle::{MemberState, RoomOption};
    use crate::protocol::state::{GlobalProgress, RoomRef};
    use crate::world::AgentId;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    /// Serves canned chat replies in order and records request bodies.
    fn serve(contents: Vec<&'static str>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = seen.clone();
        std::thread::spawn(move || {
            for content in contents {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                log.lock().unwrap().push(String::from_utf8(buf).unwrap());
                let body = json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string();
                write!(
                    stream,
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/v1/chat/completions"), seen)
    }

    fn ctx() -> MemberContext {
        MemberContext {
            agent: AgentId(1),
            progress: GlobalProgress::new(&["tv".to_string()]),
            state: MemberState {
                cell: Pos::new(1, 1),
                current_room: None,
                assigned: None,
                rooms: vec![],
            },
            goals: vec!["tv".into()],
            history: vec![],
            options: vec![RoomOption {
                room: RoomRef::Room(Pos::new(4, 4)),
                label: "living room".into(),
                explored: 0.2,
                distance: 5.0,
            }],
        }
    }

    fn oracle(endpoint: String) -> RemoteOracle {
        RemoteOracle::new(RemoteConfig {
            endpoint,
            model: "test".into(),
            api_key_env: None,
            timeout_secs: 5,
            max_tokens: 64,
        })
    }

    #[test]
    fn valid_reply_is_used() {
        let (url, seen) = serve(vec![
            "```json\n{\"locks\":[\"tv\"],\"action\":\"room(4,4)\",\"thoughts\":\"tv lives there\"}\n```",
        ]);
        let d = oracle(url).propose(&ctx()).unwrap();
        assert!(!d.degraded);
        assert_eq!(d.value.thoughts, "tv lives there");
        let req: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
        assert_eq!(req["temperature"], 0);
        assert_eq!(req["max_tokens"], 64);
    }

    #[test]
    fn bad_reply_is_reprompted_once() {
        let (url, seen) = serve(vec![
            "```json\n{\"locks\":[],\"action\":\"room(9,9)\",\"thoughts\":\"\"}\n```",
            "```json\n{\"locks\":[],\"action\":\"room(4,4)\",\"thoughts\":\"fixed\"}\n```",
        ]);
        let d = oracle(url).propose(&ctx()).unwrap();
        assert!(!d.degraded);
        assert_eq!(d.value.thoughts, "fixed");
        let second = seen.lock().unwrap()[1].clone();
        assert!(second.contains("could not be used"));
    }

    #[test]
    fn two_bad_replies_fall_back() {
        let (url, _) = serve(vec!["no json here", "still nothing"]);
        let mut o = oracle(url);
        let d = o.propose(&ctx()).unwrap();
        assert!(d.degraded);
        assert_eq!(d.value, RuleOracle::default().propose_rule(&ctx()).unwrap());
        assert_eq!(o.degraded_calls, 1);
    }

    #[test]
    fn unreachable_endpoint_falls_back() {
        let mut o = oracle("http://127.0.0.1:9/v1/chat/completions".into());
        assert!(o.propose(&ctx()).unwrap().degraded);
    }
}
