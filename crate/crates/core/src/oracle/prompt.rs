//! Prompt text for member and leader calls, its inverse parser, and reply
//! extraction.
//!
//! Sections are `=== NAME ===` headers followed by one JSON object per line,
//! or `(none)` when empty.

use std::collections::{BTreeMap, BTreeSet};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::grid::Pos;
use crate::protocol::state::{opt_room, GlobalProgress, RoomRef, TargetStatus};
use crate::world::AgentId;

use super::{
    AgentDirective, AgentSummary, CoordinationResult, Decision, HistoryEntry, LeaderContext,
    MemberContext, MemberState, OracleError, Proposal, RoomOption, RoomSummary,
};

pub const MEMBER_TEMPLATE: &str = "\
You are one robot in a team searching a house for target objects. Any team
member may find any target. Pick the room you should search next and the
targets you want to reserve so teammates do not duplicate the effort.

Answer with a single fenced JSON block and nothing else:
```json
{\"locks\": [\"<target>\"], \"action\": \"<room from OPTIONS>\", \"thoughts\": \"<short reasoning>\"}
```
Only reserve remaining targets. The action must be one of the OPTIONS rooms.

=== ID ===
{{id}}
=== PROGRESS ===
{{progress}}
=== STATE ===
{{state}}
=== GOALS ===
{{goals}}
=== HISTORY ===
{{history}}
=== OPTIONS ===
{{options}}
";

pub const LEADER_TEMPLATE: &str = "\
You are the current leader of a team of robots searching a house for target
objects. A teammate sent the proposal below. Support it if it clashes with no
teammate's room or reserved targets; otherwise oppose it and give a better
room. You may also redirect other teammates whose room no longer holds any
likely target that is not reserved elsewhere.

Answer with a single fenced JSON block and nothing else:
```json
{\"decision\": \"support\", \"action\": \"<room>\", \"locks\": [\"<target>\"], \"thoughts\": \"<short reasoning>\",
 \"interrupts\": [{\"agent\": 0, \"action\": \"<room>\", \"locks\": [], \"thoughts\": \"\"}]}
```
Use \"none\" as the action when no room is left.

=== PROPOSAL ===
{{proposal}}
=== GLOBAL PROGRESS ===
{{progress}}
=== GLOBAL STATE ===
{{state}}
=== GOALS ===
{{goals}}
";

const MEMBER_SECTIONS: [&str; 6] = ["ID", "PROGRESS", "STATE", "GOALS", "HISTORY", "OPTIONS"];
const LEADER_SECTIONS: [&str; 4] = ["PROPOSAL", "GLOBAL PROGRESS", "GLOBAL STATE", "GOALS"];
const EMPTY: &str = "(none)";

/// Replaces every `{{name}}` with its value; a placeholder without a value
/// is an error naming it.
pub fn render_template(template: &str, fields: &BTreeMap<&str, String>) -> Result<String, OracleError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| OracleError::PromptParse("unterminated placeholder".into()))?;
        let name = after[..end].trim();
        let value = fields
            .get(name)
            .ok_or_else(|| OracleError::MissingField(name.to_string()))?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IdLine {
    agent: AgentId,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetLine {
    target: String,
    status: TargetStatus,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoalLine {
    goal: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseLine {
    cell: Pos,
    #[serde(with = "opt_room")]
    current_room: Option<RoomRef>,
    #[serde(with = "opt_room")]
    assigned: Option<RoomRef>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VersionLine {
    version: u64,
    agents: usize,
    rooms: usize,
}

fn line<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("prompt lines serialize")
}

fn block(lines: Vec<String>) -> String {
    if lines.is_empty() {
        EMPTY.to_string()
    } else {
        lines.join("\n")
    }
}

fn progress_lines(p: &GlobalProgress) -> Vec<String> {
    p.targets
        .iter()
        .map(|(t, s)| {
            line(&TargetLine {
                target: t.clone(),
                status: *s,
            })
        })
        .collect()
}

fn goal_lines(goals: &[String]) -> Vec<String> {
    goals.iter().map(|g| line(&GoalLine { goal: g.clone() })).collect()
}

pub fn render_member_prompt(ctx: &MemberContext) -> Result<String, OracleError> {
    let mut state = vec![line(&PoseLine {
        cell: ctx.state.cell,
        current_room: ctx.state.current_room,
        assigned: ctx.state.assigned,
    })];
    state.extend(ctx.state.rooms.iter().map(line));
    let fields = BTreeMap::from([
        ("id", line(&IdLine { agent: ctx.agent })),
        ("progress", block(progress_lines(&ctx.progress))),
        ("state", block(state)),
        ("goals", block(goal_lines(&ctx.goals))),
        ("history", block(ctx.history.iter().map(line).collect())),
        ("options", block(ctx.options.iter().map(line).collect())),
    ]);
    render_template(MEMBER_TEMPLATE, &fields)
}

pub fn render_leader_prompt(ctx: &LeaderContext) -> Result<String, OracleError> {
    let mut proposal = vec![line(&ctx.proposal)];
    proposal.extend(ctx.options.iter().map(line));
    let mut state = vec![line(&VersionLine {
        version: ctx.version,
        agents: ctx.agents.len(),
        rooms: ctx.rooms.len(),
    })];
    state.extend(ctx.agents.iter().map(line));
    state.extend(ctx.rooms.iter().map(line));
    let fields = BTreeMap::from([
        ("proposal", block(proposal)),
        ("progress", block(progress_lines(&ctx.progress))),
        ("state", block(state)),
        ("goals", block(goal_lines(&ctx.goals))),
    ]);
    render_template(LEADER_TEMPLATE, &fields)
}

/// Splits prompt text into the named sections, which must all appear once
/// and in order.
fn sections<'a>(text: &'a str, names: &[&str]) -> Result<BTreeMap<String, Vec<&'a str>>, OracleError> {
    let mut out: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    let mut order = Vec::new();
    let mut current: Option<String> = None;
    for l in text.lines() {
        let t = l.trim();
        if let Some(name) = t.strip_prefix("=== ").and_then(|r| r.strip_suffix(" ===")) {
            if out.contains_key(name) {
                return Err(OracleError::PromptParse(format!("section {name} repeated")));
            }
            out.insert(name.to_string(), Vec::new());
            order.push(name.to_string());
            current = Some(name.to_string());
        } else if let Some(c) = &current {
            if !t.is_empty() && t != EMPTY {
                out.get_mut(c).expect("section exists").push(t);
            }
        }
    }
    if order != names {
        return Err(OracleError::PromptParse(format!("sections {order:?}, expected {names:?}")));
    }
    Ok(out)
}

fn parse_line<T: DeserializeOwned>(section: &str, l: &str) -> Result<T, OracleError> {
    serde_json::from_str(l).map_err(|e| OracleError::PromptParse(format!("{section}: {e}: {l}")))
}

fn parse_all<T: DeserializeOwned>(section: &str, lines: &[&str]) -> Result<Vec<T>, OracleError> {
    lines.iter().map(|l| parse_line(section, l)).collect()
}

fn parse_progress(section: &str, lines: &[&str]) -> Result<GlobalProgress, OracleError> {
    let targets = parse_all::<TargetLine>(section, lines)?
        .into_iter()
        .map(|t| (t.target, t.status))
        .collect();
    Ok(GlobalProgress { targets })
}

fn parse_goals(lines: &[&str]) -> Result<Vec<String>, OracleError> {
    Ok(parse_all::<GoalLine>("GOALS", lines)?.into_iter().map(|g| g.goal).collect())
}

fn first<'a>(section: &str, lines: &[&'a str]) -> Result<&'a str, OracleError> {
    lines
        .first()
        .copied()
        .ok_or_else(|| OracleError::PromptParse(format!("{section} is empty")))
}

pub fn parse_member_prompt(text: &str) -> Result<MemberContext, OracleError> {
    let s = sections(text, &MEMBER_SECTIONS)?;
    let id: IdLine = parse_line("ID", first("ID", &s["ID"])?)?;
    let state = &s["STATE"];
    let pose: PoseLine = parse_line("STATE", first("STATE", state)?)?;
    Ok(MemberContext {
        agent: id.agent,
        progress: parse_progress("PROGRESS", &s["PROGRESS"])?,
        state: MemberState {
            cell: pose.cell,
            current_room: pose.current_room,
            assigned: pose.assigned,
            rooms: parse_all("STATE", &state[1..])?,
        },
        goals: parse_goals(&s["GOALS"])?,
        history: parse_all::<HistoryEntry>("HISTORY", &s["HISTORY"])?,
        options: parse_all::<RoomOption>("OPTIONS", &s["OPTIONS"])?,
    })
}

pub fn parse_leader_prompt(text: &str) -> Result<LeaderContext, OracleError> {
    let s = sections(text, &LEADER_SECTIONS)?;
    let prop = &s["PROPOSAL"];
    let proposal: Proposal = parse_line("PROPOSAL", first("PROPOSAL", prop)?)?;
    let state = &s["GLOBAL STATE"];
    let head: VersionLine = parse_line("GLOBAL STATE", first("GLOBAL STATE", state)?)?;
    if state.len() != 1 + head.agents + head.rooms {
        return Err(OracleError::PromptParse(format!(
            "GLOBAL STATE has {} lines, header says {}",
            state.len() - 1,
            head.agents + head.rooms
        )));
    }
    let split = 1 + head.agents;
    Ok(LeaderContext {
        proposal,
        options: parse_all("PROPOSAL", &prop[1..])?,
        progress: parse_progress("GLOBAL PROGRESS", &s["GLOBAL PROGRESS"])?,
        version: head.version,
        agents: parse_all::<AgentSummary>("GLOBAL STATE", &state[1..split])?,
        rooms: parse_all::<RoomSummary>("GLOBAL STATE", &state[split..])?,
        goals: parse_goals(&s["GOALS"])?,
    })
}

/// Either kind of prompt input.
#[derive(Clone, Debug, PartialEq)]
pub enum PromptContext {
    Member(MemberContext),
    Leader(LeaderContext),
}

impl PromptContext {
    pub fn render(&self) -> Result<String, OracleError> {
        match self {
            PromptContext::Member(c) => render_member_prompt(c),
            PromptContext::Leader(c) => render_leader_prompt(c),
        }
    }

    /// Parses a prompt of either kind, told apart by its first section.
    pub fn parse(text: &str) -> Result<Self, OracleError> {
        if text.lines().any(|l| l.trim() == "=== PROPOSAL ===") {
            parse_leader_prompt(text).map(PromptContext::Leader)
        } else {
            parse_member_prompt(text).map(PromptContext::Member)
        }
    }
}

/// Renders a batch of contexts.
pub fn render_prompts(ctxs: &[PromptContext]) -> Result<Vec<String>, OracleError> {
    ctxs.iter().map(PromptContext::render).collect()
}

/// Body of the first fenced code block, language tag dropped.
fn fenced(text: &str) -> Result<&str, OracleError> {
    let start = text
        .find("```")
        .ok_or_else(|| OracleError::ReplyParse("no fenced block".into()))?;
    let after = &text[start + 3..];
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    let end = body
        .find("```")
        .ok_or_else(|| OracleError::ReplyParse("unterminated fenced block".into()))?;
    Ok(&body[..end])
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MemberReply {
    locks: BTreeSet<String>,
    #[serde(with = "opt_room")]
    action: Option<RoomRef>,
    thoughts: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InterruptReply {
    agent: AgentId,
    #[serde(with = "opt_room")]
    action: Option<RoomRef>,
    locks: BTreeSet<String>,
    #[serde(default)]
    thoughts: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LeaderReply {
    decision: Decision,
    #[serde(with = "opt_room")]
    action: Option<RoomRef>,
    locks: BTreeSet<String>,
    thoughts: String,
    #[serde(default)]
    interrupts: Vec<InterruptReply>,
}

fn reply_json<T: DeserializeOwned>(text: &str) -> Result<T, OracleError> {
    serde_json::from_str(fenced(text)?).map_err(|e| OracleError::ReplyParse(e.to_string()))
}

pub fn parse_member_reply(text: &str, agent: AgentId) -> Result<Proposal, OracleError> {
    let r: MemberReply = reply_json(text)?;
    Ok(Proposal {
        agent,
        locks: r.locks,
        action: r.action,
        thoughts: r.thoughts,
    })
}

pub fn parse_leader_reply(text: &str, requester: AgentId) -> Result<CoordinationResult, OracleError> {
    let r: LeaderReply = reply_json(text)?;
    let mut directives = vec![AgentDirective {
        agent: requester,
        action: r.action,
        decision: Some(r.decision),
        interrupt: false,
        locks: r.locks,
        thoughts: r.thoughts,
    }];
    directives.extend(r.interrupts.into_iter().map(|j| AgentDirective {
        agent: j.agent,
        action: j.action,
        decision: None,
        interrupt: true,
        locks: j.locks,
        thoughts: j.thoughts,
    }));
    Ok(CoordinationResult { directives })
}
