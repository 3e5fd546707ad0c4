//! Member proposals and leader coordination behind one interface, with a
//! rule-based implementation and a remote chat-completion client.

mod prompt;
mod remote;
mod rule;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Pos;
use crate::protocol::state::{opt_room, GlobalProgress, GlobalState, RoomRef};
use crate::world::AgentId;

pub use prompt::{
    parse_leader_prompt, parse_leader_reply, parse_member_prompt, parse_member_reply,
    render_leader_prompt, render_member_prompt, render_prompts, render_template, PromptContext,
    LEADER_TEMPLATE, MEMBER_TEMPLATE,
};
pub use remote::{RemoteConfig, RemoteOracle};
pub use rule::RuleOracle;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("no candidate rooms")]
    NoCandidateRooms,
    #[error("missing prompt field {0:?}")]
    MissingField(String),
    #[error("prompt parse: {0}")]
    PromptParse(String),
    #[error("reply parse: {0}")]
    ReplyParse(String),
    #[error("invalid decision: {0}")]
    Invalid(String),
    #[error("remote oracle: {0}")]
    Transport(String),
}

/// A member's draft: targets it wants reserved, the room it wants next and
/// its reasoning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Proposal {
    pub agent: AgentId,
    pub locks: BTreeSet<String>,
    #[serde(with = "opt_room")]
    pub action: Option<RoomRef>,
    pub thoughts: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Support,
    Oppose,
}

/// The leader's instruction to one agent. The requester's directive carries
/// a decision; third parties get `interrupt = true` instead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentDirective {
    pub agent: AgentId,
    #[serde(with = "opt_room")]
    pub action: Option<RoomRef>,
    pub decision: Option<Decision>,
    pub interrupt: bool,
    pub locks: BTreeSet<String>,
    pub thoughts: String,
}

/// Directives from one coordination; the first is the requester's.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinationResult {
    pub directives: Vec<AgentDirective>,
}

impl CoordinationResult {
    pub fn requester(&self) -> &AgentDirective {
        &self.directives[0]
    }

    pub fn interrupts(&self) -> &[AgentDirective] {
        &self.directives[1..]
    }
}

/// A room (or frontier) the member could head for next.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomOption {
    pub room: RoomRef,
    pub label: String,
    pub explored: f64,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSummary {
    pub room: RoomRef,
    pub label: String,
    pub explored: f64,
    pub cells: usize,
    pub objects: Vec<String>,
    pub likely: Vec<String>,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSummary {
    pub agent: AgentId,
    pub cell: Pos,
    #[serde(with = "opt_room")]
    pub assigned: Option<RoomRef>,
    pub alive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryEntry {
    pub tick: u64,
    pub proposal: Proposal,
    pub directive: AgentDirective,
}

/// The member's own view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberState {
    pub cell: Pos,
    #[serde(with = "opt_room")]
    pub current_room: Option<RoomRef>,
    #[serde(with = "opt_room")]
    pub assigned: Option<RoomRef>,
    pub rooms: Vec<RoomSummary>,
}

/// Inputs of a member proposal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberContext {
    pub agent: AgentId,
    pub progress: GlobalProgress,
    pub state: MemberState,
    pub goals: Vec<String>,
    pub history: Vec<HistoryEntry>,
    pub options: Vec<RoomOption>,
}

/// Inputs of a leader coordination.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderContext {
    pub proposal: Proposal,
    /// The requester's options, with its travel distances.
    pub options: Vec<RoomOption>,
    pub progress: GlobalProgress,
    pub version: u64,
    pub agents: Vec<AgentSummary>,
    pub rooms: Vec<RoomSummary>,
    pub goals: Vec<String>,
}

impl LeaderContext {
    /// Summarises the leader's state for one request.
    pub fn build(
        proposal: Proposal,
        options: Vec<RoomOption>,
        state: &GlobalState,
        progress: &GlobalProgress,
        goals: &[String],
        table: &crate::rooms::CooccurrenceTable,
    ) -> Self {
        let remaining = progress.remaining();
        let agents = state
            .agents
            .iter()
            .map(|(a, e)| AgentSummary {
                agent: *a,
                cell: e.cell,
                assigned: e.assigned,
                alive: e.alive,
            })
            .collect();
        let rooms = state
            .rooms
            .values()
            .map(|r| room_summary(RoomRef::Room(r.anchor), r.label(), r.explored, r.mask.len(), r.description.as_ref(), &remaining, table))
            .collect();
        Self {
            proposal,
            options,
            progress: progress.clone(),
            version: state.version,
            agents,
            rooms,
            goals: goals.to_vec(),
        }
    }

    pub fn requester(&self) -> AgentId {
        self.proposal.agent
    }
}

/// Summary line for one room.
pub fn room_summary(
    room: RoomRef,
    label: &str,
    explored: f64,
    cells: usize,
    description: Option<&crate::rooms::RoomDescription>,
    remaining: &BTreeSet<String>,
    table: &crate::rooms::CooccurrenceTable,
) -> RoomSummary {
    RoomSummary {
        room,
        label: label.to_string(),
        explored,
        cells,
        objects: description.map(|d| d.object_list.clone()).unwrap_or_default(),
        likely: remaining
            .iter()
            .filter(|t| table.weight(label, t) > 0.0)
            .cloned()
            .collect(),
        text: description.map(|d| d.text.clone()).unwrap_or_default(),
    }
}

/// Output of an oracle call; `degraded` marks a fallback to the rules.
#[derive(Clone, Debug, PartialEq)]
pub struct Decided<T> {
    pub value: T,
    pub degraded: bool,
}

pub trait Oracle {
    fn propose(&mut self, ctx: &MemberContext) -> Result<Decided<Proposal>, OracleError>;
    fn coordinate(&mut self, ctx: &LeaderContext) -> Result<Decided<CoordinationResult>, OracleError>;
}

/// Checks a proposal against the member's options and progress.
pub fn validate_proposal(ctx: &MemberContext, p: &Proposal) -> Result<(), OracleError> {
    if p.agent != ctx.agent {
        return Err(OracleError::Invalid(format!("proposal for {} from {}", p.agent, ctx.agent)));
    }
    match p.action {
        Some(a) if !ctx.options.iter().any(|o| o.room == a) => {
            return Err(OracleError::Invalid(format!("action {a} names a nonexistent room")));
        }
        None if !ctx.options.is_empty() => {
            return Err(OracleError::Invalid("action missing".into()));
        }
        _ => {}
    }
    let remaining = ctx.progress.remaining();
    if let Some(t) = p.locks.iter().find(|t| !remaining.contains(*t)) {
        return Err(OracleError::Invalid(format!("lock {t:?} is not a remaining target")));
    }
    Ok(())
}

/// Checks a coordination result: directive shape, known rooms, distinct
/// assignments and disjoint locks once applied over the standing state.
pub fn validate_coordination(ctx: &LeaderContext, r: &CoordinationResult) -> Result<(), OracleError> {
    let bad = |m: String| Err(OracleError::Invalid(m));
    let i = ctx.requester();
    let Some(first) = r.directives.first() else {
        return bad("no directives".into());
    };
    if first.agent != i || first.decision.is_none() || first.interrupt {
        return bad("first directive must answer the requester".into());
    }
    let alive: BTreeMap<AgentId, &AgentSummary> = ctx
        .agents
        .iter()
        .filter(|a| a.alive)
        .map(|a| (a.agent, a))
        .collect();
    let mut touched = BTreeSet::from([i]);
    for d in r.interrupts() {
        if !d.interrupt || d.decision.is_some() {
            return bad(format!("directive for {} must be an interrupt", d.agent));
        }
        if !alive.contains_key(&d.agent) || !touched.insert(d.agent) {
            return bad(format!("bad interrupt target {}", d.agent));
        }
    }
    let known_room = |a: RoomRef| match a {
        RoomRef::Room(_) => ctx.rooms.iter().any(|s| s.room == a) || ctx.options.iter().any(|o| o.room == a),
        RoomRef::Frontier(_) => ctx.options.iter().any(|o| o.room == a),
    };
    for d in &r.directives {
        if let Some(a) = d.action {
            if !known_room(a) {
                return bad(format!("action {a} names a nonexistent room"));
            }
        }
    }
    if first.decision == Some(Decision::Oppose) && first.action.is_some() && first.action == ctx.proposal.action {
        return bad("oppose must change the action".into());
    }
    // Final assignments.
    let mut assigned: BTreeMap<RoomRef, AgentId> = BTreeMap::new();
    let mut claim = |room: Option<RoomRef>, agent: AgentId| -> Result<(), OracleError> {
        if let Some(room) = room {
            if let Some(other) = assigned.insert(room, agent) {
                return Err(OracleError::Invalid(format!("{room} assigned to {other} and {agent}")));
            }
        }
        Ok(())
    };
    for a in alive.values().filter(|a| !touched.contains(&a.agent)) {
        claim(a.assigned, a.agent)?;
    }
    for d in &r.directives {
        claim(d.action, d.agent)?;
    }
    // Final locks.
    let remaining = ctx.progress.remaining();
    let mut holder: BTreeMap<String, AgentId> = BTreeMap::new();
    for (t, s) in &ctx.progress.targets {
        if let crate::protocol::state::TargetStatus::LockedBy(a) = s {
            if !touched.contains(a) && alive.contains_key(a) {
                holder.insert(t.clone(), *a);
            }
        }
    }
    for d in &r.directives {
        for t in &d.locks {
            if !remaining.contains(t) {
                return bad(format!("lock {t:?} is not a remaining target"));
            }
            if let Some(other) = holder.insert(t.clone(), d.agent) {
                return bad(format!("{t:?} locked by {other} and {}", d.agent));
            }
        }
    }
    Ok(())
}

/// Runs any oracle and substitutes the rule result when its output fails
/// validation.
pub struct Validated<O> {
    pub inner: O,
    rule: RuleOracle,
}

impl<O: Oracle> Validated<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            rule: RuleOracle::default(),
        }
    }
}

impl<O: Oracle> Oracle for Validated<O> {
    fn propose(&mut self, ctx: &MemberContext) -> Result<Decided<Proposal>, OracleError> {
        let d = self.inner.propose(ctx)?;
        if validate_proposal(ctx, &d.value).is_ok() {
            return Ok(d);
        }
        let value = self.rule.propose_rule(ctx)?;
        validate_proposal(ctx, &value)?;
        Ok(Decided { value, degraded: true })
    }

    fn coordinate(&mut self, ctx: &LeaderContext) -> Result<Decided<CoordinationResult>, OracleError> {
        let d = self.inner.coordinate(ctx)?;
        if validate_coordination(ctx, &d.value).is_ok() {
            return Ok(d);
        }
        let value = self.rule.coordinate_rule(ctx);
        validate_coordination(ctx, &value)?;
        Ok(Decided { value, degraded: true })
    }
}
