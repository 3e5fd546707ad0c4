//! Hash-chained replay trace, offline invariant checks and the text
//! timeline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::protocol::network::{sha256_hex, LogEntry};
use crate::protocol::state::{RoomRef, opt_room};
use crate::protocol::{Holding, NodeEvent};
use crate::world::{Action, AgentId, AgentPose, WorldEvent};

use super::HarnessError;

pub const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Header,
    Tick,
    End,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    #[serde(rename = "type")]
    pub kind: RecordKind,
    pub data: Value,
    pub prev: String,
    pub hash: String,
}

fn record_hash(prev: &str, seq: u64, kind: RecordKind, data: &Value) -> String {
    let body = json!({"seq": seq, "type": kind, "data": data});
    sha256_hex(format!("{prev}{body}").as_bytes())
}

#[derive(Debug, Default)]
pub struct TraceWriter {
    records: Vec<TraceRecord>,
}

impl TraceWriter {
    pub fn push(&mut self, kind: RecordKind, data: &impl Serialize) {
        let data = serde_json::to_value(data).expect("trace data serializes");
        let seq = self.records.len() as u64;
        let prev = self.records.last().map_or_else(|| GENESIS.to_string(), |r| r.hash.clone());
        let hash = record_hash(&prev, seq, kind, &data);
        self.records.push(TraceRecord {
            seq,
            kind,
            data,
            prev,
            hash,
        });
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

/// What the leader's registry says about one agent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderEntry {
    #[serde(with = "opt_room")]
    pub assigned: Option<RoomRef>,
    pub locks: BTreeSet<String>,
}

/// Snapshot taken when no message is in flight and nobody waits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuiescentView {
    pub holdings: BTreeMap<AgentId, Holding>,
    /// Absent while no alive agent leads.
    pub leader_view: Option<BTreeMap<AgentId, LeaderEntry>>,
    pub remaining: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickData {
    pub tick: u64,
    pub poses: BTreeMap<AgentId, AgentPose>,
    pub actions: BTreeMap<AgentId, Action>,
    pub world_events: Vec<WorldEvent>,
    pub node_events: Vec<(AgentId, NodeEvent)>,
    pub sent: Vec<LogEntry>,
    /// Number of leaders seen after each processed protocol step.
    pub leader_checks: Vec<usize>,
    /// Whether any crash has happened by this tick.
    pub crashed: bool,
    pub leader: Option<AgentId>,
    pub known_cells: BTreeMap<AgentId, usize>,
    pub quiescent: Option<QuiescentView>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub checks: u64,
    pub violations: u64,
}

impl Check {
    pub fn record(&mut self, ok: bool) {
        self.checks += 1;
        self.violations += u64::from(!ok);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    pub single_leader: Check,
    pub distinct_assignments: Check,
    pub disjoint_locks: Check,
    pub leader_consistency: Check,
}

impl Verdicts {
    pub fn violations(&self) -> u64 {
        self.single_leader.violations
            + self.distinct_assignments.violations
            + self.disjoint_locks.violations
            + self.leader_consistency.violations
    }

    /// Exactly one leader before any crash, at most one after.
    pub fn check_leaders(&mut self, count: usize, crashed: bool) {
        self.single_leader.record(count == 1 || (crashed && count == 0));
    }

    pub fn check_quiescent(&mut self, q: &QuiescentView) {
        let mut rooms = BTreeSet::new();
        let distinct = q
            .holdings
            .values()
            .filter_map(|h| h.assigned)
            .all(|r| rooms.insert(r));
        self.distinct_assignments.record(distinct);

        let live = |h: &Holding| -> BTreeSet<String> { h.locks.intersection(&q.remaining).cloned().collect() };
        let mut locked = BTreeSet::new();
        let disjoint = q.holdings.values().all(|h| live(h).into_iter().all(|t| locked.insert(t)));
        self.disjoint_locks.record(disjoint);

        if let Some(view) = &q.leader_view {
            let consistent = q.holdings.iter().all(|(a, h)| {
                let Some(e) = view.get(a) else { return false };
                let relevant = |s: &BTreeSet<String>| -> BTreeSet<String> {
                    s.iter()
                        .filter(|t| q.remaining.contains(*t) && !h.found.contains(*t))
                        .cloned()
                        .collect()
                };
                e.assigned == h.assigned && relevant(&e.locks) == relevant(&h.locks)
            });
            self.leader_consistency.record(consistent);
        }
    }
}

/// Splits a trace into records and verifies the hash chain.
pub fn read_trace(text: &str) -> Result<Vec<TraceRecord>, HarnessError> {
    let mut records = Vec::new();
    let mut prev = GENESIS.to_string();
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        let record: TraceRecord = match serde_json::from_str(line) {
            Ok(r) => r,
            // A torn final line is a truncation, not corruption.
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => {
                return Err(HarnessError::Truncated(i as u64));
            }
            Err(e) => return Err(HarnessError::Corrupt { index: i as u64, reason: e.to_string() }),
        };
        if record.seq != i as u64 || record.prev != prev {
            return Err(HarnessError::Corrupt { index: i as u64, reason: "broken chain".into() });
        }
        if record_hash(&prev, record.seq, record.kind, &record.data) != record.hash {
            return Err(HarnessError::Corrupt { index: i as u64, reason: "checksum mismatch".into() });
        }
        prev = record.hash.clone();
        records.push(record);
    }
    if records.first().is_none_or(|r| r.kind != RecordKind::Header) {
        return Err(HarnessError::Corrupt { index: 0, reason: "missing header".into() });
    }
    if records.last().is_none_or(|r| r.kind != RecordKind::End) {
        return Err(HarnessError::Truncated(records.len() as u64));
    }
    Ok(records)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Replay {
    pub ticks: Vec<TickData>,
    pub live: Verdicts,
    pub recomputed: Verdicts,
    pub timeline: String,
}

/// Verifies a trace, recomputes the invariant verdicts and renders a
/// timeline. Mismatching verdicts are an error.
pub fn replay(text: &str) -> Result<Replay, HarnessError> {
    let records = read_trace(text)?;
    let mut ticks = Vec::new();
    for r in &records[1..records.len() - 1] {
        if r.kind != RecordKind::Tick {
            return Err(HarnessError::Corrupt { index: r.seq, reason: "unexpected record type".into() });
        }
        let t: TickData = serde_json::from_value(r.data.clone())
            .map_err(|e| HarnessError::Corrupt { index: r.seq, reason: e.to_string() })?;
        ticks.push(t);
    }
    let end = records.last().expect("checked above");
    let live: Verdicts = serde_json::from_value(end.data["verdicts"].clone())
        .map_err(|e| HarnessError::Corrupt { index: end.seq, reason: e.to_string() })?;
    let mut recomputed = Verdicts::default();
    for t in &ticks {
        for &c in &t.leader_checks {
            recomputed.check_leaders(c, t.crashed);
        }
        if let Some(q) = &t.quiescent {
            recomputed.check_quiescent(q);
        }
    }
    if recomputed != live {
        return Err(HarnessError::VerdictMismatch(format!("live {live:?}, recomputed {recomputed:?}")));
    }
    let timeline = render_timeline(&records[0].data, &ticks, &end.data);
    Ok(Replay {
        ticks,
        live,
        recomputed,
        timeline,
    })
}

fn render_timeline(header: &Value, ticks: &[TickData], end: &Value) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "scenario {} seed {} team {}",
        header["scenario"].as_str().unwrap_or("?"),
        header["seed"],
        header["team_size"]
    );
    let mut leader = None;
    for t in ticks {
        let mut parts = Vec::new();
        if t.leader != leader {
            leader = t.leader;
            parts.push(match leader {
                Some(a) => format!("leader {a}"),
                None => "no leader".to_string(),
            });
        }
        for e in &t.sent {
            parts.push(format!("{} {}->{}", e.kind, e.sender, e.receiver));
        }
        for (a, e) in &t.node_events {
            let name = serde_json::to_value(e).ok().and_then(|v| v["event"].as_str().map(str::to_string));
            parts.push(format!("{a}:{}", name.unwrap_or_default()));
        }
        for e in &t.world_events {
            match e {
                WorldEvent::Subtask(o) => {
                    parts.push(format!("{} declares {} ({:?})", o.agent, o.declared_class, o.result))
                }
                WorldEvent::Crashed { agent, .. } => parts.push(format!("{agent} crashed")),
                WorldEvent::EpisodeDone { reason, .. } => parts.push(format!("done {reason:?}")),
                _ => {}
            }
        }
        if !parts.is_empty() {
            let poses: Vec<String> = t
                .poses
                .iter()
                .filter(|(_, p)| p.alive)
                .map(|(a, p)| format!("{a}@{},{}", p.cell.x, p.cell.y))
                .collect();
            let _ = writeln!(out, "{:>5}  {}  [{}]", t.tick, parts.join("; "), poses.join(" "));
        }
    }
    let _ = writeln!(out, "end: {}", end["report"]["done"]);
    out
}
