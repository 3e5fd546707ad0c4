//! Request-triggered rotating leadership.
//!
//! Exactly one agent holds the team state at a time. A member that needs a
//! decision sends a help request towards the agent it believes leads; the
//! leader merges the member's knowledge, runs the coordination oracle, and
//! hands back the directive together with the whole state, which makes the
//! requester the next leader. A member whose request times out probes the
//! team and either finds the leader or elects the survivor holding the most
//! recent state.

pub mod network;
pub mod state;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::grid::Pos;
use crate::oracle::{
    AgentDirective, CoordinationResult, LeaderContext, Oracle, Proposal, RoomOption, RuleOracle,
};
use crate::rooms::CooccurrenceTable;
use crate::world::AgentId;

pub use network::{sha256_hex, Envelope, LogEntry, Network};
use state::{opt_room, Contribution, GlobalProgress, GlobalState, RoomRef};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HelpRequest {
    pub origin: AgentId,
    pub id: u64,
    pub hops: u32,
    pub proposal: Proposal,
    pub options: Vec<RoomOption>,
    pub contribution: Contribution,
}

/// Everything a new leader needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub state: GlobalState,
    pub progress: GlobalProgress,
    pub lineage: Vec<AgentId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderResponse {
    pub request: u64,
    pub directive: AgentDirective,
    pub degraded: bool,
    pub snapshot: Snapshot,
}

/// What an agent is currently committed to.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Holding {
    pub cell: Pos,
    #[serde(with = "opt_room")]
    pub assigned: Option<RoomRef>,
    pub locks: BTreeSet<String>,
    pub found: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderIs {
    /// Believed leader, or the sender itself when `is_leader`.
    pub leader: AgentId,
    /// Lineage length at which that belief was formed.
    pub term: u64,
    pub version: u64,
    pub is_leader: bool,
    pub awaiting: bool,
    /// Asks the receiver to run an election it is expected to win.
    pub appoint: bool,
    pub dead: BTreeSet<AgentId>,
    pub holding: Holding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    HelpRequest(HelpRequest),
    LeaderResponse(Box<LeaderResponse>),
    Interrupt { version: u64, directive: AgentDirective },
    WhoIsLeader,
    LeaderIs(LeaderIs),
    Heartbeat,
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::HelpRequest(_) => "help_request",
            Payload::LeaderResponse(_) => "leader_response",
            Payload::Interrupt { .. } => "interrupt",
            Payload::WhoIsLeader => "who_is_leader",
            Payload::LeaderIs(_) => "leader_is",
            Payload::Heartbeat => "heartbeat",
        }
    }
}

/// Timing derived from team size and the worst link latency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    /// Upper bound on ticks between send and processing.
    pub delta: u64,
    pub timeout: u64,
}

impl Timing {
    pub fn new(team: usize, max_latency: u64) -> Self {
        let delta = max_latency + 1;
        let n = team.max(1) as u64;
        Self {
            delta,
            timeout: n * (n + 2) * delta + 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum NodeEvent {
    /// Answer to this agent's own request.
    Directive { directive: AgentDirective, degraded: bool },
    Interrupted { directive: AgentDirective },
    BecameLeader { term: u64, version: u64 },
    Stale { version: u64 },
    RecoveryStarted,
    /// Probe sent; `belief` and `lineage` are what the prober knew.
    Probed {
        order: Vec<AgentId>,
        belief: AgentId,
        lineage: Vec<AgentId>,
    },
    MarkedDead { agent: AgentId },
    Adopted { leader: AgentId },
    Nominated { winner: AgentId },
    Elected { term: u64, version: u64 },
}

#[derive(Debug, Default)]
pub struct Outbox {
    pub messages: Vec<(AgentId, Payload)>,
    pub events: Vec<NodeEvent>,
}

impl Outbox {
    fn send(&mut self, to: AgentId, p: Payload) {
        self.messages.push((to, p));
    }
}

#[derive(Clone, Debug)]
struct Pending {
    request: HelpRequest,
    deadline: u64,
    /// Sent a nomination; re-send once someone announces leadership.
    orphaned: bool,
}

#[derive(Clone, Debug)]
enum Phase {
    Settle { until: u64 },
    Probe { until: u64, asked: Vec<AgentId> },
}

#[derive(Clone, Debug)]
struct Recovery {
    phase: Phase,
    replies: BTreeMap<AgentId, LeaderIs>,
    chases: u32,
}

const MAX_CHASES: u32 = 2;

/// One agent's protocol state.
#[derive(Clone, Debug)]
pub struct Node {
    pub id: AgentId,
    pub team: Vec<AgentId>,
    pub goals: Vec<String>,
    pub timing: Timing,
    pub leader: bool,
    pub belief: AgentId,
    pub belief_term: u64,
    pub lineage: Vec<AgentId>,
    pub state: GlobalState,
    pub progress: GlobalProgress,
    pub holding: Holding,
    pub dead: BTreeSet<AgentId>,
    pending: Option<Pending>,
    buffered: VecDeque<HelpRequest>,
    recovery: Option<Recovery>,
    next_request: u64,
    last_interrupt: u64,
    /// Contact order of each recovery probe.
    pub probes: Vec<Vec<AgentId>>,
}

impl Node {
    /// The lowest id starts as leader.
    pub fn new(id: AgentId, starts: &BTreeMap<AgentId, Pos>, goals: &[String], timing: Timing) -> Self {
        let team: Vec<AgentId> = starts.keys().copied().collect();
        let first = team[0];
        Self {
            id,
            goals: goals.to_vec(),
            timing,
            leader: id == first,
            belief: first,
            belief_term: 1,
            lineage: vec![first],
            state: GlobalState::new(starts.iter().map(|(a, p)| (*a, *p))),
            progress: GlobalProgress::new(goals),
            holding: Holding {
                cell: starts[&id],
                ..Holding::default()
            },
            dead: BTreeSet::new(),
            pending: None,
            buffered: VecDeque::new(),
            recovery: None,
            next_request: 1,
            last_interrupt: 0,
            probes: Vec::new(),
            team,
        }
    }

    pub fn version(&self) -> u64 {
        self.state.version
    }

    pub fn awaiting(&self) -> bool {
        self.pending.is_some()
    }

    pub fn recovering(&self) -> bool {
        self.recovery.is_some()
    }

    fn report(&self) -> LeaderIs {
        LeaderIs {
            leader: if self.leader { self.id } else { self.belief },
            term: self.belief_term,
            version: self.state.version,
            is_leader: self.leader,
            awaiting: self.pending.is_some(),
            appoint: false,
            dead: self.dead.clone(),
            holding: self.holding.clone(),
        }
    }

    /// Initial announcement from the first leader.
    pub fn bootstrap(&self, out: &mut Outbox) {
        if self.leader {
            for &a in self.team.iter().filter(|a| **a != self.id) {
                out.send(a, Payload::LeaderIs(self.report()));
            }
        }
    }

    /// Asks for a decision. A leader answers itself.
    pub fn request(
        &mut self,
        now: u64,
        proposal: Proposal,
        options: Vec<RoomOption>,
        contribution: Contribution,
        oracle: &mut dyn Oracle,
        out: &mut Outbox,
    ) {
        let request = HelpRequest {
            origin: self.id,
            id: self.next_request,
            hops: 0,
            proposal,
            options,
            contribution,
        };
        self.next_request += 1;
        if self.leader {
            self.serve_self(request, oracle, out);
            return;
        }
        out.send(self.belief, Payload::HelpRequest(request.clone()));
        self.pending = Some(Pending {
            request,
            deadline: now + self.timing.timeout,
            orphaned: false,
        });
    }

    fn coordinate(&mut self, req: &HelpRequest, oracle: &mut dyn Oracle) -> (CoordinationResult, bool) {
        let remap = self.state.merge(&req.contribution, &mut self.progress);
        let fix = |r: RoomRef| match r {
            RoomRef::Room(a) => RoomRef::Room(remap.get(&a).copied().unwrap_or(a)),
            f => f,
        };
        let mut proposal = req.proposal.clone();
        proposal.action = proposal.action.map(fix);
        let mut seen = BTreeSet::new();
        let options: Vec<RoomOption> = req
            .options
            .iter()
            .map(|o| RoomOption {
                room: fix(o.room),
                ..o.clone()
            })
            .filter(|o| seen.insert(o.room))
            .collect();
        let ctx = LeaderContext::build(
            proposal,
            options,
            &self.state,
            &self.progress,
            &self.goals,
            CooccurrenceTable::bundled(),
        );
        let (result, degraded) = match oracle.coordinate(&ctx) {
            Ok(d) => (d.value, d.degraded),
            Err(_) => (RuleOracle::default().coordinate_rule(&ctx), true),
        };
        for d in &result.directives {
            self.progress.release(d.agent);
            for t in &d.locks {
                self.progress.lock(t, d.agent);
            }
            if let Some(e) = self.state.agents.get_mut(&d.agent) {
                e.assigned = d.action;
            }
        }
        if let Some(e) = self.state.agents.get_mut(&req.origin) {
            e.served = e.served.max(req.id);
        }
        self.state.version += 1;
        (result, degraded)
    }

    fn commit(&mut self, d: &AgentDirective) {
        self.holding.assigned = d.action;
        self.holding.locks = d.locks.clone();
    }

    fn send_interrupts(&mut self, r: &CoordinationResult, out: &mut Outbox) {
        for d in r.interrupts() {
            if d.agent == self.id {
                self.commit(d);
                out.events.push(NodeEvent::Interrupted { directive: d.clone() });
            } else {
                out.send(
                    d.agent,
                    Payload::Interrupt {
                        version: self.state.version,
                        directive: d.clone(),
                    },
                );
            }
        }
    }

    fn serve_self(&mut self, req: HelpRequest, oracle: &mut dyn Oracle, out: &mut Outbox) {
        let (r, degraded) = self.coordinate(&req, oracle);
        self.commit(r.requester());
        out.events.push(NodeEvent::Directive {
            directive: r.requester().clone(),
            degraded,
        });
        self.send_interrupts(&r, out);
    }

    fn already_served(&self, req: &HelpRequest) -> bool {
        self.state
            .agents
            .get(&req.origin)
            .is_none_or(|e| !e.alive || e.served >= req.id)
    }

    /// Answers a teammate and hands leadership over with the grant.
    fn serve_remote(&mut self, req: HelpRequest, oracle: &mut dyn Oracle, out: &mut Outbox) {
        let (r, degraded) = self.coordinate(&req, oracle);
        self.lineage.push(req.origin);
        self.leader = false;
        self.belief = req.origin;
        self.belief_term = self.lineage.len() as u64;
        out.send(
            req.origin,
            Payload::LeaderResponse(Box::new(LeaderResponse {
                request: req.id,
                directive: r.requester().clone(),
                degraded,
                snapshot: Snapshot {
                    state: self.state.clone(),
                    progress: self.progress.clone(),
                    lineage: self.lineage.clone(),
                },
            })),
        );
        self.send_interrupts(&r, out);
    }

    fn forward(&self, mut req: HelpRequest, out: &mut Outbox) {
        if req.origin == self.id || req.hops as usize >= self.team.len() {
            return;
        }
        req.hops += 1;
        let origin = req.origin;
        out.send(self.belief, Payload::HelpRequest(req));
        if self.belief != origin {
            out.send(origin, Payload::LeaderIs(self.report()));
        }
    }

    /// Serves or forwards requests held while waiting.
    fn drain(&mut self, oracle: &mut dyn Oracle, out: &mut Outbox) {
        while let Some(req) = self.buffered.pop_front() {
            if self.leader {
                if !self.already_served(&req) {
                    self.serve_remote(req, oracle, out);
                }
            } else {
                self.forward(req, out);
            }
        }
    }

    pub fn receive(&mut self, now: u64, env: &Envelope, oracle: &mut dyn Oracle, out: &mut Outbox) {
        match &env.payload {
            Payload::HelpRequest(req) => self.on_request(req.clone(), oracle, out),
            Payload::LeaderResponse(resp) => self.on_grant(resp, oracle, out),
            Payload::Interrupt { version, directive } => {
                if *version > self.state.version && *version > self.last_interrupt {
                    self.last_interrupt = *version;
                    self.commit(directive);
                    out.events.push(NodeEvent::Interrupted {
                        directive: directive.clone(),
                    });
                }
            }
            Payload::WhoIsLeader => out.send(env.sender, Payload::LeaderIs(self.report())),
            Payload::LeaderIs(info) => self.on_leader_is(now, env.sender, info, oracle, out),
            Payload::Heartbeat => {}
        }
    }

    fn on_request(&mut self, req: HelpRequest, oracle: &mut dyn Oracle, out: &mut Outbox) {
        if req.origin == self.id {
            return;
        }
        if self.leader {
            if !self.already_served(&req) {
                self.serve_remote(req, oracle, out);
            }
        } else if self.pending.is_some() || self.recovery.is_some() {
            self.buffered.push_back(req);
        } else {
            self.forward(req, out);
        }
    }

    fn on_grant(&mut self, resp: &LeaderResponse, oracle: &mut dyn Oracle, out: &mut Outbox) {
        let v = resp.snapshot.state.version;
        if v <= self.state.version {
            out.events.push(NodeEvent::Stale { version: v });
            return;
        }
        self.state = resp.snapshot.state.clone();
        self.progress = resp.snapshot.progress.clone();
        self.lineage = resp.snapshot.lineage.clone();
        self.leader = true;
        self.belief = self.id;
        self.belief_term = self.lineage.len() as u64;
        self.pending = None;
        self.recovery = None;
        self.commit(&resp.directive);
        out.events.push(NodeEvent::Directive {
            directive: resp.directive.clone(),
            degraded: resp.degraded,
        });
        out.events.push(NodeEvent::BecameLeader {
            term: self.belief_term,
            version: v,
        });
        self.drain(oracle, out);
    }

    fn on_leader_is(&mut self, now: u64, sender: AgentId, info: &LeaderIs, oracle: &mut dyn Oracle, out: &mut Outbox) {
        if let Some(rec) = &mut self.recovery {
            if matches!(&rec.phase, Phase::Probe { asked, .. } if asked.contains(&sender)) && !info.appoint {
                rec.replies.insert(sender, info.clone());
            }
        }
        if info.appoint {
            if !self.leader && self.recovery.is_none() {
                self.start_recovery(now, out);
            }
            return;
        }
        if info.term > self.belief_term && !self.dead.contains(&info.leader) {
            self.belief = info.leader;
            self.belief_term = info.term;
            let announce = info.is_leader && sender == info.leader;
            if announce && self.recovery.is_none() {
                self.resend(now, out);
                self.drain(oracle, out);
            }
        }
    }

    /// Re-sends an orphaned request to the current belief.
    fn resend(&mut self, now: u64, out: &mut Outbox) {
        let belief = self.belief;
        let timeout = self.timing.timeout;
        if let Some(p) = &mut self.pending {
            if p.orphaned {
                p.orphaned = false;
                p.deadline = now + timeout;
                p.request.hops = 0;
                out.send(belief, Payload::HelpRequest(p.request.clone()));
            }
        }
    }

    fn start_recovery(&mut self, now: u64, out: &mut Outbox) {
        self.recovery = Some(Recovery {
            phase: Phase::Settle {
                until: now + self.timing.delta,
            },
            replies: BTreeMap::new(),
            chases: 0,
        });
        out.events.push(NodeEvent::RecoveryStarted);
    }

    /// Believed leader and lineage from most recent, then everyone else by
    /// id.
    pub fn probe_order(&self) -> Vec<AgentId> {
        let mut order = Vec::new();
        let known = std::iter::once(&self.belief).chain(self.lineage.iter().rev());
        for &a in known.chain(self.team.iter()) {
            if a != self.id && !self.dead.contains(&a) && !order.contains(&a) {
                order.push(a);
            }
        }
        order
    }

    /// Timers: request timeout and recovery phases.
    pub fn tick(&mut self, now: u64, oracle: &mut dyn Oracle, out: &mut Outbox) {
        if self.recovery.is_none() && self.pending.as_ref().is_some_and(|p| p.deadline <= now) {
            self.start_recovery(now, out);
        }
        let order = self.probe_order();
        let Some(rec) = &mut self.recovery else {
            return;
        };
        match &rec.phase {
            Phase::Settle { until } if *until <= now => {
                for &a in &order {
                    out.send(a, Payload::WhoIsLeader);
                }
                out.events.push(NodeEvent::Probed {
                    order: order.clone(),
                    belief: self.belief,
                    lineage: self.lineage.clone(),
                });
                self.probes.push(order.clone());
                rec.phase = Phase::Probe {
                    until: now + 2 * self.timing.delta + 1,
                    asked: order,
                };
            }
            Phase::Probe { until, .. } if *until <= now => self.conclude(now, oracle, out),
            _ => {}
        }
    }

    fn conclude(&mut self, now: u64, oracle: &mut dyn Oracle, out: &mut Outbox) {
        let mut rec = self.recovery.take().expect("recovering");
        let Phase::Probe { asked, .. } = &rec.phase else {
            unreachable!("conclude runs after probing");
        };
        for a in asked {
            if !rec.replies.contains_key(a) && self.dead.insert(*a) {
                out.events.push(NodeEvent::MarkedDead { agent: *a });
            }
        }
        rec.replies.retain(|a, _| !self.dead.contains(a));
        if let Some((&l, info)) = rec.replies.iter().find(|(_, i)| i.is_leader) {
            self.belief = l;
            self.belief_term = self.belief_term.max(info.term);
            out.events.push(NodeEvent::Adopted { leader: l });
            if let Some(p) = &mut self.pending {
                p.orphaned = true;
            }
            self.resend(now, out);
            self.drain(oracle, out);
            return;
        }
        // Follow the newest belief: a grant may still be travelling to it.
        let (term, target) = rec
            .replies
            .values()
            .map(|i| (i.term, i.leader))
            .chain([(self.belief_term, self.belief)])
            .max()
            .expect("own belief present");
        if target != self.id && rec.replies.contains_key(&target) && rec.chases < MAX_CHASES && term > 0 {
            rec.chases += 1;
            rec.replies.remove(&target);
            out.send(target, Payload::WhoIsLeader);
            rec.phase = Phase::Probe {
                until: now + 2 * self.timing.delta + 1,
                asked: vec![target],
            };
            self.recovery = Some(rec);
            return;
        }
        let winner = rec
            .replies
            .iter()
            .map(|(a, i)| (i.version, std::cmp::Reverse(*a)))
            .chain([(self.state.version, std::cmp::Reverse(self.id))])
            .max()
            .map(|(_, std::cmp::Reverse(a))| a)
            .expect("self present");
        if winner == self.id {
            self.elect(now, &rec.replies, oracle, out);
        } else {
            let mut nomination = self.report();
            nomination.appoint = true;
            nomination.leader = winner;
            out.send(winner, Payload::LeaderIs(nomination));
            out.events.push(NodeEvent::Nominated { winner });
            if let Some(p) = &mut self.pending {
                p.orphaned = true;
                p.deadline = now + self.timing.timeout;
            }
        }
    }

    fn elect(&mut self, _now: u64, replies: &BTreeMap<AgentId, LeaderIs>, oracle: &mut dyn Oracle, out: &mut Outbox) {
        self.leader = true;
        self.lineage.push(self.id);
        self.belief = self.id;
        self.belief_term = self.lineage.len() as u64;
        let mut holdings: Vec<(AgentId, &Holding)> = replies.iter().map(|(a, i)| (*a, &i.holding)).collect();
        let own = self.holding.clone();
        holdings.push((self.id, &own));
        for (a, _) in &holdings {
            self.progress.release(*a);
        }
        for (a, h) in &holdings {
            for t in &h.found {
                self.progress.mark_found(t);
            }
            if let Some(e) = self.state.agents.get_mut(a) {
                e.assigned = h.assigned;
                e.cell = h.cell;
            }
        }
        for (a, h) in &holdings {
            for t in &h.locks {
                self.progress.lock(t, *a);
            }
        }
        let dead: Vec<AgentId> = self.dead.iter().copied().collect();
        for d in dead {
            self.state.retire(d, &mut self.progress);
        }
        self.state.version += 1;
        out.events.push(NodeEvent::Elected {
            term: self.belief_term,
            version: self.state.version,
        });
        let announce = self.report();
        for &a in self.team.iter().filter(|a| **a != self.id && !self.dead.contains(a)) {
            out.send(a, Payload::LeaderIs(announce.clone()));
        }
        if let Some(p) = self.pending.take() {
            self.serve_self(p.request, oracle, out);
        }
        self.drain(oracle, out);
    }

    /// Marks found targets in the local copy of progress.
    pub fn note_found(&mut self, target: &str) {
        self.holding.found.insert(target.to_string());
        self.progress.mark_found(target);
    }
}
