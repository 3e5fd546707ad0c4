//! The lockstep episode loop.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::oracle::{Oracle, OracleError};
use crate::protocol::{Envelope, Network, NodeEvent, Outbox, Payload, Timing};
use crate::rooms::{CooccurrenceTable, RoomDescriber};
use crate::world::{
    Action, AgentId, DoneReason, SubtaskResult, World, WorldEvent,
};

use super::agent::AgentCtl;
use super::config::{CrashTarget, RunConfig};
use super::trace::{LeaderEntry, QuiescentView, RecordKind, TickData, TraceWriter, Verdicts};
use super::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetOutcome {
    pub class: String,
    pub outcome: Outcome,
    /// Tick of the successful declaration, or of the last failed one.
    pub tick: Option<u64>,
    pub agent: Option<AgentId>,
    pub failed_declares: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageStats {
    pub by_kind: BTreeMap<String, u64>,
    pub total: u64,
    /// Help requests issued by agents.
    pub triggers: u64,
    /// Messages an all-to-all scheme would send: a full exchange at start
    /// and one per trigger.
    pub broadcast_baseline: u64,
    pub interrupts: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolStats {
    pub handoffs: u64,
    pub recoveries: u64,
    pub elections: u64,
    pub stale_grants: u64,
    pub final_leader: Option<AgentId>,
    pub lineage: Vec<AgentId>,
    pub probes: Vec<ProbeRecord>,
}

/// One recovery probe and what the prober knew when sending it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub agent: AgentId,
    pub order: Vec<AgentId>,
    pub belief: AgentId,
    pub lineage: Vec<AgentId>,
}

impl ProbeRecord {
    /// The believed leader may come first; after it every known former
    /// leader, most recent first, precedes everyone else.
    pub fn follows_lineage(&self) -> bool {
        let mut rest = self.order.as_slice();
        if rest.first() == Some(&self.belief) {
            rest = &rest[1..];
        }
        let in_lineage = |a: &AgentId| self.lineage.contains(a) && *a != self.belief;
        let k = rest.iter().take_while(|a| in_lineage(a)).count();
        if rest[k..].iter().any(in_lineage) {
            return false;
        }
        let pos = |a: &AgentId| self.lineage.iter().rposition(|b| b == a);
        rest[..k].windows(2).all(|w| pos(&w[0]) > pos(&w[1]))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashRecord {
    pub agent: AgentId,
    pub tick: u64,
    /// Leader (or grant recipient) at the time of the crash.
    pub was_leader: bool,
    /// Lineage of the crashed node, most recent last.
    pub lineage: Vec<AgentId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub scenario: String,
    pub seed: u64,
    pub team_size: usize,
    pub max_steps: u64,
    pub targets: Vec<TargetOutcome>,
    pub ticks: u64,
    pub done: String,
    pub path_lengths: BTreeMap<AgentId, u64>,
    pub messages: MessageStats,
    pub protocol: ProtocolStats,
    pub degradations: u64,
    pub crashes: Vec<CrashRecord>,
    pub verdicts: Verdicts,
    /// Excluded from determinism comparisons.
    pub wall_clock_ms: u64,
}

impl EpisodeReport {
    pub fn successes(&self) -> usize {
        self.targets.iter().filter(|t| t.outcome == Outcome::Success).count()
    }

    pub fn all_found(&self) -> bool {
        self.successes() == self.targets.len()
    }

    /// The report with the wall clock zeroed.
    pub fn comparable(&self) -> EpisodeReport {
        EpisodeReport {
            wall_clock_ms: 0,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug)]
pub struct EpisodeOutput {
    pub report: EpisodeReport,
    pub messages_tsv: String,
    pub trace: String,
}

struct Run<'a> {
    cfg: &'a RunConfig,
    world: World,
    agents: BTreeMap<AgentId, AgentCtl>,
    net: Network,
    oracle: &'a mut dyn Oracle,
    describer: &'a dyn RoomDescriber,
    table: &'a CooccurrenceTable,
    goals: Vec<String>,
    rng: ChaCha8Rng,
    verdicts: Verdicts,
    crashed: bool,
    pending_crashes: Vec<(CrashTarget, u64)>,
    crashes: Vec<CrashRecord>,
    stats: MessageStats,
    protocol: ProtocolStats,
    degradations: u64,
    outcomes: BTreeMap<String, TargetOutcome>,
    /// Messages taken off the network this tick and not yet processed.
    batch: VecDeque<Envelope>,
    // Per-tick scratch for the trace.
    node_events: Vec<(AgentId, NodeEvent)>,
    leader_checks: Vec<usize>,
}

impl Run<'_> {
    fn alive(&self, a: AgentId) -> bool {
        self.world.pose(a).is_ok_and(|p| p.alive)
    }

    /// Alive nodes that lead plus leadership grants travelling to alive
    /// agents.
    fn leader_count(&self) -> usize {
        let nodes = self.agents.values().filter(|c| c.node.leader && self.alive(c.id)).count();
        let grants = self
            .net
            .in_flight()
            .chain(self.batch.iter())
            .filter(|e| matches!(e.payload, Payload::LeaderResponse(_)) && self.alive(e.receiver))
            .count();
        nodes + grants
    }

    fn flush(&mut self, now: u64, from: AgentId, out: Outbox) {
        for (to, payload) in out.messages {
            self.net.send(now, from, to, payload);
        }
        for e in out.events {
            match &e {
                NodeEvent::Directive { degraded: true, .. } => self.degradations += 1,
                NodeEvent::RecoveryStarted => self.protocol.recoveries += 1,
                NodeEvent::Elected { .. } => self.protocol.elections += 1,
                NodeEvent::Stale { .. } => self.protocol.stale_grants += 1,
                NodeEvent::Probed { order, belief, lineage } => self.protocol.probes.push(ProbeRecord {
                    agent: from,
                    order: order.clone(),
                    belief: *belief,
                    lineage: lineage.clone(),
                }),
                _ => {}
            }
            if let Some(ctl) = self.agents.get_mut(&from) {
                ctl.on_event(now, &e);
            }
            self.node_events.push((from, e));
        }
        let count = self.leader_count();
        self.leader_checks.push(count);
        self.verdicts.check_leaders(count, self.crashed);
    }

    fn crash_due(&mut self, now: u64) -> Vec<WorldEvent> {
        let mut events = Vec::new();
        let due: Vec<CrashTarget> = self
            .pending_crashes
            .iter()
            .filter(|(_, t)| *t == now)
            .map(|(c, _)| *c)
            .collect();
        self.pending_crashes.retain(|(_, t)| *t != now);
        for target in due {
            let victim = match target {
                CrashTarget::Agent(a) => Some(a),
                CrashTarget::Leader => self
                    .agents
                    .values()
                    .find(|c| c.node.leader && self.alive(c.id))
                    .map(|c| c.id)
                    .or_else(|| {
                        self.net
                            .in_flight()
                            .find(|e| matches!(e.payload, Payload::LeaderResponse(_)) && self.alive(e.receiver))
                            .map(|e| e.receiver)
                    }),
            };
            let Some(victim) = victim.filter(|a| self.alive(*a)) else {
                continue;
            };
            let Ok(e) = self.world.kill(victim) else { continue };
            let ctl = &self.agents[&victim];
            let was_leader = ctl.node.leader
                || self
                    .net
                    .in_flight()
                    .any(|e| e.receiver == victim && matches!(e.payload, Payload::LeaderResponse(_)));
            self.crashes.push(CrashRecord {
                agent: victim,
                tick: now,
                was_leader,
                lineage: ctl.node.lineage.clone(),
            });
            self.crashed = true;
            events.push(e);
        }
        events
    }

    fn deliver(&mut self, now: u64) {
        self.batch = self.net.take_due(now).into();
        while let Some(env) = self.batch.pop_front() {
            if !self.alive(env.receiver) {
                continue;
            }
            let mut out = Outbox::default();
            let ctl = self.agents.get_mut(&env.receiver).expect("receiver exists");
            ctl.node.receive(now, &env, self.oracle, &mut out);
            self.flush(now, env.receiver, out);
        }
    }

    fn request_help(&mut self, now: u64, id: AgentId) {
        let ctl = self.agents.get_mut(&id).expect("agent exists");
        let (ctx, contribution) = ctl.member_context(now, &self.goals, self.table);
        ctl.mark_requested(now);
        match self.oracle.propose(&ctx) {
            Ok(d) => {
                self.degradations += u64::from(d.degraded);
                let ctl = self.agents.get_mut(&id).expect("agent exists");
                ctl.set_proposal(d.value.clone());
                let mut out = Outbox::default();
                ctl.node.request(now, d.value, ctx.options, contribution, self.oracle, &mut out);
                self.stats.triggers += 1;
                self.flush(now, id, out);
            }
            Err(OracleError::NoCandidateRooms) => {}
            Err(_) => self.degradations += 1,
        }
    }

    fn agent_phase(&mut self, now: u64) -> Result<BTreeMap<AgentId, Action>, HarnessError> {
        let mut actions = BTreeMap::new();
        let ids: Vec<AgentId> = self.agents.keys().copied().collect();
        for id in ids {
            if !self.alive(id) {
                continue;
            }
            let obs = self.world.sense(id).map_err(|e| HarnessError::World(e.to_string()))?;
            {
                let ctl = self.agents.get_mut(&id).expect("agent exists");
                ctl.perceive(&obs);
                let mut out = Outbox::default();
                ctl.node.tick(now, self.oracle, &mut out);
                self.flush(now, id, out);
            }
            let ctl = self.agents.get_mut(&id).expect("agent exists");
            self.degradations += ctl.refresh_rooms(self.describer) as u64;
            if ctl.wants_help(now) {
                let at = *ctl
                    .trigger_at
                    .get_or_insert_with(|| now + self.rng.random_range(0..=self.cfg.trigger_jitter));
                if now >= at {
                    self.request_help(now, id);
                }
            } else {
                ctl.trigger_at = None;
            }
            let ctl = self.agents.get_mut(&id).expect("agent exists");
            actions.insert(id, ctl.act(now, &obs));
        }
        Ok(actions)
    }

    fn on_world_events(&mut self, events: &[WorldEvent]) {
        for e in events {
            match e {
                WorldEvent::Moved { agent, .. } => {
                    if let Some(c) = self.agents.get_mut(agent) {
                        c.path_length += 1;
                    }
                }
                WorldEvent::Subtask(o) => {
                    let class = o.declared_class.clone();
                    if let Some(t) = self.outcomes.get_mut(&class) {
                        match o.result {
                            SubtaskResult::Success => {
                                t.outcome = Outcome::Success;
                                t.tick = Some(o.tick);
                                t.agent = Some(o.agent);
                            }
                            SubtaskResult::Failure => {
                                t.failed_declares += 1;
                                if t.outcome != Outcome::Success {
                                    t.outcome = Outcome::Failure;
                                    t.tick = Some(o.tick);
                                    t.agent = Some(o.agent);
                                }
                            }
                        }
                    }
                    let Some(ctl) = self.agents.get_mut(&o.agent) else { continue };
                    let near = ctl
                        .map
                        .instances(&class)
                        .is_some_and(|s| s.iter().any(|p| p.manhattan(ctl.cell()) <= 1));
                    // Failing next to a seen instance means a teammate got there first.
                    if o.result == SubtaskResult::Success || near {
                        ctl.note_found(&class);
                    }
                }
                _ => {}
            }
        }
    }

    fn quiescent_view(&self) -> Option<QuiescentView> {
        let busy = self
            .agents
            .values()
            .any(|c| self.alive(c.id) && (c.node.awaiting() || c.node.recovering()));
        if !self.net.is_idle() || busy {
            return None;
        }
        let holdings = self
            .agents
            .values()
            .filter(|c| self.alive(c.id))
            .map(|c| (c.id, c.node.holding.clone()))
            .collect();
        let leader = self.agents.values().find(|c| c.node.leader && self.alive(c.id));
        let leader_view = leader.map(|l| {
            l.node
                .state
                .agents
                .iter()
                .filter(|(a, e)| e.alive && self.alive(**a))
                .map(|(a, e)| {
                    (
                        *a,
                        LeaderEntry {
                            assigned: e.assigned,
                            locks: l.node.progress.locks_of(*a),
                        },
                    )
                })
                .collect()
        });
        Some(QuiescentView {
            holdings,
            leader_view,
            remaining: self.world.targets().remaining().clone(),
        })
    }
}

/// Plays one episode to completion.
pub fn run_episode(
    cfg: &RunConfig,
    mut world: World,
    oracle: &mut dyn Oracle,
    describer: &dyn RoomDescriber,
) -> Result<EpisodeOutput, HarnessError> {
    let started = Instant::now();
    if let Some(n) = cfg.team_size {
        if n == 0 || n > world.team_size() {
            return Err(HarnessError::Config(format!(
                "team size {n} outside 1..={}",
                world.team_size()
            )));
        }
        world.truncate_team(n);
    }
    if let Some(m) = cfg.max_steps {
        world.max_steps = m;
    }
    let goals = world.targets().classes().to_vec();
    let starts: BTreeMap<AgentId, _> = world
        .agent_ids()
        .map(|a| (a, world.pose(a).expect("agent exists").cell))
        .collect();
    let n = starts.len();
    let timing = Timing::new(n, cfg.network.max_latency);
    let (w, h) = (world.grid().width(), world.grid().height());
    let agents = starts
        .keys()
        .map(|&a| (a, AgentCtl::new(a, w, h, &starts, &goals, timing)))
        .collect();
    let outcomes = goals
        .iter()
        .map(|c| {
            (
                c.clone(),
                TargetOutcome {
                    class: c.clone(),
                    outcome: Outcome::Timeout,
                    tick: None,
                    agent: None,
                    failed_declares: 0,
                },
            )
        })
        .collect();
    let mut run = Run {
        cfg,
        net: Network::new(cfg.seed, cfg.network.min_latency, cfg.network.max_latency),
        agents,
        oracle,
        describer,
        table: CooccurrenceTable::bundled(),
        goals: goals.clone(),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15),
        verdicts: Verdicts::default(),
        crashed: false,
        pending_crashes: cfg.crash.iter().map(|c| (c.target, c.tick)).collect(),
        crashes: Vec::new(),
        stats: MessageStats::default(),
        protocol: ProtocolStats::default(),
        degradations: 0,
        outcomes,
        batch: VecDeque::new(),
        node_events: Vec::new(),
        leader_checks: Vec::new(),
        world,
    };

    let mut trace = TraceWriter::default();
    trace.push(
        RecordKind::Header,
        &json!({
            "scenario": run.world.name,
            "seed": cfg.seed,
            "team_size": n,
            "max_steps": run.world.max_steps,
            "width": w,
            "height": h,
            "targets": goals,
            "network": cfg.network,
            "crash": cfg.crash,
            "trigger_jitter": cfg.trigger_jitter,
        }),
    );

    // Tick 0: the initial leader announces itself.
    let first = *starts.keys().next().expect("team is not empty");
    let mut out = Outbox::default();
    run.agents[&first].node.bootstrap(&mut out);
    run.flush(0, first, out);

    let done = loop {
        let now = run.world.tick();
        let mut world_events = run.crash_due(now);
        if !run.agents.keys().any(|a| run.alive(*a)) {
            break "team_lost".to_string();
        }
        run.deliver(now);
        let actions = run.agent_phase(now)?;
        let poses = run
            .agents
            .keys()
            .map(|&a| (a, run.world.pose(a).expect("agent exists")))
            .collect();
        let stepped = run
            .world
            .step(&actions)
            .map_err(|e| HarnessError::World(e.to_string()))?;
        run.on_world_events(&stepped);
        world_events.extend(stepped);
        let quiescent = run.quiescent_view();
        if let Some(q) = &quiescent {
            run.verdicts.check_quiescent(q);
        }
        let leader = run
            .agents
            .values()
            .find(|c| c.node.leader && run.alive(c.id))
            .map(|c| c.id);
        let data = TickData {
            tick: now,
            poses,
            actions,
            world_events,
            node_events: std::mem::take(&mut run.node_events),
            sent: run.net.log.iter().filter(|e| e.tick == now).cloned().collect(),
            leader_checks: std::mem::take(&mut run.leader_checks),
            crashed: run.crashed,
            leader,
            known_cells: run.agents.iter().map(|(a, c)| (*a, c.map.known_cells())).collect(),
            quiescent,
        };
        trace.push(RecordKind::Tick, &data);
        if let Some(reason) = run.world.done() {
            break match reason {
                DoneReason::AllFound => "all_found".to_string(),
                DoneReason::MaxSteps => "max_steps".to_string(),
            };
        }
    };

    for e in &run.net.log {
        *run.stats.by_kind.entry(e.kind.clone()).or_default() += 1;
    }
    run.stats.total = run.net.log.len() as u64;
    run.stats.interrupts = run.stats.by_kind.get("interrupt").copied().unwrap_or(0);
    let pairs = (n * n.saturating_sub(1)) as u64;
    run.stats.broadcast_baseline = pairs * (run.stats.triggers + 1);

    let leader = run
        .agents
        .values()
        .filter(|c| run.alive(c.id))
        .max_by_key(|c| (c.node.leader, c.node.lineage.len()));
    if let Some(l) = leader {
        run.protocol.final_leader = l.node.leader.then_some(l.id);
        run.protocol.lineage = l.node.lineage.clone();
    }
    // Handoffs are what the surviving lineage records.
    run.protocol.handoffs = run.protocol.lineage.len().saturating_sub(1) as u64;

    let report = EpisodeReport {
        scenario: run.world.name.clone(),
        seed: cfg.seed,
        team_size: n,
        max_steps: run.world.max_steps,
        targets: goals.iter().map(|c| run.outcomes[c].clone()).collect(),
        ticks: run.world.tick(),
        done,
        path_lengths: run.agents.iter().map(|(a, c)| (*a, c.path_length)).collect(),
        messages: run.stats.clone(),
        protocol: run.protocol.clone(),
        degradations: run.degradations,
        crashes: run.crashes.clone(),
        verdicts: run.verdicts,
        wall_clock_ms: started.elapsed().as_millis() as u64,
    };
    trace.push(RecordKind::End, &json!({"report": report.comparable(), "verdicts": report.verdicts}));
    Ok(EpisodeOutput {
        messages_tsv: run.net.log_tsv(),
        trace: trace.to_jsonl(),
        report,
    })
}

/// Ground-truth targets reachable by at least one alive agent at the end.
pub fn reachable_targets(world: &World) -> BTreeSet<String> {
    let mut cells = BTreeSet::new();
    for a in world.agent_ids() {
        if let Ok(p) = world.pose(a) {
            cells.extend(world.reachable_from(p.cell));
        }
    }
    world
        .objects()
        .iter()
        .filter(|o| world.targets().classes().contains(&o.class))
        .filter(|o| o.cell.neighbors4().iter().chain([&o.cell]).any(|c| cells.contains(c)))
        .map(|o| o.class.clone())
        .collect()
}
