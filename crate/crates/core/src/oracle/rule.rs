//! Deterministic proposals and coordination from co-occurrence scores.

use std::collections::{BTreeMap, BTreeSet};

use crate::grid::Pos;
use crate::protocol::state::RoomRef;
use crate::rooms::{CooccurrenceTable, UNKNOWN_ROOM};
use crate::world::AgentId;

use super::{
    AgentDirective, CoordinationResult, Decided, Decision, LeaderContext, MemberContext, Oracle,
    OracleError, Proposal,
};

#[derive(Clone, Debug)]
pub struct RuleOracle {
    table: CooccurrenceTable,
}

impl Default for RuleOracle {
    fn default() -> Self {
        Self::new(CooccurrenceTable::bundled().clone())
    }
}

struct Candidate {
    room: RoomRef,
    label: String,
    distance: f64,
}

impl RuleOracle {
    pub fn new(table: CooccurrenceTable) -> Self {
        Self { table }
    }

    fn score(&self, label: &str, pool: &BTreeSet<String>, distance: f64) -> f64 {
        pool.iter().map(|t| self.table.weight(label, t)).sum::<f64>() / (1.0 + distance)
    }

    fn likely(&self, label: &str, pool: &BTreeSet<String>) -> BTreeSet<String> {
        pool.iter()
            .filter(|t| self.table.weight(label, t) > 0.0)
            .cloned()
            .collect()
    }

    /// Highest score; ties to the smaller room reference.
    fn best<'a>(&self, cands: impl Iterator<Item = &'a Candidate>, pool: &BTreeSet<String>) -> Option<(&'a Candidate, f64)> {
        let mut best: Option<(&Candidate, f64)> = None;
        for c in cands {
            let s = self.score(&c.label, pool, c.distance);
            let better = match best {
                None => true,
                Some((b, bs)) => s > bs || (s == bs && c.room < b.room),
            };
            if better {
                best = Some((c, s));
            }
        }
        best
    }

    /// Best option for the remaining targets not locked by teammates, and
    /// locks on the ones that room is likely to hold.
    pub fn propose_rule(&self, ctx: &MemberContext) -> Result<Proposal, OracleError> {
        let remaining = ctx.progress.remaining();
        let others = ctx.progress.locked_by_others(ctx.agent);
        let free: BTreeSet<String> = remaining.difference(&others).cloned().collect();
        let pool = if free.is_empty() { remaining.clone() } else { free.clone() };
        let cands: Vec<Candidate> = ctx
            .options
            .iter()
            .map(|o| Candidate {
                room: o.room,
                label: o.label.clone(),
                distance: o.distance,
            })
            .collect();
        let (best, score) = self.best(cands.iter(), &pool).ok_or(OracleError::NoCandidateRooms)?;
        let locks = self.likely(&best.label, &free);
        Ok(Proposal {
            agent: ctx.agent,
            thoughts: format!(
                "{} ({}) scores {score:.3} for {}",
                best.room,
                best.label,
                join(&pool)
            ),
            locks,
            action: Some(best.room),
        })
    }

    /// Approves the proposal when it clashes with nobody; otherwise steers
    /// the requester to the best free room. Teammates whose room has lost
    /// every likely target to other locks are redirected.
    pub fn coordinate_rule(&self, ctx: &LeaderContext) -> CoordinationResult {
        let i = ctx.requester();
        let p = &ctx.proposal;
        let mut progress = ctx.progress.clone();
        progress.release(i);
        let remaining = progress.remaining();
        let others_locks = progress.locked_by_others(i);
        let mut assigned: BTreeMap<RoomRef, AgentId> = ctx
            .agents
            .iter()
            .filter(|a| a.alive && a.agent != i)
            .filter_map(|a| a.assigned.map(|r| (r, a.agent)))
            .collect();
        let requester_cell = ctx
            .agents
            .iter()
            .find(|a| a.agent == i)
            .map(|a| a.cell);

        let room_conflict = p.action.is_some_and(|a| assigned.contains_key(&a));
        // Stale locks on found targets are trimmed, not opposed.
        let lock_conflict = p.locks.iter().any(|t| others_locks.contains(t));
        let trimmed: BTreeSet<String> = p
            .locks
            .iter()
            .filter(|t| remaining.contains(*t) && !others_locks.contains(*t))
            .cloned()
            .collect();
        let free: BTreeSet<String> = remaining.difference(&others_locks).cloned().collect();
        let pool = if free.is_empty() { remaining.clone() } else { free.clone() };

        let cands = self.candidates(ctx, requester_cell, &assigned);
        let (decision, action, locks, thoughts) = if room_conflict || lock_conflict {
            let alt = self.best(cands.iter().filter(|c| Some(c.room) != p.action), &pool);
            match alt {
                Some((c, s)) => (
                    Decision::Oppose,
                    Some(c.room),
                    self.likely(&c.label, &free),
                    format!("{} clashes with a teammate; {} scores {s:.3}", show(p.action), c.room),
                ),
                None if !room_conflict => (
                    Decision::Support,
                    p.action,
                    trimmed,
                    "no alternative; keeping the room with unclaimed locks only".to_string(),
                ),
                None => (
                    Decision::Oppose,
                    None,
                    BTreeSet::new(),
                    format!("{} is taken and nothing else is free", show(p.action)),
                ),
            }
        } else {
            (Decision::Support, p.action, trimmed, format!("{} is free", show(p.action)))
        };

        for t in &locks {
            progress.lock(t, i);
        }
        if let Some(a) = action {
            assigned.insert(a, i);
        }
        let mut directives = vec![AgentDirective {
            agent: i,
            action,
            decision: Some(decision),
            interrupt: false,
            locks: locks.clone(),
            thoughts,
        }];

        for j in ctx.agents.iter().filter(|a| a.alive && a.agent != i) {
            let Some(room @ RoomRef::Room(_)) = j.assigned else {
                continue;
            };
            let label = self.label_of(ctx, room);
            let likely = self.likely(&label, &remaining);
            let elsewhere = progress.locked_by_others(j.agent);
            if likely.is_empty() || !likely.is_subset(&elsewhere) || likely.is_disjoint(&locks) {
                continue;
            }
            let mut trial = progress.clone();
            trial.release(j.agent);
            let unclaimed: BTreeSet<String> = trial
                .remaining()
                .difference(&trial.locked_by_others(j.agent))
                .cloned()
                .collect();
            let open: Vec<Candidate> = ctx
                .rooms
                .iter()
                .filter(|r| r.explored < 1.0 && r.room != room && !assigned.contains_key(&r.room))
                .map(|r| Candidate {
                    room: r.room,
                    label: r.label.clone(),
                    distance: j.cell.euclidean(r.room.cell()),
                })
                .collect();
            let Some((c, s)) = self.best(open.iter(), &unclaimed) else {
                continue;
            };
            if s <= 0.0 {
                continue;
            }
            let new_locks = self.likely(&c.label, &unclaimed);
            progress.release(j.agent);
            for t in &new_locks {
                progress.lock(t, j.agent);
            }
            assigned.retain(|_, a| *a != j.agent);
            assigned.insert(c.room, j.agent);
            directives.push(AgentDirective {
                agent: j.agent,
                action: Some(c.room),
                decision: None,
                interrupt: true,
                locks: new_locks,
                thoughts: format!("every likely target of {room} is locked elsewhere; {} scores {s:.3}", c.room),
            });
        }
        CoordinationResult { directives }
    }

    fn label_of(&self, ctx: &LeaderContext, room: RoomRef) -> String {
        ctx.rooms
            .iter()
            .find(|r| r.room == room)
            .map(|r| r.label.clone())
            .or_else(|| ctx.options.iter().find(|o| o.room == room).map(|o| o.label.clone()))
            .unwrap_or_else(|| UNKNOWN_ROOM.to_string())
    }

    /// Unfinished registered rooms and the requester's own options, minus
    /// rooms teammates hold.
    fn candidates(&self, ctx: &LeaderContext, from: Option<Pos>, assigned: &BTreeMap<RoomRef, AgentId>) -> Vec<Candidate> {
        let mut out: BTreeMap<RoomRef, Candidate> = BTreeMap::new();
        for o in &ctx.options {
            out.insert(
                o.room,
                Candidate {
                    room: o.room,
                    label: o.label.clone(),
                    distance: o.distance,
                },
            );
        }
        for r in ctx.rooms.iter().filter(|r| r.explored < 1.0) {
            out.entry(r.room).or_insert_with(|| Candidate {
                room: r.room,
                label: r.label.clone(),
                distance: from.map_or(0.0, |c| c.euclidean(r.room.cell())),
            });
        }
        out.into_values().filter(|c| !assigned.contains_key(&c.room)).collect()
    }
}

fn join(s: &BTreeSet<String>) -> String {
    s.iter().cloned().collect::<Vec<_>>().join(", ")
}

fn show(a: Option<RoomRef>) -> String {
    a.map_or_else(|| "none".to_string(), |r| r.to_string())
}

impl Oracle for RuleOracle {
    fn propose(&mut self, ctx: &MemberContext) -> Result<Decided<Proposal>, OracleError> {
        Ok(Decided {
            value: self.propose_rule(ctx)?,
            degraded: false,
        })
    }

    fn coordinate(&mut self, ctx: &LeaderContext) -> Result<Decided<CoordinationResult>, OracleError> {
        Ok(Decided {
            value: self.coordinate_rule(ctx),
            degraded: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{validate_coordination, AgentSummary, MemberState, RoomOption, RoomSummary};
    use crate::protocol::state::GlobalProgress;

    fn targets(ts: &[&str]) -> Vec<String> {
        ts.iter().map(|s| s.to_string()).collect()
    }

    fn option(x: i32, label: &str, d: f64) -> RoomOption {
        RoomOption {
            room: RoomRef::Room(Pos::new(x, 0)),
            label: label.into(),
            explored: 0.5,
            distance: d,
        }
    }

    fn summary(x: i32, label: &str) -> RoomSummary {
        RoomSummary {
            room: RoomRef::Room(Pos::new(x, 0)),
            label: label.into(),
            explored: 0.5,
            cells: 20,
            objects: vec![],
            likely: vec![],
            text: String::new(),
        }
    }

    fn agent(a: u32, x: i32, assigned: Option<RoomRef>) -> AgentSummary {
        AgentSummary {
            agent: AgentId(a),
            cell: Pos::new(x, 0),
            assigned,
            alive: true,
        }
    }

    fn member(progress: GlobalProgress, options: Vec<RoomOption>) -> MemberContext {
        MemberContext {
            agent: AgentId(0),
            progress,
            state: MemberState {
                cell: Pos::new(0, 0),
                current_room: None,
                assigned: None,
                rooms: vec![],
            },
            goals: targets(&["toilet", "tv"]),
            history: vec![],
            options,
        }
    }

    #[test]
    fn proposal_prefers_likely_room_and_locks_its_targets() {
        let p = GlobalProgress::new(&targets(&["toilet", "tv"]));
        let ctx = member(p, vec![option(10, "bathroom", 8.0), option(20, "living room", 8.0)]);
        let prop = RuleOracle::default().propose_rule(&ctx).unwrap();
        let table = CooccurrenceTable::bundled();
        let bath = table.weight("bathroom", "toilet") + table.weight("bathroom", "tv");
        let living = table.weight("living room", "toilet") + table.weight("living room", "tv");
        let want = if bath > living { 10 } else { 20 };
        assert_eq!(prop.action, Some(RoomRef::Room(Pos::new(want, 0))));
        assert!(!prop.locks.is_empty());
    }

    #[test]
    fn single_option_is_chosen_whatever_its_score() {
        let p = GlobalProgress::new(&targets(&["tv"]));
        let ctx = member(p, vec![option(7, "bathroom", 40.0)]);
        let prop = RuleOracle::default().propose_rule(&ctx).unwrap();
        assert_eq!(prop.action, Some(RoomRef::Room(Pos::new(7, 0))));
    }

    #[test]
    fn far_bedroom_against_near_unknown_room() {
        let p = GlobalProgress::new(&targets(&["tv"]));
        let ctx = member(p, vec![option(10, "bedroom", 10.0), option(2, UNKNOWN_ROOM, 2.0)]);
        let table = CooccurrenceTable::bundled();
        let bedroom = table.weight("bedroom", "tv") / 11.0;
        let unknown = table.weight(UNKNOWN_ROOM, "tv") / 3.0;
        let want = if bedroom > unknown { 10 } else { 2 };
        let prop = RuleOracle::default().propose_rule(&ctx).unwrap();
        assert_eq!(prop.action, Some(RoomRef::Room(Pos::new(want, 0))));
    }

    #[test]
    fn proposals_are_pure() {
        let p = GlobalProgress::new(&targets(&["toilet", "tv"]));
        let ctx = member(p, vec![option(10, "bathroom", 3.0), option(20, "living room", 5.0)]);
        let o = RuleOracle::default();
        assert_eq!(o.propose_rule(&ctx), o.propose_rule(&ctx));
    }

    #[test]
    fn no_options_is_an_error() {
        let p = GlobalProgress::new(&targets(&["tv"]));
        assert_eq!(
            RuleOracle::default().propose_rule(&member(p, vec![])),
            Err(OracleError::NoCandidateRooms)
        );
    }

    #[test]
    fn conflicting_room_is_opposed_with_alternative() {
        let mut progress = GlobalProgress::new(&targets(&["toilet", "tv"]));
        progress.lock("tv", AgentId(1));
        let taken = RoomRef::Room(Pos::new(10, 0));
        let ctx = LeaderContext {
            proposal: Proposal {
                agent: AgentId(0),
                locks: BTreeSet::from(["tv".to_string()]),
                action: Some(taken),
                thoughts: String::new(),
            },
            options: vec![option(10, "living room", 3.0), option(20, "bathroom", 6.0)],
            progress,
            version: 3,
            agents: vec![agent(0, 0, None), agent(1, 9, Some(taken))],
            rooms: vec![summary(10, "living room"), summary(20, "bathroom")],
            goals: targets(&["toilet", "tv"]),
        };
        let r = RuleOracle::default().coordinate_rule(&ctx);
        validate_coordination(&ctx, &r).unwrap();
        let d = r.requester();
        assert_eq!(d.decision, Some(Decision::Oppose));
        assert_eq!(d.action, Some(RoomRef::Room(Pos::new(20, 0))));
        assert!(!d.locks.contains("tv"));
    }

    #[test]
    fn clean_proposal_is_supported() {
        let progress = GlobalProgress::new(&targets(&["toilet"]));
        let want = RoomRef::Room(Pos::new(20, 0));
        let ctx = LeaderContext {
            proposal: Proposal {
                agent: AgentId(0),
                locks: BTreeSet::from(["toilet".to_string()]),
                action: Some(want),
                thoughts: String::new(),
            },
            options: vec![option(20, "bathroom", 6.0)],
            progress,
            version: 1,
            agents: vec![agent(0, 0, None), agent(1, 9, None)],
            rooms: vec![summary(20, "bathroom")],
            goals: targets(&["toilet"]),
        };
        let r = RuleOracle::default().coordinate_rule(&ctx);
        validate_coordination(&ctx, &r).unwrap();
        assert_eq!(r.directives.len(), 1);
        assert_eq!(r.requester().decision, Some(Decision::Support));
        assert_eq!(r.requester().action, Some(want));
    }

    #[test]
    fn teammate_with_no_likely_targets_left_is_interrupted() {
        // Agent 1 heads for a bathroom without locks; agent 0 locks the
        // toilet for another bathroom while a bedroom is still open.
        let progress = GlobalProgress::new(&targets(&["toilet", "bed"]));
        let bath_a = RoomRef::Room(Pos::new(10, 0));
        let bath_b = RoomRef::Room(Pos::new(20, 0));
        let table = CooccurrenceTable::bundled();
        assert!(table.weight("bathroom", "bed") == 0.0 && table.weight("bedroom", "bed") > 0.0);
        let ctx = LeaderContext {
            proposal: Proposal {
                agent: AgentId(0),
                locks: BTreeSet::from(["toilet".to_string()]),
                action: Some(bath_b),
                thoughts: String::new(),
            },
            options: vec![option(20, "bathroom", 2.0)],
            progress,
            version: 1,
            agents: vec![agent(0, 19, None), agent(1, 9, Some(bath_a))],
            rooms: vec![summary(10, "bathroom"), summary(20, "bathroom"), summary(30, "bedroom")],
            goals: targets(&["toilet", "bed"]),
        };
        let r = RuleOracle::default().coordinate_rule(&ctx);
        validate_coordination(&ctx, &r).unwrap();
        assert_eq!(r.requester().decision, Some(Decision::Support));
        assert_eq!(r.interrupts().len(), 1);
        let j = &r.interrupts()[0];
        assert_eq!(j.agent, AgentId(1));
        assert_eq!(j.action, Some(RoomRef::Room(Pos::new(30, 0))));
        assert!(j.locks.contains("bed"));
    }
}
