//! Randomised invariants across world, mapping, topology, rooms, motion and
//! oracle.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use multinav::grid::{Grid, Heading, Pos};
use multinav::harness::generate::{generate_house, HouseParams};
use multinav::mapping::{Occupancy, SemanticMap};
use multinav::motion::{dijkstra, fmm_on, next_action};
use multinav::oracle::{
    validate_coordination, AgentSummary, Decision, LeaderContext, Proposal, RoomOption, RoomSummary, RuleOracle,
};
use multinav::protocol::state::{GlobalProgress, RoomRef};
use multinav::rooms::{segment, RoomTracker, SegmentParams};
use multinav::topology::{skeletonize, topo_graph, Edge, TopoGraph, Waypoint, DEFAULT_SAMPLE_SPACING};
use multinav::world::{Action, AgentId, Observation, ScenarioDoc, SubtaskResult, Terrain, World, WorldEvent};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn house_doc(seed: u64, agents: usize) -> ScenarioDoc {
    generate_house(
        seed,
        &HouseParams {
            width: 14 + (seed % 7) as usize,
            height: 10 + (seed % 5) as usize,
            agents,
            max_steps: 300,
            ..HouseParams::default()
        },
    )
}

fn house(seed: u64, agents: usize) -> World {
    World::from_doc(&house_doc(seed, agents)).unwrap()
}

fn action(code: u8, class: &str) -> Action {
    match code % 6 {
        0 | 1 => Action::Forward,
        2 => Action::TurnLeft,
        3 => Action::TurnRight,
        4 => Action::Declare(class.to_string()),
        _ => Action::NoOp,
    }
}

/// Observations from a dozen random free cells.
fn observations(seed: u64) -> (World, Vec<Observation>) {
    let mut doc = house_doc(seed, 1);
    let world = World::from_doc(&doc).unwrap();
    let mut cells: Vec<Pos> = world.free_cells().collect();
    cells.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    cells.truncate(12);
    let obs = cells
        .into_iter()
        .map(|c| {
            (doc.agents[0].x, doc.agents[0].y) = (c.x, c.y);
            World::from_doc(&doc).unwrap().sense(AgentId(0)).unwrap()
        })
        .collect();
    (world, obs)
}

fn reachable(map: &SemanticMap, start: Pos) -> BTreeSet<Pos> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(p) = queue.pop_front() {
        for n in p.neighbors4() {
            if map.is_free(n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen
}

/// Nearest waypoint by walking distance through known-free cells.
fn nearest_waypoint(map: &SemanticMap, g: &TopoGraph, start: Pos) -> Option<usize> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(p) = queue.pop_front() {
        if let Some(w) = g.waypoint_at(p) {
            return Some(w);
        }
        for n in p.neighbors4() {
            if map.is_free(n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    None
}

fn bfs_distance(passable: &Grid<bool>, from: Pos, to: Pos) -> Option<usize> {
    let mut dist = BTreeMap::from([(from, 0usize)]);
    let mut queue = VecDeque::from([from]);
    while let Some(p) = queue.pop_front() {
        if p == to {
            return Some(dist[&p]);
        }
        for n in p.neighbors4() {
            if passable.get(n) == Some(&true) && !dist.contains_key(&n) {
                dist.insert(n, dist[&p] + 1);
                queue.push_back(n);
            }
        }
    }
    None
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn world_targets_shrink_and_walls_stay(seed in 0u64..10_000, codes in prop::collection::vec(0u8..6, 1..400)) {
        let mut w = house(seed, 2);
        let walls: Vec<Pos> = w.grid().iter().filter(|(_, t)| **t != Terrain::Free).map(|(p, _)| p).collect();
        let objects = w.objects().to_vec();
        let classes: Vec<String> = objects.iter().map(|o| o.class.clone()).collect();
        let mut remaining = w.targets().remaining().clone();
        let mut log = Vec::new();
        for (i, &c) in codes.iter().enumerate() {
            if w.done().is_some() {
                break;
            }
            let acts: BTreeMap<AgentId, Action> = w
                .agent_ids()
                .collect::<Vec<_>>()
                .into_iter()
                .map(|a| (a, action(c.wrapping_add(a.0 as u8), &classes[i % classes.len()])))
                .collect();
            let events = w.step(&acts).unwrap();
            let now = w.targets().remaining().clone();
            prop_assert!(now.is_subset(&remaining));
            let successes = events.iter().filter(|e| matches!(e, WorldEvent::Subtask(s) if s.result == SubtaskResult::Success)).count();
            prop_assert_eq!(remaining.len() - now.len(), successes);
            remaining = now;
            log.push(events);
        }
        let still: Vec<Pos> = w.grid().iter().filter(|(_, t)| **t != Terrain::Free).map(|(p, _)| p).collect();
        prop_assert_eq!(walls, still);
        prop_assert_eq!(objects, w.objects().to_vec());
        prop_assert!(w.tick() <= w.max_steps);

        // Same actions, same events.
        let mut again = house(seed, 2);
        for (i, &c) in codes.iter().enumerate().take(log.len()) {
            let acts: BTreeMap<AgentId, Action> = again
                .agent_ids()
                .collect::<Vec<_>>()
                .into_iter()
                .map(|a| (a, action(c.wrapping_add(a.0 as u8), &classes[i % classes.len()])))
                .collect();
            prop_assert_eq!(&again.step(&acts).unwrap(), &log[i]);
        }
    }

    #[test]
    fn idle_episodes_end_by_max_steps(seed in 0u64..10_000) {
        let mut w = house(seed, 1);
        let idle = BTreeMap::from([(AgentId(0), Action::NoOp)]);
        while w.done().is_none() {
            w.step(&idle).unwrap();
        }
        prop_assert_eq!(w.tick(), w.max_steps);
    }

    #[test]
    fn mapping_is_sound_monotone_and_order_free(seed in 0u64..10_000, order in 0u64..1000) {
        let (world, obs) = observations(seed);
        let (w, h) = (world.grid().width(), world.grid().height());
        let mut forward = SemanticMap::new(w, h);
        let mut known = 0;
        for o in &obs {
            forward.integrate(o).unwrap();
            prop_assert!(forward.known_cells() >= known);
            known = forward.known_cells();
        }
        for (p, occ) in forward.occupancy().iter() {
            if *occ != Occupancy::Unknown {
                prop_assert_eq!(*occ, Occupancy::from(*world.grid().get(p).unwrap()));
            }
        }
        let mut shuffled = obs.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(order));
        let mut other = SemanticMap::new(w, h);
        for o in &shuffled {
            other.integrate(o).unwrap();
        }
        prop_assert_eq!(forward.occupancy(), other.occupancy());
        prop_assert_eq!(forward.semantics(), other.semantics());
    }

    #[test]
    fn topology_covers_known_space_and_never_disconnects(seed in 0u64..10_000) {
        let (world, obs) = observations(seed);
        let (w, h) = (world.grid().width(), world.grid().height());
        let mut map = SemanticMap::new(w, h);
        for o in &obs[..obs.len() / 2] {
            map.integrate(o).unwrap();
        }
        let skeleton = skeletonize(&map).unwrap();
        prop_assert!(skeleton.iter().all(|p| map.is_free(*p)));
        let before = topo_graph(&map, DEFAULT_SAMPLE_SPACING).unwrap();
        for (p, occ) in map.occupancy().iter() {
            if *occ == Occupancy::Free {
                prop_assert!(nearest_waypoint(&map, &before, p).is_some(), "{p:?} reaches no waypoint");
            }
        }
        let old_map = map.clone();
        for o in &obs[obs.len() / 2..] {
            map.integrate(o).unwrap();
        }
        let after = topo_graph(&map, DEFAULT_SAMPLE_SPACING).unwrap();
        let (old_comp, new_comp) = (before.components(), after.components());
        for a in &before.waypoints {
            for b in &before.waypoints {
                if a.id < b.id && old_comp[a.id] == old_comp[b.id] {
                    let na = nearest_waypoint(&map, &after, a.cell).unwrap();
                    let nb = nearest_waypoint(&map, &after, b.cell).unwrap();
                    prop_assert_eq!(new_comp[na], new_comp[nb]);
                }
            }
        }
        // Waypoints that shared a component were connected through known
        // space, which stays known.
        for a in &before.waypoints {
            prop_assert!(reachable(&map, a.cell).is_superset(&reachable(&old_map, a.cell)));
        }
    }

    #[test]
    fn rooms_partition_and_keep_their_ids(seed in 0u64..10_000) {
        let (world, obs) = observations(seed);
        let (w, h) = (world.grid().width(), world.grid().height());
        let params = SegmentParams::default();
        let mut map = SemanticMap::new(w, h);
        let mut tracker = RoomTracker::new();
        let mut previous: Vec<(multinav::rooms::RoomId, BTreeSet<Pos>)> = Vec::new();
        for o in &obs {
            map.integrate(o).unwrap();
            let rooms = tracker.update(&map, &params).to_vec();
            let mut seen = BTreeSet::new();
            for r in &rooms {
                for p in &r.mask {
                    prop_assert!(seen.insert(*p), "{p:?} in two rooms");
                    prop_assert!(map.is_free(*p));
                }
            }
            // Fragments below room size may merge into a neighbour and lose
            // their id; rooms proper must keep theirs.
            for (id, mask) in previous.iter().filter(|(_, m)| m.len() >= params.min_room_cells) {
                let owner: BTreeMap<Pos, multinav::rooms::RoomId> =
                    rooms.iter().flat_map(|r| r.mask.iter().map(move |p| (*p, r.room_id))).collect();
                let moved = mask.iter().filter(|p| owner.get(p).is_some_and(|o| o != id)).count();
                prop_assert!(moved * 2 <= mask.len(), "room {id} lost {moved} of {} cells", mask.len());
            }
            previous = rooms.iter().map(|r| (r.room_id, r.mask.clone())).collect();
            prop_assert_eq!(segment(&map, &params), segment(&map.clone(), &params));
        }
    }

    #[test]
    fn greedy_descent_reaches_the_goal(
        walls in prop::collection::btree_set((0i32..12, 0i32..12), 0..40),
        goal in (0i32..12, 0i32..12),
        start in (0i32..12, 0i32..12),
        heading in 0u8..4,
    ) {
        let mut passable = Grid::filled(12, 12, true);
        for &(x, y) in &walls {
            passable.set(Pos::new(x, y), false);
        }
        let goal = Pos::new(goal.0, goal.1);
        let start = Pos::new(start.0, start.1);
        passable.set(goal, true);
        passable.set(start, true);
        let field = fmm_on(&passable, &BTreeSet::from([goal])).unwrap();
        prop_assume!(field.at(start).is_finite());
        // Forward moves are 4-connected, so the walk is measured against
        // the 4-connected distance the field bounds from above.
        let budget = bfs_distance(&passable, start, goal).expect("finite field means reachable");
        let (mut cell, mut h) = (start, Heading::new(heading * 3).unwrap());
        let mut forwards = 0;
        for _ in 0..budget * 7 + 7 {
            match next_action(cell, h, &field).unwrap() {
                Action::NoOp => break,
                Action::Forward => {
                    let (dx, dy) = h.step().unwrap();
                    let next = cell.offset(dx, dy);
                    prop_assert!(field.at(next) <= field.at(cell));
                    cell = next;
                    forwards += 1;
                }
                Action::TurnLeft => h = h.left(),
                Action::TurnRight => h = h.right(),
                Action::Declare(_) => unreachable!(),
            }
        }
        prop_assert_eq!(cell, goal);
        prop_assert!(forwards <= budget);
    }

    #[test]
    fn dijkstra_matches_bellman_ford(n in 2usize..9, raw in prop::collection::vec((0usize..9, 0usize..9, 1u32..20), 0..20), src in 0usize..9, dst in 0usize..9) {
        let (src, dst) = (src % n, dst % n);
        let mut edges = Vec::new();
        let mut seen = BTreeSet::new();
        for (a, b, l) in raw {
            let (a, b) = (a % n, b % n);
            if a != b && seen.insert((a.min(b), a.max(b))) {
                edges.push(Edge { a, b, length: l });
            }
        }
        let g = TopoGraph {
            waypoints: (0..n).map(|i| Waypoint { id: i, cell: Pos::new(i as i32, 0), clearance: 1 }).collect(),
            edges,
        };
        let mut dist = vec![u64::MAX; n];
        dist[src] = 0;
        for _ in 0..n {
            for e in &g.edges {
                for (u, v) in [(e.a, e.b), (e.b, e.a)] {
                    if dist[u] != u64::MAX && dist[u] + u64::from(e.length) < dist[v] {
                        dist[v] = dist[u] + u64::from(e.length);
                    }
                }
            }
        }
        match dijkstra(&g, src, dst) {
            Ok(path) => {
                prop_assert_eq!(path[0], src);
                prop_assert_eq!(*path.last().unwrap(), dst);
                let cost: u64 = path
                    .windows(2)
                    .map(|w| g.edges.iter().filter(|e| (e.a, e.b) == (w[0], w[1]) || (e.b, e.a) == (w[0], w[1])).map(|e| u64::from(e.length)).min().unwrap())
                    .sum();
                prop_assert_eq!(cost, dist[dst]);
            }
            Err(_) => prop_assert_eq!(dist[dst], u64::MAX),
        }
    }
}

const LABELS: [&str; 5] = ["bedroom", "bathroom", "kitchen", "living room", "unknown room"];
const TARGETS: [&str; 5] = ["bed", "toilet", "tv", "refrigerator", "sofa"];

prop_compose! {
    fn leader_context()(
        rooms in 2usize..7,
        agents in 2u32..6,
        picks in prop::collection::vec((0usize..8, 0usize..5, 0u8..4), 6),
        want in 0usize..8,
        want_locks in prop::collection::btree_set(0usize..5, 0..3),
        seed in 0u64..1000,
    ) -> LeaderContext {
        let room = |i: usize| RoomRef::Room(Pos::new((i % rooms) as i32 * 4, 2));
        let goals: Vec<String> = TARGETS.iter().map(|s| s.to_string()).collect();
        let mut progress = GlobalProgress::new(&goals);
        let mut taken = BTreeSet::new();
        let mut summaries = Vec::new();
        for a in 0..agents {
            let (r, t, mode) = picks[a as usize];
            let assigned = (mode != 0 && a != 0 && taken.insert(r % rooms)).then(|| room(r));
            if mode == 2 && a != 0 {
                progress.lock(TARGETS[t], AgentId(a));
            }
            if mode == 3 {
                progress.mark_found(TARGETS[(t + 1) % 5]);
            }
            summaries.push(AgentSummary { agent: AgentId(a), cell: Pos::new(a as i32, 0), assigned, alive: true });
        }
        let remaining = progress.remaining();
        let room_summaries: Vec<RoomSummary> = (0..rooms)
            .map(|i| {
                let label = LABELS[(i + seed as usize) % 5];
                RoomSummary {
                    room: room(i),
                    label: label.into(),
                    explored: 0.3,
                    cells: 12,
                    objects: vec![],
                    likely: vec![],
                    text: String::new(),
                }
            })
            .collect();
        let options = room_summaries
            .iter()
            .enumerate()
            .map(|(i, r)| RoomOption { room: r.room, label: r.label.clone(), explored: r.explored, distance: 1.0 + i as f64 })
            .collect();
        let locks = want_locks.iter().map(|i| TARGETS[*i].to_string()).filter(|t| remaining.contains(t)).collect();
        LeaderContext {
            proposal: Proposal { agent: AgentId(0), locks, action: Some(room(want)), thoughts: String::new() },
            options,
            progress,
            version: 3,
            agents: summaries,
            rooms: room_summaries,
            goals,
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn rule_coordination_is_valid_and_pure(ctx in leader_context()) {
        let o = RuleOracle::default();
        let r = o.coordinate_rule(&ctx);
        prop_assert_eq!(&r, &o.coordinate_rule(&ctx));
        prop_assert!(validate_coordination(&ctx, &r).is_ok(), "{:?}", validate_coordination(&ctx, &r));
        let d = r.requester();
        if d.decision == Some(Decision::Oppose) {
            prop_assert_ne!(d.action, ctx.proposal.action);
            let standing: BTreeSet<RoomRef> = ctx
                .agents
                .iter()
                .filter(|a| a.agent != ctx.proposal.agent && !r.interrupts().iter().any(|i| i.agent == a.agent))
                .filter_map(|a| a.assigned)
                .collect();
            prop_assert!(d.action.is_none_or(|a| !standing.contains(&a)));
        }
    }
}
