//! Rendered prompts for fixed contexts must match the stored files byte for
//! byte. Set `UPDATE_GOLDEN=1` to rewrite them after an intended change.

use std::collections::BTreeSet;
use std::path::PathBuf;

use multinav::grid::Pos;
use multinav::oracle::{
    parse_leader_prompt, parse_member_prompt, render_leader_prompt, render_member_prompt, AgentDirective,
    AgentSummary, Decision, HistoryEntry, LeaderContext, MemberContext, MemberState, Proposal, RoomOption,
    RoomSummary,
};
use multinav::protocol::state::{GlobalProgress, RoomRef};
use multinav::world::AgentId;

fn goals() -> Vec<String> {
    ["bed", "toilet", "tv"].iter().map(|s| s.to_string()).collect()
}

fn progress() -> GlobalProgress {
    let mut p = GlobalProgress::new(&goals());
    p.mark_found("toilet");
    p.lock("bed", AgentId(0));
    p
}

fn bedroom() -> RoomSummary {
    RoomSummary {
        room: RoomRef::Room(Pos::new(4, 3)),
        label: "bedroom".into(),
        explored: 0.5,
        cells: 24,
        objects: vec!["pillow".into()],
        likely: vec!["bed".into(), "tv".into()],
        text: "a bedroom with a pillow".into(),
    }
}

fn options() -> Vec<RoomOption> {
    vec![
        RoomOption {
            room: RoomRef::Room(Pos::new(4, 3)),
            label: "bedroom".into(),
            explored: 0.5,
            distance: 6.5,
        },
        RoomOption {
            room: RoomRef::Frontier(Pos::new(12, 7)),
            label: "unknown room".into(),
            explored: 0.0,
            distance: 3.0,
        },
    ]
}

fn proposal() -> Proposal {
    Proposal {
        agent: AgentId(1),
        locks: BTreeSet::from(["tv".to_string()]),
        action: Some(RoomRef::Room(Pos::new(4, 3))),
        thoughts: "tv is likely in the bedroom".into(),
    }
}

fn member_ctx() -> MemberContext {
    MemberContext {
        agent: AgentId(1),
        progress: progress(),
        state: MemberState {
            cell: Pos::new(9, 6),
            current_room: Some(RoomRef::Room(Pos::new(10, 6))),
            assigned: Some(RoomRef::Room(Pos::new(10, 6))),
            rooms: vec![bedroom()],
        },
        goals: goals(),
        history: vec![HistoryEntry {
            tick: 12,
            proposal: Proposal {
                agent: AgentId(1),
                locks: BTreeSet::new(),
                action: Some(RoomRef::Room(Pos::new(10, 6))),
                thoughts: "closest room".into(),
            },
            directive: AgentDirective {
                agent: AgentId(1),
                action: Some(RoomRef::Room(Pos::new(10, 6))),
                decision: Some(Decision::Support),
                interrupt: false,
                locks: BTreeSet::new(),
                thoughts: "no conflict".into(),
            },
        }],
        options: options(),
    }
}

fn leader_ctx() -> LeaderContext {
    LeaderContext {
        proposal: proposal(),
        options: options(),
        progress: progress(),
        version: 9,
        agents: vec![
            AgentSummary {
                agent: AgentId(0),
                cell: Pos::new(2, 2),
                assigned: Some(RoomRef::Room(Pos::new(4, 3))),
                alive: true,
            },
            AgentSummary {
                agent: AgentId(1),
                cell: Pos::new(9, 6),
                assigned: None,
                alive: true,
            },
        ],
        rooms: vec![bedroom()],
        goals: goals(),
    }
}

fn check(name: &str, text: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, text).unwrap();
    }
    let stored = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(text, stored, "{name} drifted from its golden file");
}

#[test]
fn member_prompt_matches_golden() {
    let text = render_member_prompt(&member_ctx()).unwrap();
    check("member_prompt.txt", &text);
    assert_eq!(parse_member_prompt(&text).unwrap(), member_ctx());
}

#[test]
fn leader_prompt_matches_golden() {
    let text = render_leader_prompt(&leader_ctx()).unwrap();
    check("leader_prompt.txt", &text);
    assert_eq!(parse_leader_prompt(&text).unwrap(), leader_ctx());
}
