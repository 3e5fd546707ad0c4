use std::path::{Path, PathBuf};

use multinav::harness::{
    replay, run_episode, validate_scenario, CrashSpec, CrashTarget, EpisodeOutput, HarnessError, OracleKind, RunConfig,
};
use multinav::oracle::RuleOracle;
use multinav::rooms::RuleDescriber;
use multinav::world::World;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn play(team: usize, seed: u64, crash: Vec<CrashSpec>) -> EpisodeOutput {
    let mut cfg = RunConfig::new(scenario("house3.scn"));
    cfg.team_size = Some(team);
    cfg.seed = seed;
    cfg.oracle.kind = OracleKind::Rule;
    cfg.crash = crash;
    let world = World::load(&cfg.scenario).unwrap();
    run_episode(&cfg, world, &mut RuleOracle::default(), &RuleDescriber::default()).unwrap()
}

#[test]
fn fresh_trace_replays_with_matching_verdicts() {
    let out = play(3, 11, Vec::new());
    let r = replay(&out.trace).unwrap();
    assert_eq!(r.live, out.report.verdicts);
    assert_eq!(r.recomputed, r.live);
    assert_eq!(r.ticks.len() as u64, out.report.ticks);
    assert!(r.timeline.starts_with("scenario "));
}

#[test]
fn truncated_trace_is_rejected() {
    let out = play(2, 5, Vec::new());
    let lines: Vec<&str> = out.trace.lines().collect();
    let cut = lines[..lines.len() / 2].join("\n") + "\n";
    assert!(matches!(replay(&cut), Err(HarnessError::Truncated(_))));
    // torn mid-record
    let torn = &out.trace[..out.trace.len() - 10];
    assert!(matches!(replay(torn), Err(HarnessError::Truncated(_))));
}

#[test]
fn edited_record_breaks_the_checksum() {
    let out = play(2, 5, Vec::new());
    let mut lines: Vec<String> = out.trace.lines().map(str::to_string).collect();
    let i = lines.len() / 3;
    let mut v: serde_json::Value = serde_json::from_str(&lines[i]).unwrap();
    v["data"]["tick"] = serde_json::json!(99_999);
    lines[i] = v.to_string();
    let text = lines.join("\n") + "\n";
    match replay(&text) {
        Err(HarnessError::Corrupt { index, .. }) => assert_eq!(index, i as u64),
        other => panic!("expected corruption, got {other:?}"),
    }
}

#[test]
fn dropped_record_breaks_the_chain() {
    let out = play(2, 5, Vec::new());
    let mut lines: Vec<&str> = out.trace.lines().collect();
    lines.remove(3);
    let text = lines.join("\n") + "\n";
    assert!(matches!(replay(&text), Err(HarnessError::Corrupt { index: 3, .. })));
}

#[test]
fn lone_agent_never_asks_for_help() {
    let out = play(1, 3, Vec::new());
    let r = &out.report;
    assert_eq!(r.messages.by_kind.get("help_request").copied().unwrap_or(0), 0);
    assert_eq!(r.messages.total, 0);
    assert!(r.all_found(), "{:?}", r.targets);
    assert_eq!(r.verdicts.violations(), 0);
}

#[test]
fn leader_crash_at_fifty_is_recovered() {
    let out = play(3, 7, vec![CrashSpec { target: CrashTarget::Leader, tick: 50 }]);
    let r = &out.report;
    assert_eq!(r.crashes.len(), 1);
    assert!(r.crashes[0].was_leader);
    assert!(r.protocol.recoveries >= 1, "{:?}", r.protocol);
    assert_ne!(r.protocol.final_leader, Some(r.crashes[0].agent));
    assert!(r.protocol.probes.iter().all(|p| p.follows_lineage()));
    assert_eq!(r.verdicts.violations(), 0);
    replay(&out.trace).unwrap();
}

#[test]
fn lineage_lists_distinct_consecutive_leaders() {
    let out = play(4, 21, Vec::new());
    let p = &out.report.protocol;
    assert!(p.lineage.windows(2).all(|w| w[0] != w[1]), "{:?}", p.lineage);
    assert!(p.handoffs > 0);
    // With a grant still in flight at the end nobody holds leadership.
    if let Some(l) = p.final_leader {
        assert_eq!(p.lineage.last(), Some(&l));
    }
}

fn write_scenario(body: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::Builder::new().suffix(".scn").tempfile().unwrap();
    std::io::Write::write_all(&mut f, body.as_bytes()).unwrap();
    f
}

const GRID: &str = "
resolution_m = 0.25
seed = 1
targets = ['bed']
grid = ['######', '#....#', '#.#..#', '#....#', '######']

[[agents]]
x = 1
y = 1
heading = 0
";

#[test]
fn object_on_a_wall_names_the_cell() {
    let f = write_scenario(&format!(
        "{GRID}\n[[rooms]]\nid = \"a\"\nrects = [[1, 1, 4, 3]]\n\n[[objects]]\nclass = \"bed\"\nx = 2\ny = 2\n"
    ));
    let diags = validate_scenario(f.path()).unwrap();
    assert!(!diags.is_empty());
    assert!(diags.iter().any(|d| d.cells.iter().any(|c| (c.x, c.y) == (2, 2))), "{diags:?}");
}

#[test]
fn overlapping_rooms_are_reported() {
    let f = write_scenario(&format!(
        "{GRID}\n[[rooms]]\nid = \"left\"\nrects = [[1, 1, 3, 3]]\n\n[[rooms]]\nid = \"right\"\nrects = [[3, 1, 4, 3]]\n\n[[objects]]\nclass = \"bed\"\nx = 4\ny = 3\n"
    ));
    let diags = validate_scenario(f.path()).unwrap();
    assert!(diags.iter().any(|d| d.message.contains("left") && d.message.contains("right")), "{diags:?}");
}

#[test]
fn bundled_scenarios_are_clean() {
    for name in ["house3.scn", "house6.scn"] {
        assert_eq!(validate_scenario(&scenario(name)).unwrap(), Vec::new(), "{name}");
    }
}
