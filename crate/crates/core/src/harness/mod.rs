//! Episode orchestration: configuration, the lockstep loop, reports,
//! message logs, replay traces and scenario checks.

pub mod agent;
pub mod config;
pub mod episode;
pub mod fuzz;
pub mod generate;
pub mod trace;

use std::path::Path;
use std::time::Duration;

use thiserror::Error;

use crate::oracle::{Oracle, RemoteOracle, RuleOracle};
use crate::rooms::{RemoteDescriber, RoomDescriber, RuleDescriber};
use crate::world::{Diagnostic, World, WorldError};

pub use config::{parse_crashes, CrashSpec, CrashTarget, OracleKind, RunConfig};
pub use episode::{reachable_targets, run_episode, EpisodeOutput, EpisodeReport, Outcome};
pub use trace::{replay, Replay, Verdicts};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io: {0}")]
    Io(String),
    #[error("config: {0}")]
    Config(String),
    #[error("world: {0}")]
    World(String),
    #[error("trace record {index} is corrupt: {reason}")]
    Corrupt { index: u64, reason: String },
    #[error("trace is truncated: record {0} is missing")]
    Truncated(u64),
    #[error("replayed invariants differ from the recorded verdicts: {0}")]
    VerdictMismatch(String),
}

fn io(path: &Path, e: std::io::Error) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

pub fn load_world(path: &Path) -> Result<World, HarnessError> {
    World::load(path).map_err(|e| HarnessError::World(e.to_string()))
}

/// Loads the scenario, plays the episode with the configured oracle and
/// describer, and writes `report.json`, `messages.tsv` and `trace.jsonl`
/// when an output directory is set.
pub fn run(cfg: &RunConfig) -> Result<EpisodeOutput, HarnessError> {
    cfg.validate()?;
    let world = load_world(&cfg.scenario)?;
    let mut oracle: Box<dyn Oracle> = match cfg.oracle.kind {
        OracleKind::Rule => Box::new(RuleOracle::default()),
        OracleKind::Remote => Box::new(RemoteOracle::new(cfg.oracle.remote.clone().expect("validated"))),
    };
    let describer: Box<dyn RoomDescriber> = match cfg.describer.kind {
        OracleKind::Rule => Box::new(RuleDescriber::default()),
        OracleKind::Remote => Box::new(RemoteDescriber::new(
            cfg.describer.endpoint.clone().expect("validated"),
            Duration::from_secs(cfg.describer.timeout_secs),
        )),
    };
    let out = run_episode(cfg, world, oracle.as_mut(), describer.as_ref())?;
    if let Some(dir) = &cfg.output_dir {
        write_outputs(dir, &out)?;
    }
    Ok(out)
}

pub fn write_outputs(dir: &Path, out: &EpisodeOutput) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let report = serde_json::to_string_pretty(&out.report).expect("report serializes");
    for (name, text) in [
        ("report.json", report.as_str()),
        ("messages.tsv", out.messages_tsv.as_str()),
        ("trace.jsonl", out.trace.as_str()),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| io(&path, e))?;
    }
    Ok(())
}

/// Every world-invariant violation in a scenario file; empty when clean.
pub fn validate_scenario(path: &Path) -> Result<Vec<Diagnostic>, HarnessError> {
    match World::load(path) {
        Ok(_) => Ok(Vec::new()),
        Err(WorldError::Invalid(diags)) => Ok(diags),
        Err(WorldError::Io { path, source }) => Err(HarnessError::Io(format!("{path}: {source}"))),
        Err(e) => Ok(vec![Diagnostic {
            message: e.to_string(),
            cells: Vec::new(),
        }]),
    }
}
