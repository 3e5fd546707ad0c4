//! Randomised schedules over generated houses: team size, link latency,
//! trigger jitter and an optional leader crash.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::oracle::RuleOracle;
use crate::rooms::RuleDescriber;
use crate::world::World;

use super::config::{CrashSpec, CrashTarget, NetworkConfig, RunConfig};
use super::episode::{run_episode, EpisodeOutput, EpisodeReport};
use super::generate::{generate_house, HouseParams};
use super::HarnessError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzCase {
    pub index: u64,
    pub seed: u64,
    pub team: usize,
    pub max_latency: u64,
    pub jitter: u64,
    pub width: usize,
    pub height: usize,
    pub crash_leader_at: Option<u64>,
}

/// Case `index` of the corpus rooted at `base`; odd cases crash the leader.
pub fn fuzz_case(base: u64, index: u64) -> FuzzCase {
    let mut rng = ChaCha8Rng::seed_from_u64(base.wrapping_mul(1_000_003).wrapping_add(index));
    FuzzCase {
        index,
        seed: rng.random(),
        team: rng.random_range(2..=8),
        max_latency: rng.random_range(0..=5),
        jitter: rng.random_range(0..=8),
        width: rng.random_range(14..=22),
        height: rng.random_range(10..=16),
        crash_leader_at: (index % 2 == 1).then(|| rng.random_range(20..=120)),
    }
}

#[derive(Clone, Debug)]
pub struct FuzzResult {
    pub case: FuzzCase,
    pub report: EpisodeReport,
}

impl FuzzResult {
    pub fn crashed_leader(&self) -> bool {
        self.report.crashes.iter().any(|c| c.was_leader)
    }

    pub fn probes_follow_lineage(&self) -> bool {
        self.report.protocol.probes.iter().all(|p| p.follows_lineage())
    }
}

/// The generated world and run configuration of a case.
pub fn case_setup(case: &FuzzCase) -> Result<(World, RunConfig), HarnessError> {
    let doc = generate_house(
        case.seed,
        &HouseParams {
            width: case.width,
            height: case.height,
            agents: case.team,
            ..HouseParams::default()
        },
    );
    let world = World::from_doc(&doc).map_err(|e| HarnessError::World(e.to_string()))?;
    let mut cfg = RunConfig::new("generated");
    cfg.seed = case.seed;
    cfg.network = NetworkConfig {
        min_latency: 0,
        max_latency: case.max_latency,
    };
    cfg.trigger_jitter = case.jitter;
    cfg.crash = case
        .crash_leader_at
        .map(|tick| CrashSpec {
            target: CrashTarget::Leader,
            tick,
        })
        .into_iter()
        .collect();
    Ok((world, cfg))
}

pub fn run_case_output(case: &FuzzCase) -> Result<EpisodeOutput, HarnessError> {
    let (world, cfg) = case_setup(case)?;
    run_episode(&cfg, world, &mut RuleOracle::default(), &RuleDescriber::default())
}

pub fn run_case(case: &FuzzCase) -> Result<FuzzResult, HarnessError> {
    let out = run_case_output(case)?;
    Ok(FuzzResult {
        case: case.clone(),
        report: out.report,
    })
}
