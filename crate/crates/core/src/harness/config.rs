//! Run configuration (TOML) and crash schedules.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::oracle::RemoteConfig;
use crate::world::AgentId;

use super::HarnessError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    #[default]
    Rule,
    Remote,
}

impl FromStr for OracleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rule" => Ok(OracleKind::Rule),
            "remote" => Ok(OracleKind::Remote),
            _ => Err(format!("unknown oracle {s:?} (rule or remote)")),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default)]
    pub kind: OracleKind,
    #[serde(default)]
    pub remote: Option<RemoteConfig>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriberConfig {
    #[serde(default)]
    pub kind: OracleKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_describe_timeout")]
    pub timeout_secs: u64,
}

fn default_describe_timeout() -> u64 {
    10
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default)]
    pub min_latency: u64,
    #[serde(default = "default_latency")]
    pub max_latency: u64,
}

fn default_latency() -> u64 {
    1
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            min_latency: 0,
            max_latency: default_latency(),
        }
    }
}

/// Whom a scheduled crash hits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrashTarget {
    Agent(AgentId),
    /// Whoever leads at that tick; the grant recipient if leadership is in
    /// transit.
    Leader,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CrashSpec {
    pub target: CrashTarget,
    pub tick: u64,
}

impl fmt::Display for CrashSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.target {
            CrashTarget::Agent(a) => write!(f, "{}:{}", a.0, self.tick),
            CrashTarget::Leader => write!(f, "leader:{}", self.tick),
        }
    }
}

impl FromStr for CrashSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (who, tick) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| format!("crash {s:?} is not agent:tick"))?;
        let tick = tick.trim().parse().map_err(|_| format!("bad tick in {s:?}"))?;
        let target = match who.trim() {
            "leader" => CrashTarget::Leader,
            n => CrashTarget::Agent(AgentId(n.parse().map_err(|_| format!("bad agent in {s:?}"))?)),
        };
        Ok(Self { target, tick })
    }
}

impl Serialize for CrashSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CrashSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses `"agent:tick,..."`.
pub fn parse_crashes(s: &str) -> Result<Vec<CrashSpec>, String> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub team_size: Option<usize>,
    #[serde(default)]
    pub max_steps: Option<u64>,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub describer: DescriberConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub crash: Vec<CrashSpec>,
    /// Upper bound on the random delay before an agent asks for help.
    #[serde(default)]
    pub trigger_jitter: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(scenario: impl Into<PathBuf>) -> Self {
        Self {
            scenario: scenario.into(),
            seed: 0,
            team_size: None,
            max_steps: None,
            oracle: OracleConfig::default(),
            describer: DescriberConfig::default(),
            network: NetworkConfig::default(),
            crash: Vec::new(),
            trigger_jitter: 0,
            output_dir: None,
        }
    }

    /// Reads a config file; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.scenario.is_relative() {
            cfg.scenario = base.join(&cfg.scenario);
        }
        if let Some(out) = &cfg.output_dir {
            if out.is_relative() {
                cfg.output_dir = Some(base.join(out));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !self.scenario.exists() {
            return Err(HarnessError::Config(format!("scenario {} does not exist", self.scenario.display())));
        }
        if self.network.min_latency > self.network.max_latency {
            return Err(HarnessError::Config("network.min_latency exceeds max_latency".into()));
        }
        if self.oracle.kind == OracleKind::Remote && self.oracle.remote.is_none() {
            return Err(HarnessError::Config("remote oracle needs [oracle.remote]".into()));
        }
        if self.describer.kind == OracleKind::Remote && self.describer.endpoint.is_none() {
            return Err(HarnessError::Config("remote describer needs describer.endpoint".into()));
        }
        Ok(())
    }
}
