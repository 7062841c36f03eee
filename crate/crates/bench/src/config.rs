use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use regagent_core::agent::{PolicySpec, Schedule};
use regagent_core::cloud::PerturbationConfig;
use regagent_core::icp::IcpConfig;
use regagent_core::rewardnet::{NetConfig, TrainConfig};
use regagent_core::rotsample::TransformSampleConfig;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetSpec;
use crate::error::{BenchError, Result};

/// Evaluation protocol: which perturbations the observed clouds receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    #[default]
    Clean,
    Noisy,
    Partial,
}

impl Protocol {
    pub fn perturbation(self, seed: u64) -> PerturbationConfig {
        match self {
            Protocol::Clean => PerturbationConfig::clean(seed),
            Protocol::Noisy => PerturbationConfig::noisy(seed),
            Protocol::Partial => PerturbationConfig::partial(seed),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Clean => "clean",
            Protocol::Noisy => "noisy",
            Protocol::Partial => "partial",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(Protocol::Clean),
            "noisy" => Ok(Protocol::Noisy),
            "partial" => Ok(Protocol::Partial),
            other => Err(BenchError::Usage(format!(
                "unknown protocol `{other}` (expected clean, noisy or partial)"
            ))),
        }
    }
}

/// Where the agent's rewards come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RewardSpec {
    OracleSe3,
    OracleL2,
    OracleMcd,
    Network { path: PathBuf },
}

impl RewardSpec {
    pub fn name(&self) -> &'static str {
        match self {
            RewardSpec::OracleSe3 => "oracle_se3",
            RewardSpec::OracleL2 => "oracle_l2",
            RewardSpec::OracleMcd => "oracle_mcd",
            RewardSpec::Network { .. } => "network",
        }
    }
}

/// Everything one experiment run depends on; serialized into every CSV header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub transform: TransformSampleConfig,
    pub perturbation: PerturbationConfig,
    pub policy: PolicySpec,
    pub schedule: Schedule,
    pub reward: RewardSpec,
    pub refine_icp: bool,
    pub icp: IcpConfig,
    pub dataset: DatasetSpec,
    /// Number of test pairs drawn for `eval`, `time` and the ablations.
    pub n_pairs: usize,
    /// Used by `train` and by the ablation arms that train a network.
    pub train: TrainConfig,
    pub net: NetConfig,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_protocol(Protocol::Clean)
    }
}

impl ExperimentConfig {
    pub fn for_protocol(protocol: Protocol) -> Self {
        Self {
            protocol,
            transform: TransformSampleConfig::full_range(0),
            perturbation: protocol.perturbation(0),
            policy: PolicySpec::greedy(),
            schedule: Schedule::default(),
            reward: RewardSpec::OracleSe3,
            refine_icp: false,
            icp: IcpConfig::default(),
            dataset: DatasetSpec::default(),
            n_pairs: 100,
            train: TrainConfig::desk(),
            net: NetConfig::desk(),
            output: None,
            seed: 1234,
        }
    }

    /// Switches protocol, replacing the perturbation but keeping its point count.
    pub fn with_protocol(mut self, protocol: Protocol) -> Self {
        let n = self.perturbation.n_points;
        self.protocol = protocol;
        self.perturbation = protocol.perturbation(self.perturbation.seed).with_points(n);
        self
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Data(format!("{}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| BenchError::Data(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.transform.validate()?;
        self.perturbation.validate()?;
        self.policy.validate()?;
        self.schedule.validate()?;
        self.icp.validate()?;
        self.dataset.validate()?;
        if self.n_pairs == 0 {
            return Err(BenchError::Usage("n_pairs must be positive".into()));
        }
        let expect = self
            .protocol
            .perturbation(self.perturbation.seed)
            .with_points(self.perturbation.n_points);
        if expect != self.perturbation {
            return Err(BenchError::Usage(format!(
                "perturbation settings do not match the {} protocol",
                self.protocol
            )));
        }
        Ok(())
    }
}
