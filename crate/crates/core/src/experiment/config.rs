use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::dqn_core::DqnConfig;
use crate::mdp_agent::{RewardParams, StateScales};
use crate::mec_model::{CapabilityChain, NetworkTopology, DEFAULT_LEVELS, DEFAULT_TRANSITIONS};
use crate::sim_engine::EnvSpec;
use crate::workload::WorkloadSpec;

pub const SCHEDULER_NAMES: [&str; 5] = ["sata-drl", "dueling-dqn", "random", "greedy-eft", "heft"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SchedulerKind {
    SataDrl,
    DuelingDqn,
    Random,
    GreedyEft,
    Heft,
}

impl SchedulerKind {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "sata-drl" => Self::SataDrl,
            "dueling-dqn" => Self::DuelingDqn,
            "random" => Self::Random,
            "greedy-eft" => Self::GreedyEft,
            "heft" => Self::Heft,
            other => bail!("unknown scheduler {other:?}; expected one of {SCHEDULER_NAMES:?}"),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SataDrl => "sata-drl",
            Self::DuelingDqn => "dueling-dqn",
            Self::Random => "random",
            Self::GreedyEft => "greedy-eft",
            Self::Heft => "heft",
        }
    }

    pub fn is_learner(self) -> bool {
        matches!(self, Self::SataDrl | Self::DuelingDqn)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub num_ecds: usize,
    /// Rate of every ordered ECD pair unless `inter_rate_matrix` is given.
    pub inter_rate: f64,
    pub inter_rate_matrix: Option<Vec<Vec<f64>>>,
    pub uplink_rate: f64,
    /// Capability levels in MIPS shared by every ECD.
    pub levels: Vec<f64>,
    pub transitions: Vec<Vec<f64>>,
    pub initial_level: usize,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            num_ecds: 4,
            inter_rate: 440.0,
            inter_rate_matrix: None,
            uplink_rate: 1000.0,
            levels: DEFAULT_LEVELS.to_vec(),
            transitions: DEFAULT_TRANSITIONS.iter().map(|r| r.to_vec()).collect(),
            initial_level: 0,
        }
    }
}

impl TopologyConfig {
    pub fn build(&self, reward: RewardParams) -> Result<EnvSpec> {
        let topology = match &self.inter_rate_matrix {
            Some(m) => NetworkTopology::new(m.clone(), vec![self.uplink_rate; self.num_ecds])?,
            None => NetworkTopology::full_mesh(self.num_ecds, self.inter_rate, self.uplink_rate)?,
        };
        if topology.num_ecds() != self.num_ecds {
            bail!("rate matrix covers {} ECDs, num_ecds is {}", topology.num_ecds(), self.num_ecds);
        }
        let chain = CapabilityChain::new(self.transitions.clone())?;
        if chain.num_levels() != self.levels.len() {
            bail!("{} capability levels but a {}-state transition matrix", self.levels.len(), chain.num_levels());
        }
        let mut env = EnvSpec::uniform(topology, chain, self.levels.clone(), reward);
        env.initial_levels = vec![self.initial_level; self.num_ecds];
        env.build_devices()?;
        Ok(env)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Training episodes for each learning scheduler.
    pub episodes: usize,
    /// Runs of every scheduler over the same evaluation workload.
    pub replications: usize,
    /// Arrival settings swept by `compare` and `train`.
    pub lambdas: Vec<f64>,
    pub schedulers: Vec<String>,
    /// Applications in the evaluation workload file.
    pub evaluation_apps: usize,
    /// Write the full trace of the first replication of every scheduler.
    pub write_traces: bool,
    pub topology: TopologyConfig,
    /// Per-episode training workload; `lambda` is overridden by the sweep.
    pub workload: WorkloadSpec,
    pub reward: RewardParams,
    pub dqn: DqnConfig,
    pub state_scales: StateScales,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_901,
            output_dir: PathBuf::from("results"),
            episodes: 800,
            replications: 30,
            lambdas: vec![5.0, 7.0, 9.0],
            schedulers: SCHEDULER_NAMES.iter().map(|s| s.to_string()).collect(),
            evaluation_apps: 100,
            write_traces: true,
            topology: TopologyConfig::default(),
            workload: WorkloadSpec::default(),
            reward: RewardParams::default(),
            dqn: DqnConfig::default(),
            state_scales: StateScales::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            bail!("replications must be at least 1");
        }
        if self.lambdas.is_empty() {
            bail!("at least one lambda is required");
        }
        if self.evaluation_apps == 0 {
            bail!("evaluation_apps must be at least 1");
        }
        for name in &self.schedulers {
            SchedulerKind::parse(name)?;
        }
        if self.workload.num_ecds != self.topology.num_ecds {
            bail!(
                "workload draws homes over {} ECDs but the topology has {}",
                self.workload.num_ecds,
                self.topology.num_ecds
            );
        }
        for &lambda in &self.lambdas {
            self.workload_for(lambda).validate()?;
        }
        self.dqn.validate().map_err(anyhow::Error::msg)?;
        self.topology.build(self.reward)?;
        Ok(())
    }

    pub fn scheduler_kinds(&self) -> Result<Vec<SchedulerKind>> {
        self.schedulers.iter().map(|s| SchedulerKind::parse(s)).collect()
    }

    pub fn env(&self) -> Result<EnvSpec> {
        self.topology.build(self.reward)
    }

    pub fn workload_for(&self, lambda: f64) -> WorkloadSpec {
        WorkloadSpec { lambda, ..self.workload.clone() }
    }

    pub fn evaluation_workload(&self, lambda: f64) -> WorkloadSpec {
        WorkloadSpec { lambda, n_apps: self.evaluation_apps, ..self.workload.clone() }
    }
}

/// File-name friendly rendering of a lambda value.
pub fn lambda_tag(lambda: f64) -> String {
    format!("lambda{}", lambda.to_string().replace('.', "p"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: ExperimentConfig = toml::from_str("seed = 7\nschedulers = [\"random\"]\n[dqn]\nbatch_size = 32\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.dqn.batch_size, 32);
        assert_eq!(cfg.dqn.gamma, 0.95);
        assert_eq!(cfg.replications, 30);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        let unknown = ExperimentConfig { schedulers: vec!["pcp".into()], ..ExperimentConfig::default() };
        assert!(unknown.validate().is_err());
        let zero = ExperimentConfig { replications: 0, ..ExperimentConfig::default() };
        assert!(zero.validate().is_err());
        assert!(toml::from_str::<ExperimentConfig>("nonsense_key = 1").is_err());
    }

    #[test]
    fn lambda_tags() {
        assert_eq!(lambda_tag(9.0), "lambda9");
        assert_eq!(lambda_tag(2.5), "lambda2p5");
    }
}
