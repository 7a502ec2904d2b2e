use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::network::{mlp_from_architecture, Activation, Architecture, Mlp, NetworkError, QNetwork};
use super::optim::Adam;
use super::policy::{select_action, sync_target, train_step, EpsilonSchedule};
use super::replay::ReplayBuffer;
use crate::mdp_agent::{ActionMask, Experience, LearnerError, SataAgent, StateScales, ValueLearner, STATE_DIM};
use crate::rng::{RngCursor, SeedTree, StreamRng};

pub const CHECKPOINT_FORMAT: &str = "edge-offload-dqn";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub hidden_layers: Vec<usize>,
    /// `linear` reproduces an all-linear stack.
    pub activation: Activation,
    pub gamma: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Decision steps between target copies.
    pub target_sync_steps: u64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of all training decisions over which ε decays.
    pub epsilon_decay_fraction: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![128, 64, 32, 16],
            activation: Activation::Relu,
            gamma: 0.95,
            learning_rate: 6e-4,
            batch_size: 64,
            replay_capacity: 200_000,
            target_sync_steps: 500,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.6,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(format!("gamma {} outside [0, 1]", self.gamma));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err("batch size must be positive and fit in the replay pool".into());
        }
        if !(self.learning_rate > 0.0) {
            return Err("learning rate must be positive".into());
        }
        if self.target_sync_steps == 0 {
            return Err("target sync period must be positive".into());
        }
        for eps in [self.epsilon_start, self.epsilon_end, self.epsilon_decay_fraction] {
            if !(0.0..=1.0).contains(&eps) {
                return Err(format!("epsilon setting {eps} outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn layer_sizes(&self, num_actions: usize) -> Vec<usize> {
        let mut sizes = vec![STATE_DIM];
        sizes.extend(&self.hidden_layers);
        sizes.push(num_actions);
        sizes
    }

    pub fn epsilon_schedule(&self, total_decisions: u64) -> EpsilonSchedule {
        EpsilonSchedule::over_fraction(self.epsilon_start, self.epsilon_end, self.epsilon_decay_fraction, total_decisions)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentMode {
    /// ε-greedy acting, replay and updates.
    Train,
    /// Pure argmax, no learning.
    Greedy,
}

/// Deep Q-learning agent with replay and a periodically synced target network.
#[derive(Debug, Clone)]
pub struct DqnAgent<N> {
    net: N,
    target: N,
    optimizer: Adam,
    replay: ReplayBuffer<Experience>,
    config: DqnConfig,
    epsilon: EpsilonSchedule,
    mode: AgentMode,
    mask: Option<ActionMask>,
    decision_steps: u64,
    train_steps: u64,
    loss_sum: f64,
    loss_count: u64,
    explore_rng: StreamRng,
    replay_rng: StreamRng,
}

impl DqnAgent<Mlp> {
    /// Fresh MLP agent; weights come from the `init` stream of `seeds`.
    pub fn mlp(num_actions: usize, config: DqnConfig, seeds: &SeedTree) -> Self {
        let mut init = seeds.stream("init", 0);
        let net = Mlp::new(&config.layer_sizes(num_actions), config.activation, &mut init);
        Self::new(net, config, seeds)
    }

    pub fn load_mlp(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_checkpoint(Checkpoint::load(path)?, mlp_from_architecture)
    }
}

impl<N: QNetwork> DqnAgent<N> {
    pub fn new(net: N, config: DqnConfig, seeds: &SeedTree) -> Self {
        let target = net.clone();
        let optimizer = Adam::for_params(config.learning_rate, &net.params());
        Self {
            net,
            target,
            optimizer,
            replay: ReplayBuffer::new(config.replay_capacity),
            epsilon: EpsilonSchedule::constant(config.epsilon_end),
            config,
            mode: AgentMode::Train,
            mask: None,
            decision_steps: 0,
            train_steps: 0,
            loss_sum: 0.0,
            loss_count: 0,
            explore_rng: seeds.stream("explore", 0),
            replay_rng: seeds.stream("replay", 0),
        }
    }

    pub fn network(&self) -> &N {
        &self.net
    }

    pub fn target_network(&self) -> &N {
        &self.target
    }

    pub fn config(&self) -> &DqnConfig {
        &self.config
    }

    pub fn replay(&self) -> &ReplayBuffer<Experience> {
        &self.replay
    }

    pub fn mode(&self) -> AgentMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: AgentMode) {
        self.mode = mode;
    }

    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        self.epsilon
    }

    pub fn set_epsilon_schedule(&mut self, schedule: EpsilonSchedule) {
        self.epsilon = schedule;
    }

    /// ε used by the next training decision.
    pub fn current_epsilon(&self) -> f64 {
        match self.mode {
            AgentMode::Train => self.epsilon.value(self.decision_steps),
            AgentMode::Greedy => 0.0,
        }
    }

    pub fn decision_steps(&self) -> u64 {
        self.decision_steps
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    /// Mean loss since the last call, if any update ran.
    pub fn take_mean_loss(&mut self) -> Option<f64> {
        let mean = (self.loss_count > 0).then(|| self.loss_sum / self.loss_count as f64);
        self.loss_sum = 0.0;
        self.loss_count = 0;
        mean
    }

    pub fn q_values(&self, state: &[f64; STATE_DIM]) -> Vec<f64> {
        let input = Array2::from_shape_vec((1, STATE_DIM), state.to_vec()).expect("one row");
        self.net.forward(&input).row(0).to_vec()
    }

    pub fn sync_target(&mut self) {
        sync_target(&self.net, &mut self.target).expect("online and target share an architecture");
    }

    fn learn(&mut self) -> Result<(), LearnerError> {
        let Some(mask) = self.mask.as_ref() else {
            return Ok(());
        };
        let Some(batch) = self.replay.sample(self.config.batch_size, &mut self.replay_rng) else {
            return Ok(());
        };
        let loss = train_step(&mut self.net, &self.target, &batch, mask, self.config.gamma, &mut self.optimizer)?;
        self.train_steps += 1;
        self.loss_sum += loss;
        self.loss_count += 1;
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let owned = |n: &N| n.params().into_iter().map(<[f64]>::to_vec).collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            architecture: self.net.architecture(),
            config: self.config.clone(),
            epsilon: self.epsilon,
            decision_steps: self.decision_steps,
            train_steps: self.train_steps,
            params: owned(&self.net),
            target_params: owned(&self.target),
            optimizer: self.optimizer.clone(),
            explore_rng: RngCursor::capture(&self.explore_rng),
            replay_rng: RngCursor::capture(&self.replay_rng),
        }
    }

    /// Restores an agent; the replay pool starts empty.
    pub fn from_checkpoint(
        cp: Checkpoint,
        build: impl Fn(&Architecture) -> Result<N, NetworkError>,
    ) -> Result<Self, CheckpointError> {
        if cp.format != CHECKPOINT_FORMAT || cp.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version { format: cp.format, version: cp.version });
        }
        let mut net = build(&cp.architecture)?;
        net.load_params(&cp.params)?;
        let mut target = build(&cp.architecture)?;
        target.load_params(&cp.target_params)?;
        if !cp.optimizer.matches(&net.params_mut()) {
            return Err(CheckpointError::Network(NetworkError::Architecture("optimizer state shape".into())));
        }
        Ok(Self {
            net,
            target,
            optimizer: cp.optimizer,
            replay: ReplayBuffer::new(cp.config.replay_capacity),
            config: cp.config,
            epsilon: cp.epsilon,
            mode: AgentMode::Greedy,
            mask: None,
            decision_steps: cp.decision_steps,
            train_steps: cp.train_steps,
            loss_sum: 0.0,
            loss_count: 0,
            explore_rng: cp.explore_rng.restore().map_err(|e| CheckpointError::Rng(e.to_string()))?,
            replay_rng: cp.replay_rng.restore().map_err(|e| CheckpointError::Rng(e.to_string()))?,
        })
    }
}

impl<N: QNetwork> ValueLearner for DqnAgent<N> {
    fn select_action(&mut self, state: &[f64; STATE_DIM], mask: &ActionMask) -> Result<usize, LearnerError> {
        if mask.len() != self.net.num_actions() {
            return Err(LearnerError::ActionSpaceMismatch { expected: self.net.num_actions(), got: mask.len() });
        }
        let epsilon = self.current_epsilon();
        let action = select_action(&self.q_values(state), mask, epsilon, &mut self.explore_rng)?;
        if self.mask.as_ref() != Some(mask) {
            self.mask = Some(mask.clone());
        }
        if self.mode == AgentMode::Train {
            self.decision_steps += 1;
            if self.decision_steps.is_multiple_of(self.config.target_sync_steps) {
                self.sync_target();
            }
        }
        Ok(action)
    }

    fn record(&mut self, experience: Experience) -> Result<(), LearnerError> {
        if self.mode == AgentMode::Greedy {
            return Ok(());
        }
        self.replay.push(experience);
        if self.replay.len() >= self.config.batch_size {
            self.learn()?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("unsupported checkpoint {format} v{version}")]
    Version { format: String, version: u32 },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("bad rng cursor: {0}")]
    Rng(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Everything needed to resume an agent, replay contents excepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub config: DqnConfig,
    pub epsilon: EpsilonSchedule,
    pub decision_steps: u64,
    pub train_steps: u64,
    pub params: Vec<Vec<f64>>,
    pub target_params: Vec<Vec<f64>>,
    pub optimizer: Adam,
    pub explore_rng: RngCursor,
    pub replay_rng: RngCursor,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeStats {
    pub episode: usize,
    pub cumulative_reward: f64,
    pub decisions: usize,
    pub mean_loss: Option<f64>,
    /// ε at the end of the episode.
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningCurve {
    pub episodes: Vec<EpisodeStats>,
}

impl LearningCurve {
    pub fn rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.cumulative_reward).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,cumulative_reward,decisions,mean_loss,epsilon\n");
        for e in &self.episodes {
            let loss = e.mean_loss.map(|l| l.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}\n", e.episode, e.cumulative_reward, e.decisions, loss, e.epsilon));
        }
        out
    }
}

/// Runs `episodes` training episodes.
///
/// `run_episode` must drive the supplied scheduler through one complete
/// episode (typically a fresh workload through the simulator); the learning
/// curve records each episode's summed reward.
pub fn train<N, E, F>(
    agent: &mut DqnAgent<N>,
    episodes: usize,
    scales: StateScales,
    mut run_episode: F,
) -> Result<LearningCurve, E>
where
    N: QNetwork,
    F: FnMut(usize, &mut SataAgent<&mut DqnAgent<N>>) -> Result<(), E>,
{
    agent.set_mode(AgentMode::Train);
    let mut curve = LearningCurve::default();
    for episode in 0..episodes {
        let mut sata = SataAgent::new(&mut *agent, scales);
        run_episode(episode, &mut sata)?;
        let (reward, decisions) = (sata.episode_reward(), sata.decisions());
        curve.episodes.push(EpisodeStats {
            episode: episode + 1,
            cumulative_reward: reward,
            decisions,
            mean_loss: agent.take_mean_loss(),
            epsilon: agent.current_epsilon(),
        });
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> DqnConfig {
        DqnConfig {
            hidden_layers: vec![8, 8],
            batch_size: 4,
            replay_capacity: 100,
            target_sync_steps: 10,
            ..DqnConfig::default()
        }
    }

    fn state(x: f64) -> [f64; STATE_DIM] {
        [x, 1.0 - x, 0.5, 0.0, 0.25]
    }

    #[test]
    fn default_network_shape() {
        let agent = DqnAgent::mlp(5, DqnConfig::default(), &SeedTree::new(1));
        assert_eq!(agent.network().layer_sizes(), vec![5, 128, 64, 32, 16, 5]);
        assert_eq!(agent.network(), agent.target_network());
    }

    #[test]
    fn mask_size_must_match_network() {
        let mut agent = DqnAgent::mlp(5, small_config(), &SeedTree::new(1));
        assert_eq!(
            agent.select_action(&state(0.1), &ActionMask::for_ecds(2)),
            Err(LearnerError::ActionSpaceMismatch { expected: 5, got: 3 })
        );
    }

    #[test]
    fn target_only_changes_at_sync() {
        let mut agent = DqnAgent::mlp(3, small_config(), &SeedTree::new(2));
        agent.set_epsilon_schedule(EpsilonSchedule::constant(0.5));
        let mask = ActionMask::for_ecds(2);
        let initial_target = agent.target_network().clone();
        for step in 1..=25u64 {
            let s = state(step as f64 / 25.0);
            let a = agent.select_action(&s, &mask).unwrap();
            if step % 10 == 0 {
                assert_eq!(agent.target_network(), agent.network());
            }
            let before = agent.target_network().clone();
            agent.record(Experience { state: s, action: a, reward: 1.0, next_state: s }).unwrap();
            assert_eq!(agent.target_network(), &before, "updates never touch the target");
            if step < 10 {
                assert_eq!(agent.target_network(), &initial_target, "step {step}");
            }
        }
        assert!(agent.train_steps() > 0);
        assert_ne!(agent.network(), &initial_target);
    }

    #[test]
    fn greedy_mode_does_not_learn() {
        let mut agent = DqnAgent::mlp(3, small_config(), &SeedTree::new(3));
        agent.set_mode(AgentMode::Greedy);
        let mask = ActionMask::for_ecds(2);
        let before = agent.network().clone();
        for i in 0..20 {
            let s = state(i as f64 / 20.0);
            let a = agent.select_action(&s, &mask).unwrap();
            agent.record(Experience { state: s, action: a, reward: 1.0, next_state: s }).unwrap();
        }
        assert_eq!(agent.network(), &before);
        assert_eq!(agent.decision_steps(), 0);
        assert!(agent.replay().is_empty());
    }

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let mut agent = DqnAgent::mlp(3, small_config(), &SeedTree::new(4));
        agent.set_epsilon_schedule(EpsilonSchedule::over_fraction(1.0, 0.05, 0.6, 100));
        let mask = ActionMask::for_ecds(2);
        for i in 0..30 {
            let s = state(i as f64 / 30.0);
            let a = agent.select_action(&s, &mask).unwrap();
            agent.record(Experience { state: s, action: a, reward: -0.3 * i as f64, next_state: s }).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.json");
        let cp = agent.checkpoint();
        cp.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, cp);
        let mut restored = DqnAgent::load_mlp(&path).unwrap();
        assert_eq!(restored.network(), agent.network());
        assert_eq!(restored.target_network(), agent.target_network());
        for (a, b) in restored.network().params().iter().zip(agent.network().params()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        // same exploration stream from here on
        restored.set_mode(AgentMode::Train);
        for i in 0..20 {
            let s = state(i as f64 / 7.0);
            assert_eq!(agent.select_action(&s, &mask).unwrap(), restored.select_action(&s, &mask).unwrap());
        }
    }

    #[test]
    fn zero_episodes_give_empty_curve() {
        let mut agent = DqnAgent::mlp(3, small_config(), &SeedTree::new(5));
        let before = agent.network().clone();
        let curve = train(&mut agent, 0, StateScales::default(), |_, _| Ok::<_, ()>(())).unwrap();
        assert!(curve.episodes.is_empty());
        assert_eq!(agent.network(), &before);
    }

    #[test]
    fn config_validation() {
        assert!(DqnConfig::default().validate().is_ok());
        assert!(DqnConfig { gamma: 1.5, ..DqnConfig::default() }.validate().is_err());
        assert!(DqnConfig { batch_size: 0, ..DqnConfig::default() }.validate().is_err());
    }
}
