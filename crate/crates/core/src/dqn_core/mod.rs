//! Value learning from scratch: a small fully connected Q-network, replay pool,
//! ε-greedy policy, target network and Adam.

mod agent;
mod network;
mod optim;
mod policy;
mod replay;

pub use agent::{
    train, AgentMode, Checkpoint, CheckpointError, DqnAgent, DqnConfig, EpisodeStats, LearningCurve,
    CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use network::{mlp_from_architecture, Activation, Architecture, Dense, Mlp, MlpCache, NetworkError, QNetwork};
pub use optim::Adam;
pub use policy::{batch_matrix, compute_targets, select_action, sync_target, train_step, EpsilonSchedule, TrainError};
pub use replay::ReplayBuffer;
