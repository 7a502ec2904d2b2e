//! The decision layer between the simulator and a value learner: state
//! vectors, action masking, the three-term reward and the bookkeeping that
//! turns consecutive decisions into `(s, a, r, s')` transitions.

use thiserror::Error;

use crate::sim_engine::{DecisionContext, Outcome, Scheduler, SchedulerError};

pub const STATE_DIM: usize = 5;

/// Observation taken when a ready task is fetched from the ready queue.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateVector {
    /// Sum of inter-ECD rates over ordered pairs (Mbps).
    pub sum_inter_rate: f64,
    /// Rate between the task's user and its covering ECD (Mbps).
    pub uplink_rate: f64,
    /// Sum of current ECD capabilities (MIPS).
    pub sum_capability: f64,
    /// MI still waiting in the ready queue, the current task included.
    pub ready_workload: f64,
    /// MI committed to device queues and not yet completed.
    pub queued_workload: f64,
}

impl StateVector {
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [self.sum_inter_rate, self.uplink_rate, self.sum_capability, self.ready_workload, self.queued_workload]
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Validity of each action `a^0..a^M`. Action 0 (run on the user device) is
/// never valid for a task the agent schedules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionMask {
    valid: Vec<bool>,
}

impl ActionMask {
    pub fn for_ecds(num_ecds: usize) -> Self {
        let mut valid = vec![true; num_ecds + 1];
        valid[0] = false;
        Self { valid }
    }

    pub fn from_flags(valid: Vec<bool>) -> Self {
        Self { valid }
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    pub fn is_valid(&self, action: usize) -> bool {
        self.valid.get(action).copied().unwrap_or(false)
    }

    pub fn valid_actions(&self) -> impl Iterator<Item = usize> + '_ {
        self.valid.iter().enumerate().filter(|(_, v)| **v).map(|(a, _)| a)
    }

    pub fn count_valid(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct RewardParams {
    pub beta: f64,
    pub psi: f64,
    pub eta: f64,
    /// Floor the lateness penalty at zero so finishing early earns nothing.
    pub clamp_penalty: bool,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self { beta: 0.6, psi: 5.0, eta: 40.0, clamp_penalty: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardTerms {
    pub utility: f64,
    pub duration: f64,
    pub penalty: f64,
    pub total: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("reward is undefined for workload {0}")]
    NonPositiveWorkload(f64),
    #[error("non-finite reward input")]
    NonFinite,
}

/// `U - D - P` for one scheduled task.
///
/// `U = beta log2(w)`, `D = psi (arrival + queue + exec) / w` and
/// `P = eta (finish - lct) / w`, where `w` is the task workload.
pub fn compute_reward(
    workload: f64,
    max_arrival: f64,
    queue_delay: f64,
    exec: f64,
    finish: f64,
    lct: f64,
    params: &RewardParams,
) -> Result<RewardTerms, RewardError> {
    if !(workload > 0.0) {
        return Err(RewardError::NonPositiveWorkload(workload));
    }
    let utility = params.beta * workload.log2();
    let duration = params.psi * (max_arrival + queue_delay + exec) / workload;
    let mut penalty = params.eta * (finish - lct) / workload;
    if params.clamp_penalty {
        penalty = penalty.max(0.0);
    }
    let total = utility - duration - penalty;
    if !total.is_finite() {
        return Err(RewardError::NonFinite);
    }
    Ok(RewardTerms { utility, duration, penalty, total })
}

/// Per-component divisors applied before states reach the network.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct StateScales {
    pub rate: f64,
    pub capability: f64,
    pub workload: f64,
}

impl Default for StateScales {
    fn default() -> Self {
        Self { rate: 1000.0, capability: 24000.0, workload: 10000.0 }
    }
}

impl StateScales {
    pub fn as_array(&self) -> [f64; STATE_DIM] {
        [self.rate, self.rate, self.capability, self.workload, self.workload]
    }
}

pub fn normalize_state(raw: &StateVector, scales: &StateScales) -> [f64; STATE_DIM] {
    let s = scales.as_array();
    let mut out = raw.to_array();
    for (v, d) in out.iter_mut().zip(s) {
        *v /= d;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdpTransition {
    pub state: StateVector,
    pub action: usize,
    pub reward: f64,
    pub next_state: StateVector,
}

/// A transition in network-input coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experience {
    pub state: [f64; STATE_DIM],
    pub action: usize,
    pub reward: f64,
    pub next_state: [f64; STATE_DIM],
}

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("every action is masked")]
    AllMasked,
    #[error("learner chose masked action {0}")]
    MaskedAction(usize),
    #[error("previous decision has no reward yet")]
    MissingReward,
    #[error("training diverged: loss {0}")]
    Diverged(f64),
    #[error("training failed: {0}")]
    Training(String),
    #[error("network expects {expected} outputs but the action space has {got}")]
    ActionSpaceMismatch { expected: usize, got: usize },
}

/// Anything that picks actions from normalized states and learns from
/// transitions.
pub trait ValueLearner {
    fn select_action(&mut self, state: &[f64; STATE_DIM], mask: &ActionMask) -> Result<usize, LearnerError>;

    fn record(&mut self, experience: Experience) -> Result<(), LearnerError>;
}

impl<T: ValueLearner + ?Sized> ValueLearner for &mut T {
    fn select_action(&mut self, state: &[f64; STATE_DIM], mask: &ActionMask) -> Result<usize, LearnerError> {
        (**self).select_action(state, mask)
    }

    fn record(&mut self, experience: Experience) -> Result<(), LearnerError> {
        (**self).record(experience)
    }
}

#[derive(Debug, Clone, Copy)]
struct PendingDecision {
    state: StateVector,
    features: [f64; STATE_DIM],
    action: usize,
}

/// Scheduler that drives a [`ValueLearner`] one ready task at a time.
///
/// The reward of decision `k` only becomes a transition once the state of
/// decision `k + 1` (or the end-of-episode state) is observed.
pub struct SataAgent<L> {
    learner: L,
    scales: StateScales,
    pending: Option<PendingDecision>,
    pending_reward: Option<f64>,
    decisions: usize,
    episode_reward: f64,
    log: Option<Vec<MdpTransition>>,
}

impl<L: ValueLearner> SataAgent<L> {
    pub fn new(learner: L, scales: StateScales) -> Self {
        Self {
            learner,
            scales,
            pending: None,
            pending_reward: None,
            decisions: 0,
            episode_reward: 0.0,
            log: None,
        }
    }

    /// Keep every completed transition for inspection.
    pub fn with_transition_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn learner(&self) -> &L {
        &self.learner
    }

    pub fn learner_mut(&mut self) -> &mut L {
        &mut self.learner
    }

    pub fn into_learner(self) -> L {
        self.learner
    }

    pub fn transitions(&self) -> &[MdpTransition] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn decisions(&self) -> usize {
        self.decisions
    }

    pub fn episode_reward(&self) -> f64 {
        self.episode_reward
    }

    /// Supplies the reward earned by the most recent decision.
    pub fn reward(&mut self, reward: f64) {
        self.pending_reward = Some(reward);
        self.episode_reward += reward;
    }

    /// One MDP time step: closes the previous transition with `observation`
    /// and asks the learner for the next action.
    pub fn step(&mut self, observation: &StateVector, mask: &ActionMask) -> Result<usize, LearnerError> {
        let features = normalize_state(observation, &self.scales);
        self.close_pending(observation, &features)?;
        if mask.count_valid() == 0 {
            return Err(LearnerError::AllMasked);
        }
        let action = self.learner.select_action(&features, mask)?;
        if !mask.is_valid(action) {
            return Err(LearnerError::MaskedAction(action));
        }
        self.pending = Some(PendingDecision { state: *observation, features, action });
        self.decisions += 1;
        Ok(action)
    }

    /// Stores the final transition of an episode and resets the stream so no
    /// transition spans two episodes.
    pub fn finish_episode(&mut self, final_state: &StateVector) -> Result<(), LearnerError> {
        let features = normalize_state(final_state, &self.scales);
        self.close_pending(final_state, &features)?;
        self.pending_reward = None;
        Ok(())
    }

    fn close_pending(&mut self, next: &StateVector, next_features: &[f64; STATE_DIM]) -> Result<(), LearnerError> {
        let Some(prev) = self.pending.take() else {
            return Ok(());
        };
        let reward = self.pending_reward.take().ok_or(LearnerError::MissingReward)?;
        if let Some(log) = self.log.as_mut() {
            log.push(MdpTransition { state: prev.state, action: prev.action, reward, next_state: *next });
        }
        self.learner.record(Experience {
            state: prev.features,
            action: prev.action,
            reward,
            next_state: *next_features,
        })
    }
}

impl<L: ValueLearner> Scheduler for SataAgent<L> {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<usize, SchedulerError> {
        let mask = ActionMask::for_ecds(ctx.num_ecds());
        Ok(self.step(&ctx.state, &mask)?)
    }

    fn on_outcome(&mut self, outcome: &Outcome) {
        self.reward(outcome.reward.total);
    }

    fn on_episode_end(&mut self, final_state: &StateVector) -> Result<(), SchedulerError> {
        Ok(self.finish_episode(final_state)?)
    }
}
