use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::network::{NetworkError, QNetwork};
use super::optim::Adam;
use crate::mdp_agent::{ActionMask, Experience, LearnerError, STATE_DIM};

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("empty training batch")]
    EmptyBatch,
    #[error("loss is not finite ({0}); training diverged")]
    Diverged(f64),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

impl From<TrainError> for LearnerError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged(loss) => LearnerError::Diverged(loss),
            other => LearnerError::Training(other.to_string()),
        }
    }
}

/// ε-greedy choice over the unmasked entries of `q`.
///
/// Exploration picks uniformly among valid actions; exploitation takes the
/// argmax with ties going to the lowest index. No randomness is consumed when
/// `epsilon` is zero.
pub fn select_action<R: Rng + ?Sized>(
    q: &[f64],
    mask: &ActionMask,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize, LearnerError> {
    let valid: Vec<usize> = mask.valid_actions().filter(|&a| a < q.len()).collect();
    if valid.is_empty() {
        return Err(LearnerError::AllMasked);
    }
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(valid[rng.random_range(0..valid.len())]);
    }
    Ok(greedy(q, &valid))
}

fn greedy(q: &[f64], valid: &[usize]) -> usize {
    let mut best = valid[0];
    for &a in &valid[1..] {
        if q[a] > q[best] {
            best = a;
        }
    }
    best
}

fn max_unmasked(q: &[f64], mask: &ActionMask) -> f64 {
    mask.valid_actions().filter(|&a| a < q.len()).map(|a| q[a]).fold(f64::NEG_INFINITY, f64::max)
}

/// Linear decay from `start` to `end` over `decay_steps`, then constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        Self { start: epsilon, end: epsilon, decay_steps: 0 }
    }

    /// Decays over `fraction` of `total_steps`.
    pub fn over_fraction(start: f64, end: f64, fraction: f64, total_steps: u64) -> Self {
        Self { start, end, decay_steps: (fraction * total_steps as f64).round() as u64 }
    }

    pub fn value(&self, step: u64) -> f64 {
        if self.decay_steps == 0 || step >= self.decay_steps {
            return self.end;
        }
        self.start + (self.end - self.start) * step as f64 / self.decay_steps as f64
    }
}

pub fn batch_matrix(rows: impl ExactSizeIterator<Item = [f64; STATE_DIM]>) -> Array2<f64> {
    let n = rows.len();
    let flat: Vec<f64> = rows.flatten().collect();
    Array2::from_shape_vec((n, STATE_DIM), flat).expect("rows have STATE_DIM entries")
}

/// `y = r + gamma * max_a' target(s')[a']` over unmasked `a'`.
pub fn compute_targets<N: QNetwork>(batch: &[Experience], target: &N, mask: &ActionMask, gamma: f64) -> Vec<f64> {
    if gamma == 0.0 {
        return batch.iter().map(|e| e.reward).collect();
    }
    let next = target.forward(&batch_matrix(batch.iter().map(|e| e.next_state)));
    batch
        .iter()
        .zip(next.rows())
        .map(|(e, q)| e.reward + gamma * max_unmasked(q.as_slice().expect("row-major output"), mask))
        .collect()
}

/// One optimizer step on the mean squared TD error of the taken actions.
///
/// Returns the loss measured before the update.
pub fn train_step<N: QNetwork>(
    net: &mut N,
    target: &N,
    batch: &[Experience],
    mask: &ActionMask,
    gamma: f64,
    optimizer: &mut Adam,
) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let states = batch_matrix(batch.iter().map(|e| e.state));
    net.check_input(&states)?;
    let targets = compute_targets(batch, target, mask, gamma);
    let (q, cache) = net.forward_cached(&states);
    let n = batch.len() as f64;
    let mut grad = Array2::zeros(q.dim());
    let mut loss = 0.0;
    for (i, (e, y)) in batch.iter().zip(&targets).enumerate() {
        let err = q[[i, e.action]] - y;
        loss += err * err;
        grad[[i, e.action]] = 2.0 * err / n;
    }
    loss /= n;
    if !loss.is_finite() {
        return Err(TrainError::Diverged(loss));
    }
    let grads = net.backward(&cache, &grad);
    optimizer.update(&mut net.params_mut(), &grads);
    if !net.params_finite() {
        return Err(TrainError::Diverged(f64::NAN));
    }
    Ok(loss)
}

/// Copies the online parameters into the target network.
pub fn sync_target<N: QNetwork>(net: &N, target: &mut N) -> Result<(), NetworkError> {
    target.copy_params_from(net)
}
