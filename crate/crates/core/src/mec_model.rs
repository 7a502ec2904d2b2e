//! Edge devices, the network between them and the timing model.
//!
//! Units throughout: workloads in MI, capabilities in MIPS, data in megabits,
//! rates in Mbps, times in seconds. Device `0` is the mobile user hosting the
//! two dummy tasks; real devices are `1..=M`.

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::task_graph::{Task, TaskGraph, TaskId};

/// Id of the fictitious device standing for the mobile user.
pub const MOBILE_USER: usize = 0;

/// Capability levels used in the reference setup, fastest first (MIPS).
pub const DEFAULT_LEVELS: [f64; 5] = [6000.0, 5500.0, 5000.0, 4500.0, 4000.0];

/// Level transition matrix of the reference setup.
pub const DEFAULT_TRANSITIONS: [[f64; 5]; 5] = [
    [0.5, 0.25, 0.125, 0.0625, 0.0625],
    [0.0625, 0.5, 0.25, 0.125, 0.0625],
    [0.0625, 0.0625, 0.5, 0.25, 0.125],
    [0.125, 0.0625, 0.0625, 0.5, 0.25],
    [0.25, 0.125, 0.0625, 0.0625, 0.5],
];

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("transition matrix must be square and non-empty")]
    NotSquare,
    #[error("transition row {row} is not a probability vector (sum {sum})")]
    NotStochastic { row: usize, sum: f64 },
    #[error("device {0} needs at least one positive capability level")]
    BadLevels(usize),
    #[error("no transmission rate between device {from} and device {to}")]
    MissingRate { from: usize, to: usize },
    #[error("rate matrix must be {expected}x{expected} with positive off-diagonal entries")]
    BadRateMatrix { expected: usize },
    #[error("application {app} is incomplete: task {task} has no assignment")]
    Incomplete { app: usize, task: TaskId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapabilityChain {
    matrix: Vec<Vec<f64>>,
}

impl CapabilityChain {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let n = matrix.len();
        if n == 0 || matrix.iter().any(|row| row.len() != n) {
            return Err(ModelError::NotSquare);
        }
        for (row, probs) in matrix.iter().enumerate() {
            let sum: f64 = probs.iter().sum();
            if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) || (sum - 1.0).abs() > 1e-12 {
                return Err(ModelError::NotStochastic { row, sum });
            }
        }
        Ok(Self { matrix })
    }

    pub fn reference() -> Self {
        Self { matrix: DEFAULT_TRANSITIONS.iter().map(|r| r.to_vec()).collect() }
    }

    /// A chain that never leaves its current level.
    pub fn identity(levels: usize) -> Self {
        let matrix = (0..levels)
            .map(|i| (0..levels).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { matrix }
    }

    pub fn num_levels(&self) -> usize {
        self.matrix.len()
    }

    pub fn row(&self, level: usize) -> &[f64] {
        &self.matrix[level]
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    /// Draws the level following `current` by inverting the row's CDF.
    pub fn sample_next<R: Rng + ?Sized>(&self, current: usize, rng: &mut R) -> usize {
        let row = &self.matrix[current];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (level, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return level;
            }
        }
        // u landed in the rounding slack above the last partial sum
        row.iter().rposition(|&p| p > 0.0).unwrap_or(current)
    }
}

/// A task committed to a device and not yet completed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueuedTask {
    pub app: usize,
    pub task: TaskId,
    pub workload: f64,
    pub finish: f64,
}

/// One edge computing device with a single FCFS processing element.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDevice {
    id: usize,
    levels: Vec<f64>,
    current_level: usize,
    queue: VecDeque<QueuedTask>,
    queue_free_at: f64,
}

impl EdgeDevice {
    pub fn new(id: usize, levels: Vec<f64>) -> Result<Self, ModelError> {
        if levels.is_empty() || levels.iter().any(|&c| !(c > 0.0) || !c.is_finite()) {
            return Err(ModelError::BadLevels(id));
        }
        Ok(Self { id, levels, current_level: 0, queue: VecDeque::new(), queue_free_at: 0.0 })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn level(&self) -> usize {
        self.current_level
    }

    /// Current capability in MIPS.
    pub fn capability(&self) -> f64 {
        self.levels[self.current_level]
    }

    pub fn max_capability(&self) -> f64 {
        self.levels.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn set_level(&mut self, level: usize) {
        assert!(level < self.levels.len(), "level {level} out of range for device {}", self.id);
        self.current_level = level;
    }

    /// Time at which the PE finishes everything committed to it so far.
    pub fn queue_free_at(&self) -> f64 {
        self.queue_free_at
    }

    pub fn queue(&self) -> &VecDeque<QueuedTask> {
        &self.queue
    }

    /// Total MI of committed, uncompleted tasks (the executing one counted in full).
    pub fn queued_workload(&self) -> f64 {
        self.queue.iter().map(|q| q.workload).sum()
    }

    pub fn enqueue(&mut self, entry: QueuedTask) {
        debug_assert!(entry.finish >= self.queue_free_at, "FCFS violated on device {}", self.id);
        self.queue_free_at = self.queue_free_at.max(entry.finish);
        self.queue.push_back(entry);
    }

    /// Removes a completed task. Completions arrive in FCFS order, so this is
    /// normally the queue head.
    pub fn complete(&mut self, app: usize, task: TaskId) -> Option<QueuedTask> {
        let pos = self.queue.iter().position(|q| q.app == app && q.task == task)?;
        self.queue.remove(pos)
    }
}

/// Samples the device's next capability level; only executions that start
/// afterwards see the new level.
pub fn transition_capability<R: Rng + ?Sized>(
    device: &mut EdgeDevice,
    chain: &CapabilityChain,
    rng: &mut R,
) -> usize {
    let next = chain.sample_next(device.current_level, rng).min(device.levels.len() - 1);
    device.current_level = next;
    next
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    /// `inter_rate[m-1][m'-1]` is the rate from ECD m to ECD m'.
    inter_rate: Vec<Vec<f64>>,
    /// `uplink[m-1]` is the rate between ECD m and the users it covers.
    uplink: Vec<f64>,
}

impl NetworkTopology {
    pub fn new(inter_rate: Vec<Vec<f64>>, uplink: Vec<f64>) -> Result<Self, ModelError> {
        let m = inter_rate.len();
        let bad = m == 0
            || uplink.len() != m
            || inter_rate.iter().any(|row| row.len() != m)
            || uplink.iter().any(|&r| !(r > 0.0) || !r.is_finite())
            || (0..m).any(|a| (0..m).any(|b| a != b && (!(inter_rate[a][b] > 0.0) || !inter_rate[a][b].is_finite())));
        if bad {
            return Err(ModelError::BadRateMatrix { expected: m.max(1) });
        }
        Ok(Self { inter_rate, uplink })
    }

    /// Every ordered ECD pair linked at `rate`, every user at `uplink`.
    pub fn full_mesh(num_ecds: usize, rate: f64, uplink: f64) -> Result<Self, ModelError> {
        let inter = (0..num_ecds)
            .map(|a| (0..num_ecds).map(|b| if a == b { 0.0 } else { rate }).collect())
            .collect();
        Self::new(inter, vec![uplink; num_ecds])
    }

    pub fn num_ecds(&self) -> usize {
        self.inter_rate.len()
    }

    pub fn rate(&self, from: usize, to: usize) -> Result<f64, ModelError> {
        let m = self.num_ecds();
        if from == 0 || to == 0 || from > m || to > m || from == to {
            return Err(ModelError::MissingRate { from, to });
        }
        Ok(self.inter_rate[from - 1][to - 1])
    }

    pub fn uplink_rate(&self, ecd: usize) -> Result<f64, ModelError> {
        if ecd == 0 || ecd > self.num_ecds() {
            return Err(ModelError::MissingRate { from: MOBILE_USER, to: ecd });
        }
        Ok(self.uplink[ecd - 1])
    }

    /// Largest rate in the system, user uplinks included.
    pub fn max_rate(&self) -> f64 {
        let m = self.num_ecds();
        let inter = (0..m)
            .flat_map(|a| (0..m).filter(move |&b| b != a).map(move |b| (a, b)))
            .map(|(a, b)| self.inter_rate[a][b]);
        inter.chain(self.uplink.iter().copied()).fold(0.0, f64::max)
    }

    /// Sum of rates over ordered ECD pairs `m != m'`.
    pub fn sum_rate(&self) -> f64 {
        let m = self.num_ecds();
        let mut sum = 0.0;
        for a in 0..m {
            for b in 0..m {
                if a != b {
                    sum += self.inter_rate[a][b];
                }
            }
        }
        sum
    }
}

/// Where and when a task ran.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub app: usize,
    pub task: TaskId,
    pub device: usize,
    pub start: f64,
    pub finish: f64,
}

/// Execution time of `task` on `device` at its current level; zero for dummies.
pub fn execution_time(task: &Task, device: &EdgeDevice) -> f64 {
    if task.workload == 0.0 {
        0.0
    } else {
        task.workload / device.capability()
    }
}

/// Time to move `data_size` megabits from a task on `from` to a task on `to`.
///
/// Traffic between the user (device 0) and any ECD other than `home_ecd` is
/// relayed through `home_ecd`.
pub fn transfer_time(
    data_size: f64,
    from: usize,
    to: usize,
    topology: &NetworkTopology,
    home_ecd: usize,
) -> Result<f64, ModelError> {
    if from == to {
        return Ok(0.0);
    }
    if from == MOBILE_USER {
        let mut t = data_size / topology.uplink_rate(home_ecd)?;
        if to != home_ecd {
            t += data_size / topology.rate(home_ecd, to)?;
        }
        return Ok(t);
    }
    if to == MOBILE_USER {
        let mut t = data_size / topology.uplink_rate(home_ecd)?;
        if from != home_ecd {
            t += data_size / topology.rate(from, home_ecd)?;
        }
        return Ok(t);
    }
    Ok(data_size / topology.rate(from, to)?)
}

/// FCFS start and finish of `task` committed to `target` at time `now`.
pub fn completion_time(
    app: usize,
    task: &Task,
    target: &EdgeDevice,
    parent_arrivals: &[f64],
    now: f64,
) -> Assignment {
    let ready = parent_arrivals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = target.queue_free_at().max(ready).max(now);
    Assignment { app, task: task.task_id, device: target.id(), start, finish: start + execution_time(task, target) }
}

/// Completion of the dummy sink: the latest result arrival at the user.
pub fn sink_finish(parent_arrivals: &[f64]) -> f64 {
    parent_arrivals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Latest finish over all tasks minus the release time.
pub fn makespan(graph: &TaskGraph, assignments: &[Option<Assignment>]) -> Result<f64, ModelError> {
    let mut latest = f64::NEG_INFINITY;
    for task in 0..graph.num_tasks() {
        let a = assignments
            .get(task)
            .copied()
            .flatten()
            .ok_or(ModelError::Incomplete { app: graph.app_id(), task })?;
        latest = latest.max(a.finish);
    }
    Ok(latest - graph.release_time())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use crate::task_graph::Edge;

    fn task(workload: f64) -> Task {
        Task { app_id: 0, task_id: 1, workload, lct: None }
    }

    fn device(id: usize, mips: f64) -> EdgeDevice {
        EdgeDevice::new(id, vec![mips]).unwrap()
    }

    #[test]
    fn execution_time_examples() {
        assert!((execution_time(&task(500.0), &device(1, 5000.0)) - 0.1).abs() < 1e-15);
        assert_eq!(execution_time(&task(0.0), &device(1, 5000.0)), 0.0);
        assert!((execution_time(&task(100.0), &device(1, 4000.0)) - 0.025).abs() < 1e-15);
    }

    fn topo() -> NetworkTopology {
        NetworkTopology::full_mesh(4, 440.0, 1000.0).unwrap()
    }

    #[test]
    fn transfer_time_cases() {
        let t = topo();
        assert_eq!(transfer_time(50.0, 2, 2, &t, 1).unwrap(), 0.0);
        assert!((transfer_time(100.0, MOBILE_USER, 2, &t, 2).unwrap() - 0.1).abs() < 1e-12);
        assert!((transfer_time(440.0, MOBILE_USER, 3, &t, 1).unwrap() - 1.44).abs() < 1e-12);
        assert!((transfer_time(44.0, 1, 3, &t, 2).unwrap() - 0.1).abs() < 1e-12);
        // results to the user mirror the offload path
        assert!((transfer_time(440.0, 3, MOBILE_USER, &t, 1).unwrap() - 1.44).abs() < 1e-12);
        assert!((transfer_time(100.0, 1, MOBILE_USER, &t, 1).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn transfer_time_missing_rate() {
        assert_eq!(
            transfer_time(1.0, 1, 9, &topo(), 1),
            Err(ModelError::MissingRate { from: 1, to: 9 })
        );
    }

    #[test]
    fn completion_time_examples() {
        let mut d = device(1, 1000.0);
        d.enqueue(QueuedTask { app: 0, task: 9, workload: 1.0, finish: 2.0 });
        let a = completion_time(0, &task(100.0), &d, &[1.5, 0.3], 1.0);
        assert!((a.finish - 2.1).abs() < 1e-12);
        assert_eq!(a.start, 2.0);

        let idle = device(1, 1000.0);
        let a = completion_time(0, &task(100.0), &idle, &[4.0], 4.0);
        assert!((a.finish - 4.1).abs() < 1e-12);

        assert_eq!(sink_finish(&[3.0, 2.5]), 3.0);
    }

    #[test]
    fn makespan_examples() {
        let g = TaskGraph::new(0, 2.4, 20.0, 1, vec![0.0, 1.0, 0.0], vec![Edge::new(0, 1, 0.0), Edge::new(1, 2, 0.0)]);
        let a = |task, finish| Some(Assignment { app: 0, task, device: 0, start: 0.0, finish });
        let full = vec![a(0, 2.4), a(1, 5.0), a(2, 12.4)];
        assert!((makespan(&g, &full).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(makespan(&g, &[a(0, 2.4), None, None]), Err(ModelError::Incomplete { app: 0, task: 1 }));
        let flat = vec![a(0, 2.4), a(1, 2.4), a(2, 2.4)];
        assert_eq!(makespan(&g, &flat).unwrap(), 0.0);
    }

    #[test]
    fn single_task_makespan_chain() {
        // offload 100 Mbit at 1000 Mbps, 500 MI at 5000 MIPS, result 100 Mbit back
        let t = topo();
        let offload = transfer_time(100.0, MOBILE_USER, 1, &t, 1).unwrap();
        let d = device(1, 5000.0);
        let a = completion_time(0, &task(500.0), &d, &[0.0 + offload], 0.0);
        let back = transfer_time(100.0, 1, MOBILE_USER, &t, 1).unwrap();
        let sink = sink_finish(&[a.finish + back]);
        assert!((sink - 0.3).abs() < 1e-12);
    }

    #[test]
    fn chain_validation() {
        assert!(CapabilityChain::new(vec![vec![0.5, 0.4], vec![0.5, 0.5]]).is_err());
        assert!(CapabilityChain::new(vec![vec![1.0, 0.0]]).is_err());
        assert!(CapabilityChain::new(vec![vec![1.5, -0.5], vec![0.5, 0.5]]).is_err());
        let chain = CapabilityChain::reference();
        assert_eq!(chain.row(0)[0], 0.5);
        assert_eq!(chain.num_levels(), 5);
    }

    #[test]
    fn identity_chain_never_moves() {
        let chain = CapabilityChain::identity(5);
        let mut d = EdgeDevice::new(1, DEFAULT_LEVELS.to_vec()).unwrap();
        d.set_level(3);
        let mut rng = SeedTree::new(1).stream("cap", 0);
        for _ in 0..1000 {
            assert_eq!(transition_capability(&mut d, &chain, &mut rng), 3);
        }
    }

    #[test]
    fn transition_stays_in_level_set() {
        let chain = CapabilityChain::reference();
        let mut d = EdgeDevice::new(1, DEFAULT_LEVELS.to_vec()).unwrap();
        let mut rng = SeedTree::new(2).stream("cap", 0);
        for _ in 0..1000 {
            let level = transition_capability(&mut d, &chain, &mut rng);
            assert!(level < 5);
            assert!(DEFAULT_LEVELS.contains(&d.capability()));
        }
    }

    #[test]
    fn empirical_row_frequencies_match_matrix() {
        let chain = CapabilityChain::reference();
        let mut rng = SeedTree::new(11).stream("cap", 0);
        let mut counts = [0usize; 5];
        let draws = 100_000;
        for _ in 0..draws {
            counts[chain.sample_next(2, &mut rng)] += 1;
        }
        for (level, &c) in counts.iter().enumerate() {
            let freq = c as f64 / draws as f64;
            assert!((freq - chain.row(2)[level]).abs() < 0.01, "level {level}: {freq}");
        }
    }

    #[test]
    fn topology_aggregates() {
        let t = topo();
        assert_eq!(t.sum_rate(), 12.0 * 440.0);
        assert_eq!(t.max_rate(), 1000.0);
        assert!(NetworkTopology::full_mesh(2, 0.0, 1.0).is_err());
    }

    #[test]
    fn device_queue_is_fcfs() {
        let mut d = device(1, 1000.0);
        d.enqueue(QueuedTask { app: 0, task: 1, workload: 100.0, finish: 1.0 });
        d.enqueue(QueuedTask { app: 1, task: 1, workload: 200.0, finish: 2.0 });
        assert_eq!(d.queued_workload(), 300.0);
        assert_eq!(d.queue_free_at(), 2.0);
        assert_eq!(d.complete(0, 1).unwrap().finish, 1.0);
        assert_eq!(d.queued_workload(), 200.0);
        assert!(d.complete(5, 5).is_none());
    }
}
