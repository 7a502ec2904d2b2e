//! Synthetic Montage-shaped applications, Poisson arrivals and deadlines.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::task_graph::{augment_with_dummies, Edge, RawGraph, TaskGraph};

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("invalid workload spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Graph(#[from] crate::task_graph::GraphError),
}

/// How `lambda` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ArrivalMode {
    /// `lambda` is the mean gap between arrivals in seconds.
    #[default]
    MeanGap,
    /// `lambda` is the number of arrivals per second.
    Rate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GraphShape {
    /// 25 real tasks in five layers of widths 1, 8, 8, 7, 1.
    #[default]
    Montage25,
    /// A fixed edge list over `num_tasks` real tasks.
    Custom { num_tasks: usize, edges: Vec<(usize, usize)> },
}

impl GraphShape {
    pub fn num_tasks(&self) -> usize {
        match self {
            GraphShape::Montage25 => 25,
            GraphShape::Custom { num_tasks, .. } => *num_tasks,
        }
    }

    /// Edges between real tasks, 0-based.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        match self {
            GraphShape::Montage25 => montage25_edges(),
            GraphShape::Custom { edges, .. } => edges.clone(),
        }
    }
}

/// Layered template after the 25-node Montage mosaic workflow: one splitter
/// feeding eight projections, eight pairwise difference fits over neighbouring
/// projections, seven background corrections over neighbouring fits, and a
/// final merge.
pub fn montage25_edges() -> Vec<(usize, usize)> {
    let project = |j: usize| 1 + j;
    let diff = |j: usize| 9 + j;
    let background = |k: usize| 17 + k;
    let merge = 24;
    let mut edges = Vec::new();
    for j in 0..8 {
        edges.push((0, project(j)));
    }
    for j in 0..8 {
        edges.push((project(j), diff(j)));
        edges.push((project((j + 1) % 8), diff(j)));
    }
    for k in 0..7 {
        edges.push((diff(k), background(k)));
        edges.push((diff(k + 1), background(k)));
    }
    for k in 0..7 {
        edges.push((background(k), merge));
    }
    edges
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    pub n_apps: usize,
    pub lambda: f64,
    pub arrival_mode: ArrivalMode,
    pub graph_shape: GraphShape,
    /// Range raw task runtimes are drawn from before clamping.
    pub runtime_candidates: [f64; 2],
    /// Clamp applied to task workloads (MI).
    pub workload_range: [f64; 2],
    /// Range raw base communication times are drawn from before clamping.
    pub bc_candidates: [f64; 2],
    /// Clamp applied to base communication times (seconds).
    pub bc_range: [f64; 2],
    /// Average transmission rate converting `bc` into megabits.
    pub mean_rate: f64,
    pub deadline_factor: f64,
    /// Per-task capability assumed when estimating the base makespan.
    pub reference_capability: f64,
    pub num_ecds: usize,
    pub start_time: f64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            n_apps: 10,
            lambda: 9.0,
            arrival_mode: ArrivalMode::MeanGap,
            graph_shape: GraphShape::Montage25,
            runtime_candidates: [50.0, 600.0],
            workload_range: [100.0, 500.0],
            bc_candidates: [5e-4, 1.2e-2],
            bc_range: [1e-3, 1e-2],
            mean_rate: 520.0,
            deadline_factor: 6.0,
            reference_capability: 5000.0,
            num_ecds: 4,
            start_time: 0.0,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        let fail = |msg: &str| Err(WorkloadError::Spec(msg.into()));
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return fail("lambda must be positive");
        }
        if ![self.runtime_candidates, self.workload_range, self.bc_candidates, self.bc_range].into_iter().all(ordered) {
            return fail("ranges must be ordered");
        }
        if !(self.workload_range[0] > 0.0) || self.bc_range[0] < 0.0 {
            return fail("workloads must be positive and bc non-negative");
        }
        if !(self.mean_rate > 0.0 && self.reference_capability > 0.0 && self.deadline_factor > 0.0) {
            return fail("rates, capability and deadline factor must be positive");
        }
        if self.num_ecds == 0 {
            return fail("need at least one ECD");
        }
        if self.graph_shape.num_tasks() == 0 {
            return fail("graph shape has no tasks");
        }
        Ok(())
    }

    pub fn mean_gap(&self) -> f64 {
        match self.arrival_mode {
            ArrivalMode::MeanGap => self.lambda,
            ArrivalMode::Rate => 1.0 / self.lambda,
        }
    }
}

pub fn clamp_workload(candidate: f64, range: [f64; 2]) -> f64 {
    candidate.clamp(range[0], range[1])
}

/// Data size in megabits for a base communication time.
pub fn edge_data(bc: f64, bc_range: [f64; 2], mean_rate: f64) -> f64 {
    bc.clamp(bc_range[0], bc_range[1]) * mean_rate
}

/// Longest workload path divided by `capability`, ignoring transfers.
pub fn base_makespan(graph: &TaskGraph, capability: f64) -> f64 {
    let order = graph.topological_order().expect("validated graphs are acyclic");
    let mut finish = vec![0.0f64; graph.num_tasks()];
    for &i in &order {
        let ready = graph.parents(i).iter().map(|p| finish[p.task]).fold(0.0, f64::max);
        finish[i] = ready + graph.task(i).workload / capability;
    }
    finish.into_iter().fold(0.0, f64::max)
}

/// Sets `d = r + factor * MS`.
pub fn assign_deadline(graph: &TaskGraph, capability: f64, factor: f64) -> TaskGraph {
    let r = graph.release_time();
    graph.with_schedule(r, r + factor * base_makespan(graph, capability))
}

/// `n` cumulative arrival times with exponential gaps of the given mean.
pub fn arrival_times<R: Rng + ?Sized>(n: usize, mean_gap: f64, start: f64, rng: &mut R) -> Vec<f64> {
    let exp = Exp::new(1.0 / mean_gap).expect("positive rate");
    let mut t = start;
    (0..n)
        .map(|_| {
            t += exp.sample(rng);
            t
        })
        .collect()
}

/// Draws `spec.n_apps` applications. LCTs are left unset.
pub fn generate<R: Rng + ?Sized>(spec: &WorkloadSpec, rng: &mut R) -> Result<Vec<TaskGraph>, WorkloadError> {
    spec.validate()?;
    let releases = arrival_times(spec.n_apps, spec.mean_gap(), spec.start_time, rng);
    let k = spec.graph_shape.num_tasks();
    let shape_edges = spec.graph_shape.edges();
    let mut apps = Vec::with_capacity(spec.n_apps);
    for (app_id, release) in releases.into_iter().enumerate() {
        let home = rng.random_range(1..=spec.num_ecds);
        let workloads: Vec<f64> = (0..k)
            .map(|_| {
                let runtime = rng.random_range(spec.runtime_candidates[0]..=spec.runtime_candidates[1]);
                clamp_workload(runtime, spec.workload_range)
            })
            .collect();
        let mut data = || {
            let bc = rng.random_range(spec.bc_candidates[0]..=spec.bc_candidates[1]);
            edge_data(bc, spec.bc_range, spec.mean_rate)
        };
        let edges: Vec<Edge> = shape_edges.iter().map(|&(s, d)| Edge::new(s, d, data())).collect();
        let raw = RawGraph { app_id, release_time: release, deadline: release, home_ecd: home, workloads, edges };
        let offload: Vec<f64> = raw.entries().iter().map(|_| data()).collect();
        let result: Vec<f64> = raw.exits().iter().map(|_| data()).collect();
        let graph = augment_with_dummies(&raw, &offload, &result)?;
        apps.push(assign_deadline(&graph, spec.reference_capability, spec.deadline_factor));
    }
    Ok(apps)
}
