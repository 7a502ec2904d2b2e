//! Reference schedulers: uniform random placement, greedy earliest finish, a
//! HEFT-style static planner and a dueling Q-network for the learning stack.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use rand::Rng;

use crate::dqn_core::{Activation, Architecture, Dense, Mlp, MlpCache, NetworkError, QNetwork};
use crate::mec_model::{transfer_time, MOBILE_USER};
use crate::rng::StreamRng;
use crate::sim_engine::{DecisionContext, Scheduler, SchedulerError};
use crate::task_graph::{TaskGraph, TaskId};

/// Uniform draw over the real ECDs `1..=num_ecds`.
pub fn decide_random<R: Rng + ?Sized>(num_ecds: usize, rng: &mut R) -> Result<usize, SchedulerError> {
    if num_ecds == 0 {
        return Err(SchedulerError::NoDevices);
    }
    Ok(rng.random_range(1..=num_ecds))
}

/// The ECD on which the task would finish first, given current queues and
/// capability levels. Ties go to the lowest id.
pub fn decide_greedy_eft(ctx: &DecisionContext<'_>) -> Result<usize, SchedulerError> {
    let mut best: Option<(usize, f64)> = None;
    for m in 1..=ctx.num_ecds() {
        let finish = ctx.plan_on(m)?.finish;
        if best.is_none_or(|(_, f)| finish < f) {
            best = Some((m, finish));
        }
    }
    best.map(|(m, _)| m).ok_or(SchedulerError::NoDevices)
}

pub struct RandomScheduler {
    rng: StreamRng,
}

impl RandomScheduler {
    pub fn new(rng: StreamRng) -> Self {
        Self { rng }
    }
}

impl Scheduler for RandomScheduler {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<usize, SchedulerError> {
        decide_random(ctx.num_ecds(), &mut self.rng)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyEftScheduler;

impl Scheduler for GreedyEftScheduler {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<usize, SchedulerError> {
        decide_greedy_eft(ctx)
    }
}

/// Upward rank of every task using mean capability and mean link rate.
///
/// Dummies have zero workload; edges touching them use the uplink rate of the
/// home ECD instead of the mean inter-ECD rate.
pub fn upward_ranks(graph: &TaskGraph, mean_capability: f64, mean_rate: f64, uplink: f64) -> Vec<f64> {
    let order = graph.topological_order().expect("validated graphs are acyclic");
    let mut rank = vec![0.0; graph.num_tasks()];
    for &i in order.iter().rev() {
        let tail = graph
            .children(i)
            .iter()
            .map(|c| {
                let rate = if graph.is_dummy(c.task) || graph.is_dummy(i) { uplink } else { mean_rate };
                c.data_size / rate + rank[c.task]
            })
            .fold(0.0, f64::max);
        rank[i] = graph.task(i).workload / mean_capability + tail;
    }
    rank
}

/// HEFT-like list scheduler.
///
/// The first time any task of an application is up for decision, the whole
/// application is planned: real tasks in descending upward rank each go to the
/// ECD giving the earliest finish, appended after everything already queued
/// there (no gap insertion, so FCFS order is kept). Later decisions replay the
/// plan.
#[derive(Debug, Clone, Default)]
pub struct HeftScheduler {
    plans: BTreeMap<usize, Vec<usize>>,
}

impl HeftScheduler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn plan(ctx: &DecisionContext<'_>) -> Result<Vec<usize>, SchedulerError> {
        let m = ctx.num_ecds();
        if m == 0 {
            return Err(SchedulerError::NoDevices);
        }
        let graph = ctx.graph;
        let topo = ctx.topology;
        let home = graph.home_ecd();
        let mean_capability = ctx
            .devices
            .iter()
            .map(|d| d.levels().iter().sum::<f64>() / d.levels().len() as f64)
            .sum::<f64>()
            / m as f64;
        let mean_rate = if m > 1 { topo.sum_rate() / (m * (m - 1)) as f64 } else { 1.0 };
        let uplink = topo.uplink_rate(home).map_err(crate::sim_engine::PlanError::from)?;
        let rank = upward_ranks(graph, mean_capability, mean_rate, uplink);

        let mut order: Vec<TaskId> = graph.real_tasks().collect();
        order.sort_by(|&a, &b| rank[b].total_cmp(&rank[a]).then(a.cmp(&b)));

        let mut device = vec![MOBILE_USER; graph.num_tasks()];
        let mut finish = vec![f64::NAN; graph.num_tasks()];
        for (t, a) in ctx.assignments.iter().enumerate() {
            if let Some(a) = a {
                device[t] = a.device;
                finish[t] = a.finish;
            }
        }
        let mut avail: Vec<f64> = ctx.devices.iter().map(|d| d.queue_free_at().max(ctx.now)).collect();
        for &task in &order {
            if ctx.assignments[task].is_some() {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for ecd in 1..=m {
                let mut ready = ctx.now;
                for p in graph.parents(task) {
                    let t = transfer_time(p.data_size, device[p.task], ecd, topo, home)
                        .map_err(crate::sim_engine::PlanError::from)?;
                    ready = ready.max(finish[p.task] + t);
                }
                let eft = avail[ecd - 1].max(ready) + graph.task(task).workload / ctx.devices[ecd - 1].capability();
                if best.is_none_or(|(_, f)| eft < f) {
                    best = Some((ecd, eft));
                }
            }
            let (ecd, eft) = best.expect("at least one ECD");
            device[task] = ecd;
            finish[task] = eft;
            avail[ecd - 1] = eft;
        }
        Ok(device)
    }
}

impl Scheduler for HeftScheduler {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<usize, SchedulerError> {
        let app = ctx.graph.app_id();
        let plan = match self.plans.entry(app) {
            std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::btree_map::Entry::Vacant(e) => e.insert(Self::plan(ctx)?),
        };
        Ok(plan[ctx.task])
    }
}

/// Q-network with separate state-value and advantage heads on a shared trunk:
/// `Q(s, a) = V(s) + A(s, a) - mean_a A(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DuelingNetwork {
    trunk: Mlp,
    value: Dense,
    advantage: Dense,
}

#[derive(Debug, Clone)]
pub struct DuelingCache {
    trunk: MlpCache,
}

impl DuelingNetwork {
    /// `trunk_sizes` runs from the input width to the shared feature width;
    /// every trunk layer is followed by `activation`.
    pub fn new<R: Rng + ?Sized>(trunk_sizes: &[usize], num_actions: usize, activation: Activation, rng: &mut R) -> Self {
        let trunk = Mlp::with_output(trunk_sizes, activation, activation, rng);
        let features = *trunk_sizes.last().expect("non-empty trunk");
        Self {
            trunk,
            value: Dense::xavier(features, 1, rng),
            advantage: Dense::xavier(features, num_actions, rng),
        }
    }

    pub fn from_parts(trunk: Mlp, value: Dense, advantage: Dense) -> Self {
        assert_eq!(value.fan_out(), 1);
        assert_eq!(value.fan_in(), advantage.fan_in());
        Self { trunk, value, advantage }
    }

    /// Zero-initialised network matching `arch`.
    pub fn from_architecture(arch: &Architecture) -> Result<Self, NetworkError> {
        let sizes = &arch.layer_sizes;
        if arch.kind != "dueling" || sizes.len() < 3 {
            return Err(NetworkError::Architecture(format!("cannot build a dueling net from {arch:?}")));
        }
        let trunk_sizes = &sizes[..sizes.len() - 1];
        let layers = trunk_sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        let features = trunk_sizes[trunk_sizes.len() - 1];
        Ok(Self {
            trunk: Mlp::from_layers(layers, arch.hidden, arch.hidden),
            value: Dense::zeros(features, 1),
            advantage: Dense::zeros(features, sizes[sizes.len() - 1]),
        })
    }

    fn combine(v: &Array2<f64>, a: &Array2<f64>) -> Array2<f64> {
        let mean = a.mean_axis(Axis(1)).expect("at least one action").insert_axis(Axis(1));
        a - &mean + v
    }
}

impl QNetwork for DuelingNetwork {
    type Cache = DuelingCache;

    fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    fn num_actions(&self) -> usize {
        self.advantage.fan_out()
    }

    fn architecture(&self) -> Architecture {
        let mut layer_sizes = self.trunk.layer_sizes();
        layer_sizes.push(self.num_actions());
        Architecture { kind: "dueling".into(), layer_sizes, hidden: self.trunk.hidden_activation() }
    }

    fn forward(&self, input: &Array2<f64>) -> Array2<f64> {
        let f = self.trunk.forward(input);
        Self::combine(&self.value.forward(&f), &self.advantage.forward(&f))
    }

    fn forward_cached(&self, input: &Array2<f64>) -> (Array2<f64>, DuelingCache) {
        let (f, trunk) = self.trunk.forward_cached(input);
        let q = Self::combine(&self.value.forward(&f), &self.advantage.forward(&f));
        (q, DuelingCache { trunk })
    }

    fn backward(&self, cache: &DuelingCache, grad_output: &Array2<f64>) -> Vec<Vec<f64>> {
        let f = cache.trunk.output();
        let gv = grad_output.sum_axis(Axis(1)).insert_axis(Axis(1));
        let mean = grad_output.mean_axis(Axis(1)).expect("at least one action").insert_axis(Axis(1));
        let ga = grad_output - &mean;
        let mut gf = gv.dot(&self.value.weights.t());
        gf += &ga.dot(&self.advantage.weights.t());
        let (mut grads, _) = self.trunk.backward_full(&cache.trunk, &gf);
        grads.push(f.t().dot(&gv).iter().copied().collect());
        grads.push(gv.sum_axis(Axis(0)).to_vec());
        grads.push(f.t().dot(&ga).iter().copied().collect());
        grads.push(ga.sum_axis(Axis(0)).to_vec());
        grads
    }

    fn params(&self) -> Vec<&[f64]> {
        let mut p = self.trunk.params();
        for d in [&self.value, &self.advantage] {
            p.push(d.weights.as_slice().expect("standard layout"));
            p.push(d.bias.as_slice().expect("contiguous"));
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.trunk.params_mut();
        for d in [&mut self.value, &mut self.advantage] {
            p.push(d.weights.as_slice_mut().expect("standard layout"));
            p.push(d.bias.as_slice_mut().expect("contiguous"));
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp_agent::{ActionMask, RewardParams};
    use crate::mec_model::{Assignment, CapabilityChain, EdgeDevice, NetworkTopology, QueuedTask};
    use crate::rng::SeedTree;
    use crate::sim_engine::{observe_state, run, EnvSpec};
    use crate::task_graph::{compute_lct, Edge};
    use ndarray::array;

    #[test]
    fn random_is_uniform() {
        let mut rng = SeedTree::new(1).stream("random-policy", 0);
        let draws = 1_000_000;
        let mut counts = [0usize; 5];
        for _ in 0..draws {
            counts[decide_random(4, &mut rng).unwrap()] += 1;
        }
        assert_eq!(counts[0], 0);
        for &c in &counts[1..] {
            assert!((c as f64 / draws as f64 - 0.25).abs() < 0.005, "{counts:?}");
        }
        assert_eq!(decide_random(1, &mut rng).unwrap(), 1);
        assert_eq!(decide_random(0, &mut rng), Err(SchedulerError::NoDevices));
    }

    fn chain(offload: f64, data: f64) -> TaskGraph {
        let g = TaskGraph::new(
            0,
            0.0,
            10.0,
            1,
            vec![0.0, 300.0, 300.0, 0.0],
            vec![Edge::new(0, 1, offload), Edge::new(1, 2, data), Edge::new(2, 3, 1.0)],
        );
        compute_lct(&g, 6000.0, 1000.0, 1000.0).unwrap()
    }

    fn ctx_fixture<'a>(
        graph: &'a TaskGraph,
        devices: &'a [EdgeDevice],
        topo: &'a NetworkTopology,
        assignments: &'a [Option<Assignment>],
        task: TaskId,
    ) -> DecisionContext<'a> {
        DecisionContext {
            now: 0.0,
            step: 1,
            graph,
            task,
            state: observe_state(topo, devices, 0.0, graph.home_ecd()).unwrap(),
            devices,
            topology: topo,
            assignments,
        }
    }

    fn uniform_devices(m: usize) -> Vec<EdgeDevice> {
        (1..=m).map(|i| EdgeDevice::new(i, vec![5000.0]).unwrap()).collect()
    }

    #[test]
    fn greedy_ties_to_lowest_id() {
        // nothing to offload, so every ECD can start at once
        let g = chain(0.0, 1.0);
        let devices = uniform_devices(3);
        let topo = NetworkTopology::full_mesh(3, 440.0, 1000.0).unwrap();
        let mut assigned = vec![None; g.num_tasks()];
        assigned[0] = Some(Assignment { app: 0, task: 0, device: 0, start: 0.0, finish: 0.0 });
        assert_eq!(decide_greedy_eft(&ctx_fixture(&g, &devices, &topo, &assigned, 1)).unwrap(), 1);
    }

    #[test]
    fn greedy_avoids_busy_device() {
        let g = chain(0.0, 1.0);
        let mut devices = uniform_devices(3);
        devices[0].enqueue(QueuedTask { app: 9, task: 1, workload: 1.0, finish: 10.0 });
        let topo = NetworkTopology::full_mesh(3, 440.0, 1000.0).unwrap();
        let mut assigned = vec![None; g.num_tasks()];
        assigned[0] = Some(Assignment { app: 0, task: 0, device: 0, start: 0.0, finish: 0.0 });
        assert_eq!(decide_greedy_eft(&ctx_fixture(&g, &devices, &topo, &assigned, 1)).unwrap(), 2);
    }

    #[test]
    fn greedy_prefers_parent_device_for_big_edges() {
        let g = chain(1.0, 400.0);
        let devices = uniform_devices(3);
        let topo = NetworkTopology::full_mesh(3, 440.0, 1000.0).unwrap();
        let mut assigned = vec![None; g.num_tasks()];
        assigned[0] = Some(Assignment { app: 0, task: 0, device: 0, start: 0.0, finish: 0.0 });
        assigned[1] = Some(Assignment { app: 0, task: 1, device: 2, start: 0.0, finish: 0.06 });
        assert_eq!(decide_greedy_eft(&ctx_fixture(&g, &devices, &topo, &assigned, 2)).unwrap(), 2);
    }

    #[test]
    fn upward_rank_of_chain() {
        let g = chain(1.0, 10.0);
        let r = upward_ranks(&g, 5000.0, 100.0, 1000.0);
        // sink 0; task 2: 0.06 + 0.001; task 1: 0.06 + 0.1 + task 2; source: 0.001 + task 1
        assert!((r[2] - 0.061).abs() < 1e-12);
        assert!((r[1] - 0.221).abs() < 1e-12);
        assert!((r[0] - 0.222).abs() < 1e-12);
    }

    #[test]
    fn heft_places_every_task_validly() {
        let env = EnvSpec::uniform(
            NetworkTopology::full_mesh(4, 440.0, 1000.0).unwrap(),
            CapabilityChain::reference(),
            crate::mec_model::DEFAULT_LEVELS.to_vec(),
            RewardParams::default(),
        );
        let apps: Vec<_> = (0..3).map(|i| chain(1.0, 5.0).with_app_id(i).with_schedule(i as f64 * 0.1, 10.0)).collect();
        let apps: Vec<_> = apps.iter().map(|g| compute_lct(g, 6000.0, 1000.0, 1000.0).unwrap()).collect();
        let trace = run(&apps, &env, &mut HeftScheduler::new(), 3).unwrap();
        assert_eq!(trace.decisions().count(), 6);
        assert!(trace.decisions().all(|d| (1..=4).contains(&d.device)));
    }

    #[test]
    fn equal_advantages_give_q_equal_v() {
        let trunk = Mlp::from_layers(vec![Dense::zeros(5, 2)], Activation::Relu, Activation::Relu);
        let mut value = Dense::zeros(2, 1);
        value.bias = array![1.5];
        let mut advantage = Dense::zeros(2, 3);
        advantage.bias = array![4.0, 4.0, 4.0];
        let net = DuelingNetwork::from_parts(trunk, value, advantage);
        let q = net.forward(&array![[0.1, 0.2, 0.3, 0.4, 0.5]]);
        assert_eq!(q, array![[1.5, 1.5, 1.5]]);
        let mut rng = SeedTree::new(0).stream("explore", 0);
        let mask = ActionMask::for_ecds(2);
        let a = crate::dqn_core::select_action(q.row(0).as_slice().unwrap(), &mask, 0.0, &mut rng).unwrap();
        assert_eq!(a, 1);
    }

    #[test]
    fn hand_built_two_action_head() {
        // f = relu(x . [1, -1]^T) per feature; V = 2 f0, A = (f0, 3 f1)
        let trunk_layer = Dense { weights: array![[1.0, 0.0], [0.0, 1.0]], bias: array![0.0, 0.0] };
        let trunk = Mlp::from_layers(vec![trunk_layer], Activation::Relu, Activation::Relu);
        let value = Dense { weights: array![[2.0], [0.0]], bias: array![0.0] };
        let advantage = Dense { weights: array![[1.0, 0.0], [0.0, 3.0]], bias: array![0.0, 0.0] };
        let net = DuelingNetwork::from_parts(trunk, value, advantage);
        // x = (2, 1): f = (2, 1), V = 4, A = (2, 3), mean 2.5 -> Q = (3.5, 4.5)
        assert_eq!(net.forward(&array![[2.0, 1.0]]), array![[3.5, 4.5]]);
        // x = (-1, 1): f = (0, 1), V = 0, A = (0, 3) -> Q = (-1.5, 1.5)
        assert_eq!(net.forward(&array![[-1.0, 1.0]]), array![[-1.5, 1.5]]);
    }

    #[test]
    fn dueling_architecture_round_trip() {
        let mut rng = SeedTree::new(2).stream("init", 0);
        let net = DuelingNetwork::new(&[5, 16, 8], 5, Activation::Relu, &mut rng);
        let arch = net.architecture();
        assert_eq!(arch.layer_sizes, vec![5, 16, 8, 5]);
        let mut rebuilt = DuelingNetwork::from_architecture(&arch).unwrap();
        rebuilt.copy_params_from(&net).unwrap();
        assert_eq!(rebuilt, net);
    }
}
