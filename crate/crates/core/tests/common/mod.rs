//! Shared test helpers: a brute-force timing oracle and random case builders.
#![allow(dead_code)]

use std::collections::BTreeMap;

use edge_offload::mdp_agent::RewardParams;
use edge_offload::mec_model::{CapabilityChain, NetworkTopology};
use edge_offload::rng::StreamRng;
use edge_offload::sim_engine::{run, EnvSpec, ScriptedScheduler, SimulationTrace};
use edge_offload::task_graph::{augment_with_dummies, compute_lct, Edge, RawGraph, TaskGraph};
use rand::Rng;

/// A small system with frozen (single-level) capabilities.
#[derive(Debug, Clone)]
pub struct Case {
    pub apps: Vec<TaskGraph>,
    pub capability: Vec<f64>,
    pub rates: Vec<Vec<f64>>,
    pub uplink: Vec<f64>,
}

impl Case {
    pub fn num_ecds(&self) -> usize {
        self.capability.len()
    }

    pub fn env(&self) -> EnvSpec {
        let topology = NetworkTopology::new(self.rates.clone(), self.uplink.clone()).unwrap();
        let mut env = EnvSpec::uniform(topology, CapabilityChain::identity(1), vec![1.0], RewardParams::default());
        env.levels = self.capability.iter().map(|&c| vec![c]).collect();
        env
    }

    /// Data transfer time between two devices (0 is the user).
    fn transfer(&self, data: f64, from: usize, to: usize, home: usize) -> f64 {
        match (from, to) {
            _ if from == to => 0.0,
            (0, b) => data / self.uplink[home - 1] + if b == home { 0.0 } else { data / self.rates[home - 1][b - 1] },
            (a, 0) => data / self.uplink[home - 1] + if a == home { 0.0 } else { data / self.rates[a - 1][home - 1] },
            (a, b) => data / self.rates[a - 1][b - 1],
        }
    }
}

pub fn random_case<R: Rng>(rng: &mut R, max_tasks: usize, num_apps: usize, ecds: std::ops::RangeInclusive<usize>) -> Case {
    let m = rng.random_range(ecds);
    let capability: Vec<f64> = (0..m).map(|_| rng.random_range(2000.0..8000.0)).collect();
    let rates: Vec<Vec<f64>> =
        (0..m).map(|a| (0..m).map(|b| if a == b { 0.0 } else { rng.random_range(100.0..1000.0) }).collect()).collect();
    let uplink: Vec<f64> = (0..m).map(|_| rng.random_range(200.0..1500.0)).collect();
    let max_cap = capability.iter().copied().fold(0.0, f64::max);
    let max_rate = rates.iter().flatten().chain(&uplink).copied().fold(0.0, f64::max);
    let mut apps = Vec::new();
    let mut release: f64 = 0.0;
    for app_id in 0..num_apps {
        let k = rng.random_range(1..=max_tasks);
        let workloads: Vec<f64> = (0..k).map(|_| rng.random_range(100.0..500.0)).collect();
        let mut edges = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                if rng.random_bool(0.35) {
                    edges.push(Edge::new(i, j, rng.random_range(1.0..60.0)));
                }
            }
        }
        // arrivals sometimes coincide to exercise batching of simultaneous events
        if app_id > 0 && !rng.random_bool(0.25) {
            release += rng.random_range(0.0..0.3);
        }
        let raw = RawGraph {
            app_id,
            release_time: release,
            deadline: release + rng.random_range(0.2..2.0),
            home_ecd: rng.random_range(1..=m),
            workloads,
            edges,
        };
        let offload: Vec<f64> = raw.entries().iter().map(|_| rng.random_range(1.0..60.0)).collect();
        let result: Vec<f64> = raw.exits().iter().map(|_| rng.random_range(1.0..60.0)).collect();
        let g = augment_with_dummies(&raw, &offload, &result).unwrap();
        let home = g.home_ecd();
        apps.push(compute_lct(&g, max_cap, max_rate, uplink[home - 1]).unwrap());
    }
    Case { apps, capability, rates, uplink }
}

/// Finish time of every task of every app, and each app's makespan.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub finish: Vec<Vec<f64>>,
    pub device: Vec<Vec<usize>>,
    pub makespan: Vec<f64>,
}

/// Re-derives the schedule from first principles.
///
/// Tasks become eligible at event instants (arrivals and completions) in
/// ascending LCT order, provided every earlier task of their app's LCT order
/// is already placed and all their parents are placed. Each placed task starts
/// at the latest of the decision instant, its device becoming free and the
/// arrival of its last input.
pub fn oracle(case: &Case, placement: &[Vec<usize>]) -> OracleResult {
    let n = case.apps.len();
    let mut finish: Vec<Vec<Option<f64>>> = case.apps.iter().map(|g| vec![None; g.num_tasks()]).collect();
    let mut device: Vec<Vec<usize>> = case.apps.iter().map(|g| vec![0; g.num_tasks()]).collect();
    let order: Vec<Vec<usize>> = case
        .apps
        .iter()
        .map(|g| {
            let mut real: Vec<usize> = g.real_tasks().collect();
            real.sort_by(|&a, &b| g.lct(a).unwrap().total_cmp(&g.lct(b).unwrap()).then(a.cmp(&b)));
            real
        })
        .collect();
    let mut next = vec![0usize; n];
    let mut arrived = vec![false; n];
    let mut free_at = vec![f64::NEG_INFINITY; case.num_ecds()];
    let mut pending: Vec<f64> = case.apps.iter().map(|g| g.release_time()).collect();

    while !pending.is_empty() {
        let now = pending.iter().copied().fold(f64::INFINITY, f64::min);
        pending.retain(|&t| t != now);
        for (a, g) in case.apps.iter().enumerate() {
            if g.release_time() == now && !arrived[a] {
                arrived[a] = true;
                finish[a][g.source()] = Some(now);
            }
        }
        let mut ready: Vec<(f64, usize, usize)> = Vec::new();
        for (a, g) in case.apps.iter().enumerate() {
            if !arrived[a] {
                continue;
            }
            while next[a] < order[a].len() {
                let t = order[a][next[a]];
                if g.parents(t).iter().any(|p| finish[a][p.task].is_none()) {
                    break;
                }
                ready.push((g.lct(t).unwrap(), a, t));
                next[a] += 1;
            }
        }
        ready.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        for (_, a, t) in ready {
            let g = &case.apps[a];
            let d = placement[a][t];
            let mut input = f64::NEG_INFINITY;
            for p in g.parents(t) {
                let arrival = finish[a][p.task].unwrap() + case.transfer(p.data_size, device[a][p.task], d, g.home_ecd());
                input = input.max(arrival);
            }
            let start = now.max(free_at[d - 1]).max(input);
            let f = start + g.task(t).workload / case.capability[d - 1];
            free_at[d - 1] = f;
            finish[a][t] = Some(f);
            device[a][t] = d;
            pending.push(f);
        }
    }
    for (a, g) in case.apps.iter().enumerate() {
        let sink = g.sink();
        let f = g
            .parents(sink)
            .iter()
            .map(|p| finish[a][p.task].unwrap() + case.transfer(p.data_size, device[a][p.task], 0, g.home_ecd()))
            .fold(f64::NEG_INFINITY, f64::max);
        finish[a][sink] = Some(f);
    }
    let finish: Vec<Vec<f64>> = finish.into_iter().map(|v| v.into_iter().map(Option::unwrap).collect()).collect();
    let makespan = case
        .apps
        .iter()
        .zip(&finish)
        .map(|(g, f)| f.iter().copied().fold(f64::NEG_INFINITY, f64::max) - g.release_time())
        .collect();
    OracleResult { finish, device, makespan }
}

/// Runs the simulator with fixed placements.
pub fn simulate(case: &Case, placement: &[Vec<usize>], seed: u64) -> SimulationTrace {
    let mut script = BTreeMap::new();
    for (a, g) in case.apps.iter().enumerate() {
        for t in g.real_tasks() {
            script.insert((g.app_id(), t), placement[a][t]);
        }
    }
    run(&case.apps, &case.env(), &mut ScriptedScheduler::new(script), seed).unwrap()
}

/// Largest absolute difference between simulator and oracle timings.
pub fn max_timing_error(case: &Case, placement: &[Vec<usize>]) -> f64 {
    let expected = oracle(case, placement);
    let trace = simulate(case, placement, 0);
    let mut worst: f64 = 0.0;
    for a in trace.assignments() {
        worst = worst.max((a.finish - expected.finish[a.app][a.task]).abs());
        assert_eq!(a.device, expected.device[a.app][a.task]);
    }
    for (o, m) in trace.apps.iter().zip(&expected.makespan) {
        worst = worst.max((o.makespan - m).abs());
    }
    worst
}

/// Every assignment of real tasks to devices `1..=m`, app by app.
pub fn all_placements(case: &Case) -> Vec<Vec<Vec<usize>>> {
    let m = case.num_ecds();
    let slots: Vec<(usize, usize)> =
        case.apps.iter().enumerate().flat_map(|(a, g)| g.real_tasks().map(move |t| (a, t))).collect();
    let total = m.pow(slots.len() as u32);
    let mut out = Vec::with_capacity(total);
    for code in 0..total {
        let mut placement: Vec<Vec<usize>> = case.apps.iter().map(|g| vec![0; g.num_tasks()]).collect();
        let mut c = code;
        for &(a, t) in &slots {
            placement[a][t] = c % m + 1;
            c /= m;
        }
        out.push(placement);
    }
    out
}

pub fn rng(seed: u64) -> StreamRng {
    edge_offload::rng::SeedTree::new(seed).stream("test", 0)
}

/// Worst relative error between analytic and central-difference gradients
/// over `probes` random parameters, for the loss `sum(Q * weights)`.
pub fn gradient_check<N, R>(net: &N, input: &ndarray::Array2<f64>, weights: &ndarray::Array2<f64>, probes: usize, h: f64, rng: &mut R) -> f64
where
    N: edge_offload::dqn_core::QNetwork,
    R: Rng,
{
    let loss = |n: &N| (n.forward(input) * weights).sum();
    let (_, cache) = net.forward_cached(input);
    let grads = net.backward(&cache, weights);
    let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let mut flat = rng.random_range(0..total);
        let mut block = 0;
        while flat >= sizes[block] {
            flat -= sizes[block];
            block += 1;
        }
        let mut plus = net.clone();
        plus.params_mut()[block][flat] += h;
        let mut minus = net.clone();
        minus.params_mut()[block][flat] -= h;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
        let analytic = grads[block][flat];
        let scale = numeric.abs().max(analytic.abs()).max(1e-6);
        worst = worst.max((numeric - analytic).abs() / scale);
    }
    worst
}

/// Random inputs and loss weights for a gradient check.
pub fn probe_batch<R: Rng>(rows: usize, inputs: usize, outputs: usize, rng: &mut R) -> (ndarray::Array2<f64>, ndarray::Array2<f64>) {
    let x = ndarray::Array2::from_shape_fn((rows, inputs), |_| rng.random_range(-1.0..1.0));
    let w = ndarray::Array2::from_shape_fn((rows, outputs), |_| rng.random_range(-1.0..1.0));
    (x, w)
}

/// Deterministic two-state, two-action MDP: `TOY[state][action] = (reward, next)`.
/// Staying in state 0 pays 1, moving to state 1 pays nothing now but state 1
/// pays 2 per step, so the myopic choice in state 0 is wrong.
pub const TOY: [[(f64, usize); 2]; 2] = [[(1.0, 0), (0.0, 1)], [(2.0, 1), (0.0, 0)]];

/// Optimal action per state by value iteration.
pub fn toy_optimal_policy(gamma: f64) -> [usize; 2] {
    let mut v = [0.0f64; 2];
    for _ in 0..2000 {
        let mut next = [0.0; 2];
        for s in 0..2 {
            next[s] = TOY[s].iter().map(|&(r, n)| r + gamma * v[n]).fold(f64::NEG_INFINITY, f64::max);
        }
        v = next;
    }
    let q = |s: usize, a: usize| TOY[s][a].0 + gamma * v[TOY[s][a].1];
    [0, 1].map(|s| if q(s, 1) > q(s, 0) { 1 } else { 0 })
}

/// Observation the learner sees in toy state `s`.
pub fn toy_state(s: usize) -> edge_offload::mdp_agent::StateVector {
    edge_offload::mdp_agent::StateVector {
        sum_inter_rate: if s == 0 { 1.0 } else { 0.0 },
        uplink_rate: if s == 1 { 1.0 } else { 0.0 },
        sum_capability: 0.0,
        ready_workload: 0.0,
        queued_workload: 0.0,
    }
}

/// Trains a DQN on the toy MDP through the scheduler-facing agent interface
/// (toy action k is ECD k + 1) and returns its greedy policy.
pub fn toy_learned_policy(config: edge_offload::dqn_core::DqnConfig, episodes: usize, steps: usize, seed: u64) -> [usize; 2] {
    use edge_offload::dqn_core::{AgentMode, DqnAgent};
    use edge_offload::mdp_agent::{normalize_state, ActionMask, SataAgent, StateScales};

    let scales = StateScales { rate: 1.0, capability: 1.0, workload: 1.0 };
    let mask = ActionMask::for_ecds(2);
    let mut agent = DqnAgent::mlp(3, config.clone(), &edge_offload::rng::SeedTree::new(seed));
    agent.set_mode(AgentMode::Train);
    agent.set_epsilon_schedule(config.epsilon_schedule((episodes * steps) as u64));
    for _ in 0..episodes {
        let mut sata = SataAgent::new(&mut agent, scales);
        let mut s = 0;
        for _ in 0..steps {
            let action = sata.step(&toy_state(s), &mask).unwrap();
            let (r, next) = TOY[s][action - 1];
            sata.reward(r);
            s = next;
        }
        sata.finish_episode(&toy_state(s)).unwrap();
    }
    [0, 1].map(|s| {
        let q = agent.q_values(&normalize_state(&toy_state(s), &scales));
        if q[2] > q[1] { 1 } else { 0 }
    })
}

pub fn toy_config() -> edge_offload::dqn_core::DqnConfig {
    edge_offload::dqn_core::DqnConfig {
        hidden_layers: vec![16, 16],
        gamma: 0.9,
        learning_rate: 1e-3,
        batch_size: 32,
        replay_capacity: 10_000,
        target_sync_steps: 100,
        ..Default::default()
    }
}
