//! Event-driven simulation kernel.
//!
//! Two kinds of events drive the clock: an application arriving (its dummy
//! source completes at the release time) and a real task completing on a
//! device. After all events sharing a timestamp are applied, the heads of the
//! per-application priority lists whose parents are all assigned move into the
//! ready queue, and each ready task in ascending-LCT order becomes one
//! scheduling decision. A decision commits
//! immediately: the FCFS start and finish are fixed at that moment using the
//! device's current capability level, and the completion event is scheduled.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::mdp_agent::{compute_reward, LearnerError, RewardError, RewardParams, RewardTerms, StateVector};
use crate::mec_model::{
    sink_finish, transfer_time, transition_capability, Assignment, CapabilityChain, EdgeDevice, ModelError,
    NetworkTopology, QueuedTask, MOBILE_USER,
};
use crate::rng::{SeedTree, StreamRng};
use crate::task_graph::{build_priority_list, GraphError, TaskGraph, TaskId};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("app {app} task {task}: parent {parent} is not assigned")]
    UnresolvedParent { app: usize, task: TaskId, parent: TaskId },
    #[error("no device {0}")]
    UnknownDevice(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, PartialEq)]
pub enum SchedulerError {
    #[error("no devices to choose from")]
    NoDevices,
    #[error("no scripted decision for app {app} task {task}")]
    Unscripted { app: usize, task: TaskId },
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("scheduler picked device {device} for app {app} task {task}, valid range is 1..={num_ecds}")]
    InvalidDevice { app: usize, task: TaskId, device: usize, num_ecds: usize },
    #[error("event queue drained with unfinished apps {0:?}")]
    Deadlock(Vec<usize>),
    #[error("app {app} is homed at ECD {home}, which does not exist")]
    BadHome { app: usize, home: usize },
    #[error("need {expected} level lists and initial levels, got {got}")]
    DeviceSetup { expected: usize, got: usize },
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Static description of the edge system a run executes on.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub topology: NetworkTopology,
    pub chain: CapabilityChain,
    /// Capability levels per ECD, `levels[m-1]` for ECD m.
    pub levels: Vec<Vec<f64>>,
    pub initial_levels: Vec<usize>,
    pub reward: RewardParams,
}

impl EnvSpec {
    /// Every ECD shares `levels` and starts at level 0.
    pub fn uniform(topology: NetworkTopology, chain: CapabilityChain, levels: Vec<f64>, reward: RewardParams) -> Self {
        let m = topology.num_ecds();
        Self { topology, chain, levels: vec![levels; m], initial_levels: vec![0; m], reward }
    }

    pub fn num_ecds(&self) -> usize {
        self.topology.num_ecds()
    }

    pub fn build_devices(&self) -> Result<Vec<EdgeDevice>, SimError> {
        let m = self.num_ecds();
        if self.levels.len() != m || self.initial_levels.len() != m {
            return Err(SimError::DeviceSetup { expected: m, got: self.levels.len().min(self.initial_levels.len()) });
        }
        let mut devices = Vec::with_capacity(m);
        for (i, (levels, &start)) in self.levels.iter().zip(&self.initial_levels).enumerate() {
            let mut d = EdgeDevice::new(i + 1, levels.clone())?;
            if start >= levels.len() {
                return Err(ModelError::BadLevels(i + 1).into());
            }
            d.set_level(start);
            devices.push(d);
        }
        Ok(devices)
    }

    /// Highest capability any ECD can reach.
    pub fn max_capability(&self) -> f64 {
        self.levels.iter().flatten().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Arrival { app: usize },
    Completion { app: usize, task: TaskId, device: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub seq: u64,
    pub kind: EventKind,
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    // reversed: BinaryHeap pops the earliest (time, seq) first
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadyTask {
    /// Position of the application in the run's app slice.
    pub app: usize,
    pub task: TaskId,
    pub lct: f64,
    pub workload: f64,
}

/// Ready tasks in ascending LCT order (ties: app position, then task id).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReadyQueue {
    tasks: Vec<ReadyTask>,
}

impl ReadyQueue {
    pub fn tasks(&self) -> &[ReadyTask] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn total_workload(&self) -> f64 {
        self.tasks.iter().map(|t| t.workload).sum()
    }
}

/// Moves, for every application, the longest prefix of its priority list whose
/// tasks have all parents assigned into one merged ready queue.
pub fn collect_ready<F>(apps: &[TaskGraph], lists: &mut [VecDeque<TaskId>], is_assigned: F) -> ReadyQueue
where
    F: Fn(usize, TaskId) -> bool,
{
    let mut tasks = Vec::new();
    for (app, list) in lists.iter_mut().enumerate() {
        let graph = &apps[app];
        while let Some(&head) = list.front() {
            if !graph.parents(head).iter().all(|p| is_assigned(app, p.task)) {
                break;
            }
            list.pop_front();
            let t = graph.task(head);
            tasks.push(ReadyTask { app, task: head, lct: t.lct.unwrap_or(f64::INFINITY), workload: t.workload });
        }
    }
    tasks.sort_by(|a, b| a.lct.total_cmp(&b.lct).then(a.app.cmp(&b.app)).then(a.task.cmp(&b.task)));
    ReadyQueue { tasks }
}

/// The five-component observation for a task homed at `home_ecd`.
pub fn observe_state(
    topology: &NetworkTopology,
    devices: &[EdgeDevice],
    ready_workload: f64,
    home_ecd: usize,
) -> Result<StateVector, ModelError> {
    Ok(StateVector {
        sum_inter_rate: topology.sum_rate(),
        uplink_rate: topology.uplink_rate(home_ecd)?,
        sum_capability: devices.iter().map(EdgeDevice::capability).sum(),
        ready_workload,
        queued_workload: devices.iter().map(EdgeDevice::queued_workload).sum(),
    })
}

/// Timing of a task if it were committed to one device now.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plan {
    pub device: usize,
    /// Latest arrival of input data over all parents.
    pub max_arrival: f64,
    pub queue_free_at: f64,
    pub start: f64,
    pub exec: f64,
    pub finish: f64,
}

pub fn plan_execution(
    graph: &TaskGraph,
    task: TaskId,
    assignments: &[Option<Assignment>],
    device: &EdgeDevice,
    topology: &NetworkTopology,
    now: f64,
) -> Result<Plan, PlanError> {
    let mut max_arrival = f64::NEG_INFINITY;
    for parent in graph.parents(task) {
        let pa = assignments[parent.task].ok_or(PlanError::UnresolvedParent {
            app: graph.app_id(),
            task,
            parent: parent.task,
        })?;
        let arrival = pa.finish + transfer_time(parent.data_size, pa.device, device.id(), topology, graph.home_ecd())?;
        max_arrival = max_arrival.max(arrival);
    }
    let workload = graph.task(task).workload;
    let exec = if workload == 0.0 { 0.0 } else { workload / device.capability() };
    let queue_free_at = device.queue_free_at();
    let start = queue_free_at.max(max_arrival).max(now);
    Ok(Plan { device: device.id(), max_arrival, queue_free_at, start, exec, finish: start + exec })
}

/// Everything a scheduler may look at when placing one ready task.
pub struct DecisionContext<'a> {
    pub now: f64,
    pub step: usize,
    pub graph: &'a TaskGraph,
    pub task: TaskId,
    pub state: StateVector,
    pub devices: &'a [EdgeDevice],
    pub topology: &'a NetworkTopology,
    /// Assignments of the task's application so far, indexed by task id.
    pub assignments: &'a [Option<Assignment>],
}

impl DecisionContext<'_> {
    pub fn num_ecds(&self) -> usize {
        self.devices.len()
    }

    pub fn plan_on(&self, ecd: usize) -> Result<Plan, PlanError> {
        let device = ecd.checked_sub(1).and_then(|i| self.devices.get(i)).ok_or(PlanError::UnknownDevice(ecd))?;
        plan_execution(self.graph, self.task, self.assignments, device, self.topology, self.now)
    }
}

/// Feedback on a committed decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub app_id: usize,
    pub task: TaskId,
    pub device: usize,
    pub finish: f64,
    pub reward: RewardTerms,
}

/// Pluggable placement policy.
pub trait Scheduler {
    /// Returns the real ECD (`1..=M`) for `ctx.task`.
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<usize, SchedulerError>;

    fn on_outcome(&mut self, _outcome: &Outcome) {}

    fn on_episode_end(&mut self, _final_state: &StateVector) -> Result<(), SchedulerError> {
        Ok(())
    }
}

impl<S: Scheduler + ?Sized> Scheduler for &mut S {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<usize, SchedulerError> {
        (**self).decide(ctx)
    }

    fn on_outcome(&mut self, outcome: &Outcome) {
        (**self).on_outcome(outcome)
    }

    fn on_episode_end(&mut self, final_state: &StateVector) -> Result<(), SchedulerError> {
        (**self).on_episode_end(final_state)
    }
}

/// Replays fixed placements keyed by `(app_id, task_id)`.
#[derive(Debug, Clone, Default)]
pub struct ScriptedScheduler {
    placements: BTreeMap<(usize, TaskId), usize>,
}

impl ScriptedScheduler {
    pub fn new(placements: BTreeMap<(usize, TaskId), usize>) -> Self {
        Self { placements }
    }

    /// Decisions recorded in a trace, for replay.
    pub fn from_trace(trace: &SimulationTrace) -> Self {
        Self::new(trace.decisions().map(|d| ((d.app_id, d.task), d.device)).collect())
    }
}

impl Scheduler for ScriptedScheduler {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<usize, SchedulerError> {
        let key = (ctx.graph.app_id(), ctx.task);
        self.placements
            .get(&key)
            .copied()
            .ok_or(SchedulerError::Unscripted { app: key.0, task: key.1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionRecord {
    pub step: usize,
    pub time: f64,
    pub app_id: usize,
    pub task: TaskId,
    pub state: StateVector,
    pub device: usize,
    pub start: f64,
    pub finish: f64,
    pub max_arrival: f64,
    pub queue_free_at: f64,
    pub exec: f64,
    pub lct: f64,
    pub reward: RewardTerms,
}

impl DecisionRecord {
    pub fn assignment(&self) -> Assignment {
        Assignment { app: self.app_id, task: self.task, device: self.device, start: self.start, finish: self.finish }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceEntry {
    Arrival { time: f64, app_id: usize },
    Completion { time: f64, app_id: usize, task: TaskId, device: usize },
    /// Placement of a dummy task on the user device.
    Dummy(Assignment),
    Decision(DecisionRecord),
    Capability { time: f64, device: usize, from: usize, to: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppOutcome {
    pub app_id: usize,
    pub release_time: f64,
    pub deadline: f64,
    pub finish: f64,
    pub makespan: f64,
}

impl AppOutcome {
    pub fn violated(&self) -> bool {
        self.finish > self.deadline
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulationTrace {
    pub entries: Vec<TraceEntry>,
    /// One per application, in input order.
    pub apps: Vec<AppOutcome>,
    pub final_state: StateVector,
}

impl SimulationTrace {
    pub fn decisions(&self) -> impl Iterator<Item = &DecisionRecord> {
        self.entries.iter().filter_map(|e| match e {
            TraceEntry::Decision(d) => Some(d),
            _ => None,
        })
    }

    /// Every assignment, dummies included, in commit order.
    pub fn assignments(&self) -> Vec<Assignment> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                TraceEntry::Dummy(a) => Some(*a),
                TraceEntry::Decision(d) => Some(d.assignment()),
                _ => None,
            })
            .collect()
    }

    pub fn capability_changes(&self) -> impl Iterator<Item = (f64, usize, usize, usize)> + '_ {
        self.entries.iter().filter_map(|e| match *e {
            TraceEntry::Capability { time, device, from, to } => Some((time, device, from, to)),
            _ => None,
        })
    }

    pub fn total_reward(&self) -> f64 {
        self.decisions().map(|d| d.reward.total).sum()
    }

    pub fn csv_header() -> &'static str {
        "time,event,app,task,device,start,finish,sum_inter_rate,uplink_rate,sum_capability,ready_workload,queued_workload,action,reward,detail"
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::csv_header());
        out.push('\n');
        for e in &self.entries {
            match *e {
                TraceEntry::Arrival { time, app_id } => {
                    let _ = writeln!(out, "{time},arrival,{app_id},,,,,,,,,,,,");
                }
                TraceEntry::Completion { time, app_id, task, device } => {
                    let _ = writeln!(out, "{time},completion,{app_id},{task},{device},,,,,,,,,,");
                }
                TraceEntry::Dummy(a) => {
                    let _ = writeln!(out, "{},dummy,{},{},{},{},{},,,,,,,,", a.start, a.app, a.task, a.device, a.start, a.finish);
                }
                TraceEntry::Decision(d) => {
                    let s = d.state;
                    let _ = writeln!(
                        out,
                        "{},decision,{},{},{},{},{},{},{},{},{},{},{},{},",
                        d.time,
                        d.app_id,
                        d.task,
                        d.device,
                        d.start,
                        d.finish,
                        s.sum_inter_rate,
                        s.uplink_rate,
                        s.sum_capability,
                        s.ready_workload,
                        s.queued_workload,
                        d.device,
                        d.reward.total
                    );
                }
                TraceEntry::Capability { time, device, from, to } => {
                    let _ = writeln!(out, "{time},capability,,,{device},,,,,,,,,,{from}->{to}");
                }
            }
        }
        out
    }
}

/// Simulates `apps` to completion under `scheduler`.
///
/// Every real task needs its LCT (see [`crate::task_graph::compute_lct`]).
/// `seed` drives the capability chains only; schedulers bring their own
/// randomness.
pub fn run(
    apps: &[TaskGraph],
    env: &EnvSpec,
    scheduler: &mut dyn Scheduler,
    seed: u64,
) -> Result<SimulationTrace, SimError> {
    let num_ecds = env.num_ecds();
    for g in apps {
        if g.home_ecd() == 0 || g.home_ecd() > num_ecds {
            return Err(SimError::BadHome { app: g.app_id(), home: g.home_ecd() });
        }
    }
    let priority: Vec<VecDeque<TaskId>> = apps
        .iter()
        .map(|g| build_priority_list(g).map(|p| p.ordered_tasks.into()))
        .collect::<Result<_, _>>()?;
    let seeds = SeedTree::new(seed);
    let mut engine = Engine {
        apps,
        env,
        devices: env.build_devices()?,
        rngs: (1..=num_ecds).map(|m| seeds.stream("capability", m as u64)).collect(),
        events: BinaryHeap::new(),
        next_seq: 0,
        priority,
        lists: vec![VecDeque::new(); apps.len()],
        assigned: apps.iter().map(|g| vec![None; g.num_tasks()]).collect(),
        outcomes: vec![None; apps.len()],
        trace: SimulationTrace::default(),
        step: 0,
        last_home: apps.first().map_or(1, TaskGraph::home_ecd),
    };
    for (app, g) in apps.iter().enumerate() {
        engine.push(g.release_time(), EventKind::Arrival { app });
    }
    engine.drain(scheduler)?;

    let pending: Vec<usize> =
        engine.outcomes.iter().enumerate().filter(|(_, o)| o.is_none()).map(|(i, _)| apps[i].app_id()).collect();
    if !pending.is_empty() {
        return Err(SimError::Deadlock(pending));
    }
    let final_state = observe_state(&env.topology, &engine.devices, 0.0, engine.last_home)?;
    scheduler.on_episode_end(&final_state)?;
    let mut trace = engine.trace;
    trace.apps = engine.outcomes.into_iter().flatten().collect();
    trace.final_state = final_state;
    Ok(trace)
}

struct Engine<'a> {
    apps: &'a [TaskGraph],
    env: &'a EnvSpec,
    devices: Vec<EdgeDevice>,
    rngs: Vec<StreamRng>,
    events: BinaryHeap<SimEvent>,
    next_seq: u64,
    /// Priority lists not yet released (apps that have not arrived).
    priority: Vec<VecDeque<TaskId>>,
    lists: Vec<VecDeque<TaskId>>,
    assigned: Vec<Vec<Option<Assignment>>>,
    outcomes: Vec<Option<AppOutcome>>,
    trace: SimulationTrace,
    step: usize,
    last_home: usize,
}

impl Engine<'_> {
    fn push(&mut self, time: f64, kind: EventKind) {
        self.events.push(SimEvent { time, seq: self.next_seq, kind });
        self.next_seq += 1;
    }

    fn drain(&mut self, scheduler: &mut dyn Scheduler) -> Result<(), SimError> {
        while let Some(first) = self.events.pop() {
            let now = first.time;
            self.handle(first);
            // simultaneous events share one ready-queue pass
            while let Some(next) = self.events.peek().filter(|e| e.time == now).copied() {
                self.events.pop();
                self.handle(next);
            }
            let assigned = &self.assigned;
            let ready = collect_ready(self.apps, &mut self.lists, |a, t| assigned[a][t].is_some());
            let mut remaining = ready.total_workload();
            for rt in ready.tasks() {
                self.decide(rt, remaining, now, scheduler)?;
                remaining -= rt.workload;
            }
        }
        Ok(())
    }

    fn handle(&mut self, event: SimEvent) {
        match event.kind {
            EventKind::Arrival { app } => self.on_arrival(app, event.time),
            EventKind::Completion { app, task, device } => self.on_completion(app, task, device, event.time),
        }
    }

    fn on_arrival(&mut self, app: usize, now: f64) {
        let g = &self.apps[app];
        self.trace.entries.push(TraceEntry::Arrival { time: now, app_id: g.app_id() });
        let source = Assignment { app: g.app_id(), task: g.source(), device: MOBILE_USER, start: now, finish: now };
        self.assigned[app][g.source()] = Some(source);
        self.trace.entries.push(TraceEntry::Dummy(source));
        self.lists[app] = std::mem::take(&mut self.priority[app]);
        // an app with no real tasks completes on arrival
        let _ = self.try_finish_sink(app);
    }

    fn on_completion(&mut self, app: usize, task: TaskId, device: usize, now: f64) {
        let app_id = self.apps[app].app_id();
        self.trace.entries.push(TraceEntry::Completion { time: now, app_id, task, device });
        let d = &mut self.devices[device - 1];
        d.complete(app, task);
        let from = d.level();
        let to = transition_capability(d, &self.env.chain, &mut self.rngs[device - 1]);
        self.trace.entries.push(TraceEntry::Capability { time: now, device, from, to });
    }

    fn decide(
        &mut self,
        rt: &ReadyTask,
        ready_workload: f64,
        now: f64,
        scheduler: &mut dyn Scheduler,
    ) -> Result<(), SimError> {
        let graph = &self.apps[rt.app];
        let state = observe_state(&self.env.topology, &self.devices, ready_workload.max(0.0), graph.home_ecd())?;
        self.step += 1;
        let device = {
            let ctx = DecisionContext {
                now,
                step: self.step,
                graph,
                task: rt.task,
                state,
                devices: &self.devices,
                topology: &self.env.topology,
                assignments: &self.assigned[rt.app],
            };
            scheduler.decide(&ctx)?
        };
        let num_ecds = self.devices.len();
        if device == 0 || device > num_ecds {
            return Err(SimError::InvalidDevice { app: graph.app_id(), task: rt.task, device, num_ecds });
        }
        let plan =
            plan_execution(graph, rt.task, &self.assigned[rt.app], &self.devices[device - 1], &self.env.topology, now)?;
        let reward = compute_reward(
            rt.workload,
            (plan.max_arrival - now).max(0.0),
            (plan.queue_free_at - now).max(0.0),
            plan.exec,
            plan.finish,
            rt.lct,
            &self.env.reward,
        )?;
        self.devices[device - 1].enqueue(QueuedTask {
            app: rt.app,
            task: rt.task,
            workload: rt.workload,
            finish: plan.finish,
        });
        let assignment =
            Assignment { app: graph.app_id(), task: rt.task, device, start: plan.start, finish: plan.finish };
        self.assigned[rt.app][rt.task] = Some(assignment);
        self.push(plan.finish, EventKind::Completion { app: rt.app, task: rt.task, device });
        self.trace.entries.push(TraceEntry::Decision(DecisionRecord {
            step: self.step,
            time: now,
            app_id: graph.app_id(),
            task: rt.task,
            state,
            device,
            start: plan.start,
            finish: plan.finish,
            max_arrival: plan.max_arrival,
            queue_free_at: plan.queue_free_at,
            exec: plan.exec,
            lct: rt.lct,
            reward,
        }));
        self.last_home = graph.home_ecd();
        scheduler.on_outcome(&Outcome { app_id: graph.app_id(), task: rt.task, device, finish: plan.finish, reward });
        self.try_finish_sink(rt.app)?;
        Ok(())
    }

    /// Resolves the dummy sink once all of its parents are placed.
    fn try_finish_sink(&mut self, app: usize) -> Result<(), SimError> {
        let g = &self.apps[app];
        let sink = g.sink();
        if self.assigned[app][sink].is_some() {
            return Ok(());
        }
        let mut arrivals = Vec::with_capacity(g.parents(sink).len());
        for p in g.parents(sink) {
            let Some(pa) = self.assigned[app][p.task] else {
                return Ok(());
            };
            arrivals.push(pa.finish + transfer_time(p.data_size, pa.device, MOBILE_USER, &self.env.topology, g.home_ecd())?);
        }
        let finish = sink_finish(&arrivals);
        let a = Assignment { app: g.app_id(), task: sink, device: MOBILE_USER, start: finish, finish };
        self.assigned[app][sink] = Some(a);
        self.trace.entries.push(TraceEntry::Dummy(a));
        let makespan = crate::mec_model::makespan(g, &self.assigned[app])?;
        self.outcomes[app] = Some(AppOutcome {
            app_id: g.app_id(),
            release_time: g.release_time(),
            deadline: g.deadline(),
            finish,
            makespan,
        });
        Ok(())
    }
}
