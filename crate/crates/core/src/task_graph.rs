//! DAG applications: representation, validation, dummy-task augmentation,
//! latest-completion-time priorities and the line-oriented workload file format.
//!
//! Task ids run `0..=I`. Task `0` is the dummy source (application data leaving
//! the mobile user) and task `I` the dummy sink (results returning to it); both
//! carry zero workload.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

pub type TaskId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub app_id: usize,
    pub task_id: TaskId,
    /// Millions of instructions.
    pub workload: f64,
    /// Latest completion time in seconds, filled by [`compute_lct`].
    pub lct: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: TaskId,
    pub dst: TaskId,
    /// Megabits.
    pub data_size: f64,
}

impl Edge {
    pub fn new(src: TaskId, dst: TaskId, data_size: f64) -> Self {
        Self { src, dst, data_size }
    }
}

/// Neighbour of a task together with the data carried on the connecting edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub task: TaskId,
    pub data_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskGraph {
    app_id: usize,
    release_time: f64,
    deadline: f64,
    home_ecd: usize,
    tasks: Vec<Task>,
    edges: Vec<Edge>,
    parents: Vec<Vec<Link>>,
    children: Vec<Vec<Link>>,
}

impl TaskGraph {
    /// Builds a graph whose task `i` has workload `workloads[i]`.
    ///
    /// No invariant is checked here; run [`validate`] on anything that did not
    /// come from [`augment_with_dummies`] or the workload generator.
    pub fn new(
        app_id: usize,
        release_time: f64,
        deadline: f64,
        home_ecd: usize,
        workloads: Vec<f64>,
        edges: Vec<Edge>,
    ) -> Self {
        let tasks = workloads
            .into_iter()
            .enumerate()
            .map(|(task_id, workload)| Task { app_id, task_id, workload, lct: None })
            .collect();
        Self::from_parts(app_id, release_time, deadline, home_ecd, tasks, edges)
    }

    fn from_parts(
        app_id: usize,
        release_time: f64,
        deadline: f64,
        home_ecd: usize,
        tasks: Vec<Task>,
        edges: Vec<Edge>,
    ) -> Self {
        let n = tasks.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for e in &edges {
            if e.src < n && e.dst < n {
                children[e.src].push(Link { task: e.dst, data_size: e.data_size });
                parents[e.dst].push(Link { task: e.src, data_size: e.data_size });
            }
        }
        Self { app_id, release_time, deadline, home_ecd, tasks, edges, parents, children }
    }

    pub fn app_id(&self) -> usize {
        self.app_id
    }

    pub fn release_time(&self) -> f64 {
        self.release_time
    }

    pub fn deadline(&self) -> f64 {
        self.deadline
    }

    pub fn home_ecd(&self) -> usize {
        self.home_ecd
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, id: TaskId) -> &Task {
        &self.tasks[id]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn source(&self) -> TaskId {
        0
    }

    pub fn sink(&self) -> TaskId {
        self.tasks.len().saturating_sub(1)
    }

    pub fn is_dummy(&self, id: TaskId) -> bool {
        id == self.source() || id == self.sink()
    }

    /// Ids of the non-dummy tasks, ascending.
    pub fn real_tasks(&self) -> std::ops::Range<TaskId> {
        1..self.sink()
    }

    pub fn parents(&self, id: TaskId) -> &[Link] {
        &self.parents[id]
    }

    pub fn children(&self, id: TaskId) -> &[Link] {
        &self.children[id]
    }

    pub fn total_real_workload(&self) -> f64 {
        self.real_tasks().map(|i| self.tasks[i].workload).sum()
    }

    pub fn lct(&self, id: TaskId) -> Option<f64> {
        self.tasks[id].lct
    }

    /// Same graph with a different release time and deadline. Computed LCTs are
    /// dropped since they depend on the deadline.
    pub fn with_schedule(&self, release_time: f64, deadline: f64) -> Self {
        let mut g = self.clone();
        g.release_time = release_time;
        g.deadline = deadline;
        for t in &mut g.tasks {
            t.lct = None;
        }
        g
    }

    pub fn with_app_id(&self, app_id: usize) -> Self {
        let mut g = self.clone();
        g.app_id = app_id;
        for t in &mut g.tasks {
            t.app_id = app_id;
        }
        g
    }

    pub fn with_home_ecd(&self, home_ecd: usize) -> Self {
        let mut g = self.clone();
        g.home_ecd = home_ecd;
        g
    }

    /// Kahn's algorithm, smallest ready id first. `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<TaskId>> {
        let n = self.tasks.len();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<TaskId> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for c in &self.children[i] {
                indegree[c.task] -= 1;
                if indegree[c.task] == 0 {
                    ready.insert(c.task);
                }
            }
        }
        (order.len() == n).then_some(order)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewTasks(usize),
    TaskIdMismatch { index: usize, id: TaskId },
    InvalidWorkload { task: TaskId, workload: f64 },
    DummyWorkloadNonzero { task: TaskId, workload: f64 },
    RealWorkloadNotPositive { task: TaskId },
    EdgeOutOfRange { src: TaskId, dst: TaskId },
    SelfLoop { task: TaskId },
    DuplicateEdge { src: TaskId, dst: TaskId },
    InvalidDataSize { src: TaskId, dst: TaskId, data_size: f64 },
    Cycle,
    SourceHasParents,
    SinkHasChildren,
    ExtraEntry { task: TaskId },
    ExtraExit { task: TaskId },
    UnreachableFromSource { task: TaskId },
    CannotReachSink { task: TaskId },
    ReleaseNotBeforeDeadline { release: f64, deadline: f64 },
    InvalidHomeEcd(usize),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewTasks(n) => write!(f, "graph has {n} tasks, need at least the two dummies"),
            Violation::TaskIdMismatch { index, id } => write!(f, "task at position {index} has id {id}"),
            Violation::InvalidWorkload { task, workload } => {
                write!(f, "task {task} has invalid workload {workload}")
            }
            Violation::DummyWorkloadNonzero { task, workload } => {
                write!(f, "dummy workload nonzero (task {task}: {workload})")
            }
            Violation::RealWorkloadNotPositive { task } => {
                write!(f, "real task {task} has zero workload")
            }
            Violation::EdgeOutOfRange { src, dst } => write!(f, "edge {src}->{dst} out of range"),
            Violation::SelfLoop { task } => write!(f, "self loop on task {task}"),
            Violation::DuplicateEdge { src, dst } => write!(f, "duplicate edge {src}->{dst}"),
            Violation::InvalidDataSize { src, dst, data_size } => {
                write!(f, "edge {src}->{dst} has invalid data size {data_size}")
            }
            Violation::Cycle => write!(f, "cycle"),
            Violation::SourceHasParents => write!(f, "source task 0 has parents"),
            Violation::SinkHasChildren => write!(f, "sink task has children"),
            Violation::ExtraEntry { task } => write!(f, "task {task} has no parents but is not the source"),
            Violation::ExtraExit { task } => write!(f, "task {task} has no children but is not the sink"),
            Violation::UnreachableFromSource { task } => write!(f, "task {task} unreachable from source"),
            Violation::CannotReachSink { task } => write!(f, "task {task} does not reach the sink"),
            Violation::ReleaseNotBeforeDeadline { release, deadline } => {
                write!(f, "release {release} not before deadline {deadline}")
            }
            Violation::InvalidHomeEcd(m) => write!(f, "home ECD {m} is not a real device"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn reasons(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }

    pub fn has_reason(&self, needle: &str) -> bool {
        self.reasons().iter().any(|r| r.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(f, "valid");
        }
        write!(f, "{}", self.reasons().join("; "))
    }
}

/// Checks every structural invariant of an application graph.
pub fn validate(graph: &TaskGraph) -> ValidationReport {
    let mut violations = Vec::new();
    let n = graph.num_tasks();
    if n < 2 {
        violations.push(Violation::TooFewTasks(n));
        return ValidationReport { violations };
    }
    let sink = graph.sink();

    for (index, task) in graph.tasks().iter().enumerate() {
        if task.task_id != index {
            violations.push(Violation::TaskIdMismatch { index, id: task.task_id });
        }
        if !task.workload.is_finite() || task.workload < 0.0 {
            violations.push(Violation::InvalidWorkload { task: index, workload: task.workload });
        } else if graph.is_dummy(index) {
            if task.workload != 0.0 {
                violations.push(Violation::DummyWorkloadNonzero { task: index, workload: task.workload });
            }
        } else if task.workload == 0.0 {
            violations.push(Violation::RealWorkloadNotPositive { task: index });
        }
    }

    let mut seen = BTreeSet::new();
    for e in graph.edges() {
        if e.src >= n || e.dst >= n {
            violations.push(Violation::EdgeOutOfRange { src: e.src, dst: e.dst });
            continue;
        }
        if e.src == e.dst {
            violations.push(Violation::SelfLoop { task: e.src });
        }
        if !seen.insert((e.src, e.dst)) {
            violations.push(Violation::DuplicateEdge { src: e.src, dst: e.dst });
        }
        if !e.data_size.is_finite() || e.data_size < 0.0 {
            violations.push(Violation::InvalidDataSize { src: e.src, dst: e.dst, data_size: e.data_size });
        }
    }

    if graph.topological_order().is_none() {
        violations.push(Violation::Cycle);
    }
    if !graph.parents(0).is_empty() {
        violations.push(Violation::SourceHasParents);
    }
    if !graph.children(sink).is_empty() {
        violations.push(Violation::SinkHasChildren);
    }
    for i in graph.real_tasks() {
        if graph.parents(i).is_empty() {
            violations.push(Violation::ExtraEntry { task: i });
        }
        if graph.children(i).is_empty() {
            violations.push(Violation::ExtraExit { task: i });
        }
    }

    let forward = reachable(n, 0, |i| graph.children(i));
    let backward = reachable(n, sink, |i| graph.parents(i));
    for i in 1..n {
        if !forward[i] {
            violations.push(Violation::UnreachableFromSource { task: i });
        }
    }
    for i in 0..sink {
        if !backward[i] {
            violations.push(Violation::CannotReachSink { task: i });
        }
    }

    if !(graph.release_time() < graph.deadline()) {
        violations.push(Violation::ReleaseNotBeforeDeadline {
            release: graph.release_time(),
            deadline: graph.deadline(),
        });
    }
    if graph.home_ecd() == 0 {
        violations.push(Violation::InvalidHomeEcd(0));
    }
    ValidationReport { violations }
}

fn reachable<'a, F>(n: usize, start: TaskId, next: F) -> Vec<bool>
where
    F: Fn(TaskId) -> &'a [Link],
{
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        for l in next(i) {
            if !seen[l.task] {
                seen[l.task] = true;
                queue.push_back(l.task);
            }
        }
    }
    seen
}

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("no real tasks to augment")]
    Empty,
    #[error("{kind} sizes: expected {expected} values, got {got}")]
    SizeMismatch { kind: &'static str, expected: usize, got: usize },
    #[error("graph contains a cycle")]
    Cycle,
    #[error("edge {src}->{dst} references a missing task")]
    EdgeOutOfRange { src: TaskId, dst: TaskId },
    #[error("capability and rates must be positive (capability {capability}, max rate {max_rate}, uplink {uplink})")]
    InvalidRates { capability: f64, max_rate: f64, uplink: f64 },
    #[error("task {task} needs the LCT of child {child} before it was computed")]
    UncomputedChild { task: TaskId, child: TaskId },
    #[error("task {0} has no LCT")]
    MissingLct(TaskId),
}

/// A DAG application before dummy augmentation; real tasks use ids `0..k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawGraph {
    pub app_id: usize,
    pub release_time: f64,
    pub deadline: f64,
    pub home_ecd: usize,
    pub workloads: Vec<f64>,
    pub edges: Vec<Edge>,
}

impl RawGraph {
    /// Real tasks without parents, ascending.
    pub fn entries(&self) -> Vec<TaskId> {
        let mut has_parent = vec![false; self.workloads.len()];
        for e in &self.edges {
            if e.dst < has_parent.len() {
                has_parent[e.dst] = true;
            }
        }
        (0..self.workloads.len()).filter(|&i| !has_parent[i]).collect()
    }

    /// Real tasks without children, ascending.
    pub fn exits(&self) -> Vec<TaskId> {
        let mut has_child = vec![false; self.workloads.len()];
        for e in &self.edges {
            if e.src < has_child.len() {
                has_child[e.src] = true;
            }
        }
        (0..self.workloads.len()).filter(|&i| !has_child[i]).collect()
    }
}

/// Adds the dummy source and sink.
///
/// `offload_sizes[k]` is the data sent to the k-th entry task and
/// `result_sizes[k]` the data returned by the k-th exit task, both in ascending
/// id order of [`RawGraph::entries`] / [`RawGraph::exits`].
pub fn augment_with_dummies(
    raw: &RawGraph,
    offload_sizes: &[f64],
    result_sizes: &[f64],
) -> Result<TaskGraph, GraphError> {
    let k = raw.workloads.len();
    if k == 0 {
        return Err(GraphError::Empty);
    }
    if let Some(e) = raw.edges.iter().find(|e| e.src >= k || e.dst >= k) {
        return Err(GraphError::EdgeOutOfRange { src: e.src, dst: e.dst });
    }
    let probe = TaskGraph::new(raw.app_id, 0.0, 0.0, 0, raw.workloads.clone(), raw.edges.clone());
    if probe.topological_order().is_none() {
        return Err(GraphError::Cycle);
    }
    let entries = raw.entries();
    let exits = raw.exits();
    if offload_sizes.len() != entries.len() {
        return Err(GraphError::SizeMismatch {
            kind: "offload",
            expected: entries.len(),
            got: offload_sizes.len(),
        });
    }
    if result_sizes.len() != exits.len() {
        return Err(GraphError::SizeMismatch { kind: "result", expected: exits.len(), got: result_sizes.len() });
    }

    let sink = k + 1;
    let mut workloads = Vec::with_capacity(k + 2);
    workloads.push(0.0);
    workloads.extend_from_slice(&raw.workloads);
    workloads.push(0.0);

    let mut edges = Vec::with_capacity(raw.edges.len() + entries.len() + exits.len());
    edges.extend(entries.iter().zip(offload_sizes).map(|(&t, &d)| Edge::new(0, t + 1, d)));
    edges.extend(raw.edges.iter().map(|e| Edge::new(e.src + 1, e.dst + 1, e.data_size)));
    edges.extend(exits.iter().zip(result_sizes).map(|(&t, &d)| Edge::new(t + 1, sink, d)));

    Ok(TaskGraph::new(raw.app_id, raw.release_time, raw.deadline, raw.home_ecd, workloads, edges))
}

/// Fills every task's latest completion time by propagating the deadline
/// backwards.
///
/// A parent of the sink gets `d - e_iI / uplink`; any other task gets the
/// minimum over its real children `j` of `lct_j - w_j / max_capability -
/// e_ij / max_rate`. A task that is both a sink parent and has real children
/// takes the minimum of the two bounds. The sink's own LCT is the deadline.
pub fn compute_lct(
    graph: &TaskGraph,
    max_capability: f64,
    max_rate: f64,
    uplink_rate: f64,
) -> Result<TaskGraph, GraphError> {
    if !(max_capability > 0.0 && max_rate > 0.0 && uplink_rate > 0.0) {
        return Err(GraphError::InvalidRates { capability: max_capability, max_rate, uplink: uplink_rate });
    }
    let order = graph.topological_order().ok_or(GraphError::Cycle)?;
    let sink = graph.sink();
    let deadline = graph.deadline();
    let mut lct: Vec<Option<f64>> = vec![None; graph.num_tasks()];
    for &i in order.iter().rev() {
        if i == sink {
            lct[i] = Some(deadline);
            continue;
        }
        let mut bound = f64::INFINITY;
        for child in graph.children(i) {
            let j = child.task;
            let candidate = if j == sink {
                deadline - child.data_size / uplink_rate
            } else {
                let child_lct = lct[j].ok_or(GraphError::UncomputedChild { task: i, child: j })?;
                child_lct - graph.task(j).workload / max_capability - child.data_size / max_rate
            };
            bound = bound.min(candidate);
        }
        // A childless non-sink task only exists in invalid graphs.
        lct[i] = Some(if bound.is_finite() { bound } else { deadline });
    }
    let mut out = graph.clone();
    for (task, value) in out.tasks.iter_mut().zip(lct) {
        task.lct = value;
    }
    Ok(out)
}

/// Real tasks of one application in ascending LCT order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorityList {
    pub app_id: usize,
    pub ordered_tasks: Vec<TaskId>,
}

/// Sorts real tasks by ascending LCT; equal LCTs keep ascending id order.
pub fn build_priority_list(graph: &TaskGraph) -> Result<PriorityList, GraphError> {
    let mut keyed = graph
        .real_tasks()
        .map(|i| graph.lct(i).map(|l| (l, i)).ok_or(GraphError::MissingLct(i)))
        .collect::<Result<Vec<_>, _>>()?;
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(PriorityList { app_id: graph.app_id(), ordered_tasks: keyed.into_iter().map(|(_, i)| i).collect() })
}

#[derive(Debug, Error)]
pub enum WorkloadFileError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: schema violation: {message}")]
    Schema { line: usize, message: String },
}

pub fn load_workload_file(path: impl AsRef<Path>) -> Result<Vec<TaskGraph>, WorkloadFileError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|source| WorkloadFileError::Io { path: path.display().to_string(), source })?;
    parse_workload(&text)
}

pub fn save_workload_file(path: impl AsRef<Path>, graphs: &[TaskGraph]) -> Result<(), WorkloadFileError> {
    let path = path.as_ref();
    fs::write(path, write_workload(graphs))
        .map_err(|source| WorkloadFileError::Io { path: path.display().to_string(), source })
}

/// Renders graphs in the workload file format. Floats use their shortest
/// round-trip representation, so parsing the output reproduces them exactly.
pub fn write_workload(graphs: &[TaskGraph]) -> String {
    let mut out = String::from("# app <n> release <s> deadline <s> home <ecd>; task <id> <MI>; edge <src> <dst> <Mbit>\n");
    for g in graphs {
        out.push_str(&format!(
            "app {} release {} deadline {} home {}\n",
            g.app_id(),
            g.release_time(),
            g.deadline(),
            g.home_ecd()
        ));
        for t in g.tasks() {
            out.push_str(&format!("task {} {}\n", t.task_id, t.workload));
        }
        for e in g.edges() {
            out.push_str(&format!("edge {} {} {}\n", e.src, e.dst, e.data_size));
        }
    }
    out
}

struct PendingGraph {
    header_line: usize,
    app_id: usize,
    release: f64,
    deadline: f64,
    home: usize,
    tasks: Vec<(TaskId, f64)>,
    edges: Vec<Edge>,
}

impl PendingGraph {
    fn finish(self) -> Result<TaskGraph, WorkloadFileError> {
        let schema = |message: String| WorkloadFileError::Schema { line: self.header_line, message };
        let mut tasks = self.tasks.clone();
        tasks.sort_by_key(|t| t.0);
        for (expected, (id, _)) in tasks.iter().enumerate() {
            if *id != expected {
                return Err(schema(format!("app {}: task ids must be contiguous from 0, found {id}", self.app_id)));
            }
        }
        let workloads = tasks.into_iter().map(|(_, w)| w).collect();
        let graph = TaskGraph::new(self.app_id, self.release, self.deadline, self.home, workloads, self.edges.clone());
        let report = validate(&graph);
        if !report.is_valid() {
            return Err(schema(format!("app {}: {report}", self.app_id)));
        }
        Ok(graph)
    }
}

pub fn parse_workload(text: &str) -> Result<Vec<TaskGraph>, WorkloadFileError> {
    let mut graphs = Vec::new();
    let mut current: Option<PendingGraph> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("");
        let fields: Vec<&str> = content.split_whitespace().collect();
        let Some(&keyword) = fields.first() else { continue };
        let parse_err = |message: String| WorkloadFileError::Parse { line, message };
        match keyword {
            "app" => {
                if fields.len() != 8 || fields[2] != "release" || fields[4] != "deadline" || fields[6] != "home" {
                    return Err(parse_err(
                        "expected `app <n> release <r> deadline <d> home <m>`".to_string(),
                    ));
                }
                if let Some(done) = current.take() {
                    graphs.push(done.finish()?);
                }
                current = Some(PendingGraph {
                    header_line: line,
                    app_id: parse_field(fields[1], "app id", line)?,
                    release: parse_field(fields[3], "release", line)?,
                    deadline: parse_field(fields[5], "deadline", line)?,
                    home: parse_field(fields[7], "home", line)?,
                    tasks: Vec::new(),
                    edges: Vec::new(),
                });
            }
            "task" => {
                let g = current.as_mut().ok_or_else(|| parse_err("task before any app header".into()))?;
                if fields.len() != 3 {
                    return Err(parse_err("expected `task <id> <workload>`".into()));
                }
                let id: TaskId = parse_field(fields[1], "task id", line)?;
                let workload: f64 = parse_field(fields[2], "workload", line)?;
                if !(workload >= 0.0) || !workload.is_finite() {
                    return Err(WorkloadFileError::Schema { line, message: format!("task {id} has workload {workload}") });
                }
                if g.tasks.iter().any(|t| t.0 == id) {
                    return Err(WorkloadFileError::Schema { line, message: format!("task {id} declared twice") });
                }
                g.tasks.push((id, workload));
            }
            "edge" => {
                let g = current.as_mut().ok_or_else(|| parse_err("edge before any app header".into()))?;
                if fields.len() != 4 {
                    return Err(parse_err("expected `edge <src> <dst> <megabits>`".into()));
                }
                let src: TaskId = parse_field(fields[1], "edge source", line)?;
                let dst: TaskId = parse_field(fields[2], "edge target", line)?;
                let data: f64 = parse_field(fields[3], "data size", line)?;
                if !(data >= 0.0) || !data.is_finite() {
                    return Err(WorkloadFileError::Schema {
                        line,
                        message: format!("edge {src}->{dst} has data size {data}"),
                    });
                }
                g.edges.push(Edge::new(src, dst, data));
            }
            other => return Err(parse_err(format!("unknown record `{other}`"))),
        }
    }
    if let Some(done) = current.take() {
        graphs.push(done.finish()?);
    }
    Ok(graphs)
}

fn parse_field<T: std::str::FromStr>(token: &str, what: &str, line: usize) -> Result<T, WorkloadFileError> {
    token
        .parse()
        .map_err(|_| WorkloadFileError::Parse { line, message: format!("invalid {what} `{token}`") })
}
