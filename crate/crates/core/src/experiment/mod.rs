//! Experiment protocol: configuration, seeding, training, evaluation and the
//! cross-scheduler comparison with CSV export.

mod config;
mod metrics;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

pub use config::{lambda_tag, ExperimentConfig, SchedulerKind, TopologyConfig, SCHEDULER_NAMES};
pub use metrics::{comparison_csv, mean, replications_csv, sample_sd, MetricsReport, ReplicationMetrics};

use crate::baselines::{DuelingNetwork, GreedyEftScheduler, HeftScheduler, RandomScheduler};
use crate::dqn_core::{self, AgentMode, Checkpoint, DqnAgent, LearningCurve, Mlp, QNetwork};
use crate::mdp_agent::SataAgent;
use crate::rng::SeedTree;
use crate::sim_engine::{run, EnvSpec, Scheduler, SimulationTrace};
use crate::task_graph::{compute_lct, load_workload_file, save_workload_file, TaskGraph};
use crate::workload::generate;

/// Fills in every task's LCT for the given environment.
pub fn prepare_apps(apps: &[TaskGraph], env: &EnvSpec) -> Result<Vec<TaskGraph>> {
    let max_capability = env.max_capability();
    let max_rate = env.topology.max_rate();
    apps.iter()
        .map(|g| {
            let uplink = env.topology.uplink_rate(g.home_ecd())?;
            Ok(compute_lct(g, max_capability, max_rate, uplink)?)
        })
        .collect()
}

/// Independent random streams for one arrival setting.
///
/// Environment randomness (workloads, capability chains) never shares a stream
/// with scheduler randomness, so every scheduler faces the same environment.
#[derive(Debug, Clone, Copy)]
pub struct LambdaSeeds {
    tree: SeedTree,
}

impl LambdaSeeds {
    pub fn new(master: u64, lambda: f64) -> Self {
        Self { tree: SeedTree::new(master).child("lambda", lambda.to_bits()) }
    }

    pub fn training(&self) -> SeedTree {
        self.tree.child("training", 0)
    }

    pub fn agent(&self, kind: SchedulerKind) -> SeedTree {
        self.tree.child("agent", kind as u64)
    }

    pub fn evaluation_workload(&self) -> SeedTree {
        self.tree.child("evaluation-workload", 0)
    }

    pub fn evaluation_capability(&self, replication: usize) -> u64 {
        self.tree.seed("evaluation-capability", replication as u64)
    }

    pub fn policy(&self, replication: usize) -> SeedTree {
        self.tree.child("policy", replication as u64)
    }
}

/// A trained (or freshly initialised) value learner of either network family.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Learner {
    Mlp(DqnAgent<Mlp>),
    Dueling(DqnAgent<DuelingNetwork>),
}

impl Learner {
    pub fn new(kind: SchedulerKind, cfg: &ExperimentConfig, lambda: f64) -> Result<Self> {
        let seeds = LambdaSeeds::new(cfg.seed, lambda).agent(kind);
        let actions = cfg.topology.num_ecds + 1;
        Ok(match kind {
            SchedulerKind::SataDrl => Learner::Mlp(DqnAgent::mlp(actions, cfg.dqn.clone(), &seeds)),
            SchedulerKind::DuelingDqn => {
                let mut trunk = vec![crate::mdp_agent::STATE_DIM];
                trunk.extend(&cfg.dqn.hidden_layers);
                let net = DuelingNetwork::new(&trunk, actions, cfg.dqn.activation, &mut seeds.stream("init", 0));
                Learner::Dueling(DqnAgent::new(net, cfg.dqn.clone(), &seeds))
            }
            other => bail!("{} is not a learning scheduler", other.name()),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cp = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
        Ok(match cp.architecture.kind.as_str() {
            "mlp" => Learner::Mlp(DqnAgent::from_checkpoint(cp, dqn_core::mlp_from_architecture)?),
            "dueling" => Learner::Dueling(DqnAgent::from_checkpoint(cp, DuelingNetwork::from_architecture)?),
            other => bail!("unknown network kind {other:?} in {}", path.display()),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        match self {
            Learner::Mlp(a) => a.checkpoint(),
            Learner::Dueling(a) => a.checkpoint(),
        }
    }

    pub fn train(&mut self, cfg: &ExperimentConfig, lambda: f64) -> Result<LearningCurve> {
        match self {
            Learner::Mlp(a) => train_agent(a, cfg, lambda),
            Learner::Dueling(a) => train_agent(a, cfg, lambda),
        }
    }

    /// Greedy run over prepared applications.
    pub fn evaluate(&mut self, cfg: &ExperimentConfig, apps: &[TaskGraph], env: &EnvSpec, seed: u64) -> Result<SimulationTrace> {
        match self {
            Learner::Mlp(a) => evaluate_agent(a, cfg, apps, env, seed),
            Learner::Dueling(a) => evaluate_agent(a, cfg, apps, env, seed),
        }
    }
}

/// Trains `agent` for `cfg.episodes` episodes, each a fresh workload draw at
/// `lambda`.
pub fn train_agent<N: QNetwork>(agent: &mut DqnAgent<N>, cfg: &ExperimentConfig, lambda: f64) -> Result<LearningCurve> {
    let env = cfg.env()?;
    let spec = cfg.workload_for(lambda);
    let seeds = LambdaSeeds::new(cfg.seed, lambda).training();
    let decisions = (cfg.episodes * spec.n_apps * spec.graph_shape.num_tasks()) as u64;
    agent.set_epsilon_schedule(cfg.dqn.epsilon_schedule(decisions));
    dqn_core::train(agent, cfg.episodes, cfg.state_scales, |episode, sata| -> Result<()> {
        let apps = generate(&spec, &mut seeds.stream("workload", episode as u64))?;
        let apps = prepare_apps(&apps, &env)?;
        run(&apps, &env, sata, seeds.seed("capability", episode as u64))
            .with_context(|| format!("training episode {}", episode + 1))?;
        Ok(())
    })
}

fn evaluate_agent<N: QNetwork>(
    agent: &mut DqnAgent<N>,
    cfg: &ExperimentConfig,
    apps: &[TaskGraph],
    env: &EnvSpec,
    seed: u64,
) -> Result<SimulationTrace> {
    let mode = agent.mode();
    agent.set_mode(AgentMode::Greedy);
    let mut sata = SataAgent::new(&mut *agent, cfg.state_scales);
    let trace = run(apps, env, &mut sata, seed);
    agent.set_mode(mode);
    Ok(trace?)
}

/// Runs one replication of a non-learning scheduler.
pub fn run_baseline(
    kind: SchedulerKind,
    apps: &[TaskGraph],
    env: &EnvSpec,
    seeds: &LambdaSeeds,
    replication: usize,
) -> Result<SimulationTrace> {
    let seed = seeds.evaluation_capability(replication);
    let mut scheduler: Box<dyn Scheduler> = match kind {
        SchedulerKind::Random => Box::new(RandomScheduler::new(seeds.policy(replication).stream("random", 0))),
        SchedulerKind::GreedyEft => Box::new(GreedyEftScheduler),
        SchedulerKind::Heft => Box::new(HeftScheduler::new()),
        other => bail!("{} needs a trained learner", other.name()),
    };
    Ok(run(apps, env, scheduler.as_mut(), seed)?)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_manifest(cfg: &ExperimentConfig, command: &str) -> Result<()> {
    let body = format!(
        "# resolved configuration of the last `{command}` run\ncommand = \"{command}\"\nversion = \"{}\"\n\n{}",
        env!("CARGO_PKG_VERSION"),
        cfg.to_toml()?
    );
    write(&cfg.output_dir.join("manifest.toml"), body)
}

fn ensure_output_dir(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))
}

/// Writes the evaluation workload for `lambda` and returns its path.
pub fn cmd_gen_workload(cfg: &ExperimentConfig, lambda: f64, out: Option<PathBuf>) -> Result<PathBuf> {
    cfg.validate()?;
    let spec = cfg.evaluation_workload(lambda);
    let apps = generate(&spec, &mut LambdaSeeds::new(cfg.seed, lambda).evaluation_workload().stream("workload", 0))?;
    let path = match out {
        Some(p) => p,
        None => {
            ensure_output_dir(cfg)?;
            cfg.output_dir.join(format!("workload_{}.txt", lambda_tag(lambda)))
        }
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    save_workload_file(&path, &apps).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub lambda: f64,
    pub curve: LearningCurve,
    pub checkpoint: PathBuf,
    pub curve_file: PathBuf,
}

/// Trains one scheduler of a learning kind per configured lambda.
pub fn cmd_train(cfg: &ExperimentConfig, kind: SchedulerKind) -> Result<Vec<TrainOutput>> {
    cfg.validate()?;
    ensure_output_dir(cfg)?;
    let mut outputs = Vec::new();
    for &lambda in &cfg.lambdas {
        let (_, output) = train_and_save(cfg, kind, lambda)?;
        outputs.push(output);
    }
    write_manifest(cfg, "train")?;
    Ok(outputs)
}

fn train_and_save(cfg: &ExperimentConfig, kind: SchedulerKind, lambda: f64) -> Result<(Learner, TrainOutput)> {
    let mut learner = Learner::new(kind, cfg, lambda)?;
    let curve = learner.train(cfg, lambda)?;
    let tag = format!("{}_{}", kind.name(), lambda_tag(lambda));
    let checkpoint = cfg.output_dir.join(format!("checkpoint_{tag}.json"));
    let curve_file = cfg.output_dir.join(format!("curve_{tag}.csv"));
    learner.checkpoint().save(&checkpoint).with_context(|| format!("writing {}", checkpoint.display()))?;
    write(&curve_file, curve.to_csv())?;
    Ok((learner, TrainOutput { lambda, curve, checkpoint, curve_file }))
}

/// Greedy evaluation of a checkpoint (or of an untrained network when no
/// checkpoint is given) over the evaluation workload of `lambda`.
pub fn cmd_evaluate(cfg: &ExperimentConfig, lambda: f64, checkpoint: Option<&Path>) -> Result<MetricsReport> {
    cfg.validate()?;
    ensure_output_dir(cfg)?;
    let env = cfg.env()?;
    let (mut learner, name) = match checkpoint {
        Some(path) => (Learner::load(path)?, "checkpoint"),
        None => (Learner::new(SchedulerKind::SataDrl, cfg, lambda)?, "untrained"),
    };
    let actions = cfg.topology.num_ecds + 1;
    let arch = learner.checkpoint().architecture;
    if arch.layer_sizes.first() != Some(&crate::mdp_agent::STATE_DIM) || arch.layer_sizes.last() != Some(&actions) {
        bail!("checkpoint network {:?} does not fit {} ECDs", arch.layer_sizes, cfg.topology.num_ecds);
    }
    let seeds = LambdaSeeds::new(cfg.seed, lambda);
    let apps = prepare_apps(&evaluation_apps(cfg, lambda)?, &env)?;
    let mut reps = Vec::with_capacity(cfg.replications);
    for r in 0..cfg.replications {
        let trace = learner.evaluate(cfg, &apps, &env, seeds.evaluation_capability(r))?;
        reps.push(ReplicationMetrics::from_trace(r, &trace));
    }
    let report = MetricsReport::new(name, lambda, reps);
    write(
        &cfg.output_dir.join(format!("evaluation_{}.csv", lambda_tag(lambda))),
        replications_csv(std::slice::from_ref(&report)),
    )?;
    Ok(report)
}

/// Generates the evaluation workload through the file format, so every
/// consumer sees exactly what a reader of the file would.
fn evaluation_apps(cfg: &ExperimentConfig, lambda: f64) -> Result<Vec<TaskGraph>> {
    let path = cmd_gen_workload(cfg, lambda, None)?;
    load_workload_file(&path).with_context(|| format!("reading {}", path.display()))
}

#[derive(Debug, Clone)]
pub struct CompareOutput {
    pub reports: Vec<MetricsReport>,
    /// Learning curves of the learners, keyed by scheduler name and lambda.
    pub curves: Vec<(String, f64, LearningCurve)>,
}

impl CompareOutput {
    pub fn report(&self, scheduler: &str, lambda: f64) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.scheduler == scheduler && r.lambda == lambda)
    }

    pub fn curve(&self, scheduler: &str, lambda: f64) -> Option<&LearningCurve> {
        self.curves.iter().find(|c| c.0 == scheduler && c.1 == lambda).map(|c| &c.2)
    }
}

/// Every configured scheduler over the same workload file and capability
/// seeds, for each lambda.
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<CompareOutput> {
    cfg.validate()?;
    ensure_output_dir(cfg)?;
    let env = cfg.env()?;
    let kinds = cfg.scheduler_kinds()?;
    let mut reports = Vec::new();
    let mut curves = Vec::new();
    for &lambda in &cfg.lambdas {
        let seeds = LambdaSeeds::new(cfg.seed, lambda);
        let apps = prepare_apps(&evaluation_apps(cfg, lambda)?, &env)?;
        let mut table = Vec::new();
        for &kind in &kinds {
            let mut learner = if kind.is_learner() {
                let (learner, output) = train_and_save(cfg, kind, lambda)?;
                curves.push((kind.name().to_string(), lambda, output.curve));
                Some(learner)
            } else {
                None
            };
            let mut reps = Vec::with_capacity(cfg.replications);
            for r in 0..cfg.replications {
                let trace = match learner.as_mut() {
                    Some(l) => l.evaluate(cfg, &apps, &env, seeds.evaluation_capability(r))?,
                    None => run_baseline(kind, &apps, &env, &seeds, r)?,
                };
                if r == 0 && cfg.write_traces {
                    let path = cfg.output_dir.join(format!("trace_{}_{}.csv", kind.name(), lambda_tag(lambda)));
                    write(&path, trace.to_csv())?;
                }
                reps.push(ReplicationMetrics::from_trace(r, &trace));
            }
            table.push(MetricsReport::new(kind.name(), lambda, reps));
        }
        write(&cfg.output_dir.join(format!("comparison_{}.csv", lambda_tag(lambda))), comparison_csv(&table))?;
        reports.extend(table);
    }
    write(&cfg.output_dir.join("comparison.csv"), comparison_csv(&reports))?;
    write(&cfg.output_dir.join("replications.csv"), replications_csv(&reports))?;
    write_manifest(cfg, "compare")?;
    Ok(CompareOutput { reports, curves })
}
