use serde::Serialize;

use crate::sim_engine::{AppOutcome, SimulationTrace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicationMetrics {
    pub replication: usize,
    pub avg_makespan: f64,
    /// Percentage of applications finishing after their deadline.
    pub violation_rate: f64,
    pub apps: usize,
    pub total_reward: f64,
}

impl ReplicationMetrics {
    pub fn from_outcomes(replication: usize, outcomes: &[AppOutcome], total_reward: f64) -> Self {
        let apps = outcomes.len();
        let (avg_makespan, violation_rate) = if apps == 0 {
            (0.0, 0.0)
        } else {
            let sum: f64 = outcomes.iter().map(|o| o.makespan).sum();
            let violated = outcomes.iter().filter(|o| o.violated()).count();
            (sum / apps as f64, 100.0 * violated as f64 / apps as f64)
        };
        Self { replication, avg_makespan, violation_rate, apps, total_reward }
    }

    pub fn from_trace(replication: usize, trace: &SimulationTrace) -> Self {
        Self::from_outcomes(replication, &trace.apps, trace.total_reward())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub scheduler: String,
    pub lambda: f64,
    /// Mean over replications of the per-replication average makespan.
    pub avg_makespan: f64,
    pub violation_rate: f64,
    pub makespan_sd: f64,
    pub violation_sd: f64,
    pub per_replication: Vec<ReplicationMetrics>,
}

impl MetricsReport {
    pub fn new(scheduler: impl Into<String>, lambda: f64, per_replication: Vec<ReplicationMetrics>) -> Self {
        let makespans: Vec<f64> = per_replication.iter().map(|r| r.avg_makespan).collect();
        let violations: Vec<f64> = per_replication.iter().map(|r| r.violation_rate).collect();
        Self {
            scheduler: scheduler.into(),
            lambda,
            avg_makespan: mean(&makespans),
            violation_rate: mean(&violations),
            makespan_sd: sample_sd(&makespans),
            violation_sd: sample_sd(&violations),
            per_replication,
        }
    }

    pub fn makespans(&self) -> Vec<f64> {
        self.per_replication.iter().map(|r| r.avg_makespan).collect()
    }

    pub fn violation_rates(&self) -> Vec<f64> {
        self.per_replication.iter().map(|r| r.violation_rate).collect()
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation (n - 1 denominator); zero below two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn comparison_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("lambda,scheduler,avg_makespan,makespan_sd,violation_rate,violation_sd,replications\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.lambda,
            r.scheduler,
            r.avg_makespan,
            r.makespan_sd,
            r.violation_rate,
            r.violation_sd,
            r.per_replication.len()
        ));
    }
    out
}

pub fn replications_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("lambda,scheduler,replication,avg_makespan,violation_rate,apps,total_reward\n");
    for r in reports {
        for p in &r.per_replication {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.lambda, r.scheduler, p.replication, p.avg_makespan, p.violation_rate, p.apps, p.total_reward
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(makespan: f64, deadline_slack: f64) -> AppOutcome {
        AppOutcome {
            app_id: 0,
            release_time: 1.0,
            deadline: 1.0 + makespan + deadline_slack,
            finish: 1.0 + makespan,
            makespan,
        }
    }

    #[test]
    fn violation_rate_counts_late_apps() {
        let m = ReplicationMetrics::from_outcomes(0, &[outcome(1.0, 0.5), outcome(3.0, -0.1), outcome(2.0, 0.0)], 0.0);
        assert!((m.avg_makespan - 2.0).abs() < 1e-12);
        assert!((m.violation_rate - 100.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_deadlines_never_violate() {
        let mut o = outcome(5.0, 0.0);
        o.deadline = f64::INFINITY;
        assert_eq!(ReplicationMetrics::from_outcomes(0, &[o], 0.0).violation_rate, 0.0);
    }

    #[test]
    fn report_aggregates() {
        let reps: Vec<_> = [1.0, 2.0, 3.0]
            .iter()
            .enumerate()
            .map(|(i, &m)| ReplicationMetrics { replication: i, avg_makespan: m, violation_rate: 10.0, apps: 4, total_reward: 0.0 })
            .collect();
        let r = MetricsReport::new("random", 5.0, reps);
        assert_eq!(r.avg_makespan, 2.0);
        assert_eq!(r.makespan_sd, 1.0);
        assert_eq!(r.violation_rate, 10.0);
        assert_eq!(comparison_csv(&[r.clone()]).lines().count(), 2);
        assert_eq!(replications_csv(&[r]).lines().count(), 4);
    }
}
