//! Dependency-aware task offloading across edge computing devices, scheduled
//! by a deep Q-network and compared against heuristic baselines.

pub mod baselines;
pub mod dqn_core;
pub mod experiment;
pub mod mdp_agent;
pub mod mec_model;
pub mod rng;
pub mod sim_engine;
pub mod task_graph;
pub mod workload;
