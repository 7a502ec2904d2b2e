mod common;

use common::{toy_config, toy_learned_policy, toy_optimal_policy};

#[test]
fn value_iteration_prefers_the_delayed_reward() {
    assert_eq!(toy_optimal_policy(0.9), [1, 0]);
    // a myopic agent would stay put in state 0
    assert_eq!(toy_optimal_policy(0.0), [0, 0]);
}

#[test]
fn dqn_learns_the_optimal_toy_policy() {
    for seed in 0..3 {
        assert_eq!(toy_learned_policy(toy_config(), 150, 20, seed), toy_optimal_policy(0.9), "seed {seed}");
    }
}

#[test]
fn myopic_dqn_learns_the_myopic_policy() {
    let config = edge_offload::dqn_core::DqnConfig { gamma: 0.0, ..toy_config() };
    assert_eq!(toy_learned_policy(config, 100, 20, 7), toy_optimal_policy(0.0));
}
