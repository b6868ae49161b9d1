//! Shared fixtures for the benchmarks.

use divnet_core::builders::jensen_net;
use divnet_core::sampling::{log_uniform, trial_rng};
use divnet_core::{
    ConvexFunctionSpec, Edge, Network, Node, RuleForm, RuleId, RuleMatch, State, WeightedPoints,
};

/// Jensen network over `m` random points of `spec`.
pub fn large_jensen(spec: &ConvexFunctionSpec, m: usize, seed: u64) -> Network {
    let mut rng = trial_rng(seed, m as u64);
    let pts = (0..m)
        .map(|_| spec.sample_point(&mut rng).expect("sampleable"))
        .collect();
    let w = (0..m).map(|_| log_uniform(&mut rng, 0.1, 10.0)).collect();
    jensen_net(spec, &WeightedPoints::new(pts, w).expect("valid weights")).expect("valid network")
}

/// A fan of `m` ON arrows into `q`, with the Insertion1 match that
/// replaces it by an OFF centroid.
pub fn fan(spec: &ConvexFunctionSpec, m: usize, seed: u64) -> (Network, RuleMatch) {
    let mut rng = trial_rng(seed, m as u64);
    let mut nodes = vec![Node::explicit(
        "q",
        spec.sample_point(&mut rng).expect("sampleable"),
        State::On,
    )];
    let mut edges = Vec::with_capacity(m);
    for i in 0..m {
        nodes.push(Node::explicit(
            format!("p{i}"),
            spec.sample_point(&mut rng).expect("sampleable"),
            State::On,
        ));
        edges.push(Edge::arrow(
            format!("a{i}"),
            format!("p{i}"),
            "q",
            log_uniform(&mut rng, 0.1, 10.0),
            State::On,
        ));
    }
    let net = Network::build(nodes, edges, spec.id()).expect("valid network");
    let m = RuleMatch::forward(RuleId::Insertion1)
        .form(RuleForm::Off)
        .nodes(["q"])
        .edges((0..m).map(|i| format!("a{i}")));
    (net, m)
}
