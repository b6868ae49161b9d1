//! Random networks with explicit coordinates, for the Φ properties.

use divnet_core::sampling::{log_uniform, trial_rng, TrialRng};
use divnet_core::{ConvexFunctionSpec, Edge, Network, Node, State};
use rand::Rng;

pub struct Pool {
    pub nodes: Vec<Node>,
}

/// `k` explicit nodes of random coordinate and state.
pub fn pool(spec: &ConvexFunctionSpec, rng: &mut TrialRng, k: usize) -> Pool {
    let nodes = (0..k)
        .map(|i| {
            let x = spec.sample_point(rng).unwrap();
            let s = if rng.random_bool(0.5) {
                State::On
            } else {
                State::Off
            };
            Node::explicit(format!("n{i}"), x, s)
        })
        .collect();
    Pool { nodes }
}

/// A random network over `pool` whose edge ids start with `prefix`.
pub fn random_network(
    spec: &ConvexFunctionSpec,
    pool: &Pool,
    rng: &mut TrialRng,
    prefix: &str,
) -> Network {
    let k = pool.nodes.len();
    let mut used = vec![false; k];
    let mut edges = Vec::new();
    for i in 0..rng.random_range(1..=6) {
        let (a, b) = (rng.random_range(0..k), rng.random_range(0..k));
        used[a] = true;
        used[b] = true;
        let w = log_uniform(rng, 0.1, 5.0) * if rng.random_bool(0.3) { -1.0 } else { 1.0 };
        let s = if rng.random_bool(0.5) {
            State::On
        } else {
            State::Off
        };
        let (ta, tb) = (pool.nodes[a].id.clone(), pool.nodes[b].id.clone());
        let id = format!("{prefix}{i}");
        edges.push(if rng.random_bool(0.3) {
            Edge::line(id, ta, tb, w, s)
        } else {
            Edge::arrow(id, ta, tb, w, s)
        });
    }
    let nodes = pool
        .nodes
        .iter()
        .zip(&used)
        .filter(|(_, u)| **u || rng.random_bool(0.2))
        .map(|(n, _)| n.clone());
    Network::build(nodes, edges, spec.id()).unwrap()
}

/// Two random networks over shared nodes with disjoint edges.
pub fn composable_pair(spec: &ConvexFunctionSpec, seed: u64, trial: u64) -> (Network, Network) {
    let mut rng = trial_rng(seed, trial);
    let k = rng.random_range(2..=6);
    let p = pool(spec, &mut rng, k);
    (
        random_network(spec, &p, &mut rng, "a"),
        random_network(spec, &p, &mut rng, "b"),
    )
}

/// Σ αᵢ B(Pᵢ,Qᵢ) as one all-ON network with positive weights, plus the
/// (tail, head, weight) triples for an oracle. With `coincide` every head
/// sits on its tail's coordinate.
pub fn bregman_sum(
    spec: &ConvexFunctionSpec,
    seed: u64,
    trial: u64,
    coincide: bool,
) -> (Network, Vec<(Vec<f64>, Vec<f64>, f64)>) {
    let mut rng = trial_rng(seed, trial);
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    let mut terms = Vec::new();
    for i in 0..rng.random_range(1..=4) {
        let p = spec.sample_point(&mut rng).unwrap();
        let q = if coincide {
            p.clone()
        } else {
            spec.sample_point(&mut rng).unwrap()
        };
        let w = log_uniform(&mut rng, 0.1, 5.0);
        nodes.push(Node::explicit(format!("p{i}"), p.clone(), State::On));
        nodes.push(Node::explicit(format!("q{i}"), q.clone(), State::On));
        edges.push(Edge::arrow(
            format!("e{i}"),
            format!("p{i}"),
            format!("q{i}"),
            w,
            State::On,
        ));
        terms.push((p, q, w));
    }
    (Network::build(nodes, edges, spec.id()).unwrap(), terms)
}

/// |Φ(N₁+N₂) − Φ(N₁) − Φ(N₂)| relative to 1 + |Φ(N₁+N₂)|.
pub fn additivity_residual(spec: &ConvexFunctionSpec, seed: u64, trial: u64) -> f64 {
    let (a, b) = composable_pair(spec, seed, trial);
    let whole = divnet_core::phi(&a.compose(&b).unwrap(), spec).unwrap();
    let parts = divnet_core::phi(&a, spec).unwrap() + divnet_core::phi(&b, spec).unwrap();
    (whole - parts).abs() / (1.0 + whole.abs())
}

/// Outcome of one nonnegativity trial: Φ, the oracle Σ αᵢ B(Pᵢ,Qᵢ), and
/// whether the coordinates coincide.
pub fn nonnegativity_trial(spec: &ConvexFunctionSpec, seed: u64, trial: u64) -> (f64, f64, bool) {
    let coincide = trial % 4 == 0;
    let (net, terms) = bregman_sum(spec, seed, trial, coincide);
    let oracle = terms
        .iter()
        .map(|(p, q, w)| w * super::bregman(spec.id(), p, q))
        .sum();
    (divnet_core::phi(&net, spec).unwrap(), oracle, coincide)
}

/// Adds α·B(P,Q) on fresh ON nodes to a random network: returns α, the
/// change in Φ, and the oracle α·B_F(P,Q).
pub fn monotonicity_trial(spec: &ConvexFunctionSpec, seed: u64, trial: u64) -> (f64, f64, f64) {
    let (base, _) = composable_pair(spec, seed, trial);
    let mut rng = trial_rng(seed ^ 0x6d6f6e6f, trial);
    let (p, q) = (
        spec.sample_point(&mut rng).unwrap(),
        spec.sample_point(&mut rng).unwrap(),
    );
    let alpha = log_uniform(&mut rng, 0.1, 5.0) * if rng.random_bool(0.5) { -1.0 } else { 1.0 };
    let add = Network::build(
        [
            Node::explicit("bp", p.clone(), State::On),
            Node::explicit("bq", q.clone(), State::On),
        ],
        [Edge::arrow("be", "bp", "bq", alpha, State::On)],
        spec.id(),
    )
    .unwrap();
    let delta = divnet_core::phi(&base.compose(&add).unwrap(), spec).unwrap()
        - divnet_core::phi(&base, spec).unwrap();
    (alpha, delta, alpha * super::bregman(spec.id(), &p, &q))
}
