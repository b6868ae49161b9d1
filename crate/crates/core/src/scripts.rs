//! Scripted multi-step derivations.
//!
//! Each builder returns a [`Derivation`] whose steps carry the expected Φ
//! (from direct formulas, not from the network) and whose `final` network
//! is the target shape.

use crate::builders::{bregman_div, jensen_div, jensen_net, sym_bregman_div, WeightedPoints};
use crate::convex::{dot, ConvexFunctionSpec};
use crate::error::{Error, Result};
use crate::netmodel::{Edge, Network, Node, State};
use crate::rewrite::{Derivation, RuleForm, RuleId, RuleMatch, ScriptStep};

fn with_expected(steps: Vec<RuleMatch>, value: f64) -> Vec<ScriptStep> {
    steps
        .into_iter()
        .map(|m| ScriptStep {
            rule_match: m,
            expected_phi: Some(value),
        })
        .collect()
}

fn arrow_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("a{i}")).collect()
}

/// Turns an ON centroid with an ON outgoing arrow of weight Σ into the
/// OFF-centroid shape produced by the first insertion rule.
///
/// Start: ON points `pi`, ON arrows `ai: pi → c` into an ON centroid `c`,
/// and `out: c → q` of weight Σ. End: the same points and arrows with `c`
/// and every `ai` OFF. Φ stays at Σᵢ αᵢ B_F(Pᵢ, Q) throughout.
pub fn insertion_variant_chain(
    spec: &ConvexFunctionSpec,
    wp: &WeightedPoints,
    q: &[f64],
) -> Result<Derivation> {
    spec.check_primal(q)?;
    let on = jensen_net(spec, wp)?;
    let nodes = on
        .nodes()
        .cloned()
        .chain([Node::explicit("q", q.to_vec(), State::On)]);
    let edges = on
        .edges()
        .cloned()
        .chain([Edge::arrow("out", "c", "q", wp.sigma(), State::On)]);
    let initial = Network::build(nodes, edges, spec.id())?;

    let mut expected = 0.0;
    for (p, w) in wp.points().iter().zip(wp.weights()) {
        expected += w * bregman_div(spec, p, q)?;
    }
    let fan = arrow_ids(wp.len());
    let steps = vec![
        RuleMatch::forward(RuleId::Insertion1)
            .form(RuleForm::Off)
            .nodes(["c"])
            .edges(fan.clone())
            .fresh(["c2", "c2.out"]),
        RuleMatch::forward(RuleId::OnOff1)
            .nodes(["c"])
            .fresh(["loop"]),
        RuleMatch::forward(RuleId::Summation)
            .form(RuleForm::Nodes)
            .nodes(["c", "c2"]),
        RuleMatch::forward(RuleId::Summation)
            .form(RuleForm::Edges)
            .edges(["c2.out", "loop"]),
        RuleMatch::forward(RuleId::DeleteZeroWeight).edges(["c2.out"]),
    ];

    let mut nodes: Vec<Node> = initial.nodes().cloned().collect();
    nodes
        .iter_mut()
        .filter(|n| n.id.as_str() == "c")
        .for_each(|n| n.state = State::Off);
    let mut edges: Vec<Edge> = initial.edges().cloned().collect();
    edges
        .iter_mut()
        .filter(|e| e.id.as_str() != "out")
        .for_each(|e| e.state = State::Off);
    let final_network = Network::build(nodes, edges, spec.id())?;

    Ok(Derivation {
        generator: spec.id().to_string(),
        initial,
        steps: with_expected(steps, expected),
        final_network: Some(final_network),
    })
}

/// Points joined to their centroid by ON lines, rewritten into ON loops of
/// weight −αᵢ at OFF points and one ON arrow C → Ĉ of weight Σ between OFF
/// nodes.
///
/// Lines are written as antiparallel arrows `pi>v`, `v>pi` so that `v` can
/// be a centroid. Φ stays at Σᵢ αᵢ⟨Pᵢ, Pᵢ*⟩ − Σ⟨C, Ĉ*⟩.
pub fn sym_fan_chain(spec: &ConvexFunctionSpec, wp: &WeightedPoints) -> Result<Derivation> {
    let names: Vec<String> = (1..=wp.len()).map(|i| format!("p{i}")).collect();
    sym_fan_named(spec, wp, &names)
}

/// The two-point case of [`sym_fan_chain`] with points named `p` and `q`.
/// Its Φ equals that of the single line produced by the connection rule.
pub fn connection_chain(
    spec: &ConvexFunctionSpec,
    p: &[f64],
    q: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<Derivation> {
    let wp = WeightedPoints::new(vec![p.to_vec(), q.to_vec()], vec![alpha, beta])?;
    sym_fan_named(spec, &wp, &["p".to_string(), "q".to_string()])
}

fn sym_fan_named(
    spec: &ConvexFunctionSpec,
    wp: &WeightedPoints,
    names: &[String],
) -> Result<Derivation> {
    for p in wp.points() {
        spec.check_primal(p)?;
    }
    let c = wp.centroid();
    let c_hat = wp.conjugate_centroid(spec)?;
    let sigma = wp.sigma();

    let mut nodes: Vec<Node> = names
        .iter()
        .zip(wp.points())
        .map(|(n, p)| Node::explicit(n.as_str(), p.clone(), State::On))
        .collect();
    nodes.push(Node::centroid("v", State::On));
    let mut edges = Vec::new();
    for (n, w) in names.iter().zip(wp.weights()) {
        edges.push(Edge::arrow(
            format!("{n}>v"),
            n.as_str(),
            "v",
            *w,
            State::On,
        ));
        edges.push(Edge::arrow(
            format!("v>{n}"),
            "v",
            n.as_str(),
            *w,
            State::On,
        ));
    }
    let initial = Network::build(nodes, edges, spec.id())?;

    let mut expected = -sigma * dot(&c, &spec.eval_grad(&c_hat)?);
    for (p, w) in wp.points().iter().zip(wp.weights()) {
        expected += w * dot(p, &spec.eval_grad(p)?);
    }

    let mut steps = vec![
        RuleMatch::forward(RuleId::Insertion2)
            .form(RuleForm::Off)
            .nodes(["v"])
            .edges(names.iter().map(|n| format!("v>{n}")))
            .fresh(["c_hat", "c_hat.in"]),
        RuleMatch::forward(RuleId::Insertion1)
            .form(RuleForm::Switch)
            .nodes(["v"]),
    ];
    for n in names {
        steps.push(
            RuleMatch::forward(RuleId::OnOff1)
                .nodes([n.as_str()])
                .fresh([format!("loop.{n}")]),
        );
    }
    for n in names {
        steps.push(RuleMatch::forward(RuleId::DeleteOffBetweenOff).edges([format!("{n}>v")]));
        steps.push(RuleMatch::forward(RuleId::DeleteOffBetweenOff).edges([format!("v>{n}")]));
    }

    let mut nodes: Vec<Node> = names
        .iter()
        .zip(wp.points())
        .map(|(n, p)| Node::explicit(n.as_str(), p.clone(), State::Off))
        .collect();
    nodes.push(Node::explicit("v", c, State::Off));
    nodes.push(Node::explicit("c_hat", c_hat, State::Off));
    let mut edges: Vec<Edge> = names
        .iter()
        .zip(wp.weights())
        .map(|(n, w)| Edge::arrow(format!("loop.{n}"), n.as_str(), n.as_str(), -w, State::On))
        .collect();
    edges.push(Edge::arrow("c_hat.in", "v", "c_hat", sigma, State::On));
    let final_network = Network::build(nodes, edges, spec.id())?;

    Ok(Derivation {
        generator: spec.id().to_string(),
        initial,
        steps: with_expected(steps, expected),
        final_network: Some(final_network),
    })
}

/// Which pair of opposite vertices the parallelogram is balanced on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelogram {
    /// P + R = Q + S; the diagonals meet at a shared centroid.
    Primal,
    /// P* + R* = Q* + S*; the diagonals meet at a shared conjugate centroid.
    Dual,
}

/// Fourth vertex completing a parallelogram on `p`, `q`, `s`.
pub fn parallelogram_vertex(
    spec: &ConvexFunctionSpec,
    p: &[f64],
    q: &[f64],
    s: &[f64],
    kind: Parallelogram,
) -> Result<Vec<f64>> {
    let r = match kind {
        Parallelogram::Primal => q
            .iter()
            .zip(s)
            .zip(p)
            .map(|((a, b), c)| a + b - c)
            .collect(),
        Parallelogram::Dual => {
            let (gp, gq, gs) = (spec.eval_grad(p)?, spec.eval_grad(q)?, spec.eval_grad(s)?);
            let y: Vec<f64> = gq
                .iter()
                .zip(&gs)
                .zip(&gp)
                .map(|((a, b), c)| a + b - c)
                .collect();
            spec.eval_grad_conjugate(&y)?
        }
    };
    spec.check_primal(&r)?;
    Ok(r)
}

fn lines_network(
    spec: &ConvexFunctionSpec,
    pts: [(&str, &[f64]); 4],
    lines: &[(&str, &str, &str)],
) -> Result<Network> {
    let nodes = pts
        .iter()
        .map(|(id, x)| Node::explicit(*id, x.to_vec(), State::On));
    let edges = lines
        .iter()
        .map(|(id, a, b)| Edge::line(*id, *a, *b, 1.0, State::On));
    Ok(Network::build(nodes, edges, spec.id())?.desugar_lines())
}

/// Rewrites the four unit sides of a parallelogram P, Q, R, S into its two
/// unit diagonals, one centroid (or conjugate centroid) per vertex, merged
/// into one and split again by the connection rule. Φ stays at the sum of
/// the symmetric Bregman divergences along the sides.
pub fn parallelogram_chain(
    spec: &ConvexFunctionSpec,
    p: &[f64],
    q: &[f64],
    s: &[f64],
    kind: Parallelogram,
) -> Result<Derivation> {
    for x in [p, q, s] {
        spec.check_primal(x)?;
    }
    let r = parallelogram_vertex(spec, p, q, s, kind)?;
    let pts = [("p", p), ("q", q), ("r", r.as_slice()), ("s", s)];
    let initial = lines_network(
        spec,
        pts,
        &[
            ("pq", "p", "q"),
            ("qr", "q", "r"),
            ("rs", "r", "s"),
            ("sp", "s", "p"),
        ],
    )?;
    let final_network = lines_network(spec, pts, &[("pr", "p", "r"), ("qs", "q", "s")])?;

    let mut expected = 0.0;
    for (a, b) in [(p, q), (q, r.as_slice()), (r.as_slice(), s), (s, p)] {
        expected += sym_bregman_div(spec, a, b)?;
    }

    let (rule, form, hubs, bridge) = match kind {
        Parallelogram::Primal => (
            RuleId::Insertion1,
            RuleForm::Centroid,
            ["c1", "c2", "c3", "c4"],
            "out",
        ),
        Parallelogram::Dual => (
            RuleId::Insertion2,
            RuleForm::Conjugate,
            ["k1", "k2", "k3", "k4"],
            "in",
        ),
    };
    // (vertex, fan) for each insertion; primal fans end at the vertex,
    // dual fans start there
    let fans: [(&str, [&str; 2]); 4] = match kind {
        Parallelogram::Primal => [
            ("q", ["pq.ab", "qr.ba"]),
            ("r", ["qr.ab", "rs.ba"]),
            ("s", ["rs.ab", "sp.ba"]),
            ("p", ["sp.ab", "pq.ba"]),
        ],
        Parallelogram::Dual => [
            ("q", ["pq.ba", "qr.ab"]),
            ("r", ["qr.ba", "rs.ab"]),
            ("s", ["rs.ba", "sp.ab"]),
            ("p", ["sp.ba", "pq.ab"]),
        ],
    };
    let mut steps = Vec::new();
    for ((v, fan), hub) in fans.iter().zip(hubs) {
        steps.push(
            RuleMatch::forward(rule)
                .form(RuleForm::On)
                .nodes([*v])
                .edges(*fan)
                .fresh([hub.to_string(), format!("{hub}.{bridge}")]),
        );
    }
    for hub in &hubs[1..] {
        steps.push(
            RuleMatch::forward(RuleId::Summation)
                .form(RuleForm::Nodes)
                .nodes([hubs[0], hub]),
        );
    }
    let pairs: [[&str; 2]; 4] = match kind {
        Parallelogram::Primal => [
            ["pq.ab", "sp.ba"],
            ["qr.ba", "rs.ab"],
            ["pq.ba", "qr.ab"],
            ["rs.ba", "sp.ab"],
        ],
        Parallelogram::Dual => [
            ["pq.ba", "sp.ab"],
            ["qr.ab", "rs.ba"],
            ["pq.ab", "qr.ba"],
            ["rs.ab", "sp.ba"],
        ],
    };
    for pair in pairs {
        steps.push(
            RuleMatch::forward(RuleId::Summation)
                .form(RuleForm::Edges)
                .edges(pair),
        );
    }
    // spokes as [x→hub, hub→x, y→hub, hub→y]
    let spokes: [(&str, &str, [&str; 4], [&str; 2]); 2] = match kind {
        Parallelogram::Primal => [
            (
                "p",
                "r",
                ["pq.ab", "c4.out", "qr.ba", "c2.out"],
                ["pr.ab", "pr.ba"],
            ),
            (
                "q",
                "s",
                ["pq.ba", "c1.out", "rs.ba", "c3.out"],
                ["qs.ab", "qs.ba"],
            ),
        ],
        Parallelogram::Dual => [
            (
                "p",
                "r",
                ["k4.in", "pq.ba", "k2.in", "qr.ab"],
                ["pr.ab", "pr.ba"],
            ),
            (
                "q",
                "s",
                ["k1.in", "pq.ab", "k3.in", "rs.ab"],
                ["qs.ab", "qs.ba"],
            ),
        ],
    };
    for (x, y, edges, fresh) in spokes {
        steps.push(
            RuleMatch::forward(RuleId::Connection)
                .form(form)
                .nodes([x, hubs[0], y])
                .edges(edges)
                .fresh(fresh),
        );
    }

    Ok(Derivation {
        generator: spec.id().to_string(),
        initial,
        steps: with_expected(steps, expected),
        final_network: None,
    }
    .with_final(final_network))
}

/// Reduces a Jensen network to ON points with out-weights αᵢ and an ON
/// centroid with out-weight −Σ, so Φ reads Σᵢ αᵢF(Pᵢ) − ΣF(C) = Σ·J directly.
pub fn jensen_chain(spec: &ConvexFunctionSpec, wp: &WeightedPoints) -> Result<Derivation> {
    let initial = jensen_net(spec, wp)?;
    let expected = wp.sigma() * jensen_div(spec, wp)?;
    let fan = arrow_ids(wp.len());
    let steps = vec![
        RuleMatch::forward(RuleId::Insertion1)
            .form(RuleForm::Off)
            .nodes(["c"])
            .edges(fan)
            .fresh(["c2", "c2.out"]),
        RuleMatch::forward(RuleId::OnOff2)
            .nodes(["c2"])
            .fresh(["loop"]),
        RuleMatch::forward(RuleId::Summation)
            .form(RuleForm::Nodes)
            .nodes(["c", "c2"]),
        RuleMatch::forward(RuleId::DeleteOnLoopOnNode).edges(["c2.out"]),
    ];
    let nodes: Vec<Node> = initial.nodes().cloned().collect();
    let mut edges: Vec<Edge> = initial
        .edges()
        .cloned()
        .map(|mut e| {
            e.state = State::Off;
            e
        })
        .collect();
    edges.push(Edge::arrow("loop", "c", "c", -wp.sigma(), State::Off));
    let final_network = Network::build(nodes, edges, spec.id())?;
    Ok(Derivation {
        generator: spec.id().to_string(),
        initial,
        steps: with_expected(steps, expected),
        final_network: Some(final_network),
    })
}

impl Derivation {
    fn with_final(mut self, net: Network) -> Self {
        self.final_network = Some(net);
        self
    }
}

/// Every scripted chain by name, for the CLI.
pub const CHAIN_NAMES: [&str; 6] = [
    "insertion_variant",
    "connection",
    "sym_fan",
    "parallelogram",
    "parallelogram_dual",
    "jensen",
];

/// Builds a named chain on fixed sample inputs suited to `spec`'s domain.
pub fn sample_chain(name: &str, spec: &ConvexFunctionSpec) -> Result<Derivation> {
    let d = spec.dim();
    let pt = |base: f64| -> Vec<f64> { (0..d).map(|k| base + 0.25 * k as f64).collect() };
    let wp = WeightedPoints::new(vec![pt(0.5), pt(1.5), pt(2.0)], vec![0.5, 1.0, 1.5])?;
    match name {
        "insertion_variant" => insertion_variant_chain(spec, &wp, &pt(1.25)),
        "connection" => connection_chain(spec, &pt(0.5), &pt(2.0), 1.0, 2.0),
        "sym_fan" => sym_fan_chain(spec, &wp),
        "parallelogram" => {
            parallelogram_chain(spec, &pt(1.0), &pt(1.5), &pt(0.75), Parallelogram::Primal)
        }
        "parallelogram_dual" => {
            parallelogram_chain(spec, &pt(1.0), &pt(1.5), &pt(0.75), Parallelogram::Dual)
        }
        "jensen" => jensen_chain(spec, &wp),
        other => Err(Error::InvalidInput(format!(
            "unknown chain `{other}` (known: {})",
            CHAIN_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::phi;
    use crate::rewrite::{apply, replay};
    use crate::tolerance::Tolerance;

    fn specs() -> Vec<ConvexFunctionSpec> {
        vec![
            ConvexFunctionSpec::quadratic(2),
            ConvexFunctionSpec::neg_entropy(2),
            ConvexFunctionSpec::neg_log(2),
        ]
    }

    #[test]
    fn every_sample_chain_replays() {
        for spec in specs() {
            for name in CHAIN_NAMES {
                let d = sample_chain(name, &spec).unwrap();
                let r = replay(&d, &spec, Tolerance::default())
                    .unwrap_or_else(|e| panic!("{name} {}: {e}", spec.id()));
                assert_eq!(r.final_matches, Some(true), "{name} {}", spec.id());
            }
        }
    }

    #[test]
    fn connection_chain_agrees_with_connection_rule() {
        for spec in specs() {
            let (p, q) = (vec![0.5, 1.0], vec![2.0, 0.75]);
            let d = connection_chain(&spec, &p, &q, 1.0, 3.0).unwrap();
            let m = RuleMatch::forward(RuleId::Connection)
                .form(RuleForm::Centroid)
                .nodes(["p", "v", "q"])
                .edges(["p>v", "v>p", "q>v", "v>q"]);
            let (joined, _) = apply(&d.initial, &m, &spec, true).unwrap();
            let line = sym_bregman_div(&spec, &p, &q).unwrap() * 0.75;
            assert!((phi(&joined, &spec).unwrap() - line).abs() < 1e-9);
            let end = replay(&d, &spec, Tolerance::default()).unwrap();
            assert!((end.phi_final - line).abs() < 1e-9 * (1.0 + line.abs()));
        }
    }

    #[test]
    fn parallelogram_sides_equal_diagonals() {
        let spec = ConvexFunctionSpec::neg_entropy(2);
        let (p, q, s) = ([0.6, 1.2], [1.4, 0.9], [0.9, 1.6]);
        for kind in [Parallelogram::Primal, Parallelogram::Dual] {
            let r = parallelogram_vertex(&spec, &p, &q, &s, kind).unwrap();
            let d = parallelogram_chain(&spec, &p, &q, &s, kind).unwrap();
            let rep = replay(&d, &spec, Tolerance::default()).unwrap();
            let diag =
                sym_bregman_div(&spec, &p, &r).unwrap() + sym_bregman_div(&spec, &q, &s).unwrap();
            assert!((rep.phi_final - diag).abs() < 1e-9);
        }
    }

    #[test]
    fn off_parallelogram_is_stale() {
        let spec = ConvexFunctionSpec::quadratic(1);
        let mut d =
            parallelogram_chain(&spec, &[0.0], &[1.0], &[3.0], Parallelogram::Primal).unwrap();
        // move r so the centroids no longer coincide
        let mut nodes: Vec<Node> = d.initial.nodes().cloned().collect();
        nodes
            .iter_mut()
            .filter(|n| n.id.as_str() == "r")
            .for_each(|n| n.kind = crate::netmodel::NodeKind::Explicit(vec![5.0]));
        d.initial = Network::build(nodes, d.initial.edges().cloned(), "quadratic").unwrap();
        for s in &mut d.steps {
            s.expected_phi = None;
        }
        assert!(matches!(
            replay(&d, &spec, Tolerance::default()),
            Err(Error::StaleMatch(_))
        ));
    }

    #[test]
    fn unknown_chain_is_rejected() {
        assert!(sample_chain("zigzag", &ConvexFunctionSpec::quadratic(1)).is_err());
    }
}
