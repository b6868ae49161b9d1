//! Test-side oracles and random instance generators shared by the
//! integration targets. Nothing here calls the engine's own divergence
//! formulas.

#![allow(dead_code)]

pub mod fidelity;
pub mod nets;

use divnet_core::sampling::{log_uniform, trial_rng, uniform, TrialRng};
use divnet_core::{
    apply, ConvexFunctionSpec, Direction, Edge, Error, Network, Node, NodeId, RuleForm, RuleId,
    RuleMatch, State,
};
use rand::Rng;

pub const GENERATORS: [&str; 3] = ["quadratic", "neg_entropy", "neg_log"];

pub fn spec(id: &str, dim: usize) -> ConvexFunctionSpec {
    match id {
        "quadratic" => ConvexFunctionSpec::quadratic(dim),
        "neg_entropy" => ConvexFunctionSpec::neg_entropy(dim),
        "neg_log" => ConvexFunctionSpec::neg_log(dim),
        other => panic!("no oracle for {other}"),
    }
}

// ---------------------------------------------------------------------------
// Closed-form oracles, written out per generator
// ---------------------------------------------------------------------------

pub fn f(id: &str, x: &[f64]) -> f64 {
    match id {
        "quadratic" => x.iter().map(|t| 0.5 * t * t).sum(),
        "neg_entropy" => x.iter().map(|t| t * t.ln()).sum(),
        "neg_log" => x.iter().map(|t| -t.ln()).sum(),
        "quadratic_shifted" => x.iter().map(|t| 0.5 * t * t - 0.5).sum(),
        other => panic!("no oracle for {other}"),
    }
}

pub fn grad(id: &str, x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|t| match id {
            "quadratic" | "quadratic_shifted" => *t,
            "neg_entropy" => 1.0 + t.ln(),
            "neg_log" => -1.0 / t,
            other => panic!("no oracle for {other}"),
        })
        .collect()
}

pub fn conj(id: &str, y: &[f64]) -> f64 {
    y.iter()
        .map(|t| match id {
            "quadratic" => 0.5 * t * t,
            "quadratic_shifted" => 0.5 * t * t + 0.5,
            "neg_entropy" => (t - 1.0).exp(),
            "neg_log" => -1.0 - (-t).ln(),
            other => panic!("no oracle for {other}"),
        })
        .sum()
}

pub fn grad_conj(id: &str, y: &[f64]) -> Vec<f64> {
    y.iter()
        .map(|t| match id {
            "quadratic" | "quadratic_shifted" => *t,
            "neg_entropy" => (t - 1.0).exp(),
            "neg_log" => -1.0 / t,
            other => panic!("no oracle for {other}"),
        })
        .collect()
}

fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn bregman(id: &str, p: &[f64], q: &[f64]) -> f64 {
    let g = grad(id, q);
    f(id, p)
        - f(id, q)
        - p.iter()
            .zip(q)
            .zip(&g)
            .map(|((a, b), c)| (a - b) * c)
            .sum::<f64>()
}

pub fn sym_bregman(id: &str, p: &[f64], q: &[f64]) -> f64 {
    bregman(id, p, q) + bregman(id, q, p)
}

pub fn centroid(points: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    (0..points[0].len())
        .map(|k| points.iter().zip(w).map(|(p, a)| a * p[k]).sum::<f64>() / s)
        .collect()
}

pub fn jensen(id: &str, points: &[Vec<f64>], w: &[f64]) -> f64 {
    let s: f64 = w.iter().sum();
    points.iter().zip(w).map(|(p, a)| a * f(id, p)).sum::<f64>() / s - f(id, &centroid(points, w))
}

pub fn conj_jensen(id: &str, points: &[Vec<f64>], w: &[f64]) -> f64 {
    let duals: Vec<Vec<f64>> = points.iter().map(|p| grad(id, p)).collect();
    let s: f64 = w.iter().sum();
    duals
        .iter()
        .zip(w)
        .map(|(y, a)| a * conj(id, y))
        .sum::<f64>()
        / s
        - conj(id, &centroid(&duals, w))
}

/// (1/Σq) Σ qᵢ F(pᵢ/qᵢ) for a scalar generator.
pub fn f_divergence(id: &str, p: &[f64], q: &[f64]) -> f64 {
    let s: f64 = q.iter().sum();
    p.iter()
        .zip(q)
        .map(|(a, b)| b * f(id, &[a / b]))
        .sum::<f64>()
        / s
}

pub fn inner_product(a: &[f64], b: &[f64]) -> f64 {
    inner(a, b)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

// ---------------------------------------------------------------------------
// Random networks around a rule pattern
// ---------------------------------------------------------------------------

/// A random background network with a pattern grafted on.
pub struct Ctx<'a> {
    pub spec: &'a ConvexFunctionSpec,
    pub rng: TrialRng,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// Explicit background node ids.
    pub bg: Vec<String>,
    counter: usize,
    signed: bool,
}

impl<'a> Ctx<'a> {
    /// Three to five explicit nodes of random state joined by random
    /// arrows, lines and loops, plus a centroid `bc` fed by two of them.
    pub fn new(spec: &'a ConvexFunctionSpec, seed: u64, trial: u64) -> Self {
        let mut ctx = Ctx {
            spec,
            rng: trial_rng(seed, trial),
            nodes: Vec::new(),
            edges: Vec::new(),
            bg: Vec::new(),
            counter: 0,
            signed: spec.id() == "quadratic",
        };
        let k = ctx.rng.random_range(3..=5);
        for i in 0..k {
            let id = format!("b{i}");
            let (p, s) = (ctx.point(), ctx.state());
            ctx.nodes.push(Node::explicit(id.as_str(), p, s));
            ctx.bg.push(id);
        }
        for _ in 0..ctx.rng.random_range(2..=5) {
            let (x, y) = (ctx.bg_node(), ctx.bg_node());
            let (w, s, line) = (ctx.signed_weight(), ctx.state(), ctx.rng.random_bool(0.3));
            ctx.edge(&x, &y, w, s, line);
        }
        let s = ctx.state();
        ctx.nodes.push(Node::centroid("bc", s));
        for _ in 0..2 {
            let x = ctx.bg_node();
            let (w, s) = (ctx.weight(), ctx.state());
            ctx.edge(&x, "bc", w, s, false);
        }
        if ctx.rng.random_bool(0.5) {
            let y = ctx.bg_node();
            let (w, s) = (ctx.signed_weight(), ctx.state());
            ctx.edge("bc", &y, w, s, false);
        }
        ctx
    }

    pub fn point(&mut self) -> Vec<f64> {
        self.spec
            .sample_point(&mut self.rng)
            .expect("sampleable domain")
    }

    pub fn state(&mut self) -> State {
        if self.rng.random_bool(0.5) {
            State::On
        } else {
            State::Off
        }
    }

    /// Positive weight suitable for centroid definitions.
    pub fn weight(&mut self) -> f64 {
        log_uniform(&mut self.rng, 0.2, 3.0)
    }

    /// Weight of either sign.
    pub fn signed_weight(&mut self) -> f64 {
        let w = self.weight();
        if self.rng.random_bool(0.3) {
            -w
        } else {
            w
        }
    }

    /// Weight for fans and connections: signed only where the domain is
    /// the whole space.
    pub fn fan_weight(&mut self) -> f64 {
        if self.signed {
            self.signed_weight()
        } else {
            self.weight()
        }
    }

    pub fn bg_node(&mut self) -> String {
        let i = self.rng.random_range(0..self.bg.len());
        self.bg[i].clone()
    }

    pub fn fresh(&mut self, prefix: &str) -> String {
        self.counter += 1;
        format!("{prefix}{}", self.counter)
    }

    pub fn node(&mut self, id: &str, coord: Vec<f64>, state: State) {
        self.nodes.push(Node::explicit(id, coord, state));
    }

    pub fn edge(&mut self, x: &str, y: &str, w: f64, s: State, line: bool) -> String {
        let id = self.fresh("e");
        self.edges.push(if line {
            Edge::line(id.as_str(), x, y, w, s)
        } else {
            Edge::arrow(id.as_str(), x, y, w, s)
        });
        id
    }

    /// Joins `v` to the background by up to `max` random edges that touch
    /// only explicit nodes.
    pub fn attach(&mut self, v: &str, max: usize) {
        for _ in 0..self.rng.random_range(0..=max) {
            let x = self.bg_node();
            let (w, s, line) = (
                self.signed_weight(),
                self.state(),
                self.rng.random_bool(0.3),
            );
            if self.rng.random_bool(0.5) {
                self.edge(v, &x, w, s, line);
            } else {
                self.edge(&x, v, w, s, line);
            }
        }
    }

    pub fn build(&self) -> Network {
        Network::build(self.nodes.clone(), self.edges.clone(), self.spec.id())
            .expect("valid random network")
    }
}

/// A random network and a match of `rule` in `direction` on it.
pub fn rule_instance(
    rule: RuleId,
    direction: Direction,
    spec: &ConvexFunctionSpec,
    seed: u64,
    trial: u64,
) -> (Network, RuleMatch) {
    let mut c = Ctx::new(spec, seed, trial);
    let m = match (rule, direction) {
        (RuleId::Summation, Direction::Forward) => {
            if c.rng.random_bool(0.5) {
                let (x, y) = (c.bg_node(), c.bg_node());
                let (s, line) = (c.state(), c.rng.random_bool(0.3));
                let (w1, w2) = (c.signed_weight(), c.signed_weight());
                let a = c.edge(&x, &y, w1, s, line);
                let b = if line && c.rng.random_bool(0.5) {
                    c.edge(&y, &x, w2, s, true)
                } else {
                    c.edge(&x, &y, w2, s, line)
                };
                RuleMatch::forward(rule).form(RuleForm::Edges).edges([a, b])
            } else {
                let (x, s) = (c.point(), c.state());
                c.node("m1", x.clone(), s);
                c.node("m2", x, s);
                c.attach("m1", 3);
                c.attach("m2", 3);
                RuleMatch::forward(rule)
                    .form(RuleForm::Nodes)
                    .nodes(["m1", "m2"])
            }
        }
        (RuleId::Summation, Direction::Reverse) => {
            if c.rng.random_bool(0.5) {
                let i = c.rng.random_range(0..c.edges.len());
                let id = c.edges[i].id.clone();
                let w = c.signed_weight();
                RuleMatch::reverse(rule)
                    .form(RuleForm::Edges)
                    .edges([id])
                    .param("weight", w)
            } else {
                let (x, s) = (c.point(), c.state());
                c.node("v", x, s);
                c.attach("v", 4);
                let (mut tails, mut heads) = (Vec::new(), Vec::new());
                let v = NodeId::from("v");
                for e in &c.edges {
                    let (a, b) = e.orientation.endpoints();
                    if *a == v && c.rng.random_bool(0.5) {
                        tails.push(e.id.clone());
                    }
                    if *b == v && c.rng.random_bool(0.5) {
                        heads.push(e.id.clone());
                    }
                }
                RuleMatch::reverse(rule)
                    .form(RuleForm::Nodes)
                    .nodes(["v"])
                    .edges(tails)
                    .heads(heads)
            }
        }
        (RuleId::DeleteIsolated, Direction::Forward) => {
            let (x, s) = (c.point(), c.state());
            c.node("iso", x, s);
            RuleMatch::forward(rule).nodes(["iso"])
        }
        (RuleId::DeleteIsolated, Direction::Reverse) => {
            let (x, s) = (c.point(), c.state());
            RuleMatch::reverse(rule).nodes(["iso"]).coord(x).state(s)
        }
        (RuleId::DeleteZeroWeight, Direction::Forward) => {
            let (x, y, s, line) = (
                c.bg_node(),
                zero_target(&mut c),
                c.state(),
                c.rng.random_bool(0.3),
            );
            let id = c.edge(&x, &y, 0.0, s, line && y != "bc");
            RuleMatch::forward(rule).edges([id])
        }
        (RuleId::DeleteZeroWeight, Direction::Reverse) => {
            let (x, y, s) = (c.bg_node(), zero_target(&mut c), c.state());
            let form = if c.rng.random_bool(0.3) && y != "bc" {
                RuleForm::Line
            } else {
                RuleForm::Arrow
            };
            RuleMatch::reverse(rule)
                .form(form)
                .edges(["z"])
                .nodes([x, y])
                .state(s)
        }
        (RuleId::DeleteOffBetweenOff, dir) => {
            let (x, y) = (c.point(), c.point());
            c.node("o1", x, State::Off);
            c.node("o2", y, State::Off);
            c.attach("o1", 2);
            c.attach("o2", 2);
            let variant = c.rng.random_range(0..4);
            let w = c.signed_weight();
            let line = c.rng.random_bool(0.4);
            if dir == Direction::Forward {
                let id = match variant {
                    // an OFF centroid losing one of its two defining arrows
                    0 => {
                        c.nodes.push(Node::centroid("oc", State::Off));
                        let (w1, w2) = (c.weight(), c.weight());
                        c.edge("o2", "oc", w2, State::Off, false);
                        c.edge("o1", "oc", w1, State::Off, false)
                    }
                    1 => {
                        c.nodes.push(Node::conjugate_centroid("oc", State::Off));
                        let (w1, w2) = (c.weight(), c.weight());
                        c.edge("oc", "o2", w2, State::Off, false);
                        c.edge("oc", "o1", w1, State::Off, false)
                    }
                    2 => c.edge("o1", "o1", w, State::Off, line),
                    _ => c.edge("o1", "o2", w, State::Off, line),
                };
                RuleMatch::forward(rule).edges([id])
            } else {
                let form = if c.rng.random_bool(0.3) {
                    RuleForm::Line
                } else {
                    RuleForm::Arrow
                };
                let y = if variant == 2 { "o1" } else { "o2" };
                RuleMatch::reverse(rule)
                    .form(form)
                    .edges(["z"])
                    .nodes(["o1", y])
                    .param("weight", w)
            }
        }
        (RuleId::DeleteOnLoopOnNode, dir) => {
            let x = c.point();
            c.node("l", x, State::On);
            c.attach("l", 3);
            let (w, line) = (c.signed_weight(), c.rng.random_bool(0.3));
            if dir == Direction::Forward {
                let id = c.edge("l", "l", w, State::On, line);
                RuleMatch::forward(rule).edges([id])
            } else {
                let form = if line {
                    RuleForm::Line
                } else {
                    RuleForm::Arrow
                };
                RuleMatch::reverse(rule)
                    .form(form)
                    .edges(["z"])
                    .nodes(["l"])
                    .param("weight", w)
            }
        }
        (RuleId::OnOff1 | RuleId::OnOff2, dir) => {
            let from = if rule == RuleId::OnOff1 {
                State::On
            } else {
                State::Off
            };
            let x = c.point();
            c.node("v", x, from);
            balanced_edges(&mut c, "v");
            let m = RuleMatch::forward(rule).nodes(["v"]);
            if dir == Direction::Forward {
                m
            } else {
                return through_forward(&c, &m);
            }
        }
        (RuleId::Insertion1 | RuleId::Insertion2, dir) => {
            let primal = rule == RuleId::Insertion1;
            let form = [RuleForm::Off, RuleForm::On, RuleForm::Switch][c.rng.random_range(0..3)];
            let m = if form == RuleForm::Switch {
                let sc = "sc";
                c.nodes.push(if primal {
                    Node::centroid(sc, State::On)
                } else {
                    Node::conjugate_centroid(sc, State::On)
                });
                let mut sigma = 0.0;
                for _ in 0..c.rng.random_range(1..=3) {
                    let x = c.bg_node();
                    let w = c.weight();
                    sigma += w;
                    if primal {
                        c.edge(&x, sc, w, State::On, false)
                    } else {
                        c.edge(sc, &x, w, State::On, false)
                    };
                }
                let split = c.rng.random_range(0.2..0.8) * sigma;
                for part in [split, sigma - split] {
                    let x = c.bg_node();
                    let s = c.state();
                    if primal {
                        c.edge(sc, &x, part, s, false)
                    } else {
                        c.edge(&x, sc, part, s, false)
                    };
                }
                RuleMatch::forward(rule).form(form).nodes([sc])
            } else {
                let q = if c.rng.random_bool(0.5) {
                    c.bg_node()
                } else {
                    let (x, s) = (c.point(), c.state());
                    c.node("q", x, s);
                    c.attach("q", 2);
                    "q".to_string()
                };
                let mut fan = Vec::new();
                let mut sigma: f64 = 0.0;
                while fan.is_empty() || sigma.abs() < 0.1 {
                    let far = if primal && c.rng.random_bool(0.25) {
                        "bc".to_string()
                    } else {
                        let id = c.fresh("f");
                        let x = c.point();
                        let s = c.state();
                        c.node(&id, x, s);
                        id
                    };
                    let w = c.fan_weight();
                    sigma += w;
                    fan.push(if primal {
                        c.edge(&far, &q, w, State::On, false)
                    } else {
                        c.edge(&q, &far, w, State::On, false)
                    });
                }
                RuleMatch::forward(rule).form(form).nodes([q]).edges(fan)
            };
            if dir == Direction::Forward {
                m
            } else {
                return through_forward(&c, &m);
            }
        }
        (RuleId::Connection, Direction::Forward) => {
            let form = if c.rng.random_bool(0.5) {
                RuleForm::Centroid
            } else {
                RuleForm::Conjugate
            };
            let p = ends(&mut c, "cp", &[]);
            let q = ends(&mut c, "cq", std::slice::from_ref(&p));
            let (a, b) = connection_weights(&mut c);
            let coords = c.build().resolve_coordinates(spec).unwrap();
            let (pc, qc) = (
                &coords[&NodeId::from(p.as_str())],
                &coords[&NodeId::from(q.as_str())],
            );
            let lines = c.rng.random_bool(0.5);
            let derived = !lines && c.rng.random_bool(0.5);
            if derived {
                c.nodes.push(match form {
                    RuleForm::Centroid => Node::centroid("v", State::On),
                    _ => Node::conjugate_centroid("v", State::On),
                });
            } else {
                let target = middle(spec, form, pc, qc, a, b);
                c.node("v", target, State::On);
                c.attach("v", 2);
            }
            let edges = if lines {
                vec![
                    c.edge(&p, "v", a, State::On, true),
                    c.edge(&q, "v", b, State::On, true),
                ]
            } else {
                vec![
                    c.edge(&p, "v", a, State::On, false),
                    c.edge("v", &p, a, State::On, false),
                    c.edge(&q, "v", b, State::On, false),
                    c.edge("v", &q, b, State::On, false),
                ]
            };
            RuleMatch::forward(rule)
                .form(form)
                .nodes([p.as_str(), "v", q.as_str()])
                .edges(edges)
        }
        (RuleId::Connection, Direction::Reverse) => {
            let form = if c.rng.random_bool(0.5) {
                RuleForm::Centroid
            } else {
                RuleForm::Conjugate
            };
            let p = ends(&mut c, "cp", &[]);
            let q = ends(&mut c, "cq", std::slice::from_ref(&p));
            let w = c.fan_weight();
            let t = log_uniform(&mut c.rng, 0.1, 5.0);
            let alpha = w * (1.0 + t);
            let lines = c.rng.random_bool(0.5);
            let edges = if lines {
                vec![c.edge(&p, &q, w, State::On, true)]
            } else {
                vec![
                    c.edge(&p, &q, w, State::On, false),
                    c.edge(&q, &p, w, State::On, false),
                ]
            };
            let mut m = RuleMatch::reverse(rule)
                .form(form)
                .nodes([p.as_str(), q.as_str(), "mid"])
                .edges(edges)
                .param("alpha", alpha);
            if !lines && c.rng.random_bool(0.5) {
                m = m.kind(match form {
                    RuleForm::Centroid => divnet_core::KindTag::Centroid,
                    _ => divnet_core::KindTag::ConjugateCentroid,
                });
            }
            m
        }
    };
    (c.build(), m)
}

fn zero_target(c: &mut Ctx) -> String {
    if c.rng.random_bool(0.2) {
        "bc".to_string()
    } else {
        c.bg_node()
    }
}

/// Random in- and out-edges at `v` whose totals agree.
fn balanced_edges(c: &mut Ctx, v: &str) {
    loop {
        let mut sum_in = 0.0;
        for _ in 0..c.rng.random_range(1..=3) {
            let (x, w, s) = (c.bg_node(), c.signed_weight(), c.state());
            c.edge(&x, v, w, s, false);
            sum_in += w;
        }
        if c.rng.random_bool(0.3) {
            let (x, w, s) = (c.bg_node(), c.signed_weight(), c.state());
            c.edge(&x, v, w, s, true);
        }
        let outs = c.rng.random_range(1..=3);
        let mut sum_out = 0.0;
        for k in 0..outs {
            let w = if k + 1 == outs {
                sum_in - sum_out
            } else {
                c.signed_weight()
            };
            let (x, s) = (c.bg_node(), c.state());
            c.edge(v, &x, w, s, false);
            sum_out += w;
        }
        if sum_in.abs() > 0.1 {
            return;
        }
        // retry with fresh edges on top; the totals stay balanced
    }
}

/// An ON endpoint: a fresh node, or an ON background node when one is free.
fn ends(c: &mut Ctx, name: &str, taken: &[String]) -> String {
    let on: Vec<String> =
        c.bg.iter()
            .filter(|id| {
                !taken.contains(id)
                    && c.nodes
                        .iter()
                        .any(|n| n.id.as_str() == id.as_str() && n.state == State::On)
            })
            .cloned()
            .collect();
    if !on.is_empty() && c.rng.random_bool(0.3) {
        on[c.rng.random_range(0..on.len())].clone()
    } else {
        let x = c.point();
        c.node(name, x, State::On);
        c.attach(name, 2);
        name.to_string()
    }
}

fn connection_weights(c: &mut Ctx) -> (f64, f64) {
    loop {
        let (a, b) = (c.fan_weight(), c.fan_weight());
        if (a + b).abs() > 0.1 {
            return (a, b);
        }
    }
}

fn middle(
    spec: &ConvexFunctionSpec,
    form: RuleForm,
    p: &[f64],
    q: &[f64],
    a: f64,
    b: f64,
) -> Vec<f64> {
    let s = a + b;
    match form {
        RuleForm::Centroid => p.iter().zip(q).map(|(x, y)| (a * x + b * y) / s).collect(),
        _ => {
            let (gp, gq) = (grad(spec.id(), p), grad(spec.id(), q));
            let y: Vec<f64> = gp
                .iter()
                .zip(&gq)
                .map(|(x, z)| (a * x + b * z) / s)
                .collect();
            grad_conj(spec.id(), &y)
        }
    }
}

/// The inverse of `m` on the network `m` produces: a reverse application
/// on a random network.
fn through_forward(c: &Ctx, m: &RuleMatch) -> (Network, RuleMatch) {
    let net = c.build();
    let (out, step) = apply(&net, m, c.spec, false).expect("forward instance applies");
    (out, step.inverse)
}

/// Aggregate of many checked applications of one rule form.
#[derive(Debug, Default, Clone)]
pub struct RuleStats {
    pub applied: usize,
    pub max_residual: f64,
    pub violations: Vec<String>,
    pub errors: Vec<String>,
    pub irreversible: Vec<String>,
}

impl RuleStats {
    pub fn clean(&self) -> bool {
        self.violations.is_empty() && self.errors.is_empty() && self.irreversible.is_empty()
    }
}

/// Applies `trials` random instances with checking on, then undoes each
/// with its recorded inverse and compares against the starting network.
pub fn run_rule(
    rule: RuleId,
    direction: Direction,
    spec: &ConvexFunctionSpec,
    seed: u64,
    trials: u64,
) -> RuleStats {
    let tol = divnet_core::Tolerance::default();
    let mut st = RuleStats::default();
    for t in 0..trials {
        let (net, m) = rule_instance(rule, direction, spec, seed, t);
        match apply(&net, &m, spec, true) {
            Ok((out, step)) => {
                st.applied += 1;
                st.max_residual = st.max_residual.max(step.residual);
                match apply(&out, &step.inverse, spec, true) {
                    Ok((back, _)) if back.same_structure(&net, spec, tol).unwrap_or(false) => {}
                    Ok(_) => st
                        .irreversible
                        .push(format!("trial {t}: inverse gave a different network")),
                    Err(e) => st
                        .irreversible
                        .push(format!("trial {t}: inverse failed: {e}")),
                }
            }
            Err(e @ Error::PhiViolation { .. }) => st.violations.push(format!("trial {t}: {e}")),
            Err(e) => st.errors.push(format!("trial {t}: {e} ({m:?})")),
        }
    }
    st
}

pub fn random_simplex(rng: &mut TrialRng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| uniform(rng, 0.05, 1.0)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}
