//! Numerical checks of the divergence identities and named special cases.
//!
//! Every identity is evaluated in two independent ways: `Graphical` reads
//! each side off Φ of a network, `ClosedForm` uses the direct divergence
//! formulas. Randomized suites run both and report the worst residual.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::builders::{
    bregman_div, bregman_net, conj_jensen_div, conj_jensen_net, f_div, f_net, jensen_div,
    jensen_net, sym_bregman_div, sym_bregman_net, WeightedPoints,
};
use crate::convex::{dot, ConvexFunctionSpec, SeparableSpec, SeparableTerms};
use crate::error::{Error, Result};
use crate::evaluator::phi;
use crate::netmodel::{Edge, Network, Node, State};
use crate::sampling::{log_uniform, trial_rng, uniform, TrialRng};
use crate::tolerance::{relative_residual, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum IdentityId {
    /// Weighted Bregman divergences to the centroid equal the Jensen divergence.
    I1,
    /// Weighted Bregman divergences from the conjugate centroid equal the
    /// conjugate Jensen divergence.
    I2,
    /// Pythagorean split of divergences from the centroid through Ĉ.
    I3,
    /// Symmetric divergences to the centroid split into both Jensen terms and B_F(C, Ĉ).
    I4,
    /// The inner-product form of the same right-hand side.
    I5,
    /// Two-point version joined directly by one symmetric divergence.
    I6,
    /// The f-divergence identity with scalar ratios pᵢ/qᵢ.
    I7,
    /// Parallelogram law for the symmetric Bregman divergence.
    I8,
}

impl IdentityId {
    pub const ALL: [IdentityId; 8] = [
        IdentityId::I1,
        IdentityId::I2,
        IdentityId::I3,
        IdentityId::I4,
        IdentityId::I5,
        IdentityId::I6,
        IdentityId::I7,
        IdentityId::I8,
    ];

    pub fn name(self) -> &'static str {
        match self {
            IdentityId::I1 => "I1",
            IdentityId::I2 => "I2",
            IdentityId::I3 => "I3",
            IdentityId::I4 => "I4",
            IdentityId::I5 => "I5",
            IdentityId::I6 => "I6",
            IdentityId::I7 => "I7",
            IdentityId::I8 => "I8",
        }
    }

    fn index(self) -> u64 {
        IdentityId::ALL
            .iter()
            .position(|i| *i == self)
            .expect("listed") as u64
    }
}

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IdentityId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IdentityId::ALL
            .into_iter()
            .find(|i| i.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown identity `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Graphical,
    ClosedForm,
}

/// Arguments of one identity instance.
#[derive(Debug, Clone, PartialEq)]
pub enum IdentityInput {
    Points(WeightedPoints),
    /// Two positive mass vectors with equal totals.
    Masses {
        p: Vec<f64>,
        q: Vec<f64>,
    },
    /// Vertices of a quadrilateral, in order.
    Quadrilateral {
        p: Vec<f64>,
        q: Vec<f64>,
        r: Vec<f64>,
        s: Vec<f64>,
    },
}

impl IdentityInput {
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            IdentityInput::Points(wp) => json!({"points": wp.points(), "weights": wp.weights()}),
            IdentityInput::Masses { p, q } => json!({"p": p, "q": q}),
            IdentityInput::Quadrilateral { p, q, r, s } => json!({"p": p, "q": q, "r": r, "s": s}),
        }
    }
}

/// Left- and right-hand side of an identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sides {
    pub lhs: f64,
    pub rhs: f64,
}

impl Sides {
    pub fn residual(&self) -> f64 {
        relative_residual(self.lhs, self.rhs)
    }
}

/// Residual of one identity instance.
pub fn check_identity(
    id: IdentityId,
    spec: &ConvexFunctionSpec,
    input: &IdentityInput,
    mode: Mode,
) -> Result<f64> {
    identity_sides(id, spec, input, mode).map(|s| s.residual())
}

pub fn identity_sides(
    id: IdentityId,
    spec: &ConvexFunctionSpec,
    input: &IdentityInput,
    mode: Mode,
) -> Result<Sides> {
    match (id, input) {
        (IdentityId::I7, IdentityInput::Masses { p, q }) => f_identity(spec, p, q, mode),
        (IdentityId::I8, IdentityInput::Quadrilateral { p, q, r, s }) => {
            parallelogram_constraint(spec, p, q, r, s)?;
            parallelogram_sides(spec, p, q, r, s, mode)
        }
        (IdentityId::I6, IdentityInput::Points(wp)) if wp.len() != 2 => {
            Err(Error::InvalidInput("I6 takes exactly two points".into()))
        }
        (
            IdentityId::I1
            | IdentityId::I2
            | IdentityId::I3
            | IdentityId::I4
            | IdentityId::I5
            | IdentityId::I6,
            IdentityInput::Points(wp),
        ) => {
            for p in wp.points() {
                spec.check_primal(p)?;
            }
            match mode {
                Mode::Graphical => graphical(id, spec, wp),
                Mode::ClosedForm => closed_form(id, spec, wp),
            }
        }
        _ => Err(Error::InvalidInput(format!(
            "{id} does not take this kind of input"
        ))),
    }
}

fn points_network(wp: &WeightedPoints, state: State) -> Vec<Node> {
    wp.points()
        .iter()
        .enumerate()
        .map(|(i, p)| Node::explicit(format!("p{}", i + 1), p.clone(), state))
        .collect()
}

/// Φ of arrows (or lines) between each `pi` and an explicit hub at `hub`.
fn star_phi(
    spec: &ConvexFunctionSpec,
    wp: &WeightedPoints,
    hub: &[f64],
    inward: bool,
    lines: bool,
) -> Result<f64> {
    let mut nodes = points_network(wp, State::On);
    nodes.push(Node::explicit("h", hub.to_vec(), State::On));
    let edges = wp.weights().iter().enumerate().map(|(i, w)| {
        let p = format!("p{}", i + 1);
        match (lines, inward) {
            (true, _) => Edge::line(format!("e{i}"), p, "h", *w, State::On),
            (false, true) => Edge::arrow(format!("e{i}"), p, "h", *w, State::On),
            (false, false) => Edge::arrow(format!("e{i}"), "h", p, *w, State::On),
        }
    });
    phi(&Network::build(nodes, edges, spec.id())?, spec)
}

/// OFF points carrying ON loops of weight −αᵢ and an ON arrow C → Ĉ of
/// weight Σ between OFF nodes: Φ = Σᵢαᵢ⟨Pᵢ,Pᵢ*⟩ − Σ⟨C,Ĉ*⟩.
fn inner_product_phi(spec: &ConvexFunctionSpec, wp: &WeightedPoints) -> Result<f64> {
    let mut nodes = points_network(wp, State::Off);
    nodes.push(Node::explicit("c", wp.centroid(), State::Off));
    nodes.push(Node::explicit(
        "c_hat",
        wp.conjugate_centroid(spec)?,
        State::Off,
    ));
    let mut edges: Vec<Edge> = wp
        .weights()
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let p = format!("p{}", i + 1);
            Edge::arrow(format!("loop{i}"), p.clone(), p, -w, State::On)
        })
        .collect();
    edges.push(Edge::arrow("bridge", "c", "c_hat", wp.sigma(), State::On));
    phi(&Network::build(nodes, edges, spec.id())?, spec)
}

/// J_F + J_F* + B_F(C, Ĉ), from networks.
fn split_rhs_graphical(spec: &ConvexFunctionSpec, wp: &WeightedPoints) -> Result<f64> {
    let s = wp.sigma();
    let c_hat = wp.conjugate_centroid(spec)?;
    Ok(phi(&jensen_net(spec, wp)?, spec)? / s
        + phi(&conj_jensen_net(spec, wp)?, spec)? / s
        + phi(&bregman_net(spec, &wp.centroid(), &c_hat, 1.0)?, spec)?)
}

fn split_rhs_closed(spec: &ConvexFunctionSpec, wp: &WeightedPoints) -> Result<f64> {
    let c_hat = wp.conjugate_centroid(spec)?;
    Ok(jensen_div(spec, wp)?
        + conj_jensen_div(spec, wp)?
        + bregman_div(spec, &wp.centroid(), &c_hat)?)
}

fn graphical(id: IdentityId, spec: &ConvexFunctionSpec, wp: &WeightedPoints) -> Result<Sides> {
    let s = wp.sigma();
    let c = wp.centroid();
    let sides = match id {
        IdentityId::I1 => Sides {
            lhs: star_phi(spec, wp, &c, true, false)? / s,
            rhs: phi(&jensen_net(spec, wp)?, spec)? / s,
        },
        IdentityId::I2 => Sides {
            lhs: star_phi(spec, wp, &wp.conjugate_centroid(spec)?, false, false)? / s,
            rhs: phi(&conj_jensen_net(spec, wp)?, spec)? / s,
        },
        IdentityId::I3 => {
            let c_hat = wp.conjugate_centroid(spec)?;
            Sides {
                lhs: star_phi(spec, wp, &c, false, false)?,
                rhs: star_phi(spec, wp, &c_hat, false, false)?
                    + phi(&bregman_net(spec, &c, &c_hat, s)?, spec)?,
            }
        }
        IdentityId::I4 => Sides {
            lhs: star_phi(spec, wp, &c, true, true)? / s,
            rhs: split_rhs_graphical(spec, wp)?,
        },
        IdentityId::I5 => Sides {
            lhs: inner_product_phi(spec, wp)? / s,
            rhs: split_rhs_graphical(spec, wp)?,
        },
        IdentityId::I6 => {
            let (a, b) = (wp.weights()[0], wp.weights()[1]);
            let (p, q) = (&wp.points()[0], &wp.points()[1]);
            Sides {
                lhs: phi(&sym_bregman_net(spec, p, q, a * b / s)?, spec)? / s,
                rhs: split_rhs_graphical(spec, wp)?,
            }
        }
        IdentityId::I7 | IdentityId::I8 => unreachable!("dispatched separately"),
    };
    Ok(sides)
}

fn closed_form(id: IdentityId, spec: &ConvexFunctionSpec, wp: &WeightedPoints) -> Result<Sides> {
    let s = wp.sigma();
    let c = wp.centroid();
    let weighted = |f: &dyn Fn(&[f64]) -> Result<f64>| -> Result<f64> {
        let mut acc = 0.0;
        for (p, w) in wp.points().iter().zip(wp.weights()) {
            acc += w * f(p)?;
        }
        Ok(acc)
    };
    let sides = match id {
        IdentityId::I1 => Sides {
            lhs: weighted(&|p| bregman_div(spec, p, &c))? / s,
            rhs: jensen_div(spec, wp)?,
        },
        IdentityId::I2 => {
            let c_hat = wp.conjugate_centroid(spec)?;
            Sides {
                lhs: weighted(&|p| bregman_div(spec, &c_hat, p))? / s,
                rhs: conj_jensen_div(spec, wp)?,
            }
        }
        IdentityId::I3 => {
            let c_hat = wp.conjugate_centroid(spec)?;
            Sides {
                lhs: weighted(&|p| bregman_div(spec, &c, p))?,
                rhs: weighted(&|p| bregman_div(spec, &c_hat, p))?
                    + s * bregman_div(spec, &c, &c_hat)?,
            }
        }
        IdentityId::I4 => Sides {
            lhs: weighted(&|p| sym_bregman_div(spec, p, &c))? / s,
            rhs: split_rhs_closed(spec, wp)?,
        },
        IdentityId::I5 => {
            let c_hat_star = wp.dual_centroid(spec)?;
            Sides {
                lhs: weighted(&|p| Ok(dot(p, &spec.eval_grad(p)?)))? / s - dot(&c, &c_hat_star),
                rhs: split_rhs_closed(spec, wp)?,
            }
        }
        IdentityId::I6 => {
            let (a, b) = (wp.weights()[0], wp.weights()[1]);
            Sides {
                lhs: a * b / (s * s) * sym_bregman_div(spec, &wp.points()[0], &wp.points()[1])?,
                rhs: split_rhs_closed(spec, wp)?,
            }
        }
        IdentityId::I7 | IdentityId::I8 => unreachable!("dispatched separately"),
    };
    Ok(sides)
}

fn f_points(p: &[f64], q: &[f64]) -> Result<WeightedPoints> {
    WeightedPoints::new(
        p.iter().zip(q).map(|(a, b)| vec![a / b]).collect(),
        q.to_vec(),
    )
}

/// (1/Σ)ΣF′(pᵢ/qᵢ)(pᵢ − qᵢ) = D_f + D̂_f + B_F(1, Ĉ).
fn f_identity(spec: &ConvexFunctionSpec, p: &[f64], q: &[f64], mode: Mode) -> Result<Sides> {
    // validates dimension, F(1) = 0, positivity and equal totals
    let net = f_net(spec, p, q)?;
    let wp = f_points(p, q)?;
    let s = wp.sigma();
    let c_hat = wp.conjugate_centroid(spec)?;
    match mode {
        Mode::Graphical => Ok(Sides {
            lhs: inner_product_phi(spec, &wp)? / s,
            rhs: phi(&net, spec)? / s
                + phi(&conj_jensen_net(spec, &wp)?, spec)? / s
                + phi(&bregman_net(spec, &[1.0], &c_hat, 1.0)?, spec)?,
        }),
        Mode::ClosedForm => {
            let mut lhs = 0.0;
            for (a, b) in p.iter().zip(q) {
                lhs += spec.eval_grad(&[a / b])?[0] * (a - b);
            }
            Ok(Sides {
                lhs: lhs / s,
                rhs: f_div(spec, p, q)?
                    + conj_jensen_div(spec, &wp)?
                    + bregman_div(spec, &[1.0], &c_hat)?,
            })
        }
    }
}

/// Fails with `Constraint` unless P + R = Q + S or P* + R* = Q* + S*.
pub fn parallelogram_constraint(
    spec: &ConvexFunctionSpec,
    p: &[f64],
    q: &[f64],
    r: &[f64],
    s: &[f64],
) -> Result<()> {
    let tol = Tolerance::default();
    let sum = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + y).collect() };
    if tol.close_vec(&sum(p, r), &sum(q, s)) {
        return Ok(());
    }
    let (gp, gq, gr, gs) = (
        spec.eval_grad(p)?,
        spec.eval_grad(q)?,
        spec.eval_grad(r)?,
        spec.eval_grad(s)?,
    );
    if tol.close_vec(&sum(&gp, &gr), &sum(&gq, &gs)) {
        return Ok(());
    }
    Err(Error::Constraint(
        "the quadrilateral satisfies neither P + R = Q + S nor P* + R* = Q* + S*".into(),
    ))
}

/// Sides of the parallelogram law without checking its constraint.
pub fn parallelogram_sides(
    spec: &ConvexFunctionSpec,
    p: &[f64],
    q: &[f64],
    r: &[f64],
    s: &[f64],
    mode: Mode,
) -> Result<Sides> {
    let sym = |a: &[f64], b: &[f64]| -> Result<f64> {
        match mode {
            Mode::Graphical => phi(&sym_bregman_net(spec, a, b, 1.0)?, spec),
            Mode::ClosedForm => sym_bregman_div(spec, a, b),
        }
    };
    Ok(Sides {
        lhs: sym(p, q)? + sym(q, r)? + sym(r, s)? + sym(s, p)?,
        rhs: sym(p, r)? + sym(q, s)?,
    })
}

/// Generator used for I7: `spec` itself when it is scalar with F(1) = 0,
/// otherwise the scalar built-in of the same family, with the quadratic
/// shifted to ½x² − ½.
pub fn f_generator(spec: &ConvexFunctionSpec) -> Result<ConvexFunctionSpec> {
    if spec.dim() == 1 && spec.f_at_one_is_zero() {
        return Ok(spec.clone());
    }
    match spec.id() {
        "quadratic" => ConvexFunctionSpec::separable(
            &SeparableSpec {
                id: "quadratic_shifted".into(),
                coordinates: vec![SeparableTerms {
                    x2: 0.5,
                    constant: -0.5,
                    ..SeparableTerms::default()
                }],
            },
            1,
        ),
        "neg_entropy" => Ok(ConvexFunctionSpec::neg_entropy(1)),
        "neg_log" => Ok(ConvexFunctionSpec::neg_log(1)),
        other => Err(Error::GeneratorNotAdmissible {
            generator: other.to_string(),
            reason: "f-divergences need a scalar generator with F(1) = 0".into(),
        }),
    }
}

// ---------------------------------------------------------------------------
// Randomized suites
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub seed: u64,
    pub trial: u64,
    pub inputs: serde_json::Value,
    pub lhs: f64,
    pub rhs: f64,
    pub reason: String,
}

/// Outcome of a randomized check over many trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub name: String,
    pub generator: String,
    pub trials: u64,
    pub tolerance: f64,
    pub max_residual: f64,
    /// Trial index of the largest residual.
    pub argmax: Option<u64>,
    /// Largest relative disagreement between graphical and closed-form
    /// evaluations of either side, when both were run.
    pub max_mode_gap: Option<f64>,
    pub failures: Vec<TrialFailure>,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Tolerance for the graphical/closed-form agreement.
pub const MODE_GAP_TOL: f64 = 1e-9;

struct Accumulator {
    report: IdentityReport,
    seed: u64,
}

impl Accumulator {
    fn new(name: &str, generator: &str, tolerance: f64, seed: u64, dual_mode: bool) -> Self {
        Accumulator {
            report: IdentityReport {
                name: name.to_string(),
                generator: generator.to_string(),
                trials: 0,
                tolerance,
                max_residual: 0.0,
                argmax: None,
                max_mode_gap: dual_mode.then_some(0.0),
                failures: Vec::new(),
            },
            seed,
        }
    }

    fn fail(&mut self, trial: u64, input: serde_json::Value, sides: Option<Sides>, reason: String) {
        let (lhs, rhs) = sides.map_or((f64::NAN, f64::NAN), |s| (s.lhs, s.rhs));
        self.report.failures.push(TrialFailure {
            seed: self.seed,
            trial,
            inputs: input,
            lhs,
            rhs,
            reason,
        });
    }

    fn record(
        &mut self,
        trial: u64,
        input: serde_json::Value,
        main: Result<Sides>,
        other: Option<Result<Sides>>,
    ) {
        self.report.trials += 1;
        let sides = match main {
            Ok(s) => s,
            Err(e) => return self.fail(trial, input, None, e.to_string()),
        };
        let r = sides.residual();
        if !(r <= self.report.max_residual) {
            self.report.max_residual = if r.is_nan() { f64::INFINITY } else { r };
            self.report.argmax = Some(trial);
        }
        if !(r <= self.report.tolerance) {
            self.fail(trial, input.clone(), Some(sides), format!("residual {r:e}"));
        }
        if let Some(other) = other {
            match other {
                Ok(o) => {
                    let gap = relative_residual(sides.lhs, o.lhs)
                        .max(relative_residual(sides.rhs, o.rhs));
                    let worst = self.report.max_mode_gap.get_or_insert(0.0);
                    if !(gap <= *worst) {
                        *worst = if gap.is_nan() { f64::INFINITY } else { gap };
                    }
                    if !(gap <= MODE_GAP_TOL) {
                        self.fail(
                            trial,
                            input,
                            Some(sides),
                            format!("graphical and closed-form differ by {gap:e}"),
                        );
                    }
                }
                Err(e) => self.fail(trial, input, Some(sides), format!("closed form: {e}")),
            }
        }
    }
}

fn sample(spec: &ConvexFunctionSpec, rng: &mut TrialRng) -> Result<Vec<f64>> {
    spec.sample_point(rng).ok_or_else(|| {
        Error::InvalidInput(format!("could not sample the domain of `{}`", spec.id()))
    })
}

fn sample_points(
    spec: &ConvexFunctionSpec,
    rng: &mut TrialRng,
    m: usize,
) -> Result<WeightedPoints> {
    let points = (0..m)
        .map(|_| sample(spec, rng))
        .collect::<Result<Vec<_>>>()?;
    let weights = (0..m).map(|_| uniform(rng, 0.1, 2.0)).collect();
    WeightedPoints::new(points, weights)
}

/// Positive masses with equal totals.
pub fn sample_masses(rng: &mut TrialRng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut p: Vec<f64> = (0..n).map(|_| log_uniform(rng, 1e-1, 1e1)).collect();
    let q: Vec<f64> = (0..n).map(|_| log_uniform(rng, 1e-1, 1e1)).collect();
    let scale = q.iter().sum::<f64>() / p.iter().sum::<f64>();
    p.iter_mut().for_each(|x| *x *= scale);
    (p, q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// P + R = Q + S.
    Primal,
    /// P* + R* = Q* + S*.
    Dual,
}

/// Random quadrilateral satisfying `constraint`: Q and S are drawn from the
/// domain and P, R split Q + S (or Q* + S*) by a random per-coordinate ratio.
pub fn sample_parallelogram(
    spec: &ConvexFunctionSpec,
    rng: &mut TrialRng,
    constraint: Constraint,
) -> Result<[Vec<f64>; 4]> {
    let (q, s) = (sample(spec, rng)?, sample(spec, rng)?);
    let u: Vec<f64> = (0..spec.dim()).map(|_| uniform(rng, 0.05, 0.95)).collect();
    let (p, r) = match constraint {
        Constraint::Primal => {
            let sum: Vec<f64> = q.iter().zip(&s).map(|(a, b)| a + b).collect();
            let p: Vec<f64> = sum.iter().zip(&u).map(|(t, k)| k * t).collect();
            let r: Vec<f64> = sum.iter().zip(&p).map(|(t, a)| t - a).collect();
            (p, r)
        }
        Constraint::Dual => {
            let sum: Vec<f64> = spec
                .eval_grad(&q)?
                .iter()
                .zip(spec.eval_grad(&s)?)
                .map(|(a, b)| a + b)
                .collect();
            let ps: Vec<f64> = sum.iter().zip(&u).map(|(t, k)| k * t).collect();
            let rs: Vec<f64> = sum.iter().zip(&ps).map(|(t, a)| t - a).collect();
            (
                spec.eval_grad_conjugate(&ps)?,
                spec.eval_grad_conjugate(&rs)?,
            )
        }
    };
    spec.check_primal(&p)?;
    spec.check_primal(&r)?;
    Ok([p, q, r, s])
}

fn sample_input(
    id: IdentityId,
    spec: &ConvexFunctionSpec,
    rng: &mut TrialRng,
) -> Result<IdentityInput> {
    Ok(match id {
        IdentityId::I6 => IdentityInput::Points(sample_points(spec, rng, 2)?),
        IdentityId::I7 => {
            let n = rng.random_range(2..=5);
            let (p, q) = sample_masses(rng, n);
            IdentityInput::Masses { p, q }
        }
        IdentityId::I8 => {
            let [p, q, r, s] = sample_parallelogram(spec, rng, Constraint::Primal)?;
            IdentityInput::Quadrilateral { p, q, r, s }
        }
        _ => {
            let m = rng.random_range(2..=5);
            IdentityInput::Points(sample_points(spec, rng, m)?)
        }
    })
}

/// Default acceptance tolerance for an identity.
pub fn identity_tolerance(id: IdentityId, spec: &ConvexFunctionSpec) -> f64 {
    match id {
        IdentityId::I8 => 1e-10,
        _ if spec.has_closed_form_conjugate() => 1e-8,
        _ => 1e-6,
    }
}

/// Runs `trials` random instances of `id` in graphical mode, cross-checked
/// against the closed form. I7 runs on [`f_generator`] of `spec`.
pub fn run_identity(
    id: IdentityId,
    spec: &ConvexFunctionSpec,
    trials: u64,
    seed: u64,
) -> IdentityReport {
    let f_spec;
    let spec = if id == IdentityId::I7 {
        match f_generator(spec) {
            Ok(s) => {
                f_spec = s;
                &f_spec
            }
            Err(e) => {
                let mut acc = Accumulator::new(
                    id.name(),
                    spec.id(),
                    identity_tolerance(id, spec),
                    seed,
                    false,
                );
                acc.fail(0, serde_json::Value::Null, None, e.to_string());
                return acc.report;
            }
        }
    } else {
        spec
    };
    let mut acc = Accumulator::new(
        id.name(),
        spec.id(),
        identity_tolerance(id, spec),
        seed,
        true,
    );
    for trial in 0..trials {
        let mut rng = trial_rng(seed, (id.index() << 32) | trial);
        let input = match sample_input(id, spec, &mut rng) {
            Ok(i) => i,
            Err(e) => {
                acc.report.trials += 1;
                acc.fail(
                    trial,
                    serde_json::Value::Null,
                    None,
                    format!("sampling: {e}"),
                );
                continue;
            }
        };
        let main = identity_sides(id, spec, &input, Mode::Graphical);
        let other = identity_sides(id, spec, &input, Mode::ClosedForm);
        acc.record(trial, input.to_json(), main, Some(other));
    }
    acc.report
}

/// Every identity on `spec`.
pub fn identity_suite(spec: &ConvexFunctionSpec, trials: u64, seed: u64) -> Vec<IdentityReport> {
    IdentityId::ALL
        .iter()
        .map(|id| run_identity(*id, spec, trials, seed))
        .collect()
}

/// Relative residuals of the parallelogram law on unconstrained random
/// quadrilaterals; these should be far from zero.
pub fn unconstrained_parallelogram_residuals(
    spec: &ConvexFunctionSpec,
    trials: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..trials)
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let pts = (0..4)
                .map(|_| sample(spec, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            parallelogram_sides(spec, &pts[0], &pts[1], &pts[2], &pts[3], Mode::ClosedForm)
                .map(|s| s.residual())
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Named special cases
// ---------------------------------------------------------------------------

/// Names of the special-case checks, in suite order.
pub const SPECIAL_CASES: [&str; 8] = [
    "kl",
    "jeffreys",
    "scaled_skew_js",
    "itakura_saito",
    "reverse_kl",
    "neyman_chi_square",
    "kl_f_divergence",
    "half_pearson_chi_square",
];

/// Tolerance for the special-case mappings.
pub const SPECIAL_CASE_TOL: f64 = 1e-10;

fn simplex(rng: &mut TrialRng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| log_uniform(rng, 1e-2, 1e0)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

fn positive(rng: &mut TrialRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| log_uniform(rng, 1e-2, 1e2)).collect()
}

/// One special case: the engine's value and an independent direct formula.
pub fn special_case_sides(name: &str, rng: &mut TrialRng) -> Result<(Sides, serde_json::Value)> {
    let ent = ConvexFunctionSpec::neg_entropy(3);
    let log = ConvexFunctionSpec::neg_log(3);
    let sum = |f: &dyn Fn(f64, f64) -> f64, p: &[f64], q: &[f64]| -> f64 {
        p.iter().zip(q).map(|(a, b)| f(*a, *b)).sum()
    };
    let out = match name {
        "kl" => {
            let (p, q) = (simplex(rng, 3), simplex(rng, 3));
            let engine = phi(&bregman_net(&ent, &p, &q, 1.0)?, &ent)?;
            (
                engine,
                sum(&|a, b| a * (a / b).ln(), &p, &q),
                json!({"p": p, "q": q}),
            )
        }
        "jeffreys" => {
            let (p, q) = (simplex(rng, 3), simplex(rng, 3));
            let engine = phi(&sym_bregman_net(&ent, &p, &q, 1.0)?, &ent)?;
            (
                engine,
                sum(&|a, b| (a - b) * (a / b).ln(), &p, &q),
                json!({"p": p, "q": q}),
            )
        }
        "scaled_skew_js" => {
            let (p, q) = (simplex(rng, 3), simplex(rng, 3));
            let a = uniform(rng, 0.05, 0.95);
            let b = 1.0 - a;
            let wp = WeightedPoints::new(vec![p.clone(), q.clone()], vec![a, b])?;
            let engine = phi(&jensen_net(&ent, &wp)?, &ent)? / wp.sigma() / (a * b);
            let m: Vec<f64> = p.iter().zip(&q).map(|(x, y)| a * x + b * y).collect();
            let direct = (a * sum(&|x, y| x * (x / y).ln(), &p, &m)
                + b * sum(&|x, y| x * (x / y).ln(), &q, &m))
                / (a * b);
            (engine, direct, json!({"p": p, "q": q, "alpha": a}))
        }
        "itakura_saito" => {
            let (p, q) = (positive(rng, 3), positive(rng, 3));
            let engine = phi(&bregman_net(&log, &p, &q, 1.0)?, &log)?;
            (
                engine,
                sum(&|a, b| a / b - (a / b).ln() - 1.0, &p, &q),
                json!({"p": p, "q": q}),
            )
        }
        "reverse_kl" | "neyman_chi_square" | "kl_f_divergence" | "half_pearson_chi_square" => {
            let n = rng.random_range(2..=5);
            let (p, q) = (simplex(rng, n), simplex(rng, n));
            let spec = match name {
                "kl_f_divergence" => ConvexFunctionSpec::neg_entropy(1),
                "half_pearson_chi_square" => f_generator(&ConvexFunctionSpec::quadratic(1))?,
                _ => ConvexFunctionSpec::neg_log(1),
            };
            let (engine, direct) = match name {
                "reverse_kl" => (
                    phi(&f_net(&spec, &p, &q)?, &spec)?,
                    sum(&|a, b| b * (b / a).ln(), &p, &q),
                ),
                "kl_f_divergence" => (
                    phi(&f_net(&spec, &p, &q)?, &spec)?,
                    sum(&|a, b| a * (a / b).ln(), &p, &q),
                ),
                "half_pearson_chi_square" => (
                    phi(&f_net(&spec, &p, &q)?, &spec)?,
                    0.5 * sum(&|a, b| (a - b) * (a - b) / b, &p, &q),
                ),
                _ => {
                    let s = identity_sides(
                        IdentityId::I7,
                        &spec,
                        &IdentityInput::Masses {
                            p: p.clone(),
                            q: q.clone(),
                        },
                        Mode::Graphical,
                    )?;
                    (s.lhs, sum(&|a, b| (b - a) * (b - a) / a, &p, &q))
                }
            };
            (engine, direct, json!({"p": p, "q": q}))
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown special case `{other}` (known: {})",
                SPECIAL_CASES.join(", ")
            )));
        }
    };
    Ok((
        Sides {
            lhs: out.0,
            rhs: out.1,
        },
        out.2,
    ))
}

/// Every named special case over `trials` random inputs.
pub fn special_case_suite(seed: u64, trials: u64) -> Vec<IdentityReport> {
    SPECIAL_CASES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let generator = match *name {
                "kl" | "jeffreys" | "scaled_skew_js" | "kl_f_divergence" => "neg_entropy",
                "half_pearson_chi_square" => "quadratic_shifted",
                _ => "neg_log",
            };
            let mut acc = Accumulator::new(name, generator, SPECIAL_CASE_TOL, seed, false);
            for trial in 0..trials {
                let mut rng = trial_rng(seed, ((k as u64 + 100) << 32) | trial);
                match special_case_sides(name, &mut rng) {
                    Ok((sides, input)) => acc.record(trial, input, Ok(sides), None),
                    Err(e) => acc.record(trial, serde_json::Value::Null, Err(e), None),
                }
            }
            acc.report
        })
        .collect()
}
