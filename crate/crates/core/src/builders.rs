//! Constructors for the named networks and their closed-form reference
//! divergences. The reference formulas never touch the graph machinery, so
//! they serve as independent oracles for Φ.

use crate::convex::{dot, ConvexFunctionSpec};
use crate::error::{Error, Result};
use crate::netmodel::{Edge, Network, Node, State};

/// Points `P₁..P_M` with weights `α₁..α_M`, `Σαᵢ ≠ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPoints {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl WeightedPoints {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::InvalidInput("at least one point is required".into()));
        }
        let d = points[0].len();
        if let Some(p) = points.iter().find(|p| p.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                got: p.len(),
            });
        }
        let wp = WeightedPoints { points, weights };
        if wp.sigma() == 0.0 {
            return Err(Error::ZeroCentroidWeight("weighted points".into()));
        }
        Ok(wp)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn sigma(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `C = (1/Σ) Σ αᵢ Pᵢ`.
    pub fn centroid(&self) -> Vec<f64> {
        let s = self.sigma();
        let mut c = vec![0.0; self.points[0].len()];
        for (p, w) in self.points.iter().zip(&self.weights) {
            for (ci, pi) in c.iter_mut().zip(p) {
                *ci += w * pi;
            }
        }
        c.iter_mut().for_each(|ci| *ci /= s);
        c
    }

    /// `Ĉ* = (1/Σ) Σ αᵢ ∇F(Pᵢ)`.
    pub fn dual_centroid(&self, spec: &ConvexFunctionSpec) -> Result<Vec<f64>> {
        let s = self.sigma();
        let mut c = vec![0.0; self.points[0].len()];
        for (p, w) in self.points.iter().zip(&self.weights) {
            for (ci, gi) in c.iter_mut().zip(spec.eval_grad(p)?) {
                *ci += w * gi;
            }
        }
        c.iter_mut().for_each(|ci| *ci /= s);
        Ok(c)
    }

    /// `Ĉ = ∇F*(Ĉ*)`.
    pub fn conjugate_centroid(&self, spec: &ConvexFunctionSpec) -> Result<Vec<f64>> {
        spec.eval_grad_conjugate(&self.dual_centroid(spec)?)
    }
}

fn check_points(spec: &ConvexFunctionSpec, points: &[&[f64]]) -> Result<()> {
    points.iter().try_for_each(|p| spec.check_primal(p))
}

/// ON nodes `p`, `q` and an ON arrow `e: p → q` of weight α.
pub fn bregman_net(spec: &ConvexFunctionSpec, p: &[f64], q: &[f64], alpha: f64) -> Result<Network> {
    check_points(spec, &[p, q])?;
    Network::build(
        [
            Node::explicit("p", p.to_vec(), State::On),
            Node::explicit("q", q.to_vec(), State::On),
        ],
        [Edge::arrow("e", "p", "q", alpha, State::On)],
        spec.id(),
    )
}

/// ON nodes `p`, `q` and an ON line `l: p -- q` of weight α.
pub fn sym_bregman_net(
    spec: &ConvexFunctionSpec,
    p: &[f64],
    q: &[f64],
    alpha: f64,
) -> Result<Network> {
    check_points(spec, &[p, q])?;
    Network::build(
        [
            Node::explicit("p", p.to_vec(), State::On),
            Node::explicit("q", q.to_vec(), State::On),
        ],
        [Edge::line("l", "p", "q", alpha, State::On)],
        spec.id(),
    )
}

/// ON nodes `p1..pM`, ON arrows `ai: pi → c` into an ON centroid `c`.
pub fn jensen_net(spec: &ConvexFunctionSpec, wp: &WeightedPoints) -> Result<Network> {
    check_points(
        spec,
        &wp.points.iter().map(Vec::as_slice).collect::<Vec<_>>(),
    )?;
    let mut nodes: Vec<Node> = point_nodes(wp);
    nodes.push(Node::centroid("c", State::On));
    let edges = (1..=wp.len()).map(|i| {
        Edge::arrow(
            format!("a{i}"),
            format!("p{i}"),
            "c",
            wp.weights[i - 1],
            State::On,
        )
    });
    let net = Network::build(nodes, edges, spec.id())?;
    net.resolve_coordinates(spec)?;
    Ok(net)
}

/// ON nodes `p1..pM`, ON arrows `ai: c_hat → pi` from an ON conjugate centroid.
pub fn conj_jensen_net(spec: &ConvexFunctionSpec, wp: &WeightedPoints) -> Result<Network> {
    check_points(
        spec,
        &wp.points.iter().map(Vec::as_slice).collect::<Vec<_>>(),
    )?;
    let mut nodes: Vec<Node> = point_nodes(wp);
    nodes.push(Node::conjugate_centroid("c_hat", State::On));
    let edges = (1..=wp.len()).map(|i| {
        Edge::arrow(
            format!("a{i}"),
            "c_hat",
            format!("p{i}"),
            wp.weights[i - 1],
            State::On,
        )
    });
    let net = Network::build(nodes, edges, spec.id())?;
    net.resolve_coordinates(spec)?;
    Ok(net)
}

fn point_nodes(wp: &WeightedPoints) -> Vec<Node> {
    wp.points
        .iter()
        .enumerate()
        .map(|(i, p)| Node::explicit(format!("p{}", i + 1), p.clone(), State::On))
        .collect()
}

/// Jensen topology over scalar points `pᵢ/qᵢ` with weights `qᵢ`; the centroid
/// resolves to 1.
pub fn f_net(spec: &ConvexFunctionSpec, p: &[f64], q: &[f64]) -> Result<Network> {
    let wp = f_points(spec, p, q)?;
    jensen_net(spec, &wp)
}

fn f_points(spec: &ConvexFunctionSpec, p: &[f64], q: &[f64]) -> Result<WeightedPoints> {
    if spec.dim() != 1 {
        return Err(Error::GeneratorNotAdmissible {
            generator: spec.id().to_string(),
            reason: "f-networks need a one-dimensional generator".into(),
        });
    }
    if !spec.f_at_one_is_zero() {
        return Err(Error::GeneratorNotAdmissible {
            generator: spec.id().to_string(),
            reason: "F(1) must be 0".into(),
        });
    }
    if p.len() != q.len() {
        return Err(Error::Dimension {
            expected: p.len(),
            got: q.len(),
        });
    }
    if p.is_empty() || p.iter().chain(q).any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::NonPositive);
    }
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    if (sp - sq).abs() > 1e-9 * (1.0 + sp.abs().max(sq.abs())) {
        return Err(Error::MassMismatch { p: sp, q: sq });
    }
    WeightedPoints::new(
        p.iter().zip(q).map(|(a, b)| vec![a / b]).collect(),
        q.to_vec(),
    )
}

/// `B_F(P,Q) = F(P) − F(Q) − ⟨∇F(Q), P − Q⟩`.
pub fn bregman_div(spec: &ConvexFunctionSpec, p: &[f64], q: &[f64]) -> Result<f64> {
    let gq = spec.eval_grad(q)?;
    let diff: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
    Ok(spec.eval_f(p)? - spec.eval_f(q)? - dot(&gq, &diff))
}

/// `B_F(P,Q) + B_F(Q,P) = ⟨P − Q, ∇F(P) − ∇F(Q)⟩`.
pub fn sym_bregman_div(spec: &ConvexFunctionSpec, p: &[f64], q: &[f64]) -> Result<f64> {
    let (gp, gq) = (spec.eval_grad(p)?, spec.eval_grad(q)?);
    Ok(p.iter()
        .zip(q)
        .zip(gp.iter().zip(&gq))
        .map(|((a, b), (ga, gb))| (a - b) * (ga - gb))
        .sum())
}

/// `J_{F,α}(P) = (1/Σ) Σ αᵢ F(Pᵢ) − F(C)`.
pub fn jensen_div(spec: &ConvexFunctionSpec, wp: &WeightedPoints) -> Result<f64> {
    let mut avg = 0.0;
    for (p, w) in wp.points.iter().zip(&wp.weights) {
        avg += w * spec.eval_f(p)?;
    }
    let c = wp.centroid();
    Ok(avg / wp.sigma() - spec.eval_f(&c)?)
}

/// `J_{F*,α}(P*) = (1/Σ) Σ αᵢ F*(Pᵢ*) − F*(Ĉ*)`.
pub fn conj_jensen_div(spec: &ConvexFunctionSpec, wp: &WeightedPoints) -> Result<f64> {
    let mut avg = 0.0;
    for (p, w) in wp.points.iter().zip(&wp.weights) {
        avg += w * spec.eval_conjugate(&spec.eval_grad(p)?)?;
    }
    let c_star = wp.dual_centroid(spec)?;
    Ok(avg / wp.sigma() - spec.eval_conjugate(&c_star)?)
}

/// `D_f(P,Q) = (1/Σ) Σ qᵢ F(pᵢ/qᵢ)`.
pub fn f_div(spec: &ConvexFunctionSpec, p: &[f64], q: &[f64]) -> Result<f64> {
    let wp = f_points(spec, p, q)?;
    let mut acc = 0.0;
    for (x, w) in wp.points.iter().zip(&wp.weights) {
        acc += w * spec.eval_f(x)?;
    }
    Ok(acc / wp.sigma())
}
