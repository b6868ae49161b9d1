//! Strictly convex generators `F`, their gradients, convex conjugates `F*`,
//! and inverse gradients `∇F* = (∇F)⁻¹`.
//!
//! Three closed-form generators ship built in:
//!
//! | id            | `F(x)`       | `∇F(x)`    | `F*(y)`            | `∇F*(y)`   |
//! |---------------|--------------|------------|--------------------|------------|
//! | `quadratic`   | `½ Σ x²`     | `x`        | `½ Σ y²`           | `y`        |
//! | `neg_entropy` | `Σ x ln x`   | `1 + ln x` | `Σ e^(y-1)`        | `e^(y-1)`  |
//! | `neg_log`     | `-Σ ln x`    | `-1/x`     | `Σ (-1 - ln(-y))`  | `-1/y`     |
//!
//! User-defined separable generators combine the basis `x²`, `x ln x`,
//! `-ln x`, `x`, and a constant per coordinate. They have no closed-form
//! conjugate; `∇F*` is found by a bracketed Newton iteration per coordinate
//! and `F*` then follows from the Fenchel identity
//! `F*(y) = ⟨∇F*(y), y⟩ - F(∇F*(y))`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{log_uniform, uniform};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Open interval `(lo, hi)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };
    pub const POSITIVE: Interval = Interval {
        lo: 0.0,
        hi: f64::INFINITY,
    };
    pub const NEGATIVE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: 0.0,
    };

    pub fn contains(&self, t: f64) -> bool {
        t.is_finite() && t > self.lo && t < self.hi
    }

    fn interior_point(&self) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (false, false) => 0.0,
            (true, false) => self.lo + 1.0,
            (false, true) => self.hi - 1.0,
            (true, true) => 0.5 * (self.lo + self.hi),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (false, false) => uniform(rng, -5.0, 5.0),
            (true, false) => self.lo + log_uniform(rng, 1e-2, 1e2),
            (false, true) => self.hi - log_uniform(rng, 1e-2, 1e2),
            (true, true) => {
                let w = self.hi - self.lo;
                uniform(rng, self.lo + 1e-3 * w, self.hi - 1e-3 * w)
            }
        }
    }
}

type Predicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// Where a generator (or its gradient range) lives.
#[derive(Clone)]
pub enum Domain {
    /// All of d-space.
    Full,
    /// The strictly positive orthant.
    Positive,
    /// The strictly negative orthant (gradient range of `neg_log`).
    Negative,
    /// A product of open intervals; a single interval applies to every coordinate.
    Product(Vec<Interval>),
    /// User-supplied membership predicate.
    Custom(Predicate),
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Full => f.write_str("Full"),
            Domain::Positive => f.write_str("Positive"),
            Domain::Negative => f.write_str("Negative"),
            Domain::Product(iv) => f.debug_tuple("Product").field(iv).finish(),
            Domain::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Domain {
    pub fn custom(pred: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        Domain::Custom(Arc::new(pred))
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.iter().any(|t| !t.is_finite()) {
            return false;
        }
        match self {
            Domain::Custom(pred) => pred(x),
            _ => x
                .iter()
                .enumerate()
                .all(|(k, &t)| self.interval(k).is_some_and(|iv| iv.contains(t))),
        }
    }

    /// Coordinate interval `k`, when the domain is a product of intervals.
    pub fn interval(&self, k: usize) -> Option<Interval> {
        match self {
            Domain::Full => Some(Interval::REAL),
            Domain::Positive => Some(Interval::POSITIVE),
            Domain::Negative => Some(Interval::NEGATIVE),
            Domain::Product(iv) if iv.len() == 1 => Some(iv[0]),
            Domain::Product(iv) => iv.get(k).copied(),
            Domain::Custom(_) => None,
        }
    }

    fn is_product(&self) -> bool {
        !matches!(self, Domain::Custom(_))
    }

    /// Random point: uniform on `[-5, 5]` along unbounded coordinates,
    /// log-uniform on `[1e-2, 1e2]` away from a finite endpoint. Custom
    /// domains are rejection-sampled and may yield `None`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, dim: usize) -> Option<Vec<f64>> {
        match self {
            Domain::Custom(pred) => (0..10_000).find_map(|i| {
                let x: Vec<f64> = if i % 2 == 0 {
                    (0..dim).map(|_| uniform(rng, -5.0, 5.0)).collect()
                } else {
                    (0..dim).map(|_| log_uniform(rng, 1e-2, 1e2)).collect()
                };
                pred(&x).then_some(x)
            }),
            _ => (0..dim)
                .map(|k| self.interval(k).map(|iv| iv.sample(rng)))
                .collect(),
        }
    }

    fn interior_point(&self, dim: usize) -> Option<Vec<f64>> {
        match self {
            Domain::Custom(pred) => [0.0, 1.0, -1.0, 0.5]
                .into_iter()
                .map(|t| vec![t; dim])
                .find(|x| pred(x)),
            _ => (0..dim)
                .map(|k| self.interval(k).map(|iv| iv.interior_point()))
                .collect(),
        }
    }
}

/// Evaluators behind a [`ConvexFunctionSpec`]. Callers guarantee that
/// arguments lie in the relevant (primal or dual) domain.
pub trait Generator: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;
    fn conjugate(&self, _y: &[f64]) -> Option<f64> {
        None
    }
    fn grad_conjugate(&self, _y: &[f64]) -> Option<Vec<f64>> {
        None
    }
    /// Diagonal of the Hessian for separable generators.
    fn hessian_diag(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

struct Quadratic;

impl Generator for Quadratic {
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, x)
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
    fn conjugate(&self, y: &[f64]) -> Option<f64> {
        Some(0.5 * dot(y, y))
    }
    fn grad_conjugate(&self, y: &[f64]) -> Option<Vec<f64>> {
        Some(y.to_vec())
    }
    fn hessian_diag(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![1.0; x.len()])
    }
}

struct NegEntropy;

impl Generator for NegEntropy {
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|&t| t * t.ln()).sum()
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&t| 1.0 + t.ln()).collect()
    }
    fn conjugate(&self, y: &[f64]) -> Option<f64> {
        Some(y.iter().map(|&t| (t - 1.0).exp()).sum())
    }
    fn grad_conjugate(&self, y: &[f64]) -> Option<Vec<f64>> {
        Some(y.iter().map(|&t| (t - 1.0).exp()).collect())
    }
    fn hessian_diag(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(x.iter().map(|&t| 1.0 / t).collect())
    }
}

struct NegLog;

impl Generator for NegLog {
    fn value(&self, x: &[f64]) -> f64 {
        -x.iter().map(|t| t.ln()).sum::<f64>()
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&t| -1.0 / t).collect()
    }
    fn conjugate(&self, y: &[f64]) -> Option<f64> {
        Some(y.iter().map(|&t| -1.0 - (-t).ln()).sum())
    }
    fn grad_conjugate(&self, y: &[f64]) -> Option<Vec<f64>> {
        Some(y.iter().map(|&t| -1.0 / t).collect())
    }
    fn hessian_diag(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(x.iter().map(|&t| 1.0 / (t * t)).collect())
    }
}

/// Coefficients of one coordinate of a separable generator:
/// `x2·x² + xlnx·x ln x + neglnx·(-ln x) + x·x + const`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparableTerms {
    #[serde(default)]
    pub x2: f64,
    #[serde(default)]
    pub xlnx: f64,
    #[serde(default)]
    pub neglnx: f64,
    #[serde(default)]
    pub x: f64,
    #[serde(default, rename = "const")]
    pub constant: f64,
}

impl SeparableTerms {
    fn needs_positive(&self) -> bool {
        self.xlnx != 0.0 || self.neglnx != 0.0
    }

    fn value(&self, t: f64) -> f64 {
        let mut v = self.x2 * t * t + self.x * t + self.constant;
        if self.xlnx != 0.0 {
            v += self.xlnx * t * t.ln();
        }
        if self.neglnx != 0.0 {
            v -= self.neglnx * t.ln();
        }
        v
    }

    fn deriv(&self, t: f64) -> f64 {
        let mut v = 2.0 * self.x2 * t + self.x;
        if self.xlnx != 0.0 {
            v += self.xlnx * (1.0 + t.ln());
        }
        if self.neglnx != 0.0 {
            v -= self.neglnx / t;
        }
        v
    }

    fn second_deriv(&self, t: f64) -> f64 {
        let mut v = 2.0 * self.x2;
        if self.xlnx != 0.0 {
            v += self.xlnx / t;
        }
        if self.neglnx != 0.0 {
            v += self.neglnx / (t * t);
        }
        v
    }

    fn domain(&self) -> Interval {
        if self.needs_positive() {
            Interval::POSITIVE
        } else {
            Interval::REAL
        }
    }

    /// Range of the derivative over the domain.
    fn dual_interval(&self) -> Interval {
        if !self.needs_positive() {
            return Interval::REAL;
        }
        let hi = if self.x2 > 0.0 || self.xlnx > 0.0 {
            f64::INFINITY
        } else {
            self.x
        };
        Interval {
            lo: f64::NEG_INFINITY,
            hi,
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.x2, self.xlnx, self.neglnx, self.x, self.constant];
        if all.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGenerator("non-finite coefficient".into()));
        }
        if self.x2 < 0.0 || self.xlnx < 0.0 || self.neglnx < 0.0 {
            return Err(Error::InvalidGenerator(
                "x2, xlnx, and neglnx coefficients must be nonnegative".into(),
            ));
        }
        if self.x2 == 0.0 && self.xlnx == 0.0 && self.neglnx == 0.0 {
            return Err(Error::InvalidGenerator(
                "a coordinate has no strictly convex term".into(),
            ));
        }
        Ok(())
    }
}

/// Declarative definition of a user-defined separable generator. A single
/// coordinate entry is broadcast to every dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparableSpec {
    pub id: String,
    pub coordinates: Vec<SeparableTerms>,
}

impl SeparableSpec {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidGenerator("empty id".into()));
        }
        if BUILTIN_IDS.contains(&self.id.as_str()) {
            return Err(Error::InvalidGenerator(format!(
                "`{}` is a built-in id",
                self.id
            )));
        }
        if self.coordinates.is_empty() {
            return Err(Error::InvalidGenerator("no coordinates".into()));
        }
        self.coordinates
            .iter()
            .try_for_each(SeparableTerms::validate)
    }

    fn terms_for(&self, dim: usize) -> Result<Vec<SeparableTerms>> {
        match self.coordinates.len() {
            1 => Ok(vec![self.coordinates[0]; dim]),
            n if n == dim => Ok(self.coordinates.clone()),
            n => Err(Error::Dimension {
                expected: n,
                got: dim,
            }),
        }
    }
}

struct Separable {
    terms: Vec<SeparableTerms>,
}

impl Generator for Separable {
    fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().zip(x).map(|(c, &t)| c.value(t)).sum()
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.terms.iter().zip(x).map(|(c, &t)| c.deriv(t)).collect()
    }
    fn hessian_diag(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(
            self.terms
                .iter()
                .zip(x)
                .map(|(c, &t)| c.second_deriv(t))
                .collect(),
        )
    }
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

struct FnGenerator {
    f: ScalarFn,
    grad: VectorFn,
    conjugate: Option<ScalarFn>,
    grad_conjugate: Option<VectorFn>,
}

impl Generator for FnGenerator {
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        (self.grad)(x)
    }
    fn conjugate(&self, y: &[f64]) -> Option<f64> {
        self.conjugate.as_ref().map(|c| c(y))
    }
    fn grad_conjugate(&self, y: &[f64]) -> Option<Vec<f64>> {
        self.grad_conjugate.as_ref().map(|g| g(y))
    }
}

pub const BUILTIN_IDS: [&str; 3] = ["quadratic", "neg_entropy", "neg_log"];

/// A differentiable, strictly convex generator together with its domain,
/// gradient range, and conjugate machinery. Immutable and cheap to clone.
#[derive(Clone)]
pub struct ConvexFunctionSpec {
    id: String,
    dim: usize,
    domain: Domain,
    dual_domain: Domain,
    f_at_one_is_zero: bool,
    generator: Arc<dyn Generator>,
}

impl fmt::Debug for ConvexFunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvexFunctionSpec")
            .field("id", &self.id)
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .field("dual_domain", &self.dual_domain)
            .field("f_at_one_is_zero", &self.f_at_one_is_zero)
            .finish_non_exhaustive()
    }
}

impl ConvexFunctionSpec {
    fn from_parts(
        id: impl Into<String>,
        dim: usize,
        domain: Domain,
        dual_domain: Domain,
        generator: Arc<dyn Generator>,
    ) -> Self {
        let ones = vec![1.0; dim];
        let f_at_one_is_zero =
            dim > 0 && domain.contains(&ones) && generator.value(&ones).abs() <= 1e-12;
        ConvexFunctionSpec {
            id: id.into(),
            dim,
            domain,
            dual_domain,
            f_at_one_is_zero,
            generator,
        }
    }

    /// `F(x) = ½ Σ x²`, self-conjugate.
    pub fn quadratic(dim: usize) -> Self {
        Self::from_parts(
            "quadratic",
            dim,
            Domain::Full,
            Domain::Full,
            Arc::new(Quadratic),
        )
    }

    /// `F(x) = Σ x ln x` on the positive orthant.
    pub fn neg_entropy(dim: usize) -> Self {
        Self::from_parts(
            "neg_entropy",
            dim,
            Domain::Positive,
            Domain::Full,
            Arc::new(NegEntropy),
        )
    }

    /// `F(x) = -Σ ln x` on the positive orthant.
    pub fn neg_log(dim: usize) -> Self {
        Self::from_parts(
            "neg_log",
            dim,
            Domain::Positive,
            Domain::Negative,
            Arc::new(NegLog),
        )
    }

    pub fn separable(spec: &SeparableSpec, dim: usize) -> Result<Self> {
        spec.validate()?;
        let terms = spec.terms_for(dim)?;
        let domain = Domain::Product(terms.iter().map(SeparableTerms::domain).collect());
        let dual = Domain::Product(terms.iter().map(SeparableTerms::dual_interval).collect());
        Ok(Self::from_parts(
            spec.id.clone(),
            dim,
            domain,
            dual,
            Arc::new(Separable { terms }),
        ))
    }

    /// Generator from arbitrary closures. Conjugate evaluators are optional;
    /// without them `∇F*` is found numerically.
    #[allow(clippy::too_many_arguments)]
    pub fn custom(
        id: impl Into<String>,
        dim: usize,
        domain: Domain,
        dual_domain: Domain,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        conjugate: Option<ScalarFn>,
        grad_conjugate: Option<VectorFn>,
    ) -> Self {
        Self::from_parts(
            id,
            dim,
            domain,
            dual_domain,
            Arc::new(FnGenerator {
                f: Arc::new(f),
                grad: Arc::new(grad),
                conjugate,
                grad_conjugate,
            }),
        )
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dual_domain(&self) -> &Domain {
        &self.dual_domain
    }

    pub fn f_at_one_is_zero(&self) -> bool {
        self.f_at_one_is_zero
    }

    /// True when both `F*` and `∇F*` have closed forms.
    pub fn has_closed_form_conjugate(&self) -> bool {
        let probe = match self.dual_domain.interior_point(self.dim) {
            Some(p) => p,
            None => return false,
        };
        self.generator.conjugate(&probe).is_some()
            && self.generator.grad_conjugate(&probe).is_some()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn check_primal(&self, x: &[f64]) -> Result<()> {
        self.check_dim(x)?;
        if !self.domain.contains(x) {
            return Err(Error::Domain {
                generator: self.id.clone(),
                point: x.to_vec(),
            });
        }
        Ok(())
    }

    pub fn check_dual(&self, y: &[f64]) -> Result<()> {
        self.check_dim(y)?;
        if !self.dual_domain.contains(y) {
            return Err(Error::DualDomain {
                generator: self.id.clone(),
                point: y.to_vec(),
            });
        }
        Ok(())
    }

    pub fn eval_f(&self, x: &[f64]) -> Result<f64> {
        self.check_primal(x)?;
        Ok(self.generator.value(x))
    }

    /// `x* = ∇F(x)`.
    pub fn eval_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_primal(x)?;
        Ok(self.generator.grad(x))
    }

    /// `F*(y)`: closed form if available, otherwise the Fenchel identity at
    /// `x = ∇F*(y)` (numeric when `∇F*` has no closed form).
    pub fn eval_conjugate(&self, y: &[f64]) -> Result<f64> {
        self.check_dual(y)?;
        if let Some(v) = self.generator.conjugate(y) {
            return Ok(v);
        }
        let x = self.grad_conjugate_unchecked(y)?;
        Ok(dot(&x, y) - self.generator.value(&x))
    }

    /// The `x` with `∇F(x) = y`.
    pub fn eval_grad_conjugate(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_dual(y)?;
        self.grad_conjugate_unchecked(y)
    }

    /// `F*(∇F(x))` via `⟨x, ∇F(x)⟩ - F(x)`; needs no dual-side evaluation.
    pub fn conjugate_at_primal(&self, x: &[f64]) -> Result<f64> {
        self.check_primal(x)?;
        let g = self.generator.grad(x);
        Ok(dot(x, &g) - self.generator.value(x))
    }

    fn grad_conjugate_unchecked(&self, y: &[f64]) -> Result<Vec<f64>> {
        let x = match self.generator.grad_conjugate(y) {
            Some(x) => x,
            None if self.domain.is_product() && self.generator.hessian_diag(y).is_some() => {
                self.solve_separable(y)?
            }
            None => self.solve_newton(y)?,
        };
        if !self.domain.contains(&x) {
            return Err(Error::DualDomain {
                generator: self.id.clone(),
                point: y.to_vec(),
            });
        }
        Ok(x)
    }

    /// Bracketed Newton per coordinate, falling back to bisection whenever
    /// the Newton step leaves the bracket.
    fn solve_separable(&self, y: &[f64]) -> Result<Vec<f64>> {
        let base = self
            .domain
            .interior_point(self.dim)
            .ok_or_else(|| Error::Convergence("no interior starting point".into()))?;
        let mut out = base.clone();
        for (k, &target) in y.iter().enumerate() {
            let iv = self.domain.interval(k).unwrap_or(Interval::REAL);
            let mut probe = base.clone();
            let mut g = |t: f64| {
                probe[k] = t;
                self.generator.grad(&probe)[k] - target
            };
            let start = iv.interior_point();
            let (mut lo, mut hi) = (start, start);
            let mut step = 1.0;
            let mut tries = 0;
            while g(lo) > 0.0 {
                lo = if iv.lo.is_finite() {
                    iv.lo + 0.5 * (lo - iv.lo)
                } else {
                    lo - step
                };
                step *= 2.0;
                tries += 1;
                if tries > 2100 || !iv.contains(lo) {
                    return Err(Error::Convergence(format!(
                        "could not bracket coordinate {k} from below"
                    )));
                }
            }
            step = 1.0;
            tries = 0;
            while g(hi) < 0.0 {
                hi = if iv.hi.is_finite() {
                    iv.hi - 0.5 * (iv.hi - hi)
                } else {
                    hi + step
                };
                step *= 2.0;
                tries += 1;
                if tries > 2100 || !iv.contains(hi) {
                    return Err(Error::Convergence(format!(
                        "could not bracket coordinate {k} from above"
                    )));
                }
            }
            let mut t = 0.5 * (lo + hi);
            let mut converged = false;
            for _ in 0..400 {
                let r = g(t);
                if r == 0.0 || r.abs() <= 4.0 * f64::EPSILON * (1.0 + target.abs()) {
                    converged = true;
                    break;
                }
                if r < 0.0 {
                    lo = t;
                } else {
                    hi = t;
                }
                t = probe_hess(&*self.generator, &base, k, t)
                    .map(|h| t - r / h)
                    .filter(|n| *n > lo && *n < hi)
                    .unwrap_or(0.5 * (lo + hi));
                if hi - lo <= 2.0 * f64::EPSILON * (1.0 + t.abs()) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::Convergence(format!(
                    "coordinate {k} did not converge"
                )));
            }
            out[k] = t;
        }
        Ok(out)
    }

    /// Damped Newton on `∇F(x) = y` with a central-difference Jacobian and
    /// backtracking that keeps iterates inside the domain.
    fn solve_newton(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut x = self
            .domain
            .interior_point(self.dim)
            .ok_or_else(|| Error::Convergence("no interior starting point".into()))?;
        let residual = |x: &[f64]| -> Vec<f64> {
            self.generator
                .grad(x)
                .iter()
                .zip(y)
                .map(|(g, t)| g - t)
                .collect()
        };
        let norm = |v: &[f64]| v.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
        let scale = 1.0 + norm(y);
        let mut r = residual(&x);
        for _ in 0..200 {
            if norm(&r) <= 1e-13 * scale {
                return Ok(x);
            }
            let jac = self.fd_jacobian(&x);
            let neg_r: Vec<f64> = r.iter().map(|t| -t).collect();
            let dx = solve_linear(jac, neg_r)
                .ok_or_else(|| Error::Convergence("singular Jacobian".into()))?;
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + lambda * d).collect();
                if self.domain.contains(&cand) {
                    let rc = residual(&cand);
                    if norm(&rc) < (1.0 - 1e-4 * lambda) * norm(&r) {
                        x = cand;
                        r = rc;
                        accepted = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                if norm(&r) <= 1e-10 * scale {
                    return Ok(x);
                }
                return Err(Error::Convergence("line search failed".into()));
            }
        }
        Err(Error::Convergence("iteration limit reached".into()))
    }

    fn fd_jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let d = x.len();
        let mut jac = vec![vec![0.0; d]; d];
        for j in 0..d {
            let h = 1e-6 * (1.0 + x[j].abs());
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            let (gp, gm, width) = match (self.domain.contains(&xp), self.domain.contains(&xm)) {
                (true, true) => (self.generator.grad(&xp), self.generator.grad(&xm), 2.0 * h),
                (true, false) => (self.generator.grad(&xp), self.generator.grad(x), h),
                _ => (self.generator.grad(x), self.generator.grad(&xm), h),
            };
            for i in 0..d {
                jac[i][j] = (gp[i] - gm[i]) / width;
            }
        }
        jac
    }

    /// Random domain point (see [`Domain::sample`]).
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Vec<f64>> {
        self.domain.sample(rng, self.dim)
    }
}

fn probe_hess(g: &dyn Generator, base: &[f64], k: usize, t: f64) -> Option<f64> {
    let mut x = base.to_vec();
    x[k] = t;
    g.hessian_diag(&x)
        .map(|h| h[k])
        .filter(|h| *h > 0.0 && h.is_finite())
}

/// Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Generator lookup by id. Built-ins are available in every dimension;
/// separable generators are registered from declarative specs.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    separable: BTreeMap<String, SeparableSpec>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, spec: SeparableSpec) -> Result<()> {
        spec.validate()?;
        if self.separable.contains_key(&spec.id) {
            return Err(Error::DuplicateId(spec.id));
        }
        self.separable.insert(spec.id.clone(), spec);
        Ok(())
    }

    /// Loads one separable spec, or a JSON array of them, from `path`.
    pub fn load_file(&mut self, path: impl AsRef<Path>) -> Result<Vec<String>> {
        let text = std::fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let specs: Vec<SeparableSpec> = if value.is_array() {
            serde_json::from_value(value)?
        } else {
            vec![serde_json::from_value(value)?]
        };
        let mut ids = Vec::with_capacity(specs.len());
        for s in specs {
            ids.push(s.id.clone());
            self.register(s)?;
        }
        Ok(ids)
    }

    pub fn get(&self, id: &str, dim: usize) -> Result<ConvexFunctionSpec> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        match id {
            "quadratic" => Ok(ConvexFunctionSpec::quadratic(dim)),
            "neg_entropy" => Ok(ConvexFunctionSpec::neg_entropy(dim)),
            "neg_log" => Ok(ConvexFunctionSpec::neg_log(dim)),
            other => match self.separable.get(other) {
                Some(s) => ConvexFunctionSpec::separable(s, dim),
                None => Err(Error::UnknownGenerator(other.to_string())),
            },
        }
    }

    pub fn ids(&self) -> Vec<String> {
        BUILTIN_IDS
            .iter()
            .map(|s| s.to_string())
            .chain(self.separable.keys().cloned())
            .collect()
    }
}
