//! Built-in problem families and the seeded problem factory.
//!
//! Synthetic data keeps the harness self-contained: designs are seeded
//! Gaussian matrices with unit-norm rows, and labels come from a planted
//! linear rule with 10% sign flips, so every instance is reproducible from
//! its `ProblemSpec` alone.

use ndarray::{Array1, Array2, Zip};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Objective;
use crate::error::{Error, Result};
use crate::sampling::RngStream;

/// Numerically stable `1/(1+e^{-u})`.
fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1+e^u)`.
fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

fn gaussian_unit_rows(n: usize, d: usize, stream: &RngStream) -> Array2<f64> {
    let mut rng = stream.rng();
    let mut rows = Array2::zeros((n, d));
    for i in 0..n {
        let mut norm_sq = 0.0;
        for j in 0..d {
            let v: f64 = rng.sample(StandardNormal);
            rows[[i, j]] = v;
            norm_sq += v * v;
        }
        let norm = norm_sq.sqrt();
        if norm > 0.0 {
            for j in 0..d {
                rows[[i, j]] /= norm;
            }
        }
    }
    rows
}

/// Labels in {-1, +1} from a planted linear rule with a 10% flip rate.
fn planted_labels(design: &Array2<f64>, stream: &RngStream) -> Array1<f64> {
    let (n, d) = design.dim();
    let mut w_rng = stream.child(0).rng();
    let w: Array1<f64> = (0..d).map(|_| w_rng.sample::<f64, _>(StandardNormal)).collect();
    let mut flip_rng = stream.child(1).rng();
    let mut labels = Array1::zeros(n);
    for i in 0..n {
        let s = if design.row(i).dot(&w) >= 0.0 { 1.0 } else { -1.0 };
        let flip = flip_rng.random::<f64>() < 0.1;
        labels[i] = if flip { -s } else { s };
    }
    labels
}

/// Least-squares finite sum `f_i(x) = (a_i·x − b_i)²/2` with a full-rank
/// design, so `F` is strongly convex and therefore gradient dominated.
#[derive(Clone, Debug)]
pub struct PlQuadratic {
    design: Array2<f64>,
    targets: Array1<f64>,
    smoothness: f64,
    strong_convexity: f64,
    minimizer: Array1<f64>,
    opt_value: f64,
}

impl PlQuadratic {
    pub fn from_design(design: Array2<f64>, targets: Array1<f64>) -> Result<Self> {
        let (n, d) = design.dim();
        if n == 0 || d == 0 {
            return Err(Error::InvalidProblem("empty design".into()));
        }
        if targets.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: targets.len() });
        }

        let mut smoothness: f64 = 0.0;
        for i in 0..n {
            let row = design.row(i);
            smoothness = smoothness.max(row.dot(&row));
        }
        if smoothness <= 0.0 {
            return Err(Error::InvalidProblem("design has no nonzero row".into()));
        }

        let gram = design.t().dot(&design) / n as f64;
        let gram_na = DMatrix::from_row_iterator(d, d, gram.iter().copied());
        let eigen = gram_na.clone().symmetric_eigen();
        let lambda_min = eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let lambda_max = eigen.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lambda_min.is_nan() || lambda_min <= 1e-12 * lambda_max.max(1e-300) {
            return Err(Error::InvalidProblem(format!(
                "design is not full rank (spectrum bottom {lambda_min:.3e})"
            )));
        }

        let rhs = design.t().dot(&targets) / n as f64;
        let rhs_na = DVector::from_iterator(d, rhs.iter().copied());
        let chol = gram_na
            .cholesky()
            .ok_or_else(|| Error::InvalidProblem("normal equations not positive definite".into()))?;
        let sol = chol.solve(&rhs_na);
        let minimizer = Array1::from_iter(sol.iter().copied());

        let mut problem = PlQuadratic {
            design,
            targets,
            smoothness,
            strong_convexity: lambda_min,
            minimizer,
            opt_value: 0.0,
        };
        let mut acc = 0.0;
        for i in 0..n {
            acc += problem.component_value(i, &problem.minimizer);
        }
        problem.opt_value = acc / n as f64;
        Ok(problem)
    }

    /// Seeded random instance: unit-norm Gaussian rows, ±1 targets from a
    /// planted rule with 10% flips. Requires `n ≥ d` so the design is full
    /// rank.
    pub fn gaussian(n: usize, d: usize, stream: &RngStream) -> Result<Self> {
        if n < d {
            return Err(Error::InvalidProblem(format!(
                "quadratic family needs n >= d for a full-rank design, got n={n}, d={d}"
            )));
        }
        let design = gaussian_unit_rows(n, d, &stream.child(0));
        let targets = planted_labels(&design, &stream.child(1));
        Self::from_design(design, targets)
    }

    pub fn minimizer(&self) -> &Array1<f64> {
        &self.minimizer
    }
}

impl Objective for PlQuadratic {
    fn n_components(&self) -> usize {
        self.design.nrows()
    }
    fn dim(&self) -> usize {
        self.design.ncols()
    }
    fn component_value(&self, i: usize, x: &Array1<f64>) -> f64 {
        let r = self.design.row(i).dot(x) - self.targets[i];
        0.5 * r * r
    }
    fn component_gradient_into(&self, i: usize, x: &Array1<f64>, out: &mut Array1<f64>) {
        let row = self.design.row(i);
        let r = row.dot(x) - self.targets[i];
        Zip::from(out).and(&row).for_each(|o, &a| *o = r * a);
    }
    fn smoothness_bound(&self) -> f64 {
        self.smoothness
    }
    fn optimum_value(&self) -> Option<f64> {
        Some(self.opt_value)
    }
    fn strong_convexity(&self) -> Option<f64> {
        Some(self.strong_convexity)
    }
    /// A λ-strongly convex function is 1/(2λ)-gradient dominated.
    fn gradient_dominance(&self) -> Option<f64> {
        Some(1.0 / (2.0 * self.strong_convexity))
    }
}

/// Logistic loss with the bounded nonconvex regularizer
/// `α·Σ_j x_j²/(1+x_j²)`: smooth, nonconvex, no optimum metadata.
#[derive(Clone, Debug)]
pub struct NonconvexLogistic {
    design: Array2<f64>,
    labels: Array1<f64>,
    alpha: f64,
    smoothness: f64,
}

impl NonconvexLogistic {
    pub fn from_parts(design: Array2<f64>, labels: Array1<f64>, alpha: f64) -> Result<Self> {
        let (n, _d) = design.dim();
        if n == 0 {
            return Err(Error::InvalidProblem("empty design".into()));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
        }
        if labels.iter().any(|&b| b != 1.0 && b != -1.0) {
            return Err(Error::InvalidProblem("labels must be exactly ±1".into()));
        }
        if alpha.is_nan() || alpha < 0.0 {
            return Err(Error::InvalidProblem(format!("alpha must be >= 0, got {alpha}")));
        }
        let mut max_row_sq: f64 = 0.0;
        for i in 0..n {
            let row = design.row(i);
            max_row_sq = max_row_sq.max(row.dot(&row));
        }
        // Logistic curvature tops out at ‖a_i‖²/4; the regularizer's second
        // derivative (2−6t²)/(1+t²)³ peaks at 2.
        let smoothness = max_row_sq / 4.0 + 2.0 * alpha;
        Ok(NonconvexLogistic { design, labels, alpha, smoothness })
    }

    pub fn gaussian(n: usize, d: usize, alpha: f64, stream: &RngStream) -> Result<Self> {
        let design = gaussian_unit_rows(n, d, &stream.child(0));
        let labels = planted_labels(&design, &stream.child(1));
        Self::from_parts(design, labels, alpha)
    }
}

impl Objective for NonconvexLogistic {
    fn n_components(&self) -> usize {
        self.design.nrows()
    }
    fn dim(&self) -> usize {
        self.design.ncols()
    }
    fn component_value(&self, i: usize, x: &Array1<f64>) -> f64 {
        let z = self.design.row(i).dot(x);
        let mut reg = 0.0;
        for &xj in x.iter() {
            reg += xj * xj / (1.0 + xj * xj);
        }
        softplus(-self.labels[i] * z) + self.alpha * reg
    }
    fn component_gradient_into(&self, i: usize, x: &Array1<f64>, out: &mut Array1<f64>) {
        let row = self.design.row(i);
        let b = self.labels[i];
        let coeff = -b * sigmoid(-b * row.dot(x));
        let alpha = self.alpha;
        Zip::from(out).and(&row).and(x).for_each(|o, &a, &xj| {
            let denom = 1.0 + xj * xj;
            *o = coeff * a + alpha * 2.0 * xj / (denom * denom);
        });
    }
    fn smoothness_bound(&self) -> f64 {
        self.smoothness
    }
}

/// One-dimensional components `f_i(x) = q_i·x²/2 + g_i·x`; small enough to
/// check every quantity by hand.
#[derive(Clone, Debug)]
pub struct ScalarToy {
    quad: Vec<f64>,
    lin: Vec<f64>,
    smoothness: f64,
    mean_quad: f64,
    mean_lin: f64,
}

impl ScalarToy {
    /// `terms[i] = (q_i, g_i)`.
    pub fn new(terms: &[(f64, f64)]) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidProblem("toy needs at least one component".into()));
        }
        let quad: Vec<f64> = terms.iter().map(|t| t.0).collect();
        let lin: Vec<f64> = terms.iter().map(|t| t.1).collect();
        let max_q = quad.iter().fold(0.0f64, |m, &q| m.max(q.abs()));
        let smoothness = if max_q > 0.0 { max_q } else { 1.0 };
        let n = terms.len() as f64;
        let mean_quad = quad.iter().sum::<f64>() / n;
        let mean_lin = lin.iter().sum::<f64>() / n;
        Ok(ScalarToy { quad, lin, smoothness, mean_quad, mean_lin })
    }
}

impl Objective for ScalarToy {
    fn n_components(&self) -> usize {
        self.quad.len()
    }
    fn dim(&self) -> usize {
        1
    }
    fn component_value(&self, i: usize, x: &Array1<f64>) -> f64 {
        let v = x[0];
        0.5 * self.quad[i] * v * v + self.lin[i] * v
    }
    fn component_gradient_into(&self, i: usize, x: &Array1<f64>, out: &mut Array1<f64>) {
        out[0] = self.quad[i] * x[0] + self.lin[i];
    }
    fn smoothness_bound(&self) -> f64 {
        self.smoothness
    }
    fn optimum_value(&self) -> Option<f64> {
        (self.mean_quad > 0.0).then(|| -self.mean_lin * self.mean_lin / (2.0 * self.mean_quad))
    }
    fn strong_convexity(&self) -> Option<f64> {
        (self.mean_quad > 0.0).then_some(self.mean_quad)
    }
    fn gradient_dominance(&self) -> Option<f64> {
        (self.mean_quad > 0.0).then(|| 1.0 / (2.0 * self.mean_quad))
    }
}

/// Any of the built-in families, as produced by [`make_problem`].
#[derive(Clone, Debug)]
pub enum Problem {
    PlQuadratic(PlQuadratic),
    NonconvexLogistic(NonconvexLogistic),
    ScalarToy(ScalarToy),
}

macro_rules! delegate {
    ($self:ident, $p:ident => $body:expr) => {
        match $self {
            Problem::PlQuadratic($p) => $body,
            Problem::NonconvexLogistic($p) => $body,
            Problem::ScalarToy($p) => $body,
        }
    };
}

impl Objective for Problem {
    fn n_components(&self) -> usize {
        delegate!(self, p => p.n_components())
    }
    fn dim(&self) -> usize {
        delegate!(self, p => p.dim())
    }
    fn component_value(&self, i: usize, x: &Array1<f64>) -> f64 {
        delegate!(self, p => p.component_value(i, x))
    }
    fn component_gradient_into(&self, i: usize, x: &Array1<f64>, out: &mut Array1<f64>) {
        delegate!(self, p => p.component_gradient_into(i, x, out))
    }
    fn smoothness_bound(&self) -> f64 {
        delegate!(self, p => p.smoothness_bound())
    }
    fn optimum_value(&self) -> Option<f64> {
        delegate!(self, p => p.optimum_value())
    }
    fn strong_convexity(&self) -> Option<f64> {
        delegate!(self, p => p.strong_convexity())
    }
    fn gradient_dominance(&self) -> Option<f64> {
        delegate!(self, p => p.gradient_dominance())
    }
}

/// Declarative problem description; the JSON form used by the CLI config.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub family: String,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    /// Regularizer weight; only meaningful for `nonconvex-logistic`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

/// Builds the described instance. Deterministic: equal specs produce
/// bit-identical problems.
pub fn make_problem(spec: &ProblemSpec) -> Result<Problem> {
    if spec.n == 0 || spec.d == 0 {
        return Err(Error::InvalidProblem("n and d must be positive".into()));
    }
    let stream = RngStream::new(spec.seed);
    match spec.family.as_str() {
        "pl-quadratic" => {
            if spec.alpha.is_some() {
                return Err(Error::InvalidProblem(
                    "alpha is only accepted by nonconvex-logistic".into(),
                ));
            }
            Ok(Problem::PlQuadratic(PlQuadratic::gaussian(spec.n, spec.d, &stream)?))
        }
        "nonconvex-logistic" => {
            let alpha = spec.alpha.unwrap_or(0.1);
            Ok(Problem::NonconvexLogistic(NonconvexLogistic::gaussian(
                spec.n, spec.d, alpha, &stream,
            )?))
        }
        "scalar-toy" => {
            if spec.d != 1 {
                return Err(Error::InvalidProblem("scalar-toy is one-dimensional (d=1)".into()));
            }
            if spec.alpha.is_some() {
                return Err(Error::InvalidProblem(
                    "alpha is only accepted by nonconvex-logistic".into(),
                ));
            }
            let mut rng = stream.rng();
            let terms: Vec<(f64, f64)> = (0..spec.n)
                .map(|_| {
                    let q = rng.random_range(1..=4) as f64;
                    let g = rng.random_range(-2..=2) as f64;
                    (q, g)
                })
                .collect();
            Ok(Problem::ScalarToy(ScalarToy::new(&terms)?))
        }
        other => Err(Error::InvalidProblem(format!("unknown problem family '{other}'"))),
    }
}
