//! Finite-sum objectives `F(x) = (1/n)·Σ f_i(x)` and the counting gradient
//! oracle.
//!
//! Gradient complexity is the number of component-gradient evaluations, so
//! every gradient access in the optimizers goes through [`GradOracle`], which
//! maintains the count. Function values are free: complexity counts gradients
//! only. Measurement probes (logging `F` and `‖∇F‖` along a trajectory) run
//! inside [`GradOracle::exempt`] so instrumentation never perturbs reported
//! complexity.

mod families;

pub use families::{
    make_problem, NonconvexLogistic, PlQuadratic, Problem, ProblemSpec, ScalarToy,
};

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::sampling::IndexSet;

/// A finite sum of `n` smooth components over `R^dim`.
///
/// `smoothness_bound` must upper-bound the gradient Lipschitz constant of
/// every individual component (overestimates are safe; underestimates void
/// the step-size guarantees). The optional metadata is exact where the
/// family can compute it and `None` otherwise.
pub trait Objective {
    fn n_components(&self) -> usize;
    fn dim(&self) -> usize;
    fn component_value(&self, i: usize, x: &Array1<f64>) -> f64;
    /// Writes `∇f_i(x)` into `out`, overwriting every coordinate.
    fn component_gradient_into(&self, i: usize, x: &Array1<f64>, out: &mut Array1<f64>);

    fn smoothness_bound(&self) -> f64;
    /// `F* = min F` when known exactly.
    fn optimum_value(&self) -> Option<f64> {
        None
    }
    /// Strong convexity modulus of `F` when known.
    fn strong_convexity(&self) -> Option<f64> {
        None
    }
    /// Gradient dominance constant `τ`: `F(x) − F* ≤ τ·‖∇F(x)‖²` everywhere.
    fn gradient_dominance(&self) -> Option<f64> {
        None
    }

    /// Convenience allocating form of `component_gradient_into`.
    fn component_gradient(&self, i: usize, x: &Array1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.dim());
        self.component_gradient_into(i, x, &mut out);
        out
    }
}

/// Running tally of counted component-gradient evaluations.
#[derive(Debug, Default)]
pub struct EvalCounter {
    counted: u64,
    exempt_depth: u32,
}

impl EvalCounter {
    pub fn counted(&self) -> u64 {
        self.counted
    }

    fn add(&mut self, k: u64) {
        if self.exempt_depth == 0 {
            self.counted += k;
        }
    }
}

/// Gradient access for one optimization run: bundles the problem with its
/// evaluation counter and a scratch buffer so the inner loops never allocate.
pub struct GradOracle<'a, P: Objective + ?Sized> {
    problem: &'a P,
    counter: EvalCounter,
    scratch: Array1<f64>,
}

impl<'a, P: Objective + ?Sized> GradOracle<'a, P> {
    pub fn new(problem: &'a P) -> Self {
        let scratch = Array1::zeros(problem.dim());
        GradOracle { problem, counter: EvalCounter::default(), scratch }
    }

    pub fn problem(&self) -> &P {
        self.problem
    }

    /// Counted component-gradient evaluations so far.
    pub fn counted(&self) -> u64 {
        self.counter.counted()
    }

    /// Runs `f` with counting suspended; nests safely.
    pub fn exempt<R>(&mut self, f: impl FnOnce(&mut Self) -> R) -> R {
        self.counter.exempt_depth += 1;
        let out = f(self);
        self.counter.exempt_depth -= 1;
        out
    }

    fn check_dim(&self, x: &Array1<f64>) -> Result<()> {
        if x.len() != self.problem.dim() {
            return Err(Error::DimensionMismatch { expected: self.problem.dim(), got: x.len() });
        }
        Ok(())
    }

    fn check_index_range(&self, idx: &IndexSet) -> Result<()> {
        let n = self.problem.n_components();
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidIndexSet(format!("index {bad} out of range for n={n}")));
        }
        Ok(())
    }

    /// `F(x)`. Function values carry no gradient cost.
    pub fn value(&self, x: &Array1<f64>) -> Result<f64> {
        self.check_dim(x)?;
        let n = self.problem.n_components();
        let mut acc = 0.0;
        for i in 0..n {
            acc += self.problem.component_value(i, x);
        }
        Ok(acc / n as f64)
    }

    /// `∇F(x)`; counts `n` evaluations.
    pub fn full_gradient(&mut self, x: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_dim(x)?;
        let n = self.problem.n_components();
        let mut acc = Array1::zeros(self.problem.dim());
        for i in 0..n {
            self.problem.component_gradient_into(i, x, &mut self.scratch);
            acc.zip_mut_with(&self.scratch, |a, &g| *a += g);
        }
        acc /= n as f64;
        self.counter.add(n as u64);
        Ok(acc)
    }

    /// `(1/|I|)·Σ_{i∈I} ∇f_i(x)`; counts `|I|` evaluations.
    pub fn batch_gradient(&mut self, idx: &IndexSet, x: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_dim(x)?;
        self.check_index_range(idx)?;
        if idx.is_empty() {
            return Err(Error::InvalidIndexSet("empty batch".into()));
        }
        let mut acc = Array1::zeros(self.problem.dim());
        for &i in idx.iter() {
            self.problem.component_gradient_into(i, x, &mut self.scratch);
            acc.zip_mut_with(&self.scratch, |a, &g| *a += g);
        }
        acc /= idx.len() as f64;
        self.counter.add(idx.len() as u64);
        Ok(acc)
    }

    /// `(1/|I|)·Σ_{i∈I} [∇f_i(x) − ∇f_i(y)]`; counts `2·|I|` evaluations.
    ///
    /// Each index contributes its two terms consecutively, so when `x` and
    /// `y` are bitwise equal the result is exactly zero.
    pub fn batch_gradient_difference(
        &mut self,
        idx: &IndexSet,
        x: &Array1<f64>,
        y: &Array1<f64>,
    ) -> Result<Array1<f64>> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        self.check_index_range(idx)?;
        if idx.is_empty() {
            return Err(Error::InvalidIndexSet("empty batch".into()));
        }
        let mut acc = Array1::zeros(self.problem.dim());
        for &i in idx.iter() {
            self.problem.component_gradient_into(i, x, &mut self.scratch);
            acc.zip_mut_with(&self.scratch, |a, &g| *a += g);
            self.problem.component_gradient_into(i, y, &mut self.scratch);
            acc.zip_mut_with(&self.scratch, |a, &g| *a -= g);
        }
        acc /= idx.len() as f64;
        self.counter.add(2 * idx.len() as u64);
        Ok(acc)
    }

    /// Component-gradient variance `(1/n)·Σ ‖∇f_i(x) − ∇F(x)‖²`.
    ///
    /// A measurement, not optimization work: always exempt from counting.
    pub fn variance_at(&mut self, x: &Array1<f64>) -> Result<f64> {
        self.exempt(|oracle| {
            let mean = oracle.full_gradient(x)?;
            let n = oracle.problem.n_components();
            let mut acc = 0.0;
            for i in 0..n {
                oracle.problem.component_gradient_into(i, x, &mut oracle.scratch);
                oracle.scratch.zip_mut_with(&mean, |s, &m| *s -= m);
                acc += oracle.scratch.dot(&oracle.scratch);
            }
            Ok(acc / n as f64)
        })
    }
}

/// Central-difference approximation of `∇f_i(x)` from component values,
/// used as the independent check on the analytic gradients.
pub fn fd_component_gradient<P: Objective + ?Sized>(
    problem: &P,
    i: usize,
    x: &Array1<f64>,
    h: f64,
) -> Array1<f64> {
    let mut out = Array1::zeros(x.len());
    let mut probe = x.clone();
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let up = problem.component_value(i, &probe);
        probe[j] = x[j] - h;
        let down = problem.component_value(i, &probe);
        probe[j] = x[j];
        out[j] = (up - down) / (2.0 * h);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    /// All components identical: f_i(x) = ‖x‖²/2.
    struct SharedQuadratic {
        n: usize,
        dim: usize,
    }

    impl Objective for SharedQuadratic {
        fn n_components(&self) -> usize {
            self.n
        }
        fn dim(&self) -> usize {
            self.dim
        }
        fn component_value(&self, _i: usize, x: &Array1<f64>) -> f64 {
            0.5 * x.dot(x)
        }
        fn component_gradient_into(&self, _i: usize, x: &Array1<f64>, out: &mut Array1<f64>) {
            out.assign(x);
        }
        fn smoothness_bound(&self) -> f64 {
            1.0
        }
        fn optimum_value(&self) -> Option<f64> {
            Some(0.0)
        }
    }

    #[test]
    fn full_gradient_of_shared_quadratic_is_identity() {
        let p = SharedQuadratic { n: 4, dim: 3 };
        let mut oracle = GradOracle::new(&p);
        let x = arr1(&[1.0, 0.0, 0.0]);
        let g = oracle.full_gradient(&x).unwrap();
        assert_eq!(g, x);
        assert_eq!(oracle.counted(), 4);
    }

    #[test]
    fn batch_ops_count_exactly() {
        let p = SharedQuadratic { n: 10, dim: 2 };
        let mut oracle = GradOracle::new(&p);
        let x = arr1(&[1.0, 2.0]);
        let y = arr1(&[0.0, 1.0]);
        let idx = IndexSet::new(vec![1, 4, 7], 10).unwrap();
        oracle.batch_gradient(&idx, &x).unwrap();
        assert_eq!(oracle.counted(), 3);
        oracle.batch_gradient_difference(&idx, &x, &y).unwrap();
        assert_eq!(oracle.counted(), 3 + 6);
    }

    #[test]
    fn exempt_scope_suppresses_counting() {
        let p = SharedQuadratic { n: 5, dim: 2 };
        let mut oracle = GradOracle::new(&p);
        let x = arr1(&[1.0, 1.0]);
        oracle.exempt(|o| o.full_gradient(&x).unwrap());
        assert_eq!(oracle.counted(), 0);
        oracle.variance_at(&x).unwrap();
        assert_eq!(oracle.counted(), 0);
        oracle.full_gradient(&x).unwrap();
        assert_eq!(oracle.counted(), 5);
    }

    #[test]
    fn identical_points_give_exactly_zero_difference() {
        let p = SharedQuadratic { n: 6, dim: 4 };
        let mut oracle = GradOracle::new(&p);
        let x = arr1(&[0.3, -1.7, 2.2, 0.0]);
        let idx = IndexSet::new(vec![0, 2, 5], 6).unwrap();
        let d = oracle.batch_gradient_difference(&idx, &x, &x.clone()).unwrap();
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn variance_of_identical_components_is_zero() {
        let p = SharedQuadratic { n: 8, dim: 3 };
        let mut oracle = GradOracle::new(&p);
        let v = oracle.variance_at(&arr1(&[1.0, 2.0, 3.0])).unwrap();
        assert!(v.abs() < 1e-30);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = SharedQuadratic { n: 3, dim: 2 };
        let mut oracle = GradOracle::new(&p);
        assert!(oracle.full_gradient(&arr1(&[1.0, 2.0, 3.0])).is_err());
    }

    // Gradients at x = e1 of opposing linear components: mean over all
    // singletons equals the full gradient exactly.
    #[test]
    fn singleton_means_recover_full_gradient() {
        let p = ScalarToy::new(&[(0.0, 2.0), (0.0, -2.0)]).unwrap();
        let mut oracle = GradOracle::new(&p);
        let x = arr1(&[0.7]);
        let full = oracle.full_gradient(&x).unwrap();
        let mut mean = Array1::zeros(1);
        for i in 0..2 {
            let idx = IndexSet::new(vec![i], 2).unwrap();
            mean += &oracle.batch_gradient(&idx, &x).unwrap();
        }
        mean /= 2.0;
        assert!((mean[0] - full[0]).abs() < 1e-15);
    }
}
