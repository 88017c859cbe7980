//! Thin wrappers around argmin's BFGS and the levenberg-marquardt crate,
//! with central-difference derivatives.

use std::cell::Cell;

use argmin::core::{CostFunction, Executor, Gradient, State, TerminationReason, TerminationStatus};
use argmin::solver::linesearch::HagerZhangLineSearch;
use argmin::solver::quasinewton::BFGS;
use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::storage::Owned;
use nalgebra::{DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: u64,
    pub gradient_norm: f64,
}

struct Objective<'a, F> {
    f: &'a F,
    evals: Cell<u64>,
    budget: u64,
}

impl<F: Fn(&[f64]) -> f64> Objective<'_, F> {
    fn eval(&self, p: &[f64]) -> std::result::Result<f64, argmin::core::Error> {
        let n = self.evals.get() + 1;
        self.evals.set(n);
        if n > self.budget {
            anyhow::bail!("{BUDGET_MSG}");
        }
        Ok((self.f)(p))
    }
}

const BUDGET_MSG: &str = "objective evaluation budget exhausted";

impl<F: Fn(&[f64]) -> f64> CostFunction for Objective<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        self.eval(p)
    }
}

impl<F: Fn(&[f64]) -> f64> Gradient for Objective<'_, F> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, p: &Vec<f64>) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        let f = |x: &Vec<f64>| self.eval(x);
        let grad = finitediff::vec::central_diff(&f)(p);
        grad
    }
}

/// Unconstrained BFGS with a Hager-Zhang line search from `x0`.
///
/// Stops when the gradient norm drops below `grad_tol` or an iteration
/// changes the cost by less than `cost_tol`. Returns
/// [`Error::NonConvergence`] when the iteration budget runs out with the
/// gradient norm still above `10 * grad_tol`.
pub fn bfgs<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: Vec<f64>,
    max_iters: u64,
    grad_tol: f64,
    cost_tol: f64,
) -> Result<Minimum> {
    let n = x0.len();
    let budget = (max_iters + 1) * (200 + 4 * n as u64);
    let problem = Objective {
        f,
        evals: Cell::new(0),
        budget,
    };
    let ls = HagerZhangLineSearch::new();
    let solver = BFGS::new(ls)
        .with_tolerance_grad(grad_tol)
        .and_then(|s| s.with_tolerance_cost(cost_tol))
        .map_err(|e| Error::Fit(e.to_string()))?;
    let mut eye = vec![vec![0.0; n]; n];
    for (i, row) in eye.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let res = Executor::new(problem, solver)
        .configure(|s| s.param(x0).inv_hessian(eye).max_iters(max_iters))
        .run();
    let res = match res {
        Ok(r) => r,
        Err(e) if e.to_string().contains(BUDGET_MSG) => {
            return Err(Error::NonConvergence {
                iterations: max_iters as usize,
                gradient_norm: f64::NAN,
            })
        }
        Err(e) => return Err(Error::Fit(format!("BFGS: {e}"))),
    };
    let state = res.state();
    let x = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| Error::Fit("BFGS produced no parameters".into()))?;
    let gradient_norm = {
        let g = Objective {
            f,
            evals: Cell::new(0),
            budget: u64::MAX,
        }
        .gradient(&x)
        .map_err(|e| Error::Fit(e.to_string()))?;
        g.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    let iterations = state.get_iter();
    let hit_limit = matches!(
        state.get_termination_status(),
        TerminationStatus::Terminated(TerminationReason::MaxItersReached)
    );
    if hit_limit && gradient_norm > 10.0 * grad_tol {
        return Err(Error::NonConvergence {
            iterations: iterations as usize,
            gradient_norm,
        });
    }
    Ok(Minimum {
        value: state.get_best_cost(),
        x,
        iterations,
        gradient_norm,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub params: Vec<f64>,
    /// Standard errors from s^2 (J^T J)^-1 with s^2 = SSR / (m - n).
    pub stderr: Vec<f64>,
    pub residuals: Vec<f64>,
    pub evaluations: usize,
}

struct Lsq<'a, R> {
    r: &'a R,
    p: DVector<f64>,
}

fn jacobian<R: Fn(&[f64]) -> Vec<f64>>(r: &R, p: &[f64]) -> Result<DMatrix<f64>> {
    let op = |x: &Vec<f64>| -> std::result::Result<Vec<f64>, anyhow::Error> { Ok(r(x)) };
    let rows = finitediff::vec::central_jacobian(&op)(&p.to_vec());
    let rows = rows.map_err(|e| Error::Fit(e.to_string()))?;
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
}

impl<R: Fn(&[f64]) -> Vec<f64>> LeastSquaresProblem<f64, Dyn, Dyn> for Lsq<'_, R> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.p.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let r = (self.r)(self.p.as_slice());
        r.iter().all(|v| v.is_finite()).then(|| DVector::from_vec(r))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        jacobian(self.r, self.p.as_slice())
            .ok()
            .filter(|j| j.iter().all(|v| v.is_finite()))
    }
}

/// Levenberg-Marquardt fit of `residuals(p)` from `p0`.
pub fn least_squares<R: Fn(&[f64]) -> Vec<f64>>(residuals: &R, p0: &[f64]) -> Result<LeastSquaresFit> {
    let problem = Lsq {
        r: residuals,
        p: DVector::from_column_slice(p0),
    };
    let (problem, report) = LevenbergMarquardt::new().minimize(problem);
    let params = problem.p.as_slice().to_vec();
    let res = residuals(&params);
    if !report.termination.was_successful() {
        return Err(Error::Fit(format!(
            "Levenberg-Marquardt stopped ({:?}); residuals {:?}",
            report.termination, res
        )));
    }
    let (m, n) = (res.len(), params.len());
    let ssr: f64 = res.iter().map(|v| v * v).sum();
    let j = jacobian(residuals, &params)?;
    let stderr = if m > n {
        let s2 = ssr / (m - n) as f64;
        match (j.transpose() * &j).try_inverse() {
            Some(cov) => (0..n).map(|i| (s2 * cov[(i, i)]).max(0.0).sqrt()).collect(),
            None => vec![f64::INFINITY; n],
        }
    } else {
        vec![f64::NAN; n]
    };
    Ok(LeastSquaresFit {
        params,
        stderr,
        residuals: res,
        evaluations: report.number_of_evaluations,
    })
}
