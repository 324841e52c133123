//! Thin wrappers over the optimizers used by the fitting routines.

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::storage::Owned;
use nalgebra::{DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

struct Cost<F>(F);

impl<F: Fn(&[f64]) -> f64> CostFunction for Cost<F> {
    type Param = Vec<f64>;
    type Output = f64;
    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok((self.0)(p))
    }
}

/// Derivative-free minimum of `f` from a simplex around `x0` with per-axis `step`.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: F,
    x0: &[f64],
    step: &[f64],
    max_iters: u64,
    sd_tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let mut simplex = vec![x0.to_vec()];
    for (k, s) in step.iter().enumerate() {
        let mut v = x0.to_vec();
        v[k] += s;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(sd_tol)
        .map_err(|e| Error::FitDiverged(e.to_string()))?;
    let res = Executor::new(Cost(f), solver)
        .configure(|s| s.max_iters(max_iters))
        .run()
        .map_err(|e| Error::FitDiverged(e.to_string()))?;
    let state = res.state();
    if let TerminationStatus::Terminated(TerminationReason::MaxItersReached) =
        state.get_termination_status()
    {
        return Err(Error::FitDiverged(format!(
            "simplex did not converge in {max_iters} iterations"
        )));
    }
    let best = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| Error::FitDiverged("no best point".into()))?;
    Ok((best, state.get_best_cost()))
}

struct Problem<F> {
    f: F,
    x: DVector<f64>,
}

impl<F: Fn(&[f64]) -> Vec<f64>> Problem<F> {
    fn eval(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let r = (self.f)(x.as_slice());
        r.iter()
            .all(|v| v.is_finite())
            .then(|| DVector::from_vec(r))
    }
}

impl<F: Fn(&[f64]) -> Vec<f64>> LeastSquaresProblem<f64, Dyn, Dyn> for Problem<F> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.x.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.x.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        self.eval(&self.x)
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        jacobian(&|x: &DVector<f64>| self.eval(x), &self.x)
    }
}

/// Central-difference Jacobian.
fn jacobian(
    f: &dyn Fn(&DVector<f64>) -> Option<DVector<f64>>,
    x: &DVector<f64>,
) -> Option<DMatrix<f64>> {
    let m = f(x)?.len();
    let mut jac = DMatrix::zeros(m, x.len());
    for k in 0..x.len() {
        let h = 1e-6 * x[k].abs().max(1.0);
        let (mut up, mut dn) = (x.clone(), x.clone());
        up[k] += h;
        dn[k] -= h;
        let d = (f(&up)? - f(&dn)?) / (2.0 * h);
        jac.set_column(k, &d);
    }
    Some(jac)
}

pub struct LsqFit {
    pub params: Vec<f64>,
    /// Sum of squared residuals.
    pub ssr: f64,
    /// Residual Jacobian at the solution.
    pub jacobian: DMatrix<f64>,
}

impl LsqFit {
    /// `(JᵀJ)⁻¹`, the parameter covariance when residuals are already scaled by their standard deviations.
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        (self.jacobian.transpose() * &self.jacobian).try_inverse()
    }
}

/// Levenberg–Marquardt on the residual vector `f(x)`.
pub fn least_squares<F: Fn(&[f64]) -> Vec<f64>>(f: F, x0: &[f64]) -> Result<LsqFit> {
    let problem = Problem {
        f,
        x: DVector::from_column_slice(x0),
    };
    if problem.residuals().is_none() {
        return Err(Error::FitDiverged(
            "residuals not finite at the starting point".into(),
        ));
    }
    let (problem, report) = LevenbergMarquardt::new()
        .with_patience(400)
        .minimize(problem);
    if !report.termination.was_successful() {
        return Err(Error::FitDiverged(format!("{:?}", report.termination)));
    }
    let r = problem
        .residuals()
        .ok_or_else(|| Error::FitDiverged("non-finite residuals at solution".into()))?;
    let jac = problem
        .jacobian()
        .ok_or_else(|| Error::FitDiverged("non-finite Jacobian at solution".into()))?;
    Ok(LsqFit {
        params: problem.x.as_slice().to_vec(),
        ssr: r.norm_squared(),
        jacobian: jac,
    })
}
