//! Maximum-likelihood fitting by damped Newton with backtracking.
//!
//! Both the DPO objective and plain logistic regression go through the same
//! driver; each supplies its own value, gradient and Hessian.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, invalid, Error, Result};
use crate::model::{self, ModelConfig, Policy, PreferenceDataset};

/// Relative size of the full Newton step below which a small gradient is
/// trusted as a true stationary point rather than a flat tail at infinity.
const NEWTON_STEP_TOL: f64 = 1e-6;
const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Coefficient of the `ridge / 2 * ||theta||^2` stabilizer.
    pub ridge: f64,
    /// When set, every iterate is projected onto `||theta|| <= radius`.
    pub constraint_radius: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iters: 500, grad_tol: 1e-8, ridge: 1e-6, constraint_radius: None }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if self.grad_tol.is_nan() || self.grad_tol <= 0.0 {
            return Err(invalid("grad_tol must be positive"));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(invalid("ridge must be non-negative"));
        }
        if let Some(r) = self.constraint_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid("constraint radius must be positive"));
            }
        }
        Ok(())
    }

    /// Unit-ball constrained variant of these options.
    pub fn unit_ball(mut self) -> Self {
        self.constraint_radius = Some(1.0);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub policy: Policy,
    pub iterations: usize,
    /// Gradient norm of the regularized objective; projected-gradient norm
    /// in constrained mode.
    pub final_grad_norm: f64,
    /// Unregularized negative log-likelihood at the returned policy.
    pub final_negloglik: f64,
    /// Regularized objective at the returned policy.
    pub final_objective: f64,
    pub converged: bool,
    /// The constraint was active at the returned policy.
    pub projected: bool,
}

/// Scales `theta` back onto the ball of the given radius if it lies outside.
pub fn project_unit_ball(theta: &DVector<f64>, radius: f64) -> DVector<f64> {
    let norm = theta.norm();
    if norm <= radius {
        theta.clone()
    } else {
        theta * (radius / norm)
    }
}

trait Objective {
    fn value(&self, theta: &DVector<f64>) -> f64;
    fn derivatives(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>);
}

struct DpoObjective<'a> {
    dataset: &'a PreferenceDataset,
    subset: &'a [usize],
    beta: f64,
}

impl Objective for DpoObjective<'_> {
    fn value(&self, theta: &DVector<f64>) -> f64 {
        let beta = self.beta;
        self.subset
            .iter()
            .map(|&i| {
                let p = &self.dataset.points()[i];
                let z = p.logit_unchecked(theta, beta);
                if p.feedback == Some(true) {
                    model::softplus(-z)
                } else {
                    model::softplus(z)
                }
            })
            .sum()
    }

    fn derivatives(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.dataset.dim();
        let beta = self.beta;
        let mut g = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        for &i in self.subset {
            let p = &self.dataset.points()[i];
            let z = p.logit_unchecked(theta, beta);
            let s = if p.feedback == Some(true) { 1.0 } else { 0.0 };
            g.axpy(beta * (model::sigmoid(z) - s), &p.phi, 1.0);
            h.ger(beta * beta * model::sigmoid_variance(z), &p.phi, &p.phi, 1.0);
        }
        (g, h)
    }
}

struct LogisticObjective<'a> {
    features: &'a DMatrix<f64>,
    labels: DVector<f64>,
}

impl Objective for LogisticObjective<'_> {
    fn value(&self, theta: &DVector<f64>) -> f64 {
        let z = self.features * theta;
        z.iter()
            .zip(self.labels.iter())
            .map(|(&z, &y)| if y > 0.5 { model::softplus(-z) } else { model::softplus(z) })
            .sum()
    }

    fn derivatives(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let z = self.features * theta;
        let residual = z.map(model::sigmoid) - &self.labels;
        let g = self.features.tr_mul(&residual);
        let w = z.map(model::sigmoid_variance);
        let mut weighted = self.features.clone();
        for (mut row, &wi) in weighted.row_iter_mut().zip(w.iter()) {
            row *= wi;
        }
        let h = self.features.tr_mul(&weighted);
        (g, h)
    }
}

struct Outcome {
    theta: DVector<f64>,
    iterations: usize,
    grad_norm: f64,
    objective: f64,
    converged: bool,
    projected: bool,
}

fn regularized(obj: &dyn Objective, theta: &DVector<f64>, ridge: f64) -> f64 {
    obj.value(theta) + 0.5 * ridge * theta.norm_squared()
}

fn newton_direction(g: &DVector<f64>, h: DMatrix<f64>) -> Option<DVector<f64>> {
    let chol = h.cholesky()?;
    let p = -chol.solve(g);
    p.iter().all(|x| x.is_finite()).then_some(p)
}

fn minimize(obj: &dyn Objective, init: DVector<f64>, opts: &FitOptions) -> Result<Outcome> {
    let d = init.len();
    let ridge = opts.ridge;
    let project = |t: DVector<f64>| match opts.constraint_radius {
        Some(r) => project_unit_ball(&t, r),
        None => t,
    };
    let failure = |iteration: usize, what: &str| Error::NumericalFailure {
        iteration,
        reason: format!("non-finite {what}"),
    };

    let mut theta = project(init);
    let mut f = regularized(obj, &theta, ridge);
    if !f.is_finite() {
        return Err(failure(0, "objective at initial point"));
    }
    let mut iterations = 0;
    let mut converged = false;
    let mut projected = false;
    let mut grad_norm;

    loop {
        let (mut g, mut h) = obj.derivatives(&theta);
        g.axpy(ridge, &theta, 1.0);
        for k in 0..d {
            h[(k, k)] += ridge;
        }
        if g.iter().any(|x| !x.is_finite()) || h.iter().any(|x| !x.is_finite()) {
            return Err(failure(iterations, "derivatives"));
        }
        let newton = newton_direction(&g, h);

        grad_norm = match opts.constraint_radius {
            Some(r) => (&theta - project_unit_ball(&(&theta - &g), r)).norm(),
            None => g.norm(),
        };
        let stationary = match opts.constraint_radius {
            Some(_) => grad_norm <= opts.grad_tol,
            None => {
                grad_norm <= opts.grad_tol
                    && newton
                        .as_ref()
                        .is_some_and(|p| p.norm() <= NEWTON_STEP_TOL * (1.0 + theta.norm()))
            }
        };
        if stationary {
            converged = true;
            break;
        }
        if iterations >= opts.max_iters {
            break;
        }

        let mut directions: Vec<(DVector<f64>, bool)> = Vec::with_capacity(2);
        if let Some(p) = newton {
            if g.dot(&p) < 0.0 {
                directions.push((p, true));
            }
        }
        directions.push((-&g, false));

        let mut accepted = None;
        'search: for (dir, is_newton) in &directions {
            let mut step = 1.0;
            for _ in 0..MAX_HALVINGS {
                let raw = &theta + dir * step;
                let was_clipped = opts.constraint_radius.is_some_and(|r| raw.norm() > r);
                let cand = project(raw);
                let delta = &cand - &theta;
                let slope = g.dot(&delta);
                if slope < 0.0 {
                    let fc = regularized(obj, &cand, ridge);
                    if fc.is_nan() {
                        return Err(failure(iterations, "objective"));
                    }
                    // Near the optimum the predicted decrease of a full
                    // Newton step falls below rounding in f.
                    let slack = if *is_newton && step == 1.0 { 1e-13 * (1.0 + f.abs()) } else { 0.0 };
                    if fc <= f + ARMIJO_C * slope + slack {
                        accepted = Some((cand, fc, was_clipped));
                        break 'search;
                    }
                }
                step *= 0.5;
            }
        }
        iterations += 1;
        match accepted {
            Some((cand, fc, clipped)) => {
                theta = cand;
                f = fc;
                projected = clipped;
            }
            None => break,
        }
    }

    Ok(Outcome { theta, iterations, grad_norm, objective: f, converged, projected })
}

/// Fits a DPO policy on `subset` by minimizing the negative log-likelihood
/// plus the ridge term. Starts from `init`, or zero.
pub fn fit_dpo(
    dataset: &PreferenceDataset,
    subset: &[usize],
    config: &ModelConfig,
    options: &FitOptions,
    init: Option<&Policy>,
) -> Result<FitReport> {
    config.validate()?;
    options.validate()?;
    if subset.is_empty() {
        return Err(invalid("cannot fit on an empty subset"));
    }
    for &i in subset {
        let p = dataset.point(i)?;
        if p.feedback.is_none() {
            return Err(Error::FeedbackMissing { id: i });
        }
    }
    let init = match init {
        Some(p) => {
            check_dim(dataset.dim(), p.dim())?;
            p.theta.clone()
        }
        None => DVector::zeros(dataset.dim()),
    };
    let obj = DpoObjective { dataset, subset, beta: config.beta };
    let out = minimize(&obj, init, options)?;
    let policy = Policy::new(out.theta);
    let final_negloglik = model::negloglik(dataset, subset, &policy, config.beta)?;
    Ok(FitReport {
        policy,
        iterations: out.iterations,
        final_grad_norm: out.grad_norm,
        final_negloglik,
        final_objective: out.objective,
        converged: out.converged,
        projected: out.projected,
    })
}

/// Ridge-regularized logistic regression and its asymptotic covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub theta_bar: DVector<f64>,
    pub sigma_bar: DMatrix<f64>,
    pub converged: bool,
}

/// Fits `P(label = 1 | x) = mu(x' theta)` with penalty `ridge / 2 * ||theta||^2`.
///
/// The covariance is `(H(theta_bar) + ridge * I)^-1` with `H` the Hessian of the
/// unregularized loss.
pub fn fit_logistic(features: &DMatrix<f64>, labels: &[bool], ridge: f64) -> Result<LogisticFit> {
    if features.nrows() == 0 || features.ncols() == 0 {
        return Err(invalid("logistic regression needs at least one row and column"));
    }
    check_dim(features.nrows(), labels.len())?;
    if !(ridge > 0.0 && ridge.is_finite()) {
        return Err(invalid("logistic ridge must be positive"));
    }
    let obj = LogisticObjective {
        features,
        labels: DVector::from_iterator(labels.len(), labels.iter().map(|&y| if y { 1.0 } else { 0.0 })),
    };
    let opts = FitOptions { ridge, ..FitOptions::default() };
    let d = features.ncols();
    let out = minimize(&obj, DVector::zeros(d), &opts)?;
    let (_, mut h) = obj.derivatives(&out.theta);
    for k in 0..d {
        h[(k, k)] += ridge;
    }
    let chol = h.cholesky().ok_or_else(|| Error::NumericalFailure {
        iteration: out.iterations,
        reason: "regularized logistic Hessian is not positive definite".into(),
    })?;
    let inv = chol.inverse();
    let sigma_bar = (&inv + inv.transpose()) * 0.5;
    Ok(LogisticFit { theta_bar: out.theta, sigma_bar, converged: out.converged })
}
