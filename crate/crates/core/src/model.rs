//! Log-linear DPO preference model.
//!
//! Under a log-linear policy `pi(y | x; theta) ∝ exp(phi(x, y)' theta)` the
//! probability that the first response of point `i` is preferred is
//! `mu(beta * (phi_i' theta - b_i))`, where `phi_i` is the feature difference
//! of the two responses and `b_i` the log-ratio of the reference policy.
//! The negative log-likelihood is then a biased, `beta`-scaled logistic loss.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, invalid, Error, Result};

/// One prompt with two candidate responses, reduced to its feature difference.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePoint {
    pub id: usize,
    pub phi: DVector<f64>,
    pub bias: f64,
    /// `Some(true)` when the first response is preferred.
    pub feedback: Option<bool>,
}

impl PreferencePoint {
    pub fn new(id: usize, phi: DVector<f64>, bias: f64) -> Self {
        Self { id, phi, bias, feedback: None }
    }

    pub fn with_feedback(mut self, feedback: bool) -> Self {
        self.feedback = Some(feedback);
        self
    }

    pub fn dim(&self) -> usize {
        self.phi.len()
    }

    /// DPO logit `beta * (phi' theta - b)`.
    pub fn logit(&self, policy: &Policy, beta: f64) -> Result<f64> {
        check_dim(self.dim(), policy.dim())?;
        Ok(beta * (self.phi.dot(&policy.theta) - self.bias))
    }

    pub(crate) fn logit_unchecked(&self, theta: &DVector<f64>, beta: f64) -> f64 {
        beta * (self.phi.dot(theta) - self.bias)
    }
}

/// An ordered collection of preference points sharing one feature dimension.
///
/// Point ids are always `0..len()` in order.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceDataset {
    dim: usize,
    points: Vec<PreferencePoint>,
}

impl PreferenceDataset {
    pub fn new(dim: usize, points: Vec<PreferencePoint>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("feature dimension must be at least 1"));
        }
        for (i, p) in points.iter().enumerate() {
            if p.id != i {
                return Err(invalid(alloc::format!(
                    "point at position {i} has id {}, ids must be 0..N-1 in order",
                    p.id
                )));
            }
            check_dim(dim, p.dim())?;
            if !p.bias.is_finite() || p.phi.iter().any(|x| !x.is_finite()) {
                return Err(invalid(alloc::format!("point {i} has non-finite values")));
            }
        }
        Ok(Self { dim, points })
    }

    /// Builds a dataset from feature rows, biases and optional feedback.
    pub fn from_parts(
        phi_rows: &DMatrix<f64>,
        biases: &[f64],
        feedback: Option<&[bool]>,
    ) -> Result<Self> {
        let n = phi_rows.nrows();
        check_dim(n, biases.len())?;
        if let Some(s) = feedback {
            check_dim(n, s.len())?;
        }
        let points = (0..n)
            .map(|i| PreferencePoint {
                id: i,
                phi: phi_rows.row(i).transpose(),
                bias: biases[i],
                feedback: feedback.map(|s| s[i]),
            })
            .collect();
        Self::new(phi_rows.ncols(), points)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[PreferencePoint] {
        &self.points
    }

    pub fn point(&self, id: usize) -> Result<&PreferencePoint> {
        self.points
            .get(id)
            .ok_or_else(|| invalid(alloc::format!("index {id} out of range for {} points", self.len())))
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    pub fn has_full_feedback(&self) -> bool {
        self.points.iter().all(|p| p.feedback.is_some())
    }

    /// Splits off all feedback, leaving a feedback-free copy of the dataset.
    pub fn without_feedback(&self) -> (Self, Vec<Option<bool>>) {
        let feedback = self.points.iter().map(|p| p.feedback).collect();
        let mut stripped = self.clone();
        for p in &mut stripped.points {
            p.feedback = None;
        }
        (stripped, feedback)
    }

    /// Feature matrix with one row per point.
    pub fn phi_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.dim, |i, j| self.points[i].phi[j])
    }

    /// Rescales every `phi_i` by the largest feature norm and clamps biases
    /// into `[-1, 1]`, so that the bounded-feature regime holds.
    pub fn normalized(&self) -> Self {
        let max_norm = self.points.iter().map(|p| p.phi.norm()).fold(0.0, f64::max);
        let mut out = self.clone();
        for p in &mut out.points {
            if max_norm > 0.0 {
                p.phi /= max_norm;
            }
            p.bias = p.bias.clamp(-1.0, 1.0);
        }
        out
    }

    /// True when every `||phi_i|| <= 1` and `|b_i| <= 1` (up to rounding).
    pub fn is_normalized(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.phi.norm() <= 1.0 + 1e-12 && p.bias.abs() <= 1.0)
    }

    pub(crate) fn set_feedback(&mut self, id: usize, feedback: bool) {
        self.points[id].feedback = Some(feedback);
    }

    pub(crate) fn subset_points<'a>(
        &'a self,
        subset: &'a [usize],
    ) -> impl Iterator<Item = Result<&'a PreferencePoint>> + 'a {
        subset.iter().map(move |&i| self.point(i))
    }
}

/// Parameter of a log-linear policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub theta: DVector<f64>,
}

impl Policy {
    pub fn new(theta: DVector<f64>) -> Self {
        Self { theta }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { theta: DVector::zeros(dim) }
    }

    pub fn from_slice(theta: &[f64]) -> Self {
        Self { theta: DVector::from_column_slice(theta) }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn in_unit_ball(&self) -> bool {
        self.theta.norm() <= 1.0 + 1e-12
    }
}

/// DPO regularizer `beta`, design ridge `gamma` and UCB width `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub beta: f64,
    pub gamma: f64,
    pub alpha: f64,
}

impl ModelConfig {
    pub fn new(beta: f64, gamma: f64, alpha: f64) -> Result<Self> {
        let cfg = Self { beta, gamma, alpha };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma must be positive"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(invalid("alpha must be non-negative"));
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { beta: 1.0, gamma: 1.0, alpha: 3.0 }
    }
}

/// Logistic sigmoid, branching on sign so `exp` never overflows.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// `mu(z) * (1 - mu(z))`, computed from `|z|` so the result is exactly
/// symmetric in the sign of `z`.
pub fn sigmoid_variance(z: f64) -> f64 {
    let e = libm::exp(-libm::fabs(z));
    let denom = 1.0 + e;
    e / (denom * denom)
}

/// Probability that the first response is preferred.
pub fn preference_prob(point: &PreferencePoint, policy: &Policy, beta: f64) -> Result<f64> {
    Ok(sigmoid(point.logit(policy, beta)?))
}

fn feedback_of(point: &PreferencePoint) -> Result<bool> {
    point.feedback.ok_or(Error::FeedbackMissing { id: point.id })
}

/// DPO negative log-likelihood over `subset`.
pub fn negloglik(
    dataset: &PreferenceDataset,
    subset: &[usize],
    policy: &Policy,
    beta: f64,
) -> Result<f64> {
    check_dim(dataset.dim(), policy.dim())?;
    let mut total = 0.0;
    for p in dataset.subset_points(subset) {
        let p = p?;
        let z = p.logit_unchecked(&policy.theta, beta);
        // -log mu(z) = softplus(-z), -log(1 - mu(z)) = softplus(z)
        total += if feedback_of(p)? { softplus(-z) } else { softplus(z) };
    }
    Ok(total)
}

/// Gradient `beta * sum (mu_i - s_i) phi_i`.
pub fn gradient(
    dataset: &PreferenceDataset,
    subset: &[usize],
    policy: &Policy,
    beta: f64,
) -> Result<DVector<f64>> {
    check_dim(dataset.dim(), policy.dim())?;
    let mut g = DVector::zeros(dataset.dim());
    for p in dataset.subset_points(subset) {
        let p = p?;
        let s = if feedback_of(p)? { 1.0 } else { 0.0 };
        let mu = sigmoid(p.logit_unchecked(&policy.theta, beta));
        g.axpy(beta * (mu - s), &p.phi, 1.0);
    }
    Ok(g)
}

/// Hessian `beta^2 * sum mu_i (1 - mu_i) phi_i phi_i'`. Feedback is not needed.
pub fn hessian(
    dataset: &PreferenceDataset,
    subset: &[usize],
    policy: &Policy,
    beta: f64,
) -> Result<DMatrix<f64>> {
    check_dim(dataset.dim(), policy.dim())?;
    let d = dataset.dim();
    let mut h = DMatrix::zeros(d, d);
    for p in dataset.subset_points(subset) {
        let p = p?;
        let w = beta * beta * sigmoid_variance(p.logit_unchecked(&policy.theta, beta));
        h.ger(w, &p.phi, &p.phi, 1.0);
    }
    Ok(h)
}

/// Information weight `beta^2 * mu_i (1 - mu_i)`, at most `0.25 * beta^2`.
pub fn logit_weight(point: &PreferencePoint, policy: &Policy, beta: f64) -> Result<f64> {
    Ok(beta * beta * sigmoid_variance(point.logit(policy, beta)?))
}
