//! Logit-error and ordering metrics of an estimated policy against the
//! optimal one, always over the full dataset.

use crate::error::{check_dim, invalid, Result};
use crate::model::{Policy, PreferenceDataset};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub max_logit_error: f64,
    pub mean_logit_error: f64,
    pub error_rate: f64,
    /// Number of selected points behind the estimate.
    pub n_used: usize,
}

fn check(dataset: &PreferenceDataset, theta_hat: &Policy, theta_star: &Policy) -> Result<()> {
    if dataset.is_empty() {
        return Err(invalid("metrics need a non-empty dataset"));
    }
    check_dim(dataset.dim(), theta_hat.dim())?;
    check_dim(dataset.dim(), theta_star.dim())
}

fn logit_errors<'a>(
    dataset: &'a PreferenceDataset,
    theta_hat: &'a Policy,
    theta_star: &'a Policy,
    beta: f64,
) -> impl Iterator<Item = f64> + 'a {
    let delta = &theta_hat.theta - &theta_star.theta;
    dataset.points().iter().map(move |p| beta * p.phi.dot(&delta).abs())
}

/// `beta * max_i |phi_i' (theta_hat - theta_star)|`; biases cancel.
pub fn max_logit_error(
    dataset: &PreferenceDataset,
    theta_hat: &Policy,
    theta_star: &Policy,
    beta: f64,
) -> Result<f64> {
    check(dataset, theta_hat, theta_star)?;
    Ok(logit_errors(dataset, theta_hat, theta_star, beta).fold(0.0, f64::max))
}

/// `beta * mean_i |phi_i' (theta_hat - theta_star)|`.
pub fn mean_logit_error(
    dataset: &PreferenceDataset,
    theta_hat: &Policy,
    theta_star: &Policy,
    beta: f64,
) -> Result<f64> {
    check(dataset, theta_hat, theta_star)?;
    let total: f64 = logit_errors(dataset, theta_hat, theta_star, beta).sum();
    Ok(total / dataset.len() as f64)
}

/// Fraction of points whose preferred response differs between the two
/// policies, with `sgn(0) = +1`. Independent of `beta > 0`.
pub fn error_rate(
    dataset: &PreferenceDataset,
    theta_hat: &Policy,
    theta_star: &Policy,
    _beta: f64,
) -> Result<f64> {
    check(dataset, theta_hat, theta_star)?;
    let flips = dataset
        .points()
        .iter()
        .filter(|p| {
            let a = p.phi.dot(&theta_hat.theta) - p.bias >= 0.0;
            let b = p.phi.dot(&theta_star.theta) - p.bias >= 0.0;
            a != b
        })
        .count();
    Ok(flips as f64 / dataset.len() as f64)
}

pub fn evaluate(
    dataset: &PreferenceDataset,
    theta_hat: &Policy,
    theta_star: &Policy,
    beta: f64,
    n_used: usize,
) -> Result<MetricsReport> {
    Ok(MetricsReport {
        max_logit_error: max_logit_error(dataset, theta_hat, theta_star, beta)?,
        mean_logit_error: mean_logit_error(dataset, theta_hat, theta_star, beta)?,
        error_rate: error_rate(dataset, theta_hat, theta_star, beta)?,
        n_used,
    })
}
