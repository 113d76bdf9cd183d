//! Synthetic preference datasets built from classification-style features.
//!
//! Pipeline: pair random positive and negative examples into feature
//! differences, fit a logistic model to them with every label set to 1,
//! sample feedback from that model, draw a reference policy around it, and
//! finally compute the optimal DPO policy on the full dataset.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::model::{self, ModelConfig, Policy, PreferenceDataset};
use crate::solver::{self, FitOptions};

// Independent RNG streams per pipeline stage.
const STREAM_FEATURES: u64 = 1;
const STREAM_PAIRS: u64 = 2;
const STREAM_FEEDBACK: u64 = 3;
const STREAM_REFERENCE: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorMode {
    /// Pairs drawn from externally supplied labelled features.
    ClassFeatures,
    /// Pairs drawn from a synthetic Gaussian class model.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub mode: GeneratorMode,
    pub n_points: usize,
    pub dim: usize,
    pub positive_label: Option<usize>,
    /// Ridge of the logistic fit that defines the feedback simulator.
    pub feature_ridge: f64,
    pub rng_seed: u64,
    /// `beta` of the optimal DPO policy stored with the dataset.
    pub beta: f64,
    pub fit: FitOptions,
    /// Synthetic classes in Gaussian mode.
    pub n_classes: usize,
    /// Synthetic examples per class in Gaussian mode.
    pub examples_per_class: usize,
    /// Within-cluster standard deviation relative to the spread of the
    /// cluster centers, in Gaussian mode.
    pub cluster_noise: f64,
}

impl GeneratorSpec {
    /// Desk-scale defaults: 8,192 points in 32 dimensions.
    pub fn desk(rng_seed: u64) -> Self {
        Self {
            mode: GeneratorMode::Gaussian,
            n_points: 8192,
            dim: 32,
            positive_label: None,
            feature_ridge: 1.0,
            rng_seed,
            beta: 1.0,
            fit: FitOptions::default(),
            n_classes: 10,
            examples_per_class: 500,
            cluster_noise: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 || self.dim == 0 {
            return Err(invalid("generator needs at least one point and one dimension"));
        }
        if self.feature_ridge.is_nan() || self.feature_ridge <= 0.0 {
            return Err(invalid("feature ridge must be positive"));
        }
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(invalid("beta must be positive"));
        }
        if self.mode == GeneratorMode::Gaussian && (self.cluster_noise.is_nan() || self.cluster_noise < 0.0) {
            return Err(invalid("cluster noise must be non-negative"));
        }
        if self.mode == GeneratorMode::Gaussian && (self.n_classes < 2 || self.examples_per_class == 0) {
            return Err(invalid("gaussian mode needs at least two classes with examples"));
        }
        self.fit.validate()
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(stream);
        rng
    }
}

/// Parameters behind a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Logistic simulator of the feedback.
    pub theta_bar: DVector<f64>,
    pub sigma_bar: DMatrix<f64>,
    /// Reference policy defining the biases.
    pub theta_ref: DVector<f64>,
    /// Optimal DPO policy on the full dataset.
    pub theta_star: Policy,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Feature differences of random positive and negative examples, sampled
/// with replacement. The positive label is drawn at random when the spec
/// leaves it open.
pub fn build_pairs_from_classes(
    features: &DMatrix<f64>,
    labels: &[usize],
    spec: &GeneratorSpec,
) -> Result<DMatrix<f64>> {
    if features.nrows() != labels.len() {
        return Err(invalid("one label per feature row is required"));
    }
    let mut rng = spec.rng(STREAM_PAIRS);
    let positive = match spec.positive_label {
        Some(l) => l,
        None => {
            let mut distinct: Vec<usize> = labels.to_vec();
            distinct.sort_unstable();
            distinct.dedup();
            if distinct.is_empty() {
                return Err(invalid("no labelled examples"));
            }
            distinct[rng.random_range(0..distinct.len())]
        }
    };
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| labels[i] == positive);
    if pos.is_empty() || neg.is_empty() {
        return Err(invalid(alloc::format!(
            "label {positive} needs both positive and negative examples"
        )));
    }
    let d = features.ncols();
    let mut rows = DMatrix::zeros(spec.n_points, d);
    for i in 0..spec.n_points {
        let a = pos[rng.random_range(0..pos.len())];
        let b = neg[rng.random_range(0..neg.len())];
        for j in 0..d {
            rows[(i, j)] = features[(a, j)] - features[(b, j)];
        }
    }
    Ok(rows)
}

/// Synthetic labelled features: each class is a mixture of two Gaussian
/// clusters with standard normal centers.
pub fn gaussian_class_features(spec: &GeneratorSpec) -> (DMatrix<f64>, Vec<usize>) {
    let mut rng = spec.rng(STREAM_FEATURES);
    let d = spec.dim;
    let centers: Vec<[DVector<f64>; 2]> = (0..spec.n_classes)
        .map(|_| {
            let mut c = || DVector::from_fn(d, |_, _| normal(&mut rng));
            [c(), c()]
        })
        .collect();
    let n = spec.n_classes * spec.examples_per_class;
    let mut features = DMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for (k, pair) in centers.iter().enumerate() {
        for e in 0..spec.examples_per_class {
            let row = k * spec.examples_per_class + e;
            let center = &pair[rng.random_range(0..2)];
            for j in 0..d {
                features[(row, j)] = center[j] + spec.cluster_noise * normal(&mut rng);
            }
            labels.push(k);
        }
    }
    (features, labels)
}

/// Feature differences from the synthetic class model, rescaled so the
/// largest row norm is exactly 1.
pub fn gaussian_phi(spec: &GeneratorSpec) -> Result<DMatrix<f64>> {
    let (features, labels) = gaussian_class_features(spec);
    let mut rows = build_pairs_from_classes(&features, &labels, spec)?;
    let max_norm = rows.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    if max_norm > 0.0 {
        rows /= max_norm;
    }
    Ok(rows)
}

/// Symmetric square root of a symmetric PSD matrix.
pub fn symmetric_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let root = eig.eigenvalues.map(|l| libm::sqrt(l.max(0.0)));
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// Turns feature differences into a complete preference dataset and its
/// ground truth.
pub fn synthesize_dataset(
    phi_rows: &DMatrix<f64>,
    spec: &GeneratorSpec,
) -> Result<(PreferenceDataset, GroundTruth)> {
    spec.validate()?;
    let n = phi_rows.nrows();
    if n == 0 {
        return Err(invalid("no feature rows"));
    }
    let simulator = solver::fit_logistic(phi_rows, &alloc::vec![true; n], spec.feature_ridge)?;
    let theta_bar = simulator.theta_bar;
    let sigma_bar = simulator.sigma_bar;

    let logits = phi_rows * &theta_bar;
    let mut rng = spec.rng(STREAM_FEEDBACK);
    let feedback: Vec<bool> = logits.iter().map(|&z| rng.random::<f64>() < model::sigmoid(z)).collect();

    let mut rng = spec.rng(STREAM_REFERENCE);
    let noise = DVector::from_fn(theta_bar.len(), |_, _| normal(&mut rng));
    let theta_ref = &theta_bar + symmetric_sqrt(&sigma_bar) * noise;
    let biases = phi_rows * &theta_ref;

    let dataset = PreferenceDataset::from_parts(phi_rows, biases.as_slice(), Some(&feedback))?;
    let config = ModelConfig { beta: spec.beta, ..ModelConfig::default() };
    let theta_star = oracle_policy(&dataset, &config, &spec.fit)?;
    Ok((dataset, GroundTruth { theta_bar, sigma_bar, theta_ref, theta_star }))
}

/// Where the feature differences of a generated dataset come from.
#[derive(Debug, Clone, Copy)]
pub enum FeatureSource<'a> {
    /// The synthetic Gaussian class model.
    Gaussian,
    /// Labelled example features to pair up.
    Classes { features: &'a DMatrix<f64>, labels: &'a [usize] },
    /// Precomputed feature differences, used as-is.
    Differences(&'a DMatrix<f64>),
}

/// Runs the full generation pipeline.
pub fn generate(spec: &GeneratorSpec, source: FeatureSource<'_>) -> Result<(PreferenceDataset, GroundTruth)> {
    spec.validate()?;
    let rows = match source {
        FeatureSource::Gaussian => gaussian_phi(spec)?,
        FeatureSource::Classes { features, labels } => build_pairs_from_classes(features, labels, spec)?,
        FeatureSource::Differences(rows) => rows.clone(),
    };
    synthesize_dataset(&rows, spec)
}

/// Optimal DPO policy over all points of a dataset with complete feedback.
pub fn oracle_policy(dataset: &PreferenceDataset, config: &ModelConfig, options: &FitOptions) -> Result<Policy> {
    let report = solver::fit_dpo(dataset, &dataset.all_indices(), config, options, None)?;
    if !report.converged {
        return Err(Error::NumericalFailure {
            iteration: report.iterations,
            reason: alloc::format!(
                "optimal policy fit did not converge (gradient norm {:e})",
                report.final_grad_norm
            ),
        });
    }
    Ok(report.policy)
}
