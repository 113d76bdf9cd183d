//! JSON Lines dataset files and their metadata sidecar.
//!
//! A dataset `data.jsonl` holds one record per point,
//! `{"id": 0, "phi": [..], "b": 0.1, "s": 1}`, and is accompanied by
//! `data.jsonl.meta.json` with the dimensions, the `beta` used for the
//! optimal policy, the ground-truth vectors and the generator settings.
//!
//! Embedding imports use the same line format with only `"phi"` (plus an
//! optional integer `"label"` for labelled class features).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use adpo_core::datagen::{GeneratorMode, GeneratorSpec, GroundTruth};
use adpo_core::nalgebra::{DMatrix, DVector};
use adpo_core::{FitOptions, Policy, PreferenceDataset, PreferencePoint};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const META_FORMAT: &str = "adpo-dataset/1";

#[derive(Debug, Serialize, Deserialize)]
struct PointRecord {
    id: usize,
    phi: Vec<f64>,
    b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s: Option<u8>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingRecord {
    phi: Vec<f64>,
    #[serde(default)]
    label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptionsRecord {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub ridge: f64,
    pub constraint_radius: Option<f64>,
}

impl From<&FitOptions> for FitOptionsRecord {
    fn from(o: &FitOptions) -> Self {
        Self {
            max_iters: o.max_iters,
            grad_tol: o.grad_tol,
            ridge: o.ridge,
            constraint_radius: o.constraint_radius,
        }
    }
}

impl From<&FitOptionsRecord> for FitOptions {
    fn from(o: &FitOptionsRecord) -> Self {
        Self {
            max_iters: o.max_iters,
            grad_tol: o.grad_tol,
            ridge: o.ridge,
            constraint_radius: o.constraint_radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecord {
    pub mode: String,
    pub n_points: usize,
    pub dim: usize,
    pub positive_label: Option<usize>,
    pub feature_ridge: f64,
    pub n_classes: usize,
    pub examples_per_class: usize,
    pub cluster_noise: f64,
    pub source: Option<String>,
}

impl GeneratorRecord {
    pub fn new(spec: &GeneratorSpec, source: Option<String>) -> Self {
        Self {
            mode: match spec.mode {
                GeneratorMode::Gaussian => "gaussian".into(),
                GeneratorMode::ClassFeatures => "class_features".into(),
            },
            n_points: spec.n_points,
            dim: spec.dim,
            positive_label: spec.positive_label,
            feature_ridge: spec.feature_ridge,
            n_classes: spec.n_classes,
            examples_per_class: spec.examples_per_class,
            cluster_noise: spec.cluster_noise,
            source,
        }
    }
}

/// Contents of the metadata sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format: String,
    pub d: usize,
    pub n: usize,
    pub beta: f64,
    pub seed: u64,
    pub theta_star: Vec<f64>,
    pub theta_bar: Vec<f64>,
    pub sigma_bar: Vec<Vec<f64>>,
    pub theta_ref: Vec<f64>,
    pub fit: FitOptionsRecord,
    pub generator: GeneratorRecord,
}

impl DatasetMeta {
    pub fn new(spec: &GeneratorSpec, truth: &GroundTruth, source: Option<String>) -> Self {
        let sigma = &truth.sigma_bar;
        Self {
            format: META_FORMAT.into(),
            d: spec.dim,
            n: spec.n_points,
            beta: spec.beta,
            seed: spec.rng_seed,
            theta_star: truth.theta_star.theta.iter().copied().collect(),
            theta_bar: truth.theta_bar.iter().copied().collect(),
            sigma_bar: (0..sigma.nrows()).map(|i| sigma.row(i).iter().copied().collect()).collect(),
            theta_ref: truth.theta_ref.iter().copied().collect(),
            fit: (&spec.fit).into(),
            generator: GeneratorRecord::new(spec, source),
        }
    }

    pub fn theta_star(&self) -> Policy {
        Policy::from_slice(&self.theta_star)
    }

    pub fn fit_options(&self) -> FitOptions {
        (&self.fit).into()
    }
}

/// Path of the metadata sidecar for a dataset file.
pub fn meta_path(dataset: &Path) -> PathBuf {
    let mut name = dataset.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::io(path, e))
}

pub fn write_dataset(path: &Path, dataset: &PreferenceDataset, meta: &DatasetMeta) -> Result<()> {
    let mut out = create(path)?;
    for p in dataset.points() {
        let rec = PointRecord {
            id: p.id,
            phi: p.phi.iter().copied().collect(),
            b: p.bias,
            s: p.feedback.map(u8::from),
        };
        let line = serde_json::to_string(&rec).map_err(|e| HarnessError::Invalid(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| HarnessError::io(path, e))?;
    }
    out.flush().map_err(|e| HarnessError::io(path, e))?;

    let meta_file = meta_path(path);
    let mut out = create(&meta_file)?;
    serde_json::to_writer_pretty(&mut out, meta).map_err(|e| HarnessError::Invalid(e.to_string()))?;
    writeln!(out).map_err(|e| HarnessError::io(&meta_file, e))?;
    out.flush().map_err(|e| HarnessError::io(&meta_file, e))
}

fn lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let f = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(BufReader::new(f).lines().enumerate().map(|(i, l)| (i + 1, l)))
}

pub fn read_dataset(path: &Path) -> Result<PreferenceDataset> {
    let mut points = Vec::new();
    let mut dim = None;
    for (line_no, line) in lines(path)? {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PointRecord =
            serde_json::from_str(&line).map_err(|e| HarnessError::parse(path, line_no, e))?;
        let feedback = match rec.s {
            None => None,
            Some(0) => Some(false),
            Some(1) => Some(true),
            Some(other) => return Err(HarnessError::parse(path, line_no, format!("feedback must be 0 or 1, got {other}"))),
        };
        let d = *dim.get_or_insert(rec.phi.len());
        if rec.phi.len() != d {
            return Err(HarnessError::parse(path, line_no, format!("expected {d} features, found {}", rec.phi.len())));
        }
        points.push(PreferencePoint { id: rec.id, phi: DVector::from_vec(rec.phi), bias: rec.b, feedback });
    }
    let dim = dim.ok_or_else(|| HarnessError::parse(path, 0, "dataset file is empty"))?;
    Ok(PreferenceDataset::new(dim, points)?)
}

pub fn read_meta(dataset: &Path) -> Result<DatasetMeta> {
    let path = meta_path(dataset);
    let f = File::open(&path).map_err(|e| HarnessError::io(&path, e))?;
    let meta: DatasetMeta = serde_json::from_reader(BufReader::new(f))
        .map_err(|e| HarnessError::parse(&path, e.line(), e))?;
    if meta.format != META_FORMAT {
        return Err(HarnessError::parse(&path, 1, format!("unsupported format `{}`", meta.format)));
    }
    Ok(meta)
}

/// Reads a dataset with its sidecar and checks that the two agree.
pub fn load(path: &Path) -> Result<(PreferenceDataset, DatasetMeta)> {
    let dataset = read_dataset(path)?;
    let meta = read_meta(path)?;
    if meta.d != dataset.dim() || meta.n != dataset.len() || meta.theta_star.len() != dataset.dim() {
        return Err(HarnessError::Invalid(format!(
            "metadata ({} x {}) does not match dataset ({} x {})",
            meta.n,
            meta.d,
            dataset.len(),
            dataset.dim()
        )));
    }
    Ok((dataset, meta))
}

/// Imported embedding rows, optionally labelled.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub rows: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
}

pub fn read_embeddings(path: &Path) -> Result<Embeddings> {
    let mut flat = Vec::new();
    let mut labels = Vec::new();
    let mut labelled = None;
    let mut dim = None;
    let mut n = 0;
    for (line_no, line) in lines(path)? {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EmbeddingRecord =
            serde_json::from_str(&line).map_err(|e| HarnessError::parse(path, line_no, e))?;
        let d = *dim.get_or_insert(rec.phi.len());
        if rec.phi.len() != d || d == 0 {
            return Err(HarnessError::parse(path, line_no, format!("expected {d} features, found {}", rec.phi.len())));
        }
        let has_label = rec.label.is_some();
        if *labelled.get_or_insert(has_label) != has_label {
            return Err(HarnessError::parse(path, line_no, "either every row or no row carries a label"));
        }
        labels.extend(rec.label);
        flat.extend(rec.phi);
        n += 1;
    }
    let d = dim.ok_or_else(|| HarnessError::parse(path, 0, "embedding file is empty"))?;
    Ok(Embeddings {
        rows: DMatrix::from_row_slice(n, d, &flat),
        labels: labelled.unwrap_or(false).then_some(labels),
    })
}
