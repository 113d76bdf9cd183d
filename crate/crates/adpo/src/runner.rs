//! Budget sweeps over selectors and seeds.
//!
//! Each `(algorithm, seed)` cell runs its selector once to the largest
//! budget; smaller budgets use prefixes of the greedy sequence. The policy
//! for budget `n` is refit on the first `n` selected points and scored
//! against the optimal policy over the full dataset. Cells run in parallel
//! and are merged back in plan order.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use adpo_core::selection::{self, SelectionConfig};
use adpo_core::{
    datagen, metrics, solver, Algorithm, FeedbackOracle, MetricsReport, Policy, PreferenceDataset,
    PreferencePoint, SelectionTrace,
};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::dataset_file::DatasetMeta;
use crate::error::{HarnessError, Result};
use crate::plan::Experiment;

/// First line of every results file.
pub const RESULTS_SCHEMA: &str = "# adpo-results v1";
pub const RESULTS_HEADER: &str =
    "algorithm,seed,budget,max_logit_error,mean_logit_error,error_rate,fit_converged,fingerprint";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub budget: usize,
    pub metrics: MetricsReport,
    pub fit_converged: bool,
    /// Selection time of the cell plus the fit for this budget. Kept out of
    /// the results file so that it stays reproducible.
    pub wall_time_ms: f64,
    pub fingerprint: String,
}

/// One `(algorithm, seed)` cell.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub trace: SelectionTrace,
    /// Oracle queries in order; empty for offline selectors.
    pub query_log: Vec<usize>,
    pub rows: Vec<ResultRow>,
}

/// Optimal policy used for scoring. The stored one is reused unless the run
/// changes `beta` or the parameter constraint.
pub fn reference_policy(dataset: &PreferenceDataset, meta: &DatasetMeta, exp: &Experiment) -> Result<Policy> {
    let stored = meta.fit_options();
    if meta.beta == exp.model.beta && stored.constraint_radius == exp.fit.constraint_radius {
        return Ok(meta.theta_star());
    }
    let options = adpo_core::FitOptions { constraint_radius: exp.fit.constraint_radius, ..stored };
    Ok(datagen::oracle_policy(dataset, &exp.model, &options)?)
}

/// Short hash of every setting that affects the metrics.
pub fn fingerprint(dataset: &PreferenceDataset, theta_star: &Policy, exp: &Experiment) -> String {
    let mut text = String::new();
    let m = &exp.model;
    let f = &exp.fit;
    let _ = write!(
        text,
        "n={};d={};beta={:e};gamma={:e};alpha={:e};pool={:?};refit={};iters={};tol={:e};ridge={:e};radius={:?};star=",
        dataset.len(),
        dataset.dim(),
        m.beta,
        m.gamma,
        m.alpha,
        exp.pool_size,
        exp.refit.name(),
        f.max_iters,
        f.grad_tol,
        f.ridge,
        f.constraint_radius,
    );
    for x in theta_star.theta.iter() {
        let _ = write!(text, "{:016x}", x.to_bits());
    }
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

fn selection_config(exp: &Experiment, seed: u64) -> SelectionConfig {
    SelectionConfig {
        budget: exp.max_budget(),
        pool_size: exp.pool_size,
        refit: exp.refit,
        model: exp.model,
        fit: exp.fit,
        rng_seed: seed,
        initial_policy: None,
    }
}

/// Copy of the stripped dataset carrying only the feedback the oracle
/// revealed.
fn revealed_dataset(stripped: &PreferenceDataset, oracle: &FeedbackOracle) -> Result<PreferenceDataset> {
    let points = stripped
        .points()
        .iter()
        .map(|p| PreferencePoint { feedback: oracle.revealed(p.id), ..p.clone() })
        .collect();
    Ok(PreferenceDataset::new(stripped.dim(), points)?)
}

pub fn run_cell(
    dataset: &PreferenceDataset,
    theta_star: &Policy,
    exp: &Experiment,
    fingerprint: &str,
    algorithm: Algorithm,
    seed: u64,
) -> Result<CellOutcome> {
    let sel = selection_config(exp, seed);
    let start = Instant::now();
    let (trace, query_log, labelled) = if algorithm.is_online() {
        let (stripped, mut oracle) = FeedbackOracle::split(dataset)?;
        let trace = match algorithm {
            Algorithm::Adpo => selection::select_adpo(&stripped, &mut oracle, &sel)?,
            _ => selection::select_pmc(&stripped, &mut oracle, &sel)?,
        };
        let labelled = revealed_dataset(&stripped, &oracle)?;
        (trace, oracle.query_log().to_vec(), std::borrow::Cow::Owned(labelled))
    } else {
        let trace = match algorithm {
            Algorithm::AdpoPlus => selection::select_adpo_plus(dataset, &sel)?,
            Algorithm::Uniform => selection::select_uniform(dataset, &sel)?,
            _ => selection::select_apo(dataset, &sel)?,
        };
        (trace, Vec::new(), std::borrow::Cow::Borrowed(dataset))
    };
    let select_ms = start.elapsed().as_secs_f64() * 1e3;

    let mut rows = Vec::with_capacity(exp.budgets.len());
    let mut warm: Option<Policy> = None;
    for &budget in &exp.budgets {
        let fit_start = Instant::now();
        let subset = &trace.chosen[..budget];
        let report = solver::fit_dpo(&labelled, subset, &exp.model, &exp.fit, warm.as_ref())?;
        let scores = metrics::evaluate(dataset, &report.policy, theta_star, exp.model.beta, budget)?;
        rows.push(ResultRow {
            algorithm,
            seed,
            budget,
            metrics: scores,
            fit_converged: report.converged,
            wall_time_ms: select_ms + fit_start.elapsed().as_secs_f64() * 1e3,
            fingerprint: fingerprint.to_owned(),
        });
        warm = Some(report.policy);
    }
    Ok(CellOutcome { algorithm, seed, trace, query_log, rows })
}

/// Runs every cell of the grid, in parallel, returning cells in plan order
/// (algorithms outer, seeds inner).
pub fn run_cells(dataset: &PreferenceDataset, meta: &DatasetMeta, exp: &Experiment) -> Result<Vec<CellOutcome>> {
    exp.validate(dataset.len())?;
    if !dataset.has_full_feedback() {
        return Err(HarnessError::Invalid("dataset must carry feedback for every point".into()));
    }
    let theta_star = reference_policy(dataset, meta, exp)?;
    let print = fingerprint(dataset, &theta_star, exp);
    let cells: Vec<(Algorithm, u64)> =
        exp.algorithms.iter().flat_map(|&a| exp.seeds.iter().map(move |&s| (a, s))).collect();
    cells
        .par_iter()
        .map(|&(a, s)| run_cell(dataset, &theta_star, exp, &print, a, s))
        .collect()
}

pub fn run(dataset: &PreferenceDataset, meta: &DatasetMeta, exp: &Experiment) -> Result<Vec<ResultRow>> {
    Ok(run_cells(dataset, meta, exp)?.into_iter().flat_map(|c| c.rows).collect())
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    let mut out = BufWriter::new(File::create(path).map_err(|e| HarnessError::io(path, e))?);
    for line in lines {
        writeln!(out, "{line}").map_err(|e| HarnessError::io(path, e))?;
    }
    out.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = format!("{RESULTS_SCHEMA}\n{RESULTS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{:e},{:e},{:e},{},{}",
            r.algorithm,
            r.seed,
            r.budget,
            r.metrics.max_logit_error,
            r.metrics.mean_logit_error,
            r.metrics.error_rate,
            r.fit_converged,
            r.fingerprint
        );
    }
    s
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    std::fs::write(path, results_csv(rows)).map_err(|e| HarnessError::io(path, e))
}

/// Wall-clock timings, one line per result row.
pub fn write_timings(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let header = std::iter::once("algorithm,seed,budget,wall_time_ms".to_owned());
    let body = rows
        .iter()
        .map(|r| format!("{},{},{},{:.3}", r.algorithm, r.seed, r.budget, r.wall_time_ms));
    write_lines(path, header.chain(body))
}
