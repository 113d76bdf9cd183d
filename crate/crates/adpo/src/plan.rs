//! Experiment grids: which selectors, budgets and seeds to run.

use std::path::PathBuf;

use adpo_core::{Algorithm, FitOptions, ModelConfig, RefitSchedule};

use crate::error::{HarnessError, Result};

/// Everything a run needs apart from file locations.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub algorithms: Vec<Algorithm>,
    /// Ascending and free of duplicates.
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub model: ModelConfig,
    /// `None` scores every remaining point.
    pub pool_size: Option<usize>,
    pub refit: RefitSchedule,
    pub fit: FitOptions,
}

impl Experiment {
    pub fn new(algorithms: Vec<Algorithm>, budgets: Vec<usize>, seeds: Vec<u64>) -> Self {
        Self {
            algorithms,
            budgets,
            seeds,
            model: ModelConfig::default(),
            pool_size: Some(adpo_core::selection::DEFAULT_POOL_SIZE),
            refit: RefitSchedule::Doubling,
            fit: FitOptions::default(),
        }
    }

    pub fn max_budget(&self) -> usize {
        self.budgets.last().copied().unwrap_or(0)
    }

    pub fn validate(&self, n_points: usize) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(HarnessError::Invalid("no algorithm selected".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Invalid("no seed given".into()));
        }
        if self.budgets.is_empty() || self.budgets[0] == 0 {
            return Err(HarnessError::Invalid("budgets must be positive".into()));
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::Invalid("budgets must be strictly ascending".into()));
        }
        if self.max_budget() > n_points {
            return Err(HarnessError::Invalid(format!(
                "budget {} exceeds dataset size {n_points}",
                self.max_budget()
            )));
        }
        if self.pool_size == Some(0) {
            return Err(HarnessError::Invalid("pool size must be at least 1".into()));
        }
        self.model.validate()?;
        self.fit.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub dataset: PathBuf,
    pub out_dir: PathBuf,
    pub experiment: Experiment,
}

/// Parses `32,64,128` or `pow2:5:12` (both exponents inclusive), then
/// sorts and deduplicates.
pub fn parse_budgets(text: &str) -> Result<Vec<usize>> {
    let bad = |why: &str| HarnessError::Invalid(format!("budgets `{text}`: {why}"));
    let mut budgets = if let Some(range) = text.strip_prefix("pow2:") {
        let (lo, hi) = range.split_once(':').ok_or_else(|| bad("expected pow2:LO:HI"))?;
        let lo: u32 = lo.trim().parse().map_err(|_| bad("bad lower exponent"))?;
        let hi: u32 = hi.trim().parse().map_err(|_| bad("bad upper exponent"))?;
        if lo > hi || hi >= usize::BITS - 1 {
            return Err(bad("exponents out of range"));
        }
        (lo..=hi).map(|k| 1usize << k).collect::<Vec<_>>()
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<usize>().map_err(|_| bad("expected integers")))
            .collect::<Result<Vec<_>>>()?
    };
    if budgets.contains(&0) {
        return Err(bad("budgets must be positive"));
    }
    budgets.sort_unstable();
    budgets.dedup();
    Ok(budgets)
}

/// Parses `1,2,3` or a half-open range `0..20`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || HarnessError::Invalid(format!("seeds `{text}`: expected a list or LO..HI"));
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
        if lo >= hi {
            return Err(bad());
        }
        return Ok((lo..hi).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}
