//! Data-point selection: online and offline greedy D-optimal selection,
//! plus the uniform, raw-feature design and reward-gap baselines.
//!
//! Every greedy selector keeps a [`DesignState`] over the vectors it has
//! chosen and picks, in each round, the candidate with the largest
//! `v' H^-1 v`. Ties go to the lowest point id.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::design::DesignState;
use crate::error::{check_dim, invalid, Error, Result};
use crate::model::{self, ModelConfig, Policy, PreferenceDataset, PreferencePoint};
use crate::solver::{self, FitOptions};

/// Default size of the random candidate pool scored in each round.
pub const DEFAULT_POOL_SIZE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Adpo,
    AdpoPlus,
    Uniform,
    Apo,
    Pmc,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::Adpo, Algorithm::AdpoPlus, Algorithm::Uniform, Algorithm::Apo, Algorithm::Pmc];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Adpo => "adpo",
            Algorithm::AdpoPlus => "adpo_plus",
            Algorithm::Uniform => "uniform",
            Algorithm::Apo => "apo",
            Algorithm::Pmc => "pmc",
        }
    }

    /// Selectors that elicit feedback through a [`FeedbackOracle`].
    pub fn is_online(self) -> bool {
        matches!(self, Algorithm::Adpo | Algorithm::Pmc)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| invalid(format!("unknown algorithm `{s}`")))
    }
}

/// When the online selectors re-estimate the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefitSchedule {
    /// Before rounds 2, 4, 8, ...
    #[default]
    Doubling,
    /// Before every round after the first.
    Every,
    /// Keep the initial policy throughout.
    Never,
}

impl RefitSchedule {
    /// Whether the policy is refit before 1-based round `t`.
    pub fn due(self, t: usize) -> bool {
        match self {
            RefitSchedule::Doubling => t >= 2 && t.is_power_of_two(),
            RefitSchedule::Every => t >= 2,
            RefitSchedule::Never => false,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RefitSchedule::Doubling => "doubling",
            RefitSchedule::Every => "every",
            RefitSchedule::Never => "never",
        }
    }
}

impl FromStr for RefitSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "doubling" => Ok(RefitSchedule::Doubling),
            "every" => Ok(RefitSchedule::Every),
            "never" => Ok(RefitSchedule::Never),
            _ => Err(invalid(format!("unknown refit schedule `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub budget: usize,
    /// `None` scores every remaining point in each round.
    pub pool_size: Option<usize>,
    pub refit: RefitSchedule,
    pub model: ModelConfig,
    pub fit: FitOptions,
    pub rng_seed: u64,
    /// Policy used before any feedback is available; zero when absent.
    pub initial_policy: Option<Policy>,
}

impl SelectionConfig {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            pool_size: Some(DEFAULT_POOL_SIZE),
            refit: RefitSchedule::Doubling,
            model: ModelConfig::default(),
            fit: FitOptions::default(),
            rng_seed: 0,
            initial_policy: None,
        }
    }

    fn validate(&self, dataset: &PreferenceDataset) -> Result<()> {
        self.model.validate()?;
        self.fit.validate()?;
        if self.budget == 0 {
            return Err(invalid("budget must be at least 1"));
        }
        if self.budget > dataset.len() {
            return Err(invalid(format!(
                "budget {} exceeds dataset size {}",
                self.budget,
                dataset.len()
            )));
        }
        if self.pool_size == Some(0) {
            return Err(invalid("pool size must be at least 1"));
        }
        if let Some(p) = &self.initial_policy {
            check_dim(dataset.dim(), p.dim())?;
        }
        Ok(())
    }

    fn initial_policy(&self, dim: usize) -> Policy {
        self.initial_policy.clone().unwrap_or_else(|| Policy::zeros(dim))
    }
}

/// Hidden feedback for every point, revealed one query at a time.
#[derive(Debug, Clone)]
pub struct FeedbackOracle {
    hidden: Vec<bool>,
    queried: Vec<bool>,
    query_log: Vec<usize>,
}

impl FeedbackOracle {
    pub fn new(hidden: Vec<bool>) -> Self {
        let n = hidden.len();
        Self { hidden, queried: alloc::vec![false; n], query_log: Vec::new() }
    }

    /// Builds an oracle from a dataset with complete feedback and returns
    /// the feedback-free copy that selectors are allowed to see.
    pub fn split(dataset: &PreferenceDataset) -> Result<(PreferenceDataset, Self)> {
        let (stripped, feedback) = dataset.without_feedback();
        let hidden = feedback
            .into_iter()
            .enumerate()
            .map(|(id, s)| s.ok_or(Error::FeedbackMissing { id }))
            .collect::<Result<Vec<_>>>()?;
        Ok((stripped, Self::new(hidden)))
    }

    pub fn len(&self) -> usize {
        self.hidden.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.is_empty()
    }

    /// Reveals the feedback of point `id`. Each point may be queried once.
    pub fn query(&mut self, id: usize) -> Result<bool> {
        let Some(&s) = self.hidden.get(id) else {
            return Err(invalid(format!("oracle has no point {id}")));
        };
        if self.queried[id] {
            return Err(Error::ContractViolation(format!("point {id} queried twice")));
        }
        self.queried[id] = true;
        self.query_log.push(id);
        Ok(s)
    }

    pub fn query_log(&self) -> &[usize] {
        &self.query_log
    }

    /// Feedback of an already queried point.
    pub fn revealed(&self, id: usize) -> Option<bool> {
        (*self.queried.get(id)?).then(|| self.hidden[id])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace {
    pub algorithm: Algorithm,
    /// Selected point ids in selection order.
    pub chosen: Vec<usize>,
    /// Score of the chosen point in each round (empty for uniform).
    pub per_round_score: Vec<f64>,
    /// Rounds before which the policy was re-estimated.
    pub refit_rounds: Vec<usize>,
    /// `(first round, policy)` for every policy the selector acted on.
    pub policy_history: Vec<(usize, Policy)>,
    pub kappa_estimate: Option<f64>,
    /// Final design; `None` for selectors that keep no design.
    pub design_final: Option<DesignState>,
}

impl SelectionTrace {
    fn new(algorithm: Algorithm, budget: usize) -> Self {
        Self {
            algorithm,
            chosen: Vec::with_capacity(budget),
            per_round_score: Vec::with_capacity(budget),
            refit_rounds: Vec::new(),
            policy_history: Vec::new(),
            kappa_estimate: None,
            design_final: None,
        }
    }

    /// Policy in effect at 1-based round `t`.
    pub fn policy_at(&self, t: usize) -> Option<&Policy> {
        self.policy_history.iter().rev().find(|(start, _)| *start <= t).map(|(_, p)| p)
    }
}

/// Optimistic information weight `mu(z) (1 - mu(z))` at the logit shrunk
/// toward zero by `alpha` confidence widths.
pub fn ucb_weight(
    point: &PreferencePoint,
    policy_hat: &Policy,
    cov: &DMatrix<f64>,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    let d = point.dim();
    check_dim(d, policy_hat.dim())?;
    check_dim(d, cov.nrows())?;
    check_dim(d, cov.ncols())?;
    let logit = point.logit_unchecked(&policy_hat.theta, beta);
    let width = point.phi.dot(&(cov * &point.phi)).max(0.0);
    Ok(shrunk_weight(logit, width, alpha))
}

fn shrunk_weight(logit: f64, width_sq: f64, alpha: f64) -> f64 {
    let z = (libm::fabs(logit) - alpha * libm::sqrt(width_sq)).max(0.0);
    model::sigmoid_variance(z)
}

/// Acquisition vector `beta * sqrt(w) * phi`.
///
/// `w` is the plug-in weight `mu (1 - mu)`, or its optimistic counterpart
/// when a covariance is given and `alpha > 0`.
pub fn acquisition_vector(
    point: &PreferencePoint,
    policy_hat: &Policy,
    config: &ModelConfig,
    cov: Option<&DMatrix<f64>>,
) -> Result<DVector<f64>> {
    check_dim(point.dim(), policy_hat.dim())?;
    let w = match cov {
        Some(c) if config.alpha > 0.0 => ucb_weight(point, policy_hat, c, config.alpha, config.beta)?,
        _ => model::sigmoid_variance(point.logit_unchecked(&policy_hat.theta, config.beta)),
    };
    Ok(&point.phi * (config.beta * libm::sqrt(w)))
}

/// Same as [`acquisition_vector`] with the design inverse as covariance.
fn design_vector(point: &PreferencePoint, policy: &Policy, config: &ModelConfig, design: &DesignState) -> DVector<f64> {
    let logit = point.logit_unchecked(&policy.theta, config.beta);
    let w = if config.alpha > 0.0 {
        shrunk_weight(logit, design.quad(&point.phi), config.alpha)
    } else {
        model::sigmoid_variance(logit)
    };
    &point.phi * (config.beta * libm::sqrt(w))
}

struct Rounds {
    rng: ChaCha8Rng,
    taken: Vec<bool>,
    pool_size: Option<usize>,
}

impl Rounds {
    fn new(n: usize, sel: &SelectionConfig) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(sel.rng_seed),
            taken: alloc::vec![false; n],
            pool_size: sel.pool_size,
        }
    }

    /// Candidate ids for this round, ascending.
    fn pool(&mut self) -> Vec<usize> {
        let remaining: Vec<usize> =
            self.taken.iter().enumerate().filter(|(_, t)| !**t).map(|(i, _)| i).collect();
        match self.pool_size {
            Some(k) if remaining.len() > k => {
                let mut picked: Vec<usize> = index::sample(&mut self.rng, remaining.len(), k)
                    .into_iter()
                    .map(|j| remaining[j])
                    .collect();
                picked.sort_unstable();
                picked
            }
            _ => remaining,
        }
    }

    fn take(&mut self, id: usize) {
        self.taken[id] = true;
    }
}

/// Highest score over ascending ids; the first maximum wins.
fn argmax(pool: &[usize], mut score: impl FnMut(usize) -> f64) -> (usize, f64) {
    let mut best = (pool[0], f64::NEG_INFINITY);
    for &i in pool {
        let s = score(i);
        if s > best.1 {
            best = (i, s);
        }
    }
    best
}

fn require_hidden(dataset: &PreferenceDataset) -> Result<()> {
    if dataset.points().iter().any(|p| p.feedback.is_some()) {
        return Err(Error::ContractViolation(
            "online selectors must not see stored feedback".into(),
        ));
    }
    Ok(())
}

fn check_oracle(dataset: &PreferenceDataset, oracle: &FeedbackOracle) -> Result<()> {
    check_dim(dataset.len(), oracle.len())
}

fn refit(
    working: &PreferenceDataset,
    chosen: &[usize],
    sel: &SelectionConfig,
    warm: &Policy,
) -> Result<Policy> {
    Ok(solver::fit_dpo(working, chosen, &sel.model, &sel.fit, Some(warm))?.policy)
}

/// Online active DPO: greedy log-determinant maximization with feedback
/// elicited for each chosen point and periodic policy refits.
pub fn select_adpo(
    dataset: &PreferenceDataset,
    oracle: &mut FeedbackOracle,
    sel: &SelectionConfig,
) -> Result<SelectionTrace> {
    sel.validate(dataset)?;
    require_hidden(dataset)?;
    check_oracle(dataset, oracle)?;
    let cfg = &sel.model;
    let mut working = dataset.clone();
    let mut design = DesignState::new(dataset.dim(), cfg.gamma)?;
    let mut rounds = Rounds::new(dataset.len(), sel);
    let mut trace = SelectionTrace::new(Algorithm::Adpo, sel.budget);
    let mut policy = sel.initial_policy(dataset.dim());
    trace.policy_history.push((1, policy.clone()));

    for t in 1..=sel.budget {
        if sel.refit.due(t) {
            policy = refit(&working, &trace.chosen, sel, &policy)?;
            trace.refit_rounds.push(t);
            trace.policy_history.push((t, policy.clone()));
        }
        let pool = rounds.pool();
        let points = dataset.points();
        let (best, score) =
            argmax(&pool, |i| design.quad(&design_vector(&points[i], &policy, cfg, &design)));
        let v = design_vector(&points[best], &policy, cfg, &design);
        let s = oracle.query(best)?;
        working.set_feedback(best, s);
        design.update(&v)?;
        rounds.take(best);
        trace.chosen.push(best);
        trace.per_round_score.push(score);
    }
    trace.design_final = Some(design);
    Ok(trace)
}

/// Greedy log-determinant maximization with a fixed policy estimate.
pub fn select_with_policy(
    dataset: &PreferenceDataset,
    sel: &SelectionConfig,
    policy: &Policy,
) -> Result<SelectionTrace> {
    sel.validate(dataset)?;
    check_dim(dataset.dim(), policy.dim())?;
    let cfg = &sel.model;
    let mut design = DesignState::new(dataset.dim(), cfg.gamma)?;
    let mut rounds = Rounds::new(dataset.len(), sel);
    let mut trace = SelectionTrace::new(Algorithm::AdpoPlus, sel.budget);
    trace.policy_history.push((1, policy.clone()));
    let points = dataset.points();
    for _ in 0..sel.budget {
        let pool = rounds.pool();
        let (best, score) =
            argmax(&pool, |i| design.quad(&design_vector(&points[i], policy, cfg, &design)));
        let v = design_vector(&points[best], policy, cfg, &design);
        design.update(&v)?;
        rounds.take(best);
        trace.chosen.push(best);
        trace.per_round_score.push(score);
    }
    trace.design_final = Some(design);
    Ok(trace)
}

/// Offline active DPO: estimates the policy once from all stored feedback,
/// then selects greedily with that estimate.
pub fn select_adpo_plus(dataset: &PreferenceDataset, sel: &SelectionConfig) -> Result<SelectionTrace> {
    sel.validate(dataset)?;
    if let Some(p) = dataset.points().iter().find(|p| p.feedback.is_none()) {
        return Err(Error::FeedbackMissing { id: p.id });
    }
    let init = sel.initial_policy(dataset.dim());
    let fit = solver::fit_dpo(dataset, &dataset.all_indices(), &sel.model, &sel.fit, Some(&init))?;
    select_with_policy(dataset, sel, &fit.policy)
}

/// Uniform sampling without replacement.
pub fn select_uniform(dataset: &PreferenceDataset, sel: &SelectionConfig) -> Result<SelectionTrace> {
    sel.validate(dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sel.rng_seed);
    let mut trace = SelectionTrace::new(Algorithm::Uniform, sel.budget);
    trace.chosen = index::sample(&mut rng, dataset.len(), sel.budget).into_vec();
    Ok(trace)
}

/// Greedy design on the raw feature differences, ignoring the logistic
/// weights, `beta` and all feedback.
pub fn select_apo(dataset: &PreferenceDataset, sel: &SelectionConfig) -> Result<SelectionTrace> {
    sel.validate(dataset)?;
    let mut design = DesignState::new(dataset.dim(), sel.model.gamma)?;
    let mut rounds = Rounds::new(dataset.len(), sel);
    let mut trace = SelectionTrace::new(Algorithm::Apo, sel.budget);
    let points = dataset.points();
    for _ in 0..sel.budget {
        let pool = rounds.pool();
        let (best, score) = argmax(&pool, |i| design.quad(&points[i].phi));
        design.update(&points[best].phi)?;
        rounds.take(best);
        trace.chosen.push(best);
        trace.per_round_score.push(score);
    }
    trace.design_final = Some(design);
    Ok(trace)
}

/// Picks the point with the largest estimated reward gap
/// `|beta (phi' theta_hat - b)|`, refitting on elicited feedback.
pub fn select_pmc(
    dataset: &PreferenceDataset,
    oracle: &mut FeedbackOracle,
    sel: &SelectionConfig,
) -> Result<SelectionTrace> {
    sel.validate(dataset)?;
    require_hidden(dataset)?;
    check_oracle(dataset, oracle)?;
    let beta = sel.model.beta;
    let mut working = dataset.clone();
    let mut rounds = Rounds::new(dataset.len(), sel);
    let mut trace = SelectionTrace::new(Algorithm::Pmc, sel.budget);
    let mut policy = sel.initial_policy(dataset.dim());
    trace.policy_history.push((1, policy.clone()));
    let points = dataset.points();
    for t in 1..=sel.budget {
        if sel.refit.due(t) {
            policy = refit(&working, &trace.chosen, sel, &policy)?;
            trace.refit_rounds.push(t);
            trace.policy_history.push((t, policy.clone()));
        }
        let pool = rounds.pool();
        let (best, score) =
            argmax(&pool, |i| libm::fabs(points[i].logit_unchecked(&policy.theta, beta)));
        let s = oracle.query(best)?;
        working.set_feedback(best, s);
        rounds.take(best);
        trace.chosen.push(best);
        trace.per_round_score.push(score);
    }
    Ok(trace)
}

/// Replays a greedy trace and measures the worst ratio, over all rounds and
/// all points (chosen ones included), of a point's variance to the variance
/// of the point actually chosen. Returns `f64::INFINITY` if a chosen point
/// had zero variance.
pub fn empirical_kappa(
    dataset: &PreferenceDataset,
    trace: &SelectionTrace,
    sel: &SelectionConfig,
) -> Result<f64> {
    let raw = match trace.algorithm {
        Algorithm::Adpo | Algorithm::AdpoPlus => false,
        Algorithm::Apo => true,
        other => return Err(invalid(format!("{other} keeps no design to replay"))),
    };
    let cfg = &sel.model;
    let mut design = DesignState::new(dataset.dim(), cfg.gamma)?;
    let points = dataset.points();
    let mut kappa: f64 = 1.0;
    for (k, &chosen) in trace.chosen.iter().enumerate() {
        let t = k + 1;
        let vector = |i: usize| -> Result<DVector<f64>> {
            if raw {
                Ok(points[i].phi.clone())
            } else {
                let policy = trace
                    .policy_at(t)
                    .ok_or_else(|| invalid(format!("trace has no policy for round {t}")))?;
                Ok(design_vector(&points[i], policy, cfg, &design))
            }
        };
        let chosen_v = vector(dataset.point(chosen)?.id)?;
        let denom = design.quad(&chosen_v);
        let mut top: f64 = 0.0;
        for i in 0..dataset.len() {
            top = top.max(design.quad(&vector(i)?));
        }
        if denom <= 0.0 {
            if top > 0.0 {
                return Ok(f64::INFINITY);
            }
        } else {
            kappa = kappa.max(top / denom);
        }
        design.update(&chosen_v)?;
    }
    Ok(kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::Rng;

    fn dataset(rows: &[&[f64]], biases: &[f64], feedback: Option<&[bool]>) -> PreferenceDataset {
        let d = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let m = DMatrix::from_row_slice(rows.len(), d, &flat);
        PreferenceDataset::from_parts(&m, biases, feedback).unwrap()
    }

    fn random_dataset(n: usize, d: usize, seed: u64) -> PreferenceDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        let s: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        PreferenceDataset::from_parts(&m, &b, Some(&s)).unwrap()
    }

    fn no_pool(budget: usize) -> SelectionConfig {
        SelectionConfig { pool_size: None, ..SelectionConfig::new(budget) }
    }

    #[test]
    fn acquisition_vector_cases() {
        let p = PreferencePoint::new(0, DVector::from_vec(vec![2.0, -1.0]), 0.0);
        let zero = Policy::zeros(2);
        let cfg = ModelConfig::new(1.0, 1.0, 0.0).unwrap();
        let v = acquisition_vector(&p, &zero, &cfg, None).unwrap();
        assert_eq!(v, &p.phi * 0.5);
        let cfg3 = ModelConfig::new(3.0, 1.0, 0.0).unwrap();
        let v3 = acquisition_vector(&p, &zero, &cfg3, None).unwrap();
        assert!((v3 - &v * 3.0).norm() < 1e-15);
        // alpha = 0 ignores any covariance
        let pol = Policy::from_slice(&[0.4, 0.3]);
        let cov = DMatrix::identity(2, 2) * 7.0;
        let a = acquisition_vector(&p, &pol, &cfg, Some(&cov)).unwrap();
        let b = acquisition_vector(&p, &pol, &cfg, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ucb_weight_cases() {
        let p = PreferencePoint::new(0, DVector::from_vec(vec![1.0, 0.0]), 0.2);
        let pol = Policy::from_slice(&[1.0, 0.0]);
        let cov = DMatrix::identity(2, 2);
        // width 3 exceeds |logit| = 0.8
        assert_eq!(ucb_weight(&p, &pol, &cov, 3.0, 1.0).unwrap(), 0.25);
        let plug = model::logit_weight(&p, &pol, 1.0).unwrap();
        assert_eq!(ucb_weight(&p, &pol, &cov, 0.0, 1.0).unwrap(), plug);
        let neg = Policy::from_slice(&[-0.6, 0.0]);
        let plug_neg = model::sigmoid_variance(0.8);
        assert_eq!(ucb_weight(&p, &neg, &cov, 0.0, 1.0).unwrap(), plug_neg);
    }

    #[test]
    fn oracle_rejects_second_query() {
        let mut o = FeedbackOracle::new(vec![true, false]);
        assert!(o.query(1).is_ok());
        assert!(matches!(o.query(1), Err(Error::ContractViolation(_))));
        assert!(o.query(5).is_err());
        assert_eq!(o.query_log(), &[1]);
        assert_eq!(o.revealed(1), Some(false));
        assert_eq!(o.revealed(0), None);
    }

    #[test]
    fn first_round_picks_largest_norm() {
        let ds = dataset(&[&[0.1, 0.2], &[0.9, 0.0], &[0.0, -0.9], &[0.3, 0.3]], &[0.0; 4], None);
        let mut o = FeedbackOracle::new(vec![true; 4]);
        let t = select_adpo(&ds, &mut o, &no_pool(1)).unwrap();
        // ties between ids 1 and 2 go to the lower id
        assert_eq!(t.chosen, vec![1]);
        assert_eq!(o.query_log(), &[1]);
    }

    #[test]
    fn full_budget_is_a_permutation() {
        let full = random_dataset(30, 3, 1);
        let (ds, mut o) = FeedbackOracle::split(&full).unwrap();
        let t = select_adpo(&ds, &mut o, &no_pool(30)).unwrap();
        let mut c = t.chosen.clone();
        c.sort_unstable();
        assert_eq!(c, (0..30).collect::<Vec<_>>());
        assert_eq!(o.query_log(), t.chosen.as_slice());
        assert_eq!(t.refit_rounds, vec![2, 4, 8, 16]);
    }

    #[test]
    fn online_selectors_refuse_visible_feedback() {
        let full = random_dataset(10, 2, 2);
        let mut o = FeedbackOracle::new(vec![true; 10]);
        assert!(matches!(select_adpo(&full, &mut o, &no_pool(3)), Err(Error::ContractViolation(_))));
        assert!(matches!(select_pmc(&full, &mut o, &no_pool(3)), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn budget_checks() {
        let ds = random_dataset(5, 2, 3);
        assert!(matches!(select_uniform(&ds, &no_pool(6)), Err(Error::InvalidInput(_))));
        assert!(matches!(select_apo(&ds, &no_pool(0)), Err(Error::InvalidInput(_))));
        assert!(select_adpo_plus(&ds, &no_pool(6)).is_err());
    }

    #[test]
    fn adpo_plus_requires_feedback() {
        let (ds, _) = random_dataset(5, 2, 3).without_feedback();
        assert_eq!(select_adpo_plus(&ds, &no_pool(2)).unwrap_err(), Error::FeedbackMissing { id: 0 });
    }

    #[test]
    fn fixed_zero_policy_matches_online_first_round() {
        let full = random_dataset(40, 4, 4);
        let (ds, mut o) = FeedbackOracle::split(&full).unwrap();
        let online = select_adpo(&ds, &mut o, &no_pool(1)).unwrap();
        let fixed = select_with_policy(&full, &no_pool(1), &Policy::zeros(4)).unwrap();
        assert_eq!(online.chosen, fixed.chosen);
    }

    #[test]
    fn offline_scores_do_not_increase() {
        let full = random_dataset(60, 3, 5);
        let mut sel = no_pool(60);
        sel.model.alpha = 0.0;
        let t = select_adpo_plus(&full, &sel).unwrap();
        for w in t.per_round_score.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn selectors_are_deterministic() {
        let full = random_dataset(300, 3, 6);
        let sel = SelectionConfig { rng_seed: 9, pool_size: Some(16), ..SelectionConfig::new(40) };
        assert_eq!(select_adpo_plus(&full, &sel).unwrap(), select_adpo_plus(&full, &sel).unwrap());
        assert_eq!(select_uniform(&full, &sel).unwrap(), select_uniform(&full, &sel).unwrap());
        assert_eq!(select_apo(&full, &sel).unwrap(), select_apo(&full, &sel).unwrap());
        let (ds, _) = FeedbackOracle::split(&full).unwrap();
        let run = |f: fn(&PreferenceDataset, &mut FeedbackOracle, &SelectionConfig) -> Result<SelectionTrace>| {
            let (_, mut o) = FeedbackOracle::split(&full).unwrap();
            f(&ds, &mut o, &sel).unwrap()
        };
        assert_eq!(run(select_adpo), run(select_adpo));
        assert_eq!(run(select_pmc), run(select_pmc));
    }

    #[test]
    fn uniform_full_budget_is_permutation() {
        let ds = random_dataset(25, 2, 7);
        let t = select_uniform(&ds, &SelectionConfig::new(25)).unwrap();
        let mut c = t.chosen;
        c.sort_unstable();
        assert_eq!(c, (0..25).collect::<Vec<_>>());
    }

    #[test]
    fn apo_matches_adpo_when_weights_are_one() {
        // beta = 2 at zero logits gives beta^2 / 4 = 1
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = DMatrix::from_fn(50, 3, |_, _| rng.random_range(-1.0..1.0));
        let full = PreferenceDataset::from_parts(&m, &[0.0; 50], Some(&[true; 50])).unwrap();
        let mut sel = SelectionConfig { pool_size: Some(10), rng_seed: 3, ..SelectionConfig::new(20) };
        sel.model = ModelConfig::new(2.0, 1.0, 0.0).unwrap();
        sel.refit = RefitSchedule::Never;
        let (ds, mut o) = FeedbackOracle::split(&full).unwrap();
        let adpo = select_adpo(&ds, &mut o, &sel).unwrap();
        let apo = select_apo(&full, &sel).unwrap();
        assert_eq!(adpo.chosen, apo.chosen);
        let n = ds.len();
        let norms: Vec<f64> = (0..n).map(|i| full.points()[i].phi.norm_squared()).collect();
        let first = select_apo(&full, &no_pool(1)).unwrap().chosen[0];
        assert!(norms.iter().all(|&x| x <= norms[first]));
    }

    #[test]
    fn pmc_score_cases() {
        let ds = dataset(&[&[1.0], &[2.0], &[3.0]], &[0.5, -2.0, 1.0], None);
        let mut o = FeedbackOracle::new(vec![true; 3]);
        let t = select_pmc(&ds, &mut o, &no_pool(1)).unwrap();
        assert_eq!(t.chosen, vec![1]);
        assert_eq!(t.per_round_score, vec![2.0]);
        let flat = dataset(&[&[1.0], &[2.0], &[3.0]], &[0.0; 3], None);
        let mut o = FeedbackOracle::new(vec![true; 3]);
        assert_eq!(select_pmc(&flat, &mut o, &no_pool(1)).unwrap().chosen, vec![0]);
        // joint negation of phi and b leaves the ordering unchanged
        let neg = dataset(&[&[-1.0], &[-2.0], &[-3.0]], &[-0.5, 2.0, -1.0], None);
        let mut o = FeedbackOracle::new(vec![true; 3]);
        assert_eq!(select_pmc(&neg, &mut o, &no_pool(1)).unwrap().chosen, vec![1]);
    }

    #[test]
    fn greedy_choice_is_replayable() {
        let full = random_dataset(40, 3, 10);
        let sel = no_pool(15);
        let t = select_adpo_plus(&full, &sel).unwrap();
        let policy = t.policy_at(1).unwrap().clone();
        let mut design = DesignState::new(3, sel.model.gamma).unwrap();
        let mut taken = [false; 40];
        for &c in &t.chosen {
            let v = |i: usize| design_vector(&full.points()[i], &policy, &sel.model, &design);
            let best = design.variance(&v(c)).unwrap();
            for i in (0..40).filter(|&i| !taken[i]) {
                assert!(design.variance(&v(i)).unwrap() <= best);
            }
            let vc = v(c);
            design.update(&vc).unwrap();
            taken[c] = true;
        }
    }

    #[test]
    fn kappa_edge_cases() {
        let single = dataset(&[&[0.5, 0.5]], &[0.0], Some(&[true]));
        let t = select_adpo_plus(&single, &no_pool(1)).unwrap();
        assert_eq!(empirical_kappa(&single, &t, &no_pool(1)).unwrap(), 1.0);

        let full = random_dataset(30, 3, 12);
        let t1 = select_apo(&full, &no_pool(1)).unwrap();
        assert_eq!(empirical_kappa(&full, &t1, &no_pool(1)).unwrap(), 1.0);

        let ortho = dataset(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]], &[0.0; 3], Some(&[true; 3]));
        let t = select_apo(&ortho, &no_pool(3)).unwrap();
        let k = empirical_kappa(&ortho, &t, &no_pool(3)).unwrap();
        assert!(k.is_finite() && k >= 1.0);

        let u = select_uniform(&full, &no_pool(3)).unwrap();
        assert!(empirical_kappa(&full, &u, &no_pool(3)).is_err());
    }

    #[test]
    fn zero_variance_pick_reports_infinity() {
        let ds = dataset(&[&[0.0, 0.0], &[1.0, 0.0]], &[0.0; 2], Some(&[true; 2]));
        let trace = SelectionTrace {
            algorithm: Algorithm::Apo,
            chosen: vec![0],
            per_round_score: vec![0.0],
            refit_rounds: vec![],
            policy_history: vec![],
            kappa_estimate: None,
            design_final: None,
        };
        assert_eq!(empirical_kappa(&ds, &trace, &no_pool(1)).unwrap(), f64::INFINITY);
    }

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("bogus".parse::<Algorithm>().is_err());
        assert_eq!("every".parse::<RefitSchedule>().unwrap(), RefitSchedule::Every);
    }
}
