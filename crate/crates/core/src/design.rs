//! Regularized design matrix `H = gamma * I + sum v v'` with a maintained
//! inverse.
//!
//! Acquisition scores are the variances `v' H^-1 v`; the log-determinant
//! gain of adding `v` is `log(1 + v' H^-1 v)`, so both rank the same way and
//! no determinant is ever needed during selection.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, invalid, Error, Result};

/// Number of rank-one updates between full re-inversions of `h`.
pub const REINVERT_EVERY: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct DesignState {
    dim: usize,
    gamma: f64,
    h: DMatrix<f64>,
    h_inv: DMatrix<f64>,
    count: usize,
}

impl DesignState {
    pub fn new(dim: usize, gamma: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("design dimension must be at least 1"));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid("gamma must be positive"));
        }
        Ok(Self {
            dim,
            gamma,
            h: DMatrix::identity(dim, dim) * gamma,
            h_inv: DMatrix::identity(dim, dim) / gamma,
            count: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn h_inv(&self) -> &DMatrix<f64> {
        &self.h_inv
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `v' H^-1 v`.
    pub fn variance(&self, v: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim, v.len())?;
        Ok(self.quad(v))
    }

    pub(crate) fn quad(&self, v: &DVector<f64>) -> f64 {
        let d = self.dim;
        let a = self.h_inv.as_slice();
        let x = v.as_slice();
        let mut total = 0.0;
        for j in 0..d {
            let col = &a[j * d..(j + 1) * d];
            let mut acc = 0.0;
            for (aij, xi) in col.iter().zip(x) {
                acc += aij * xi;
            }
            total += acc * x[j];
        }
        // h_inv is PD; rounding can only push the form slightly negative
        total.max(0.0)
    }

    /// `log det(H + v v') - log det(H)`.
    pub fn logdet_gain(&self, v: &DVector<f64>) -> Result<f64> {
        Ok(libm::log1p(self.variance(v)?))
    }

    /// Adds `v v'` to `H` and updates the inverse by Sherman-Morrison.
    pub fn update(&mut self, v: &DVector<f64>) -> Result<()> {
        check_dim(self.dim, v.len())?;
        self.count += 1;
        self.h.ger(1.0, v, v, 1.0);
        let u = &self.h_inv * v;
        let denom = 1.0 + v.dot(&u);
        self.h_inv.ger(-1.0 / denom, &u, &u, 1.0);
        symmetrize(&mut self.h_inv);
        if self.count.is_multiple_of(REINVERT_EVERY) {
            self.reinvert()?;
        }
        Ok(())
    }

    /// Consuming form of [`update`](Self::update).
    pub fn updated(mut self, v: &DVector<f64>) -> Result<Self> {
        self.update(v)?;
        Ok(self)
    }

    fn reinvert(&mut self) -> Result<()> {
        let chol = self.h.clone().cholesky().ok_or_else(|| Error::NumericalFailure {
            iteration: self.count,
            reason: "design matrix lost positive definiteness".into(),
        })?;
        self.h_inv = chol.inverse();
        symmetrize(&mut self.h_inv);
        Ok(())
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// `H_0 = gamma * I`.
pub fn init_design(dim: usize, gamma: f64) -> Result<DesignState> {
    DesignState::new(dim, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rvec(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
        DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn init_values() {
        let s = init_design(3, 2.0).unwrap();
        assert_eq!(s.h_inv(), &(DMatrix::identity(3, 3) * 0.5));
        assert_eq!(s.count(), 0);
        let v = DVector::from_vec(vec![1.0, 2.0, 2.0]);
        assert!((s.variance(&v).unwrap() - 9.0 / 2.0).abs() < 1e-15);
        assert!((s.logdet_gain(&v).unwrap() - (1.0f64 + 4.5).ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(init_design(3, 0.0).is_err());
        assert!(init_design(3, -1.0).is_err());
        assert!(init_design(0, 1.0).is_err());
        let s = init_design(2, 1.0).unwrap();
        assert!(s.variance(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn zero_vector_cases() {
        let mut s = init_design(4, 1.0).unwrap();
        let z = DVector::zeros(4);
        assert_eq!(s.variance(&z).unwrap(), 0.0);
        assert_eq!(s.logdet_gain(&z).unwrap(), 0.0);
        let before = s.clone();
        s.update(&z).unwrap();
        assert_eq!(s.h(), before.h());
        assert_eq!(s.h_inv(), before.h_inv());
        assert_eq!(s.count(), 1);
    }

    #[test]
    fn scalar_design() {
        let s = init_design(1, 3.0).unwrap();
        let v = DVector::from_vec(vec![2.0]);
        assert!((s.logdet_gain(&v).unwrap() - (1.0f64 + 4.0 / 3.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn update_shrinks_own_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = init_design(5, 1.0).unwrap();
        for _ in 0..50 {
            let v = rvec(&mut rng, 5);
            let before = s.variance(&v).unwrap();
            s.update(&v).unwrap();
            assert!(s.variance(&v).unwrap() < before);
        }
    }

    #[test]
    fn logdet_gain_matches_determinants() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = init_design(8, 0.5).unwrap();
        for _ in 0..20 {
            s.update(&rvec(&mut rng, 8)).unwrap();
        }
        for _ in 0..20 {
            let v = rvec(&mut rng, 8);
            let base = s.h().clone().lu().determinant();
            let mut hv = s.h().clone();
            hv.ger(1.0, &v, &v, 1.0);
            let expect = (hv.lu().determinant() / base).ln();
            assert!((s.logdet_gain(&v).unwrap() - expect).abs() <= 1e-10);
        }
    }

    #[test]
    fn reinversion_keeps_inverse_accurate() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = init_design(6, 1.0).unwrap();
        for _ in 0..(REINVERT_EVERY + 10) {
            let v = rvec(&mut rng, 6);
            s.update(&v).unwrap();
        }
        let direct = s.h().clone().try_inverse().unwrap();
        let rel = (&direct - s.h_inv()).norm() / direct.norm();
        assert!(rel <= 1e-8);
    }

    #[test]
    fn determinant_telescopes() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let gamma = 1.5;
        let mut s = init_design(4, gamma).unwrap();
        let mut log_prod = 4.0 * libm::log(gamma);
        let vs: Vec<_> = (0..30).map(|_| rvec(&mut rng, 4)).collect();
        for v in &vs {
            log_prod += s.logdet_gain(v).unwrap();
            s.update(v).unwrap();
        }
        let direct = s.h().clone().lu().determinant();
        let rel = (libm::exp(log_prod) - direct).abs() / direct;
        assert!(rel <= 1e-8);
    }
}
