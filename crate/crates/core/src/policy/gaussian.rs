//! Per-state multivariate Gaussian policies in natural parameters.
//!
//! A state's parameters are the precision `Lambda` and `h = Lambda mu`, so the
//! log-density is `h^T a - a^T Lambda a / 2 - A(Lambda, h)`. The parameter
//! vector stores, per state, `h` followed by `Lambda` in row-major order.

use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::{symmetric_eigen, Lu, Matrix};
use crate::scalar::{all_finite, dot, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaussianFamily {
    n_states: usize,
    action_dim: usize,
}

impl GaussianFamily {
    pub fn new(n_states: usize, action_dim: usize) -> Self {
        Self {
            n_states,
            action_dim,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn block(&self) -> usize {
        self.action_dim + self.action_dim * self.action_dim
    }

    pub fn dim(&self) -> usize {
        self.n_states * self.block()
    }

    pub fn state<T: Scalar>(&self, theta: &[T], s: usize) -> Result<GaussianState<T>> {
        check_dim("gaussian parameter", self.dim(), theta.len())?;
        if s >= self.n_states {
            return Err(invalid("state", format!("{s} out of range")));
        }
        let m = self.action_dim;
        let block = &theta[s * self.block()..(s + 1) * self.block()];
        let natural = block[..m].to_vec();
        let raw = Matrix::from_fn(m, m, |i, j| block[m + i * m + j]);
        let precision = Matrix::from_fn(m, m, |i, j| (raw[(i, j)] + raw[(j, i)]).halved());
        GaussianState::new(precision, natural)
    }

    /// Concatenates per-state parameters into a family parameter vector.
    pub fn pack<T: Scalar>(states: &[GaussianState<T>]) -> Vec<T> {
        let mut out = Vec::new();
        for st in states {
            out.extend_from_slice(&st.natural);
            out.extend_from_slice(st.precision.as_slice());
        }
        out
    }

    /// `grad_theta log pi(a | s)`: `a - mu` for `h`, and
    /// `(-a_i a_j + mu_i mu_j + Sigma_ij) / 2` for `Lambda_ij`.
    pub fn score<T: Scalar>(&self, theta: &[T], s: usize, a: &[T]) -> Result<Vec<T>> {
        let st = self.state(theta, s)?;
        check_dim("gaussian action", self.action_dim, a.len())?;
        let m = self.action_dim;
        let mu = st.mean();
        let sigma = st.covariance();
        let mut out = vec![T::zero(); self.dim()];
        let base = s * self.block();
        for i in 0..m {
            out[base + i] = a[i] - mu[i];
            for j in 0..m {
                out[base + m + i * m + j] = (mu[i] * mu[j] + sigma[(i, j)] - a[i] * a[j]).halved();
            }
        }
        Ok(out)
    }
}

/// One state's Gaussian in natural parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState<T> {
    precision: Matrix<T>,
    natural: Vec<T>,
    covariance: Matrix<T>,
}

impl<T: Scalar> GaussianState<T> {
    /// Fails unless `precision` is symmetric positive definite.
    pub fn new(precision: Matrix<T>, natural: Vec<T>) -> Result<Self> {
        let m = natural.len();
        check_dim("precision rows", m, precision.rows())?;
        check_dim("precision cols", m, precision.cols())?;
        if !all_finite(precision.as_slice()) || !all_finite(&natural) {
            return Err(Error::NonFinite("gaussian parameters"));
        }
        let scale = precision
            .as_slice()
            .iter()
            .fold(T::one(), |acc, x| acc.max(x.abs()));
        if !precision.is_symmetric(T::lit(1e-12) * scale) {
            return Err(invalid("precision", "not symmetric"));
        }
        let (values, _) = symmetric_eigen(&precision);
        if values.first().map_or(true, |&v| v <= T::zero()) {
            return Err(invalid("precision", "not positive definite"));
        }
        let covariance = Lu::factor(&precision)?.inverse();
        Ok(Self {
            precision,
            natural,
            covariance,
        })
    }

    pub fn from_moments(mean: &[T], covariance: &Matrix<T>) -> Result<Self> {
        let precision = Lu::factor(covariance)?.inverse();
        let precision = Matrix::from_fn(mean.len(), mean.len(), |i, j| {
            (precision[(i, j)] + precision[(j, i)]).halved()
        });
        let natural = precision.matvec(mean);
        Self::new(precision, natural)
    }

    /// `N(mean, variance * I)`.
    pub fn isotropic(mean: &[T], variance: T) -> Self {
        let m = mean.len();
        let precision = Matrix::identity(m).scaled(T::one() / variance);
        let natural = mean.iter().map(|&x| x / variance).collect();
        Self::new(precision, natural).expect("positive variance")
    }

    pub fn action_dim(&self) -> usize {
        self.natural.len()
    }

    pub fn precision(&self) -> &Matrix<T> {
        &self.precision
    }

    pub fn natural(&self) -> &[T] {
        &self.natural
    }

    pub fn covariance(&self) -> &Matrix<T> {
        &self.covariance
    }

    pub fn mean(&self) -> Vec<T> {
        self.covariance.matvec(&self.natural)
    }

    fn log_det_precision(&self) -> T {
        Lu::factor(&self.precision)
            .map(|lu| lu.determinant().ln())
            .unwrap_or(T::neg_infinity())
    }

    pub fn log_density(&self, a: &[T]) -> Result<T> {
        check_dim("gaussian action", self.action_dim(), a.len())?;
        let m = T::from_usize_lossy(self.action_dim());
        let two_pi = T::lit(2.0 * std::f64::consts::PI);
        let quad = dot(a, &self.precision.matvec(a));
        let log_norm = dot(&self.natural, &self.mean()).halved() - self.log_det_precision().halved()
            + m.halved() * two_pi.ln();
        Ok(dot(&self.natural, a) - quad.halved() - log_norm)
    }

    /// Closed-form `KL(self || other)`.
    pub fn kl(&self, other: &GaussianState<T>) -> Result<T> {
        check_dim("kl action dim", self.action_dim(), other.action_dim())?;
        let m = self.action_dim();
        let mut trace = T::zero();
        for i in 0..m {
            for j in 0..m {
                trace = trace + other.precision[(i, j)] * self.covariance[(j, i)];
            }
        }
        let diff: Vec<T> = other
            .mean()
            .iter()
            .zip(self.mean())
            .map(|(&a, b)| a - b)
            .collect();
        let maha = dot(&diff, &other.precision.matvec(&diff));
        let kl = (trace + maha - T::from_usize_lossy(m) + self.log_det_precision()
            - other.log_det_precision())
        .halved();
        Ok(kl.max(T::zero()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_density() {
        let st = GaussianState::from_moments(&[1.5], &Matrix::identity(1).scaled(4.0)).unwrap();
        let want = -0.5 * (0.25f64 / 4.0) - 0.5 * (2.0 * std::f64::consts::PI * 4.0).ln();
        assert!((st.log_density(&[2.0]).unwrap() - want).abs() < 1e-14);
        assert!((st.mean()[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn isotropic_kl_is_quadratic() {
        let p = GaussianState::<f64>::isotropic(&[1.0, -2.0], 0.5);
        let q = GaussianState::isotropic(&[0.0, 1.0], 0.5);
        let want = (1.0 + 9.0) / (2.0 * 0.5);
        assert!((p.kl(&q).unwrap() - want).abs() < 1e-12);
        assert_eq!(p.kl(&p).unwrap(), 0.0);
    }

    #[test]
    fn general_kl_matches_one_dimensional_formula() {
        let p = GaussianState::from_moments(&[0.3], &Matrix::identity(1).scaled(2.0)).unwrap();
        let q = GaussianState::from_moments(&[-1.0], &Matrix::identity(1).scaled(0.5)).unwrap();
        let (s1, s2): (f64, f64) = (2.0, 0.5);
        let want = (s2.sqrt() / s1.sqrt()).ln() + (s1 + 1.3f64.powi(2)) / (2.0 * s2) - 0.5;
        assert!((p.kl(&q).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn rejects_indefinite_precision() {
        let bad = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(GaussianState::new(bad, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn score_matches_central_differences() {
        let fam = GaussianFamily::new(2, 2);
        let cov = Matrix::from_rows(&[vec![1.3, 0.4], vec![0.4, 0.7]]).unwrap();
        let st0 = GaussianState::from_moments(&[0.2, -0.5], &cov).unwrap();
        let st1 = GaussianState::isotropic(&[1.0, 1.0], 2.0);
        let theta = GaussianFamily::pack(&[st0, st1]);
        let a = [0.9, -0.1];
        let score = fam.score(&theta, 0, &a).unwrap();
        let h = 1e-6;
        for i in 0..theta.len() {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[i] += h;
            dn[i] -= h;
            let lp = |t: &[f64]| fam.state(t, 0).unwrap().log_density(&a).unwrap();
            let fd = (lp(&up) - lp(&dn)) / (2.0 * h);
            assert!((fd - score[i]).abs() <= 1e-6 * score[i].abs().max(1.0), "{i}: {fd} vs {}", score[i]);
        }
    }
}
