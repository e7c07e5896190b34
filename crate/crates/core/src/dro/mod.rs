//! Robust losses over weight classes on a finite weighted sample.
//!
//! For the bounded-density-ratio class `{w : 0 <= w <= C, E[w] = 1}` the
//! worst-case expectation of `Z` equals `min_tau tau + C E[(Z - tau)_+]`.
//! For the chi-square class `{w : E[w] = 1, E[w^2] <= C2}` it equals
//! `min_tau tau + sqrt(C2 E[(Z - tau)^2])`.

mod solver;

pub use solver::{drpu_minimize_chi2, drpu_minimize_linf, DroFit, Schedule};

use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::Matrix;
use crate::sampling::Dataset;
use crate::scalar::{all_finite, dot, Scalar};
use crate::policy::ScoreTable;

/// Regression sample `(phi_i, A_i)` with weights `p_i` summing to one.
/// The residual of an update `v` is `eps_i = A_i - v^T phi_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSample<T> {
    pub scores: Vec<Vec<T>>,
    pub targets: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> ResidualSample<T> {
    pub fn new(scores: Vec<Vec<T>>, targets: Vec<T>, weights: Vec<T>) -> Result<Self> {
        check_dim("sample targets", scores.len(), targets.len())?;
        check_dim("sample weights", scores.len(), weights.len())?;
        if scores.is_empty() {
            return Err(invalid("sample", "empty"));
        }
        let d = scores[0].len();
        for s in &scores {
            check_dim("sample score", d, s.len())?;
            if !all_finite(s) {
                return Err(Error::NonFinite("sample score"));
            }
        }
        if !all_finite(&targets) || !all_finite(&weights) {
            return Err(Error::NonFinite("sample"));
        }
        if weights.iter().any(|&w| w < T::zero()) {
            return Err(invalid("sample weights", "negative weight"));
        }
        Ok(Self {
            scores,
            targets,
            weights,
        })
    }

    /// Equal weights `1/N`.
    pub fn uniform(scores: Vec<Vec<T>>, targets: Vec<T>) -> Result<Self> {
        let n = scores.len().max(1);
        let w = T::one() / T::from_usize_lossy(n);
        let weights = vec![w; scores.len()];
        Self::new(scores, targets, weights)
    }

    /// Scores and proxy advantages looked up at the dataset's pairs.
    pub fn from_dataset(data: &Dataset<T>, scores: &ScoreTable<T>, adv: &Matrix<T>) -> Result<Self> {
        let (phi, targets) = data
            .pairs
            .iter()
            .map(|&(s, a)| (scores.score(s, a).to_vec(), adv[(s, a)]))
            .unzip();
        Self::new(phi, targets, data.weights.clone())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.scores[0].len()
    }

    pub fn residuals(&self, v: &[T]) -> Vec<T> {
        self.scores
            .iter()
            .zip(&self.targets)
            .map(|(phi, &a)| a - dot(phi, v))
            .collect()
    }

    /// `E_p[eps^2]`, the least-squares loss of `v`.
    pub fn square_loss(&self, v: &[T]) -> T {
        self.residuals(v)
            .iter()
            .zip(&self.weights)
            .map(|(&e, &w)| w * e * e)
            .sum()
    }

    /// `(E_p[A], E_p[phi])`.
    pub fn means(&self) -> (T, Vec<T>) {
        let mut mu = vec![T::zero(); self.dim()];
        let mut m = T::zero();
        for ((phi, &a), &w) in self.scores.iter().zip(&self.targets).zip(&self.weights) {
            m = m + w * a;
            for (o, &x) in mu.iter_mut().zip(phi) {
                *o = *o + w * x;
            }
        }
        (m, mu)
    }
}

/// Minimizer of the one-sided CVaR dual.
#[derive(Debug, Clone, PartialEq)]
pub struct CvarSolution<T> {
    pub value: T,
    pub tau: T,
    /// `+1` or `-1`: which side of the residual achieved the loss.
    pub sign: T,
    /// Indices carrying positive worst-case weight, largest first.
    pub active: Vec<usize>,
    /// Worst-case weights `w_i in [0, C]` with `sum p_i w_i = 1`.
    pub primal_weights: Vec<T>,
}

impl<T: Scalar> CvarSolution<T> {
    pub fn active_count(&self) -> usize {
        self.active.len()
    }
}

fn check_budget<T: Scalar>(c: T, n: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("sample", "empty"));
    }
    if !(c >= T::one()) || !c.is_finite() {
        return Err(invalid("weight budget", format!("{c} must be finite and >= 1")));
    }
    Ok(())
}

/// Indices sorted by value descending, ties by index.
fn order_desc<T: Scalar>(z: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..z.len()).collect();
    idx.sort_by(|&i, &j| z[j].partial_cmp(&z[i]).expect("finite values").then(i.cmp(&j)));
    idx
}

/// Greedy extreme point of `{0 <= w <= C, sum p_i w_i = 1}` maximizing
/// `sum p_i w_i z_i`.
fn greedy_weights<T: Scalar>(z: &[T], p: &[T], c: T) -> (Vec<T>, Vec<usize>) {
    let mut w = vec![T::zero(); z.len()];
    let mut active = Vec::new();
    let mut mass = T::one();
    for i in order_desc(z) {
        if mass <= T::zero() {
            break;
        }
        if p[i] == T::zero() {
            continue;
        }
        let full = c * p[i];
        if full <= mass {
            w[i] = c;
            mass = mass - full;
        } else {
            w[i] = mass / p[i];
            mass = T::zero();
        }
        active.push(i);
    }
    (w, active)
}

/// `min_tau tau + C sum_i p_i (z_i - tau)_+` by enumerating the breakpoints
/// `tau = z_j`; returns the smallest minimizing breakpoint.
pub fn weighted_cvar_one_sided<T: Scalar>(z: &[T], p: &[T], c: T) -> Result<CvarSolution<T>> {
    check_dim("cvar weights", z.len(), p.len())?;
    check_budget(c, z.len())?;
    if !all_finite(z) {
        return Err(Error::NonFinite("cvar sample"));
    }
    let order = order_desc(z);
    // walking down the sorted values, (mass, first moment) of strictly larger atoms
    let (mut mass_above, mut moment_above) = (T::zero(), T::zero());
    let (mut best, mut best_tau) = (T::infinity(), T::zero());
    let mut i = 0;
    while i < order.len() {
        let tau = z[order[i]];
        let value = tau + c * (moment_above - tau * mass_above);
        // later breakpoints are smaller, so ties move the minimizer left
        if value <= best {
            best = value;
            best_tau = tau;
        }
        while i < order.len() && z[order[i]] == tau {
            mass_above = mass_above + p[order[i]];
            moment_above = moment_above + p[order[i]] * tau;
            i += 1;
        }
    }
    let (primal_weights, active) = greedy_weights(z, p, c);
    Ok(CvarSolution {
        value: best,
        tau: best_tau,
        sign: T::one(),
        active,
        primal_weights,
    })
}

/// Equal-weight version of [`weighted_cvar_one_sided`]:
/// `min_tau tau + (C/N) sum_i (z_i - tau)_+`.
pub fn empirical_cvar_one_sided<T: Scalar>(z: &[T], c: T) -> Result<CvarSolution<T>> {
    let p = vec![T::one() / T::from_usize_lossy(z.len().max(1)); z.len()];
    weighted_cvar_one_sided(z, &p, c)
}

/// Primal optimum `max_{w in W_inf} sum_i p_i w_i z_i`.
pub fn weighted_linf_primal<T: Scalar>(z: &[T], p: &[T], c: T) -> Result<T> {
    check_dim("primal weights", z.len(), p.len())?;
    check_budget(c, z.len())?;
    let (w, _) = greedy_weights(z, p, c);
    Ok(z.iter().zip(p).zip(&w).map(|((&zi, &pi), &wi)| pi * wi * zi).sum())
}

/// Equal-weight primal: weight `C` on the `floor(N/C)` largest atoms, the
/// remaining mass on the next one.
pub fn brute_force_linf_primal<T: Scalar>(z: &[T], c: T) -> Result<T> {
    let p = vec![T::one() / T::from_usize_lossy(z.len().max(1)); z.len()];
    weighted_linf_primal(z, &p, c)
}

/// `max_{s = +-1}` one-sided CVaR of `s * eps_v`; ties resolve to `+1`.
pub fn robust_loss_linf<T: Scalar>(v: &[T], sample: &ResidualSample<T>, c: T) -> Result<(T, CvarSolution<T>)> {
    let eps = sample.residuals(v);
    linf_both_sides(&eps, &sample.weights, c)
}

pub(crate) fn linf_both_sides<T: Scalar>(eps: &[T], p: &[T], c: T) -> Result<(T, CvarSolution<T>)> {
    let plus = weighted_cvar_one_sided(eps, p, c)?;
    let neg: Vec<T> = eps.iter().map(|&e| -e).collect();
    let mut minus = weighted_cvar_one_sided(&neg, p, c)?;
    if minus.value > plus.value {
        minus.sign = -T::one();
        Ok((minus.value, minus))
    } else {
        Ok((plus.value, plus))
    }
}

/// Minimizer of the chi-square dual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chi2Solution<T> {
    pub value: T,
    pub tau: T,
}

fn chi2_objective<T: Scalar>(z: &[T], p: &[T], c2: T, tau: T) -> T {
    let m: T = z.iter().zip(p).map(|(&zi, &pi)| pi * (zi - tau) * (zi - tau)).sum();
    tau + (c2 * m).sqrt()
}

/// `min_tau tau + sqrt(C2 sum_i p_i (z_i - tau)^2)` by golden-section search.
///
/// The search starts on `[-B, B]` with `B = max |z|` and widens the bracket
/// while the minimum sits on an end point: for `C2` close to one the
/// minimizer `mean - sd / sqrt(C2 - 1)` leaves that interval.
pub fn weighted_chi2_dual<T: Scalar>(z: &[T], p: &[T], c2: T) -> Result<Chi2Solution<T>> {
    check_dim("chi2 weights", z.len(), p.len())?;
    check_budget(c2, z.len())?;
    if !all_finite(z) {
        return Err(Error::NonFinite("chi2 sample"));
    }
    let mean: T = z.iter().zip(p).map(|(&a, &b)| a * b).sum();
    if c2 == T::one() {
        return Ok(Chi2Solution {
            value: mean,
            tau: T::neg_infinity(),
        });
    }
    let f = |t: T| chi2_objective(z, p, c2, t);
    let b = z.iter().fold(T::zero(), |acc, x| acc.max(x.abs())).max(T::lit(1e-300));
    let (mut lo, mut hi) = (-b, b);
    for _ in 0..2000 {
        let mid = (lo + hi).halved();
        let width = hi - lo;
        if f(lo) < f(mid) {
            lo = lo - width;
        } else if f(hi) < f(mid) {
            hi = hi + width;
        } else {
            break;
        }
    }
    let ratio = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    let tol = T::lit(1e-12);
    while hi - lo > tol * (T::one() + lo.abs().max(hi.abs())) {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    let tau = (lo + hi).halved();
    Ok(Chi2Solution {
        value: f(tau).min(f1).min(f2),
        tau,
    })
}

/// Equal-weight chi-square dual value.
pub fn chi2_dual<T: Scalar>(z: &[T], c2: T) -> Result<T> {
    let p = vec![T::one() / T::from_usize_lossy(z.len().max(1)); z.len()];
    Ok(weighted_chi2_dual(z, &p, c2)?.value)
}

/// `max_{s = +-1}` chi-square dual of `s * eps_v`, with the sign achieving it.
pub fn robust_loss_chi2<T: Scalar>(v: &[T], sample: &ResidualSample<T>, c2: T) -> Result<(T, T, Chi2Solution<T>)> {
    let eps = sample.residuals(v);
    let plus = weighted_chi2_dual(&eps, &sample.weights, c2)?;
    let neg: Vec<T> = eps.iter().map(|&e| -e).collect();
    let minus = weighted_chi2_dual(&neg, &sample.weights, c2)?;
    if minus.value > plus.value {
        Ok((minus.value, -T::one(), minus))
    } else {
        Ok((plus.value, T::one(), plus))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_cvar(z: &[f64], c: f64) -> f64 {
        let n = z.len() as f64;
        let f = |t: f64| t + c / n * z.iter().map(|&x| (x - t).max(0.0)).sum::<f64>();
        let lo = z.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut best = (f64::INFINITY, lo);
        for i in 0..=2000 {
            let t = lo + (hi - lo) * i as f64 / 2000.0;
            if f(t) < best.0 {
                best = (f(t), t);
            }
        }
        let (mut a, mut b) = (best.1 - (hi - lo) / 1000.0, best.1 + (hi - lo) / 1000.0);
        for _ in 0..200 {
            let m1 = a + (b - a) / 3.0;
            let m2 = b - (b - a) / 3.0;
            if f(m1) <= f(m2) {
                b = m2;
            } else {
                a = m1;
            }
        }
        best.0.min(f((a + b) / 2.0))
    }

    #[test]
    fn unit_budget_is_mean() {
        let z = [2.0f64, -1.0, 0.5];
        let sol = empirical_cvar_one_sided(&z, 1.0).unwrap();
        assert!((sol.value - 0.5).abs() < 1e-15);
        assert_eq!(sol.tau, -1.0);
        assert!((brute_force_linf_primal(&z, 1.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hand_example() {
        let z = [3.0f64, 1.0, -1.0, -3.0];
        let sol = empirical_cvar_one_sided(&z, 2.0).unwrap();
        assert!((sol.value - 2.0).abs() < 1e-15);
        assert_eq!(sol.active_count(), 2);
        assert!((brute_force_linf_primal(&z, 2.0).unwrap() - 2.0).abs() < 1e-15);
        let sample = ResidualSample::<f64>::uniform(vec![vec![0.0]; 4], z.to_vec()).unwrap();
        let (loss, sol) = robust_loss_linf(&[0.0], &sample, 2.0).unwrap();
        assert!((loss - 2.0).abs() < 1e-15);
        assert_eq!(sol.sign, 1.0);
    }

    #[test]
    fn constant_residual() {
        let sample = ResidualSample::<f64>::uniform(vec![vec![1.0]; 5], vec![-2.5; 5]).unwrap();
        for c in [1.0, 1.7, 4.0] {
            let (loss, _) = robust_loss_linf(&[0.0], &sample, c).unwrap();
            assert!((loss - 2.5).abs() < 1e-14);
        }
    }

    #[test]
    fn breakpoints_match_grid_and_primal() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..500 {
            let n = rng.gen_range(1..=64);
            let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let c = rng.gen_range(1.0..10.0);
            let sol = empirical_cvar_one_sided(&z, c).unwrap();
            assert!((sol.value - grid_cvar(&z, c)).abs() <= 1e-8);
            assert!((sol.value - brute_force_linf_primal(&z, c).unwrap()).abs() <= 1e-10);
            let tail = z.iter().filter(|&&x| x > sol.tau).count() as f64 / n as f64;
            assert!(tail <= 1.0 / c + 1e-12);
        }
    }

    #[test]
    fn integral_ratio_uses_top_k() {
        let z = [5.0f64, 4.0, 1.0, 0.0, -2.0, -9.0];
        let sol = empirical_cvar_one_sided(&z, 3.0).unwrap();
        assert!((sol.value - (3.0 / 6.0) * 9.0).abs() < 1e-14);
        assert_eq!(sol.active, vec![0, 1]);
    }

    #[test]
    fn chi2_hand_and_closed_form() {
        assert!((chi2_dual(&[0.0f64, 2.0], 2.0).unwrap() - 2.0).abs() < 1e-10);
        assert!((chi2_dual(&[0.0f64, 2.0, 7.0], 1.0).unwrap() - 3.0).abs() < 1e-15);
        // minimizer far outside [-B, B]
        let far = chi2_dual(&[0.0, 2.0], 1.01).unwrap();
        assert!((far - (1.0 + (0.01f64).sqrt())).abs() < 1e-8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let n = rng.gen_range(1..=64);
            let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let c2 = rng.gen_range(1.0..10.0);
            let mean = z.iter().sum::<f64>() / n as f64;
            let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let want = mean + ((c2 - 1.0) * var).sqrt();
            assert!((chi2_dual(&z, c2).unwrap() - want).abs() <= 1e-8);
        }
    }

    #[test]
    fn rejects_bad_budget() {
        assert!(empirical_cvar_one_sided(&[1.0], 0.5).is_err());
        assert!(empirical_cvar_one_sided::<f64>(&[], 2.0).is_err());
        assert!(chi2_dual(&[1.0], 0.9).is_err());
    }
}
