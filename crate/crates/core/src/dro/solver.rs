//! Projected subgradient descent of the robust losses over the norm ball.

use super::{linf_both_sides, weighted_chi2_dual, ResidualSample};
use crate::error::{invalid, Error, Result};
use crate::linalg::NormPair;
use crate::scalar::Scalar;

/// Step schedule `alpha_t = alpha_r / sqrt(t)` for `t = 1..=iterations`,
/// repeated for `rounds` rounds that each restart from the best iterate with
/// `alpha_r = step0 / 2^r`. `step0 = None` uses `V_max / (C G)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule<T> {
    pub iterations: usize,
    pub step0: Option<T>,
    pub rounds: usize,
}

impl<T: Scalar> Default for Schedule<T> {
    fn default() -> Self {
        Self {
            iterations: 2000,
            step0: None,
            rounds: 1,
        }
    }
}

impl<T: Scalar> Schedule<T> {
    /// Restarted schedule for high-precision solves.
    pub fn restarted(iterations: usize, rounds: usize) -> Self {
        Self {
            iterations,
            step0: None,
            rounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DroFit<T> {
    pub v: Vec<T>,
    pub loss: T,
    /// Best loss seen after each evaluation.
    pub history: Vec<T>,
}

fn minimize<T: Scalar>(
    sample: &ResidualSample<T>,
    v_max: T,
    norm: NormPair,
    budget: T,
    schedule: &Schedule<T>,
    mut oracle: impl FnMut(&[T]) -> Result<(T, Vec<T>)>,
) -> Result<DroFit<T>> {
    if schedule.iterations == 0 || schedule.rounds == 0 {
        return Err(invalid("schedule", "needs at least one iteration"));
    }
    let g_max = sample
        .scores
        .iter()
        .map(|phi| norm.dual_norm(phi))
        .fold(T::zero(), T::max);
    let g_max = if g_max > T::zero() { g_max } else { T::one() };
    let step0 = schedule.step0.unwrap_or(v_max / (budget * g_max));
    let mut best_v = vec![T::zero(); sample.dim()];
    let (mut best, _) = oracle(&best_v)?;
    if !best.is_finite() {
        return Err(Error::NonFinite("robust loss"));
    }
    let mut history = Vec::with_capacity(schedule.iterations * schedule.rounds);
    for round in 0..schedule.rounds {
        let base = step0 / T::lit(2f64.powi(round as i32));
        let mut v = best_v.clone();
        for t in 1..=schedule.iterations {
            let (loss, grad) = oracle(&v)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("robust loss"));
            }
            if loss < best {
                best = loss;
                best_v.clone_from(&v);
            }
            history.push(best);
            let alpha = base / T::from_usize_lossy(t).sqrt();
            let stepped: Vec<T> = v.iter().zip(&grad).map(|(&x, &g)| x - alpha * g).collect();
            v = norm.project(&stepped, v_max);
        }
        let (loss, _) = oracle(&v)?;
        if loss.is_finite() && loss < best {
            best = loss;
            best_v = v;
        }
    }
    Ok(DroFit {
        v: best_v,
        loss: best,
        history,
    })
}

fn weighted_score_sum<T: Scalar>(sample: &ResidualSample<T>, coef: impl Fn(usize) -> T) -> Vec<T> {
    let mut g = vec![T::zero(); sample.dim()];
    for (i, phi) in sample.scores.iter().enumerate() {
        let c = coef(i);
        if c == T::zero() {
            continue;
        }
        for (o, &x) in g.iter_mut().zip(phi) {
            *o = *o + c * x;
        }
    }
    g
}

/// Minimizes the bounded-density-ratio robust loss over `||v|| <= v_max`.
/// The subgradient at `v` is `-s sum_i p_i w_i phi_i` with `(s, w)` the
/// worst-case sign and weights.
pub fn drpu_minimize_linf<T: Scalar>(
    sample: &ResidualSample<T>,
    v_max: T,
    c: T,
    norm: NormPair,
    schedule: &Schedule<T>,
) -> Result<DroFit<T>> {
    minimize(sample, v_max, norm, c, schedule, |v| {
        let eps = sample.residuals(v);
        let (loss, sol) = linf_both_sides(&eps, &sample.weights, c)?;
        let grad = weighted_score_sum(sample, |i| -sol.sign * sample.weights[i] * sol.primal_weights[i]);
        Ok((loss, grad))
    })
}

/// Minimizes the chi-square robust loss over `||v|| <= v_max`. The gradient
/// at the optimal `tau` is `-s sqrt(C2) sum_i p_i (s eps_i - tau) phi_i /
/// sqrt(M)` with `M = sum_i p_i (s eps_i - tau)^2`.
pub fn drpu_minimize_chi2<T: Scalar>(
    sample: &ResidualSample<T>,
    v_max: T,
    c2: T,
    norm: NormPair,
    schedule: &Schedule<T>,
) -> Result<DroFit<T>> {
    minimize(sample, v_max, norm, c2.sqrt(), schedule, |v| {
        let eps = sample.residuals(v);
        let neg: Vec<T> = eps.iter().map(|&e| -e).collect();
        let plus = weighted_chi2_dual(&eps, &sample.weights, c2)?;
        let minus = weighted_chi2_dual(&neg, &sample.weights, c2)?;
        let (sol, sign) = if minus.value > plus.value {
            (minus, -T::one())
        } else {
            (plus, T::one())
        };
        let grad = if !sol.tau.is_finite() {
            weighted_score_sum(sample, |i| -sign * sample.weights[i])
        } else {
            let dev: Vec<T> = eps.iter().map(|&e| sign * e - sol.tau).collect();
            let m: T = dev.iter().zip(&sample.weights).map(|(&d, &p)| p * d * d).sum();
            if m > T::zero() {
                let scale = -sign * c2.sqrt() / m.sqrt();
                weighted_score_sum(sample, |i| scale * sample.weights[i] * dev[i])
            } else {
                vec![T::zero(); sample.dim()]
            }
        };
        Ok((sol.value, grad))
    })
}
