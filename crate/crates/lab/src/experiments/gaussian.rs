//! Multiplicative weights on Gaussian policies with concave quadratic critics.

use anyhow::Result;
use polab::actor::{pspi_step_gaussian, QuadraticCritic};
use polab::policy::GaussianState;
use polab::Matrix;
use rand::Rng;

use super::{max_of, rng, ExperimentSpec};
use crate::config::ExperimentConfig;
use crate::report::Verdict;
use crate::svg::{Plot, Series};
use crate::trace::Trace;

const EXACT_TOL: f64 = 1e-10;

pub const GAUSSIAN: ExperimentSpec = ExperimentSpec {
    id: "exp_gaussian",
    about: "the Gaussian multiplicative-weights step matches the density product exactly",
    options: "--k (instance count)",
    defaults: |c| c.k = 100,
    run,
    judge,
    plot,
};

/// Quadratic coefficients `(Lambda, h)` of `g(a) = -a^T Lambda a / 2 + h^T a + c`
/// read off by unit-step differences, which are exact for quadratics.
fn quadratic_coefficients(m: usize, g: impl Fn(&[f64]) -> Result<f64>) -> Result<(Matrix, Vec<f64>)> {
    let e = |i: usize, s: f64| -> Vec<f64> { (0..m).map(|j| if j == i { s } else { 0.0 }).collect() };
    let g0 = g(&vec![0.0; m])?;
    let mut lambda = Matrix::zeros(m, m);
    let mut h = vec![0.0; m];
    for i in 0..m {
        let (gp, gm) = (g(&e(i, 1.0))?, g(&e(i, -1.0))?);
        h[i] = (gp - gm) / 2.0;
        lambda[(i, i)] = -(gp - 2.0 * g0 + gm);
        for j in 0..i {
            let both: Vec<f64> = (0..m).map(|t| if t == i || t == j { 1.0 } else { 0.0 }).collect();
            let x = -(g(&both)? - gp - g(&e(j, 1.0))? + g0);
            lambda[(i, j)] = x;
            lambda[(j, i)] = x;
        }
    }
    Ok((lambda, h))
}

fn random_instance(r: &mut impl Rng) -> Result<(GaussianState<f64>, QuadraticCritic<f64>, f64)> {
    let m = r.gen_range(1..=2);
    let a = Matrix::from_fn(m, m, |_, _| r.gen_range(-1.0..1.0));
    let mut lambda = a.transpose().matmul(&a);
    for i in 0..m {
        lambda[(i, i)] += 0.5;
    }
    let h: Vec<f64> = (0..m).map(|_| r.gen_range(-1.0..1.0)).collect();
    // rank may be deficient: Q is only positive semidefinite
    let rows = r.gen_range(1..=m);
    let b = Matrix::from_fn(rows, m, |_, _| r.gen_range(-1.0..1.0));
    let q = b.transpose().matmul(&b);
    let u: Vec<f64> = (0..m).map(|_| r.gen_range(-2.0..2.0)).collect();
    let critic = QuadraticCritic {
        q,
        u,
        c: r.gen_range(-1.0..1.0),
    };
    Ok((GaussianState::new(lambda, h)?, critic, r.gen_range(0.0..2.0)))
}

fn run(cfg: &ExperimentConfig) -> Result<Trace> {
    let mut trace = Trace::new(&["instance", "dim", "eta", "precision_gap", "natural_gap", "mean_shift"]);
    let mut r = rng(cfg.seed, 11);
    for instance in 0..cfg.k {
        let (state, critic, eta) = if instance == 0 {
            let state = GaussianState::new(Matrix::from_fn(1, 1, |_, _| 1.0), vec![0.0])?;
            let critic = QuadraticCritic {
                q: Matrix::from_fn(1, 1, |_, _| 2.0),
                u: vec![1.0],
                c: 0.0,
            };
            (state, critic, 0.5)
        } else {
            random_instance(&mut r)?
        };
        let m = state.action_dim();
        let next = pspi_step_gaussian(&state, &critic, eta)?;
        let (want_l, want_h) = if instance == 0 {
            (Matrix::from_fn(1, 1, |_, _| 2.0), vec![1.0])
        } else {
            quadratic_coefficients(m, |a| Ok(state.log_density(a)? + eta * critic.value(a)))?
        };
        let precision_gap = next.precision().max_abs_diff(&want_l);
        let natural_gap = max_of(next.natural().iter().zip(&want_h).map(|(x, y)| (x - y).abs()));
        let mean_shift = max_of(next.mean().iter().zip(state.mean()).map(|(x, y)| (x - y).abs()));
        trace.push(vec![
            instance.into(),
            m.into(),
            eta.into(),
            precision_gap.into(),
            natural_gap.into(),
            mean_shift.into(),
        ])?;
    }
    Ok(trace)
}

fn judge(trace: &Trace, _cfg: &ExperimentConfig) -> Result<Vec<Verdict>> {
    Ok(vec![
        Verdict::at_most("max_precision_gap", max_of(trace.nums("precision_gap")?), EXACT_TOL),
        Verdict::at_most("max_natural_gap", max_of(trace.nums("natural_gap")?), EXACT_TOL),
    ])
}

fn plot(trace: &Trace, _cfg: &ExperimentConfig) -> Result<Plot> {
    let pts = |col: &str| -> Result<Vec<(f64, f64)>> {
        (0..trace.len()).map(|i| Ok((trace.num(i, "instance")?, trace.num(i, col)?))).collect()
    };
    Ok(Plot::new("Gaussian step versus density product", "instance", "max abs gap")
        .log_y()
        .with(Series::new("precision", pts("precision_gap")?))
        .with(Series::new("natural parameter", pts("natural_gap")?)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differences_recover_a_known_quadratic() {
        let (l, h) = quadratic_coefficients(2, |a| {
            Ok(-0.5 * (3.0 * a[0] * a[0] + 2.0 * 0.5 * a[0] * a[1] + 2.0 * a[1] * a[1]) + 1.5 * a[0] - a[1] + 7.0)
        })
        .unwrap();
        assert!((l[(0, 0)] - 3.0).abs() < 1e-14 && (l[(0, 1)] - 0.5).abs() < 1e-14 && (l[(1, 1)] - 2.0).abs() < 1e-14);
        assert!((h[0] - 1.5).abs() < 1e-14 && (h[1] + 1.0).abs() < 1e-14);
    }
}
