//! Randomized identity checks and the stochastic solvers against their
//! closed-form or grid references.

use anyhow::{ensure, Result};
use polab::actor::{lspu_ols, lspu_sgd};
use polab::dro::{drpu_minimize_chi2, drpu_minimize_linf, robust_loss_chi2, robust_loss_linf, ResidualSample, Schedule};
use polab::mdp::{check_pdl, check_telescoping, decompose_suboptimality, random_mdp, random_policy};
use polab::{Matrix, NormPair};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{max_of, rng, ExperimentSpec};
use crate::config::ExperimentConfig;
use crate::report::Verdict;
use crate::svg::{Plot, Series};
use crate::trace::Trace;

const IDENTITY_TOL: f64 = 1e-9;
const SGD_SIZES: [usize; 2] = [100, 10_000];
const SGD_REPS: usize = 20;
const RATIO_RANGE: (f64, f64) = (5.0, 20.0);
const DRPU_TOL: f64 = 1e-4;
const DRPU_INSTANCES: usize = 20;

pub const IDENTITIES: ExperimentSpec = ExperimentSpec {
    id: "exp_identities",
    about: "telescoping, performance-difference and suboptimality-decomposition identities",
    options: "--k (trials)",
    defaults: |c| c.k = 100,
    run: run_identities,
    judge: judge_identities,
    plot: plot_identities,
};

pub const SGD: ExperimentSpec = ExperimentSpec {
    id: "exp_sgd",
    about: "SGD least squares converges at the 1/sqrt(N) rate; robust solvers reach the grid optimum",
    options: "--c, --c2 are ignored (budgets are drawn per instance)",
    defaults: |c| c.k = 1,
    run: run_sgd,
    judge: judge_sgd,
    plot: plot_sgd,
};

fn run_identities(cfg: &ExperimentConfig) -> Result<Trace> {
    let mut trace = Trace::new(&["trial", "n_states", "n_actions", "gamma", "telescoping", "pdl", "decomposition"]);
    let mut r = rng(cfg.seed, 8);
    for trial in 0..cfg.k {
        let ns = r.gen_range(1..=8);
        let na = r.gen_range(1..=4);
        let gamma = r.gen_range(0.0..0.95);
        let mdp = random_mdp::<f64, _>(ns, na, gamma, &mut r);
        let v_max = mdp.v_max();
        let critic = |r: &mut ChaCha8Rng| Matrix::from_fn(ns, na, |_, _| r.gen_range(0.0..v_max));
        let pi = random_policy(ns, na, &mut r);
        let pi_prime = random_policy(ns, na, &mut r);
        let f = critic(&mut r);
        let tele = check_telescoping(&mdp, &pi, &f)?;
        let pdl = check_pdl(&mdp, &pi, &pi_prime, &f)?;
        let k = r.gen_range(1..=5);
        let policies: Vec<_> = (0..k).map(|_| random_policy(ns, na, &mut r)).collect();
        let critics: Vec<_> = (0..k).map(|_| critic(&mut r)).collect();
        let dec = decompose_suboptimality(&mdp, &pi_prime, &policies, &critics)?;
        trace.push(vec![
            trial.into(),
            ns.into(),
            na.into(),
            gamma.into(),
            tele.into(),
            pdl.into(),
            dec.residual.abs().into(),
        ])?;
    }
    Ok(trace)
}

fn judge_identities(trace: &Trace, _cfg: &ExperimentConfig) -> Result<Vec<Verdict>> {
    Ok(vec![
        Verdict::at_most("max_telescoping_residual", max_of(trace.nums("telescoping")?), IDENTITY_TOL),
        Verdict::at_most("max_pdl_residual", max_of(trace.nums("pdl")?), IDENTITY_TOL),
        Verdict::at_most("max_decomposition_residual", max_of(trace.nums("decomposition")?), IDENTITY_TOL),
    ])
}

fn plot_identities(trace: &Trace, _cfg: &ExperimentConfig) -> Result<Plot> {
    let pts = |col: &str| -> Result<Vec<(f64, f64)>> {
        (0..trace.len()).map(|i| Ok((trace.num(i, "trial")?, trace.num(i, col)?))).collect()
    };
    Ok(Plot::new("Identity residuals", "trial", "residual")
        .log_y()
        .with(Series::new("telescoping", pts("telescoping")?))
        .with(Series::new("performance difference", pts("pdl")?))
        .with(Series::new("decomposition", pts("decomposition")?)))
}

/// One-dimensional regression whose unconstrained solution (about 2) lies
/// outside the unit ball, so the constrained optimum sits on the boundary and
/// the averaged iterate's shortfall is first order in the step size.
fn boundary_sample(n: usize, r: &mut ChaCha8Rng) -> Result<ResidualSample<f64>> {
    let phi: Vec<f64> = (0..n).map(|_| r.gen_range(0.5..1.5)).collect();
    let targets = phi.iter().map(|&x| 2.0 * x + r.gen_range(-0.1..0.1)).collect();
    Ok(ResidualSample::uniform(phi.into_iter().map(|x| vec![x]).collect(), targets)?)
}

/// Coarse-to-fine grid search of a convex loss over the L2 ball.
fn grid_minimum(dim: usize, radius: f64, loss: impl Fn(&[f64]) -> Result<f64>) -> Result<f64> {
    let mut center = vec![0.0; dim];
    let mut half = radius;
    let per_axis: i32 = if dim == 1 { 50 } else { 20 };
    let mut best = loss(&center)?;
    for _ in 0..14 {
        let h = half / per_axis as f64;
        let mut best_pt = center.clone();
        let mut visit = |pt: Vec<f64>| -> Result<()> {
            if polab::linalg::l2(&pt) <= radius {
                let val = loss(&pt)?;
                if val < best {
                    best = val;
                    best_pt = pt;
                }
            }
            Ok(())
        };
        if dim == 1 {
            for i in -per_axis..=per_axis {
                visit(vec![center[0] + i as f64 * h])?;
            }
        } else {
            for i in -per_axis..=per_axis {
                for j in -per_axis..=per_axis {
                    visit(vec![center[0] + i as f64 * h, center[1] + j as f64 * h])?;
                }
            }
        }
        center = best_pt;
        half = 4.0 * h;
    }
    Ok(best)
}

fn run_sgd(cfg: &ExperimentConfig) -> Result<Trace> {
    let mut trace = Trace::new(&["method", "instance", "n", "dim", "budget", "loss", "reference", "gap"]);
    let mut r = rng(cfg.seed, 12);
    for &n in &SGD_SIZES {
        for rep in 0..SGD_REPS {
            let sample = boundary_sample(n, &mut r)?;
            let v_max = 1.0;
            let ols = lspu_ols(&sample, v_max, 0.0, NormPair::L2)?;
            let g = sample.scores.iter().map(|p| p[0].abs()).fold(0.0, f64::max);
            let sgd = lspu_sgd(&sample, v_max, 1.0 / (g * g * (n as f64).sqrt()), NormPair::L2)?;
            trace.push(vec![
                "lspu-sgd".into(),
                rep.into(),
                n.into(),
                1usize.into(),
                v_max.into(),
                sgd.loss.into(),
                ols.loss.into(),
                (sgd.loss - ols.loss).into(),
            ])?;
        }
    }
    let sched = Schedule::restarted(400, 16);
    for instance in 0..DRPU_INSTANCES {
        let dim = 1 + instance % 2;
        let n: usize = r.gen_range(8..=32);
        let w: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.5..1.5)).collect();
        let scores: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let targets = scores
            .iter()
            .map(|p| p.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + r.gen_range(-0.5..0.5))
            .collect();
        let sample = ResidualSample::uniform(scores, targets)?;
        let v_max = 1.0;
        let c = r.gen_range(1.0..5.0);
        let fit = drpu_minimize_linf(&sample, v_max, c, NormPair::L2, &sched)?;
        let grid = grid_minimum(dim, v_max, |v| Ok(robust_loss_linf(v, &sample, c)?.0))?;
        trace.push(vec![
            "drpu-linf".into(),
            instance.into(),
            n.into(),
            dim.into(),
            c.into(),
            fit.loss.into(),
            grid.into(),
            (fit.loss - grid).into(),
        ])?;
        let c2 = r.gen_range(1.0..5.0);
        let fit = drpu_minimize_chi2(&sample, v_max, c2, NormPair::L2, &sched)?;
        let grid = grid_minimum(dim, v_max, |v| Ok(robust_loss_chi2(v, &sample, c2)?.0))?;
        trace.push(vec![
            "drpu-chi2".into(),
            instance.into(),
            n.into(),
            dim.into(),
            c2.into(),
            fit.loss.into(),
            grid.into(),
            (fit.loss - grid).into(),
        ])?;
    }
    Ok(trace)
}

fn mean_gap(trace: &Trace, n: usize) -> Result<f64> {
    let idx: Vec<usize> = trace
        .select("method", "lspu-sgd")?
        .into_iter()
        .filter(|&i| trace.num(i, "n").ok() == Some(n as f64))
        .collect();
    ensure!(!idx.is_empty(), "no SGD rows with n = {n}");
    Ok(idx.iter().map(|&i| trace.num(i, "gap")).sum::<Result<f64>>()? / idx.len() as f64)
}

fn judge_sgd(trace: &Trace, _cfg: &ExperimentConfig) -> Result<Vec<Verdict>> {
    let ratio = mean_gap(trace, SGD_SIZES[0])? / mean_gap(trace, SGD_SIZES[1])?;
    let worst = |method: &str| -> Result<f64> {
        let idx = trace.select("method", method)?;
        ensure!(!idx.is_empty(), "no {method} rows");
        Ok(max_of(idx.iter().map(|&i| trace.num(i, "gap").map(f64::abs)).collect::<Result<Vec<_>>>()?))
    };
    Ok(vec![
        Verdict::at_least("sgd_lspu_gap_ratio.lower", ratio, RATIO_RANGE.0),
        Verdict::at_most("sgd_lspu_gap_ratio.upper", ratio, RATIO_RANGE.1),
        Verdict::at_most("max_drpu_linf_gap_to_grid", worst("drpu-linf")?, DRPU_TOL),
        Verdict::at_most("max_drpu_chi2_gap_to_grid", worst("drpu-chi2")?, DRPU_TOL),
    ])
}

fn plot_sgd(trace: &Trace, _cfg: &ExperimentConfig) -> Result<Plot> {
    let mut plot = Plot::new("Loss gap of the iterative solvers", "instance", "loss - reference").log_y();
    for (method, idx) in trace.groups("method")? {
        if method == "lspu-sgd" {
            for &n in &SGD_SIZES {
                let pts = idx
                    .iter()
                    .filter(|&&i| trace.num(i, "n").ok() == Some(n as f64))
                    .map(|&i| Ok((trace.num(i, "instance")?, trace.num(i, "gap")?)))
                    .collect::<Result<Vec<_>>>()?;
                plot = plot.with(Series::new(format!("lspu-sgd N={n}"), pts));
            }
        } else {
            let pts = idx
                .iter()
                .map(|&i| Ok((trace.num(i, "instance")?, trace.num(i, "gap")?)))
                .collect::<Result<Vec<_>>>()?;
            plot = plot.with(Series::new(method, pts));
        }
    }
    Ok(plot)
}
