//! Mean matching as a behaviour-cloning step, and the compatible case where
//! least squares recovers the critic's weights exactly.

use anyhow::Result;
use polab::actor::{bc_objective, cfa_error, comparator_mean_score, lspu_ols, mean_match, proxy_advantage};
use polab::dro::ResidualSample;
use polab::linalg::l2;
use polab::mdp::{occupancy, random_mdp, random_policy, Occupancy};
use polab::policy::{FeatureMap, PolicyFamily};
use polab::sampling::exhaustive_dataset;
use polab::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{max_of, rng, ExperimentSpec};
use crate::config::ExperimentConfig;
use crate::report::Verdict;
use crate::svg::{Plot, Series};
use crate::trace::Trace;

const N_STATES: usize = 5;
const N_ACTIONS: usize = 3;
const DIM: usize = 3;
const FD_STEP: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-5;
const CLIP_TOL: f64 = 1e-10;
const NORM_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-10;
const WEIGHT_TOL: f64 = 1e-8;

pub const MEAN_MATCHING: ExperimentSpec = ExperimentSpec {
    id: "exp_mean_matching",
    about: "mean matching follows the behaviour-cloning gradient and honours its clip contract",
    options: "--k (instance count), --norm",
    defaults: |c| c.k = 50,
    run: run_matching,
    judge: judge_matching,
    plot: plot_matching,
};

pub const COMPATIBLE: ExperimentSpec = ExperimentSpec {
    id: "exp_compatible",
    about: "least squares recovers w exactly when the critic is linear in the policy features",
    options: "--k (instance count), --norm",
    defaults: |c| c.k = 50,
    run: run_compatible,
    judge: judge_compatible,
    plot: plot_compatible,
};

struct World {
    family: PolicyFamily<f64>,
    features: FeatureMap<f64>,
    pi_cp: polab::Policy,
    d_cp: Occupancy<f64>,
    d_data: Occupancy<f64>,
    v_max: f64,
}

fn world(r: &mut ChaCha8Rng) -> Result<World> {
    let mdp = random_mdp::<f64, _>(N_STATES, N_ACTIONS, 0.8, r);
    let features = FeatureMap::from_fn(N_STATES, N_ACTIONS, DIM, |_, _| (0..DIM).map(|_| r.gen_range(-1.0..1.0)).collect())?;
    let pi_cp = random_policy(N_STATES, N_ACTIONS, r);
    let d_cp = occupancy(&mdp, &pi_cp)?;
    let d_data = occupancy(&mdp, &random_policy(N_STATES, N_ACTIONS, r))?;
    Ok(World {
        family: PolicyFamily::LogLinear(features.clone()),
        features,
        pi_cp,
        d_cp,
        d_data,
        v_max: mdp.v_max(),
    })
}

fn run_matching(cfg: &ExperimentConfig) -> Result<Trace> {
    let mut trace = Trace::new(&["instance", "mu_norm", "grad_rel_err", "m", "v_max", "clip_gap", "v_norm_excess"]);
    let mut r = rng(cfg.seed, 9);
    let w = world(&mut r)?;
    let phi = |theta: &[f64]| bc_objective(&w.family, theta, &w.pi_cp, &w.d_cp.d_s);
    for instance in 0..cfg.k {
        let theta: Vec<f64> = (0..DIM).map(|_| r.gen_range(-2.0..2.0)).collect();
        let mu = comparator_mean_score(&w.family, &theta, &w.d_cp)?;
        let mut fd = vec![0.0; DIM];
        for i in 0..DIM {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[i] += FD_STEP;
            down[i] -= FD_STEP;
            fd[i] = (phi(&up)? - phi(&down)?) / (2.0 * FD_STEP);
        }
        // the gradient of the cloning objective is -mu
        let diff: Vec<f64> = fd.iter().zip(&mu).map(|(g, m)| g + m).collect();
        let rel = l2(&diff) / l2(&mu);

        let pi = w.family.to_policy_table(&theta)?;
        let f = Matrix::from_fn(N_STATES, N_ACTIONS, |_, _| r.gen_range(0.0..w.v_max));
        let adv = proxy_advantage(&pi, &f)?;
        let m = w.d_cp.expect(&adv);
        let v_max = r.gen_range(0.05..3.0);
        let upd = mean_match(m, &mu, v_max, cfg.norm)?;
        let achieved: f64 = upd.v.iter().zip(&mu).map(|(a, b)| a * b).sum();
        let want = (m.abs() - v_max * cfg.norm.dual_norm(&mu)).max(0.0);
        trace.push(vec![
            instance.into(),
            l2(&mu).into(),
            rel.into(),
            m.into(),
            v_max.into(),
            ((m - achieved).abs() - want).abs().into(),
            (cfg.norm.norm(&upd.v) - v_max).into(),
        ])?;
    }
    Ok(trace)
}

fn judge_matching(trace: &Trace, _cfg: &ExperimentConfig) -> Result<Vec<Verdict>> {
    Ok(vec![
        Verdict::at_most("max_bc_gradient_rel_err", max_of(trace.nums("grad_rel_err")?), GRAD_REL_TOL),
        Verdict::at_most("max_clip_contract_gap", max_of(trace.nums("clip_gap")?), CLIP_TOL),
        Verdict::at_most("max_norm_excess", max_of(trace.nums("v_norm_excess")?), NORM_TOL),
    ])
}

fn plot_matching(trace: &Trace, _cfg: &ExperimentConfig) -> Result<Plot> {
    let pts: Vec<(f64, f64)> = (0..trace.len())
        .map(|i| Ok((trace.num(i, "instance")?, trace.num(i, "grad_rel_err")?)))
        .collect::<Result<_>>()?;
    Ok(Plot::new("Cloning gradient versus -mu", "instance", "relative error").log_y().with(Series::new("central differences", pts)))
}

fn run_compatible(cfg: &ExperimentConfig) -> Result<Trace> {
    let mut trace = Trace::new(&["instance", "max_abs_residual", "weight_gap", "err_cp", "rescaled"]);
    let mut r = rng(cfg.seed, 5);
    for instance in 0..cfg.k {
        let w = world(&mut r)?;
        let theta: Vec<f64> = (0..DIM).map(|_| r.gen_range(-1.0..1.0)).collect();
        let mut weights: Vec<f64> = (0..DIM).map(|_| r.gen_range(-1.0..1.0)).collect();
        let scale = w.v_max * r.gen_range(0.1..0.9) / cfg.norm.norm(&weights);
        weights.iter_mut().for_each(|x| *x *= scale);
        let pi = w.family.to_policy_table(&theta)?;
        let f = w.features.linear_table(&weights);
        let adv = proxy_advantage(&pi, &f)?;
        let scores = w.family.score_table(&theta)?;
        let sample = ResidualSample::from_dataset(&exhaustive_dataset(&w.d_data), &scores, &adv)?;
        let upd = lspu_ols(&sample, w.v_max, 0.0, cfg.norm)?;
        let residual = max_of(sample.residuals(&upd.v).iter().map(|e| e.abs()));
        let gap: Vec<f64> = upd.v.iter().zip(&weights).map(|(a, b)| a - b).collect();
        trace.push(vec![
            instance.into(),
            residual.into(),
            cfg.norm.norm(&gap).into(),
            cfa_error(&w.d_cp, &scores, &adv, &upd.v)?.into(),
            usize::from(upd.rescaled).into(),
        ])?;
    }
    Ok(trace)
}

fn judge_compatible(trace: &Trace, _cfg: &ExperimentConfig) -> Result<Vec<Verdict>> {
    let err = trace.nums("err_cp")?;
    Ok(vec![
        Verdict::at_most("max_abs_residual", max_of(trace.nums("max_abs_residual")?), RESIDUAL_TOL),
        Verdict::at_most("max_weight_gap", max_of(trace.nums("weight_gap")?), WEIGHT_TOL),
        Verdict::at_most("max_abs_cfa_error", max_of(err.iter().map(|e| e.abs())), RESIDUAL_TOL),
        Verdict::at_most("rescaled_instances", trace.nums("rescaled")?.iter().sum(), 0.0),
    ])
}

fn plot_compatible(trace: &Trace, _cfg: &ExperimentConfig) -> Result<Plot> {
    let pts = |col: &str| -> Result<Vec<(f64, f64)>> {
        (0..trace.len()).map(|i| Ok((trace.num(i, "instance")?, trace.num(i, col)?))).collect()
    };
    Ok(Plot::new("Least squares on a compatible critic", "instance", "gap")
        .log_y()
        .with(Series::new("||v - w||", pts("weight_gap")?))
        .with(Series::new("max |residual|", pts("max_abs_residual")?)))
}
