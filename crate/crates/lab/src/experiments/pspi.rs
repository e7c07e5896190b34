//! Multiplicative-weights regret against the optimal policy on random MDPs.

use anyhow::Result;
use polab::actor::{run_template, EtaPolicy, TemplateConfig, UpdateRule};
use polab::mdp::{occupancy, optimal_policy, random_mdp};
use polab::policy::PolicyFamily;
use rand::Rng;

use super::{iter_columns, iter_row, max_of, rng, ExperimentSpec};
use crate::config::ExperimentConfig;
use crate::report::Verdict;
use crate::svg::{Plot, Series};
use crate::trace::Trace;

const N_MDPS: usize = 20;
const HORIZONS: [usize; 3] = [10, 100, 1000];

pub const PSPI_BOUND: ExperimentSpec = ExperimentSpec {
    id: "exp_pspi_bound",
    about: "tabular multiplicative weights stays under the regret bound on random MDPs",
    options: "--k (largest horizon), --eta",
    defaults: |c| c.k = 1000,
    run,
    judge,
    plot,
};

fn horizons(k: usize) -> Vec<usize> {
    let mut h: Vec<usize> = HORIZONS.iter().copied().filter(|&x| x < k).collect();
    h.push(k);
    h
}

fn run(cfg: &ExperimentConfig) -> Result<Trace> {
    cfg.require_exact()?;
    let mut trace = Trace::new(&iter_columns(&["run", "mdp", "horizon"], &["v_max", "kl"]));
    let mut r = rng(cfg.seed, 6);
    for m in 0..N_MDPS {
        let ns = r.gen_range(2..=10);
        let na = r.gen_range(2..=5);
        let gamma = r.gen_range(0.5..0.95);
        let mdp = random_mdp::<f64, _>(ns, na, gamma, &mut r);
        let pi_cp = optimal_policy(&mdp)?;
        let d_cp = occupancy(&mdp, &pi_cp)?;
        for horizon in horizons(cfg.k) {
            let mut tc = TemplateConfig::new(
                mdp.clone(),
                PolicyFamily::tabular(ns, na),
                vec![0.0; ns * na],
                pi_cp.clone(),
                d_cp.clone(),
                UpdateRule::Pspi,
                horizon,
            );
            if let Some(eta) = cfg.fixed_eta() {
                tc.eta = EtaPolicy::Fixed(eta);
            }
            let out = run_template(&tc)?;
            let run_id = format!("m{m}-K{horizon}");
            for rec in &out.records {
                trace.push(iter_row(
                    "pspi",
                    vec![run_id.as_str().into(), m.into(), horizon.into()],
                    rec,
                    cfg.wallclock,
                    vec![tc.v_max.into(), out.kl_cp_1.into()],
                ))?;
            }
        }
    }
    Ok(trace)
}

/// `KL / (eta K) + eta V^2 / 8`; equals `V sqrt(KL / (2K))` at the tuned step.
fn hedge_bound(kl: f64, eta: f64, k: f64, v_max: f64) -> f64 {
    kl / (eta * k) + eta * v_max * v_max / 8.0
}

fn judge(trace: &Trace, cfg: &ExperimentConfig) -> Result<Vec<Verdict>> {
    let mut ratios = Vec::new();
    for (_, idx) in trace.groups("run")? {
        let first = idx[0];
        let k = idx.len() as f64;
        anyhow::ensure!(trace.num(first, "horizon")? == k, "run has {k} rows but a different horizon");
        let avg = idx.iter().map(|&i| trace.num(i, "regret_term")).sum::<Result<f64>>()? / k;
        let bound = hedge_bound(trace.num(first, "kl")?, trace.num(first, "eta")?, k, trace.num(first, "v_max")?);
        ratios.push(avg / bound);
    }
    Ok(vec![
        Verdict::at_most("max_regret_over_bound", max_of(ratios.iter().copied()), 1.0),
        Verdict::at_least("runs", ratios.len() as f64, (N_MDPS * horizons(cfg.k).len()) as f64),
    ])
}

fn plot(trace: &Trace, _cfg: &ExperimentConfig) -> Result<Plot> {
    let mut plot = Plot::new("Multiplicative weights: running average regret", "k", "Reg_k / k");
    let groups = trace.groups("run")?;
    if let Some((name, idx)) = groups.iter().max_by_key(|(_, idx)| idx.len()).filter(|_| !groups.is_empty()) {
        let mut total = 0.0;
        let mut pts = Vec::with_capacity(idx.len());
        for (j, &i) in idx.iter().enumerate() {
            total += trace.num(i, "regret_term")?;
            pts.push(((j + 1) as f64, total / (j + 1) as f64));
        }
        let first = idx[0];
        let bound = hedge_bound(
            trace.num(first, "kl")?,
            trace.num(first, "eta")?,
            idx.len() as f64,
            trace.num(first, "v_max")?,
        );
        plot = plot
            .with(Series::new(name.clone(), pts))
            .with(Series::new("bound at K", vec![(1.0, bound), (idx.len() as f64, bound)]));
    }
    Ok(plot)
}
