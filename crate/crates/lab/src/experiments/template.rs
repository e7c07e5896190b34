//! The actor-critic template with any update rule, on the three-state example
//! or on an MDP loaded from a TOML file.

use anyhow::{anyhow, Result};
use polab::actor::{run_template, EtaPolicy, SampleMode, TemplateConfig, UpdateRule};
use polab::critic::OracleKind;
use polab::mdp::io::load_mdp_file;
use polab::mdp::{figure1_mdp, occupancy, optimal_policy, PolicyTable};
use polab::policy::{FeatureMap, PolicyFamily};
use polab::Matrix;

use super::figure1::{lemma_excess, THETA_CP};
use super::{iter_columns, iter_row, series_points, ExperimentSpec};
use crate::config::ExperimentConfig;
use crate::report::Verdict;
use crate::svg::{Plot, Series};
use crate::trace::Trace;

const DEFAULT_RULE: UpdateRule = UpdateRule::MeanMatch;
const BOUND_SLACK: f64 = 1e-6;
/// Pessimism used with `--oracle perturbed` when the MDP carries none.
const DEFAULT_PESSIMISM: f64 = 1.0;

pub const TEMPLATE: ExperimentSpec = ExperimentSpec {
    id: "exp_template",
    about: "one run of the actor-critic template with the chosen update rule",
    options: "--update, --k, --eta, --n, --norm, --oracle, --c, --c2, --mdp FILE",
    defaults: |c| c.k = 80,
    run,
    judge,
    plot,
};

fn build(cfg: &ExperimentConfig) -> Result<TemplateConfig<f64>> {
    let rule = cfg.update.unwrap_or(DEFAULT_RULE);
    let (mdp, family, pi_cp, d_data, file_pessimism) = match &cfg.mdp {
        None => {
            let mdp = figure1_mdp::<f64>();
            let family = PolicyFamily::LogLinear(FeatureMap::figure1());
            let pi_cp = family.to_policy_table(&[THETA_CP])?;
            let d_data = occupancy(&mdp, &pi_cp)?;
            (mdp, family, pi_cp, d_data, None)
        }
        Some(path) => {
            let file = load_mdp_file::<f64>(path)?;
            let (ns, na) = (file.mdp.n_states(), file.mdp.n_actions());
            let family = match file.features {
                Some(f) => PolicyFamily::LogLinear(f),
                None => PolicyFamily::tabular(ns, na),
            };
            let pi_cp = optimal_policy(&file.mdp)?;
            let d_data = occupancy(&file.mdp, &PolicyTable::uniform(ns, na))?;
            (file.mdp, family, pi_cp, d_data, file.pessimism)
        }
    };
    let dim = family.dim();
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut tc = TemplateConfig::new(mdp, family, vec![0.0; dim], pi_cp, d_data, rule, cfg.k);
    tc.norm = cfg.norm;
    tc.c_linf = cfg.c;
    tc.c_chi2 = cfg.c2;
    if let Some(eta) = cfg.fixed_eta() {
        tc.eta = EtaPolicy::Fixed(eta);
    }
    if let Some(n) = cfg.n {
        tc.samples = SampleMode::Sampled { n, seed: cfg.seed };
    }
    tc.pessimism = match cfg.oracle {
        OracleKind::Exact => None,
        OracleKind::Perturbed => Some(file_pessimism.unwrap_or_else(|| Matrix::from_fn(ns, na, |_, _| DEFAULT_PESSIMISM))),
        OracleKind::Custom => return Err(anyhow!("the custom oracle is only available through the library")),
    };
    Ok(tc)
}

fn run(cfg: &ExperimentConfig) -> Result<Trace> {
    let tc = build(cfg)?;
    let beta = tc.family.smoothness(cfg.norm).map(|s| s.beta).unwrap_or(f64::MAX);
    let out = run_template(&tc)?;
    let mut trace = Trace::new(&iter_columns(&[], &["j_cp", "v_norm", "v_max", "kl", "beta"]));
    for (rec, upd) in out.records.iter().zip(&out.updates) {
        trace.push(iter_row(
            tc.rule.label(),
            vec![],
            rec,
            cfg.wallclock,
            vec![
                out.j_cp.into(),
                cfg.norm.norm(&upd.v).into(),
                tc.v_max.into(),
                out.kl_cp_1.into(),
                beta.into(),
            ],
        ))?;
    }
    Ok(trace)
}

fn judge(trace: &Trace, cfg: &ExperimentConfig) -> Result<Vec<Verdict>> {
    let mut out = vec![Verdict::at_least("rows", trace.len() as f64, cfg.k as f64)];
    let idx: Vec<usize> = (0..trace.len()).collect();
    let method: UpdateRule = trace.text(0, "method")?.parse()?;
    match method {
        UpdateRule::Pspi => {
            let k = idx.len() as f64;
            let (kl, eta, v) = (trace.num(0, "kl")?, trace.num(0, "eta")?, trace.num(0, "v_max")?);
            let avg = trace.nums("regret_term")?.iter().sum::<f64>() / k;
            let bound = kl / (eta * k) + eta * v * v / 8.0;
            out.push(Verdict::at_most("regret_bound_excess", avg - bound, BOUND_SLACK));
        }
        UpdateRule::Cmd => {}
        _ => out.push(Verdict::at_most("regret_bound_excess", lemma_excess(trace, &idx)?, BOUND_SLACK)),
    }
    Ok(out)
}

fn plot(trace: &Trace, _cfg: &ExperimentConfig) -> Result<Plot> {
    let idx: Vec<usize> = (0..trace.len()).collect();
    let method = trace.text(0, "method")?.to_string();
    let j_cp = trace.num(0, "j_cp")?;
    Ok(Plot::new("Template run: return of pi_k", "k", "J(pi_k)")
        .with(Series::new(method, series_points(trace, &idx, "J_pi_k")?))
        .with(Series::new("J(pi_cp)", vec![(1.0, j_cp), (idx.len() as f64, j_cp)])))
}
