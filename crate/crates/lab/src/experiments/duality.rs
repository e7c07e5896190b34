//! Random checks of the CVaR and chi-square dual representations.

use anyhow::Result;
use polab::dro::{brute_force_linf_primal, chi2_dual, empirical_cvar_one_sided};
use rand::Rng;

use super::{max_of, rng, ExperimentSpec};
use crate::config::ExperimentConfig;
use crate::report::Verdict;
use crate::svg::{Plot, Series};
use crate::trace::Trace;

const DUALITY_TOL: f64 = 1e-8;
/// Largest sample for exhaustive vertex enumeration.
const ENUM_MAX_N: usize = 12;

pub const DUALITY: ExperimentSpec = ExperimentSpec {
    id: "exp_duality",
    about: "CVaR primal/dual agreement, quantile tail condition and the chi-square closed form",
    options: "--k (instance count)",
    defaults: |c| c.k = 500,
    run,
    judge,
    plot,
};

/// `max w^T z / N` over the vertices of `{0 <= w <= C, sum w = N}`: `floor(N/C)`
/// coordinates at `C`, at most one fractional coordinate, the rest zero.
fn vertex_primal(z: &[f64], c: f64) -> f64 {
    let n = z.len();
    let nf = n as f64;
    let mut full = (nf / c).floor() as usize;
    while full > 0 && c * full as f64 > nf {
        full -= 1;
    }
    while (full + 1) as f64 * c <= nf {
        full += 1;
    }
    let rest = nf - c * full as f64;
    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != full {
            continue;
        }
        let base: f64 = (0..n).filter(|&i| mask & (1 << i) != 0).map(|i| c * z[i]).sum();
        if rest == 0.0 {
            best = best.max(base / nf);
            continue;
        }
        for j in (0..n).filter(|&j| mask & (1 << j) == 0) {
            best = best.max((base + rest * z[j]) / nf);
        }
    }
    best
}

fn run(cfg: &ExperimentConfig) -> Result<Trace> {
    let mut trace = Trace::new(&[
        "instance",
        "n",
        "c",
        "primal",
        "dual",
        "gap",
        "enumerated",
        "vertex_gap",
        "tail_count",
        "c2",
        "chi2_dual",
        "chi2_closed",
        "chi2_gap",
    ]);
    let mut r = rng(cfg.seed, 3);
    for instance in 0..cfg.k {
        let (z, c, c2) = if instance == 0 {
            (vec![0.0, 2.0], 2.0, 2.0)
        } else {
            let n = r.gen_range(1..=64);
            let ties = r.gen_bool(1.0 / 3.0);
            let z: Vec<f64> = (0..n)
                .map(|_| {
                    let x: f64 = r.gen_range(-5.0..5.0);
                    if ties {
                        (2.0 * x).round() / 2.0
                    } else {
                        x
                    }
                })
                .collect();
            let c = if r.gen_bool(0.2) { r.gen_range(1..=10) as f64 } else { r.gen_range(1.0..=10.0) };
            (z, c, r.gen_range(1.0..=10.0))
        };
        let n = z.len();
        let primal = brute_force_linf_primal(&z, c)?;
        let sol = empirical_cvar_one_sided(&z, c)?;
        let (enumerated, vertex_gap) = if n <= ENUM_MAX_N {
            (1usize, (vertex_primal(&z, c) - sol.value).abs())
        } else {
            (0, 0.0)
        };
        let tail_count = z.iter().filter(|&&x| x > sol.tau).count();
        let mean = z.iter().sum::<f64>() / n as f64;
        let var = z.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        let closed = mean + ((c2 - 1.0) * var).sqrt();
        let dual2 = chi2_dual(&z, c2)?;
        trace.push(vec![
            instance.into(),
            n.into(),
            c.into(),
            primal.into(),
            sol.value.into(),
            (primal - sol.value).abs().into(),
            enumerated.into(),
            vertex_gap.into(),
            tail_count.into(),
            c2.into(),
            dual2.into(),
            closed.into(),
            (dual2 - closed).abs().into(),
        ])?;
    }
    Ok(trace)
}

fn judge(trace: &Trace, _cfg: &ExperimentConfig) -> Result<Vec<Verdict>> {
    let mut tail_excess = Vec::with_capacity(trace.len());
    for i in 0..trace.len() {
        // empirical Pr(eps > tau) <= 1/C, i.e. count * C <= N
        tail_excess.push(trace.num(i, "tail_count")? * trace.num(i, "c")? - trace.num(i, "n")?);
    }
    let enumerated = trace.nums("enumerated")?.iter().filter(|&&e| e == 1.0).count();
    Ok(vec![
        Verdict::at_most("max_cvar_duality_gap", max_of(trace.nums("gap")?), DUALITY_TOL),
        Verdict::at_most("max_vertex_enumeration_gap", max_of(trace.nums("vertex_gap")?), DUALITY_TOL),
        Verdict::at_least("vertex_enumerated_instances", enumerated as f64, 1.0),
        Verdict::at_most("max_tail_excess", max_of(tail_excess), 0.0),
        Verdict::at_most("max_chi2_closed_form_gap", max_of(trace.nums("chi2_gap")?), DUALITY_TOL),
    ])
}

fn plot(trace: &Trace, _cfg: &ExperimentConfig) -> Result<Plot> {
    let pts = |col: &str| -> Result<Vec<(f64, f64)>> {
        (0..trace.len()).map(|i| Ok((trace.num(i, "instance")?, trace.num(i, col)?))).collect()
    };
    Ok(Plot::new("Dual representations: absolute gaps", "instance", "gap")
        .log_y()
        .with(Series::new("CVaR primal - dual", pts("gap")?))
        .with(Series::new("chi-square dual - closed form", pts("chi2_gap")?)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_enumeration_by_hand() {
        // C = 2 on four atoms: the two largest carry weight 2 each
        assert!((vertex_primal(&[3.0, 1.0, -1.0, -3.0], 2.0) - 2.0).abs() < 1e-15);
        // C = 1 is the mean
        assert!((vertex_primal(&[2.0, -1.0, 0.5], 1.0) - 0.5).abs() < 1e-15);
        // C = 1.5 on two atoms: weights (1.5, 0.5)
        assert!((vertex_primal(&[4.0, 0.0], 1.5) - 3.0).abs() < 1e-15);
    }
}
