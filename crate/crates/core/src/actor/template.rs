//! The generic actor-critic loop: critic, update direction, parameter step.

use std::time::Instant;

use super::{
    cfa_error, cmd_step_generic, lspu_ols, lspu_sgd, mean_match, proxy_advantage, regret_term, InnerSolver,
    UpdateRule, UpdateVector,
};
use crate::critic::{exact_oracle, perturbed_oracle};
use crate::dro::{drpu_minimize_chi2, drpu_minimize_linf, ResidualSample, Schedule};
use crate::error::{invalid, Error, Result};
use crate::linalg::{Matrix, NormPair};
use crate::mdp::{eval_policy, occupancy, Occupancy, PolicyTable, TabularMdp};
use crate::policy::{kl_tables, PolicyFamily};
use crate::sampling::{exhaustive_dataset, sample_dataset, Dataset};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaPolicy<T> {
    Fixed(T),
    /// The step size prescribed by the regret bound of the chosen rule.
    Tuned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Every `(s, a)` weighted by the data distribution.
    Exhaustive,
    Sampled { n: usize, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct TemplateConfig<T> {
    pub mdp: TabularMdp<T>,
    pub family: PolicyFamily<T>,
    pub theta_1: Vec<T>,
    pub pi_cp: PolicyTable<T>,
    pub d_data: Occupancy<T>,
    /// `None` for the exact oracle, otherwise a nonnegative pessimism table.
    pub pessimism: Option<Matrix<T>>,
    pub rule: UpdateRule,
    pub iterations: usize,
    pub eta: EtaPolicy<T>,
    pub v_max: T,
    pub norm: NormPair,
    pub samples: SampleMode,
    pub ridge: T,
    pub c_linf: T,
    pub c_chi2: T,
    pub schedule: Schedule<T>,
    /// `None` picks `1 / (G^2 sqrt(N))`.
    pub sgd_alpha: Option<T>,
    pub inner: InnerSolver<T>,
}

impl<T: Scalar> TemplateConfig<T> {
    /// Exact oracle, exhaustive samples, tuned step size and `V_max` from
    /// the MDP; callers override fields as needed.
    pub fn new(
        mdp: TabularMdp<T>,
        family: PolicyFamily<T>,
        theta_1: Vec<T>,
        pi_cp: PolicyTable<T>,
        d_data: Occupancy<T>,
        rule: UpdateRule,
        iterations: usize,
    ) -> Self {
        let v_max = mdp.v_max();
        Self {
            mdp,
            family,
            theta_1,
            pi_cp,
            d_data,
            pessimism: None,
            rule,
            iterations,
            eta: EtaPolicy::Tuned,
            v_max,
            norm: NormPair::L2,
            samples: SampleMode::Exhaustive,
            ridge: T::zero(),
            c_linf: T::one(),
            c_chi2: T::one(),
            schedule: Schedule::default(),
            sgd_alpha: None,
            inner: InnerSolver::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T> {
    pub k: usize,
    pub j_pi: T,
    pub regret_term: T,
    pub err: T,
    pub loss_v: T,
    pub eta: T,
    pub wallclock_us: u128,
}

#[derive(Debug, Clone)]
pub struct TemplateRun<T> {
    pub records: Vec<IterationRecord<T>>,
    pub thetas: Vec<Vec<T>>,
    pub policies: Vec<PolicyTable<T>>,
    pub critics: Vec<Matrix<T>>,
    pub updates: Vec<UpdateVector<T>>,
    pub final_theta: Vec<T>,
    /// Uniform mixture of `pi_1..pi_K`.
    pub mixture: PolicyTable<T>,
    pub eta: T,
    pub kl_cp_1: T,
    pub j_cp: T,
}

impl<T: Scalar> TemplateRun<T> {
    /// `(1/K) sum_k regret_term_k`.
    pub fn average_regret(&self) -> T {
        let total: T = self.records.iter().map(|r| r.regret_term).sum();
        total / T::from_usize_lossy(self.records.len().max(1))
    }

    pub fn average_err(&self) -> T {
        let total: T = self.records.iter().map(|r| r.err).sum();
        total / T::from_usize_lossy(self.records.len().max(1))
    }
}

/// `sqrt(8 KL / (K V^2))`, which balances the multiplicative-weights regret.
pub fn pspi_step_size<T: Scalar>(kl: T, k: usize, v_max: T) -> T {
    (T::lit(8.0) * kl / (T::from_usize_lossy(k) * v_max * v_max)).sqrt()
}

/// `sqrt(2 KL / (beta K V^2))` for updates `theta += eta v`, `||v|| <= V`.
pub fn lemma_step<T: Scalar>(kl: T, k: usize, v_max: T, beta: T) -> T {
    (T::two() * kl / (beta * T::from_usize_lossy(k) * v_max * v_max)).sqrt()
}

fn sgd_alpha<T: Scalar>(sample: &ResidualSample<T>, norm: NormPair) -> T {
    let g = sample
        .scores
        .iter()
        .map(|p| norm.dual_norm(p))
        .fold(T::zero(), T::max);
    let g2 = if g > T::zero() { g * g } else { T::one() };
    T::one() / (g2 * T::from_usize_lossy(sample.len()).sqrt())
}

pub fn run_template<T: Scalar>(cfg: &TemplateConfig<T>) -> Result<TemplateRun<T>> {
    if cfg.iterations == 0 {
        return Err(invalid("iterations", "must be at least 1"));
    }
    cfg.family.check_theta(&cfg.theta_1)?;
    let mdp = &cfg.mdp;
    let family = &cfg.family;
    if cfg.rule == UpdateRule::Pspi && !matches!(family, PolicyFamily::TabularSoftmax { .. }) {
        return Err(Error::UnsupportedFamily {
            operation: "pspi template step",
            family: family.name(),
        });
    }
    let d_cp = occupancy(mdp, &cfg.pi_cp)?;
    let j_cp = eval_policy(mdp, &cfg.pi_cp)?.return_;
    let pi_1 = family.to_policy_table(&cfg.theta_1)?;
    let kl = kl_tables(&cfg.pi_cp, &pi_1, &d_cp.d_s)?;
    let eta = match cfg.eta {
        EtaPolicy::Fixed(e) => e,
        EtaPolicy::Tuned => {
            if !kl.finite {
                return Err(invalid("step size", "comparator is not absolutely continuous w.r.t. pi_1"));
            }
            if cfg.rule == UpdateRule::Pspi {
                pspi_step_size(kl.value, cfg.iterations, cfg.v_max)
            } else {
                let beta = family
                    .smoothness(cfg.norm)
                    .ok_or(Error::UnsupportedFamily {
                        operation: "tuned step size",
                        family: family.name(),
                    })?
                    .beta;
                lemma_step(kl.value, cfg.iterations, cfg.v_max, beta)
            }
        }
    };
    let data: Dataset<T> = match cfg.samples {
        SampleMode::Exhaustive => exhaustive_dataset(&cfg.d_data),
        SampleMode::Sampled { n, seed } => sample_dataset(&cfg.d_data, n, seed)?,
    };

    let mut theta = cfg.theta_1.clone();
    let mut run = TemplateRun {
        records: Vec::with_capacity(cfg.iterations),
        thetas: Vec::with_capacity(cfg.iterations),
        policies: Vec::with_capacity(cfg.iterations),
        critics: Vec::with_capacity(cfg.iterations),
        updates: Vec::with_capacity(cfg.iterations),
        final_theta: Vec::new(),
        mixture: pi_1.clone(),
        eta,
        kl_cp_1: kl.value,
        j_cp,
    };
    for k in 1..=cfg.iterations {
        let started = Instant::now();
        let step = |theta: &[T]| -> Result<(IterationRecord<T>, Vec<T>, PolicyTable<T>, Matrix<T>, UpdateVector<T>)> {
            let pi = family.to_policy_table(theta)?;
            let f = match &cfg.pessimism {
                None => exact_oracle(mdp, &pi)?,
                Some(c) => perturbed_oracle(mdp, &pi, c)?,
            }
            .into_table();
            let adv = proxy_advantage(&pi, &f)?;
            let scores = family.score_table(theta)?;
            let j_pi = eval_policy(mdp, &pi)?.return_;
            let regret = regret_term(&d_cp, &cfg.pi_cp, &pi, &f);
            let (next, update) = match cfg.rule {
                UpdateRule::Pspi => {
                    let v = f.as_slice().to_vec();
                    let next = theta.iter().zip(&v).map(|(&t, &x)| t + eta * x).collect();
                    (next, UpdateVector { v, v_max: cfg.v_max, rule: cfg.rule, loss: T::zero(), residual: T::zero(), rescaled: false })
                }
                UpdateRule::Cmd => {
                    let next = cmd_step_generic(family, theta, &f, eta, &cfg.d_data.d_s, &cfg.inner)?;
                    let v = next.iter().zip(theta).map(|(&a, &b)| (a - b) / eta).collect();
                    (next, UpdateVector { v, v_max: cfg.v_max, rule: cfg.rule, loss: T::zero(), residual: T::zero(), rescaled: false })
                }
                rule => {
                    let sample = ResidualSample::from_dataset(&data, &scores, &adv)?;
                    let update = match rule {
                        UpdateRule::LspuOls => lspu_ols(&sample, cfg.v_max, cfg.ridge, cfg.norm)?,
                        UpdateRule::LspuSgd => {
                            let alpha = cfg.sgd_alpha.unwrap_or_else(|| sgd_alpha(&sample, cfg.norm));
                            lspu_sgd(&sample, cfg.v_max, alpha, cfg.norm)?
                        }
                        UpdateRule::DrpuLinf => {
                            let fit = drpu_minimize_linf(&sample, cfg.v_max, cfg.c_linf, cfg.norm, &cfg.schedule)?;
                            UpdateVector { v: fit.v, v_max: cfg.v_max, rule, loss: fit.loss, residual: T::zero(), rescaled: false }
                        }
                        UpdateRule::DrpuChi2 => {
                            let fit = drpu_minimize_chi2(&sample, cfg.v_max, cfg.c_chi2, cfg.norm, &cfg.schedule)?;
                            UpdateVector { v: fit.v, v_max: cfg.v_max, rule, loss: fit.loss, residual: T::zero(), rescaled: false }
                        }
                        UpdateRule::MeanMatch => {
                            let (m, mu) = sample.means();
                            mean_match(m, &mu, cfg.v_max, cfg.norm)?
                        }
                        UpdateRule::Pspi | UpdateRule::Cmd => unreachable!(),
                    };
                    let next = theta.iter().zip(&update.v).map(|(&t, &x)| t + eta * x).collect();
                    (next, update)
                }
            };
            let err = cfa_error(&d_cp, &scores, &adv, &update.v)?;
            let record = IterationRecord {
                k,
                j_pi,
                regret_term: regret,
                err,
                loss_v: update.loss,
                eta,
                wallclock_us: 0,
            };
            if !(j_pi.is_finite() && regret.is_finite() && err.is_finite() && update.loss.is_finite()) {
                return Err(Error::NonFinite("iteration metrics"));
            }
            Ok((record, next, pi, f, update))
        };
        let (mut record, next, pi, f, update) = step(&theta).map_err(|e| Error::AtIteration {
            iteration: k,
            cause: Box::new(e),
        })?;
        record.wallclock_us = started.elapsed().as_micros();
        run.records.push(record);
        run.thetas.push(std::mem::replace(&mut theta, next));
        run.policies.push(pi);
        run.critics.push(f);
        run.updates.push(update);
    }
    run.final_theta = theta;
    run.mixture = PolicyTable::mixture(&run.policies)?;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actor::pspi_step_tabular;
    use crate::mdp::{decompose_suboptimality, figure1_mdp, optimal_policy, random_mdp};
    use crate::policy::FeatureMap;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn figure1_config(rule: UpdateRule, k: usize) -> TemplateConfig<f64> {
        let mdp = figure1_mdp::<f64>();
        let family = PolicyFamily::LogLinear(FeatureMap::figure1());
        let pi_cp = family.to_policy_table(&[100.0]).unwrap();
        let d = occupancy(&mdp, &pi_cp).unwrap();
        TemplateConfig::new(mdp, family, vec![0.0], pi_cp, d, rule, k)
    }

    #[test]
    fn comparator_start_has_zero_regret() {
        let mdp = figure1_mdp::<f64>();
        let family = PolicyFamily::tabular(3, 2);
        let theta = vec![1.0, -1.0, 0.5, 0.0, 0.0, 2.0];
        let pi_cp = family.to_policy_table(&theta).unwrap();
        let d = occupancy(&mdp, &pi_cp).unwrap();
        let cfg = TemplateConfig::new(mdp, family, theta, pi_cp, d, UpdateRule::Pspi, 1);
        let run = run_template(&cfg).unwrap();
        assert!(run.records[0].regret_term.abs() < 1e-12);
    }

    #[test]
    fn pspi_template_matches_table_hedge() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mdp = random_mdp::<f64, _>(4, 3, 0.8, &mut rng);
        let family = PolicyFamily::tabular(4, 3);
        let pi_cp = optimal_policy(&mdp).unwrap();
        let d = occupancy(&mdp, &pi_cp).unwrap();
        let mut cfg = TemplateConfig::new(mdp.clone(), family, vec![0.0; 12], pi_cp.clone(), d, UpdateRule::Pspi, 5);
        cfg.eta = EtaPolicy::Fixed(0.3);
        let run = run_template(&cfg).unwrap();
        let mut pi = PolicyTable::uniform(4, 3);
        for (k, rec) in run.records.iter().enumerate() {
            assert!(run.policies[k].as_matrix().max_abs_diff(pi.as_matrix()) < 1e-12);
            assert!(rec.err.abs() < 1e-10);
            let f = exact_oracle(&mdp, &pi).unwrap();
            pi = pspi_step_tabular(&pi, f.table(), 0.3).unwrap();
        }
        let dec = decompose_suboptimality(&mdp, &pi_cp, &run.policies, &run.critics).unwrap();
        assert!((dec.actor - run.average_regret()).abs() < 1e-9);
        assert!(dec.residual < 1e-9);
    }

    #[test]
    fn figure1_pspi_like_runs_close_decomposition() {
        for rule in [UpdateRule::LspuOls, UpdateRule::MeanMatch] {
            let mut cfg = figure1_config(rule, 10);
            cfg.eta = EtaPolicy::Fixed(0.5);
            let run = run_template(&cfg).unwrap();
            let dec = decompose_suboptimality(&cfg.mdp, &cfg.pi_cp, &run.policies, &run.critics).unwrap();
            assert!(dec.residual < 1e-9);
            assert!((dec.actor - run.average_regret()).abs() < 1e-9);
        }
    }

    #[test]
    fn lemma_bound_holds_on_figure1() {
        for rule in [UpdateRule::LspuOls, UpdateRule::MeanMatch, UpdateRule::DrpuLinf] {
            let cfg = figure1_config(rule, 20);
            let run = run_template(&cfg).unwrap();
            let beta = cfg.family.smoothness(cfg.norm).unwrap().beta;
            let bound = cfg.v_max * (2.0 * beta * run.kl_cp_1 / 20.0).sqrt() + run.average_err() + 1e-6;
            assert!(run.updates.iter().all(|u| cfg.norm.norm(&u.v) <= cfg.v_max + 1e-12));
            assert!(run.average_regret() <= bound, "{rule}: {} > {bound}", run.average_regret());
        }
    }

    #[test]
    fn errors_carry_iteration() {
        let mut cfg = figure1_config(UpdateRule::LspuOls, 3);
        cfg.pessimism = Some(Matrix::from_fn(3, 2, |_, _| -1.0));
        match run_template(&cfg) {
            Err(Error::AtIteration { iteration: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
