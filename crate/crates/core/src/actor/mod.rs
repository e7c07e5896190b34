//! Actor-update rules and the exact per-iteration diagnostics.

mod lspu;
mod template;

pub use lspu::{lspu_ols, lspu_sgd};
pub use template::{
    lemma_step, pspi_step_size, run_template, EtaPolicy, IterationRecord, SampleMode, TemplateConfig,
    TemplateRun,
};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::{symmetric_pinv, Lu, Matrix, NormPair};
use crate::mdp::{Occupancy, PolicyTable};
use crate::policy::{GaussianState, PolicyFamily, ScoreTable};
use crate::scalar::{all_finite, dot, logit, sigmoid, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    Pspi,
    Cmd,
    LspuOls,
    LspuSgd,
    DrpuLinf,
    DrpuChi2,
    MeanMatch,
}

impl UpdateRule {
    pub const ALL: [UpdateRule; 7] = [
        UpdateRule::Pspi,
        UpdateRule::Cmd,
        UpdateRule::LspuOls,
        UpdateRule::LspuSgd,
        UpdateRule::DrpuLinf,
        UpdateRule::DrpuChi2,
        UpdateRule::MeanMatch,
    ];

    pub fn label(self) -> &'static str {
        match self {
            UpdateRule::Pspi => "pspi",
            UpdateRule::Cmd => "cmd",
            UpdateRule::LspuOls => "lspu-ols",
            UpdateRule::LspuSgd => "lspu-sgd",
            UpdateRule::DrpuLinf => "drpu-linf",
            UpdateRule::DrpuChi2 => "drpu-chi2",
            UpdateRule::MeanMatch => "mean-match",
        }
    }
}

impl std::fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for UpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        UpdateRule::ALL
            .into_iter()
            .find(|r| r.label() == s)
            .ok_or_else(|| Error::Parse(format!("unknown update rule `{s}`")))
    }
}

/// Update direction `v` with `||v|| <= v_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateVector<T> {
    pub v: Vec<T>,
    pub v_max: T,
    pub rule: UpdateRule,
    /// The rule's own loss at `v`.
    pub loss: T,
    /// Part of the target the rule could not match (mean matching only).
    pub residual: T,
    /// Whether the raw solution was pulled back into the ball.
    pub rescaled: bool,
}

/// `A_k(s, a) = f(s, a) - f(s, pi_k)`.
pub fn proxy_advantage<T: Scalar>(pi: &PolicyTable<T>, f: &Matrix<T>) -> Result<Matrix<T>> {
    check_dim("critic rows", pi.n_states(), f.rows())?;
    check_dim("critic cols", pi.n_actions(), f.cols())?;
    let base = pi.average(f);
    Ok(Matrix::from_fn(f.rows(), f.cols(), |s, a| f[(s, a)] - base[s]))
}

/// `E_{s ~ d_cp}[f(s, pi_cp) - f(s, pi_k)]`, one summand of the regret.
pub fn regret_term<T: Scalar>(
    d_cp: &Occupancy<T>,
    pi_cp: &PolicyTable<T>,
    pi_k: &PolicyTable<T>,
    f: &Matrix<T>,
) -> T {
    let a = pi_cp.average(f);
    let b = pi_k.average(f);
    let diff: Vec<T> = a.iter().zip(&b).map(|(&x, &y)| x - y).collect();
    d_cp.expect_state(&diff)
}

/// Multiplicative weights `pi'(a|s) ∝ pi(a|s) exp(eta f(s, a))`.
pub fn pspi_step_tabular<T: Scalar>(pi: &PolicyTable<T>, f: &Matrix<T>, eta: T) -> Result<PolicyTable<T>> {
    check_dim("critic rows", pi.n_states(), f.rows())?;
    check_dim("critic cols", pi.n_actions(), f.cols())?;
    if !(eta >= T::zero()) {
        return Err(invalid("eta", format!("{eta} must be nonnegative")));
    }
    let mut w = Matrix::zeros(pi.n_states(), pi.n_actions());
    for s in 0..pi.n_states() {
        let top = f.row(s).iter().copied().fold(T::neg_infinity(), T::max);
        for a in 0..pi.n_actions() {
            w[(s, a)] = pi.prob(s, a) * (eta * (f[(s, a)] - top)).exp();
        }
    }
    PolicyTable::from_weights(w)
}

/// Concave quadratic critic `f(a) = -(a - u)^T Q (a - u) / 2 + c`, `Q ⪰ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCritic<T> {
    pub q: Matrix<T>,
    pub u: Vec<T>,
    pub c: T,
}

impl<T: Scalar> QuadraticCritic<T> {
    pub fn value(&self, a: &[T]) -> T {
        let d: Vec<T> = a.iter().zip(&self.u).map(|(&x, &y)| x - y).collect();
        self.c - dot(&d, &self.q.matvec(&d)).halved()
    }
}

/// Multiplicative weights on a Gaussian: `Lambda' = Lambda + eta Q`,
/// `h' = h + eta Q u`.
pub fn pspi_step_gaussian<T: Scalar>(
    state: &GaussianState<T>,
    critic: &QuadraticCritic<T>,
    eta: T,
) -> Result<GaussianState<T>> {
    let m = state.action_dim();
    check_dim("critic u", m, critic.u.len())?;
    check_dim("critic q", m, critic.q.rows())?;
    if !(eta >= T::zero()) {
        return Err(invalid("eta", format!("{eta} must be nonnegative")));
    }
    let precision = state.precision().add(&critic.q.scaled(eta));
    let qu = critic.q.matvec(&critic.u);
    let natural = state
        .natural()
        .iter()
        .zip(&qu)
        .map(|(&h, &x)| h + eta * x)
        .collect();
    GaussianState::new(precision, natural)
}

/// Closed-form contextual mirror-descent step on the two-context bandit:
/// `logit p' = logit p + eta (1 - 2 eps)`.
pub fn cmd_step_hardness<T: Scalar>(p: T, eta: T, eps: T) -> T {
    sigmoid(logit(p) + eta * (T::one() - T::two() * eps))
}

/// Inner gradient-ascent budget for [`cmd_step_generic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolver<T> {
    pub iterations: usize,
    pub learning_rate: T,
}

impl<T: Scalar> Default for InnerSolver<T> {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rate: T::lit(0.1),
        }
    }
}

fn cmd_objective<T: Scalar>(
    family: &PolicyFamily<T>,
    theta: &[T],
    log_pk: &[Vec<T>],
    f: &Matrix<T>,
    eta: T,
    d: &[T],
) -> Result<(T, Vec<T>)> {
    let table = family.score_table(theta)?;
    let mut value = T::zero();
    let mut grad = vec![T::zero(); family.dim()];
    for (s, &w) in d.iter().enumerate() {
        if w == T::zero() {
            continue;
        }
        let lp = family.log_probs(theta, s)?;
        for (a, &l) in lp.iter().enumerate() {
            let p = l.exp();
            if p == T::zero() {
                continue;
            }
            let g = f[(s, a)] - (l - log_pk[s][a]) / eta;
            value = value + w * p * g;
            for (o, &x) in grad.iter_mut().zip(table.score(s, a)) {
                *o = *o + w * p * g * x;
            }
        }
    }
    Ok((value, grad))
}

/// Approximate `argmax_theta E_{s ~ d}[f(s, pi_theta) - KL(pi_theta || pi_k) / eta]`
/// by gradient ascent from `theta_k`. The step grows by 1.2 after an
/// improving step and halves (rejecting the step) otherwise; the best
/// iterate is returned.
pub fn cmd_step_generic<T: Scalar>(
    family: &PolicyFamily<T>,
    theta_k: &[T],
    f: &Matrix<T>,
    eta: T,
    d_data: &[T],
    solver: &InnerSolver<T>,
) -> Result<Vec<T>> {
    let n_actions = family.n_actions().ok_or(Error::UnsupportedFamily {
        operation: "cmd_step_generic",
        family: family.name(),
    })?;
    check_dim("cmd state distribution", family.n_states(), d_data.len())?;
    check_dim("critic cols", n_actions, f.cols())?;
    if !(eta > T::zero()) {
        return Err(invalid("eta", "contextual mirror descent needs eta > 0"));
    }
    let log_pk = (0..family.n_states())
        .map(|s| family.log_probs(theta_k, s))
        .collect::<Result<Vec<_>>>()?;
    let mut theta = theta_k.to_vec();
    let (mut value, mut grad) = cmd_objective(family, &theta, &log_pk, f, eta, d_data)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("cmd objective"));
    }
    let mut lr = solver.learning_rate;
    for _ in 0..solver.iterations {
        if grad.iter().all(|g| g.abs() <= T::lit(1e-10)) {
            break;
        }
        let trial: Vec<T> = theta.iter().zip(&grad).map(|(&t, &g)| t + lr * g).collect();
        let Ok((v, g)) = cmd_objective(family, &trial, &log_pk, f, eta, d_data) else {
            lr = lr.halved();
            continue;
        };
        if v.is_finite() && v >= value && all_finite(&g) {
            theta = trial;
            value = v;
            grad = g;
            lr = lr * T::lit(1.2);
        } else {
            lr = lr.halved();
        }
        if lr < T::lit(1e-300) {
            break;
        }
    }
    Ok(theta)
}

/// Update `v = t u` with `u` the steepest unit direction for `mu`, scaled so
/// `v^T mu = clip(m, -V ||mu||_*, V ||mu||_*)`.
pub fn mean_match<T: Scalar>(m: T, mu: &[T], v_max: T, norm: NormPair) -> Result<UpdateVector<T>> {
    if !all_finite(mu) || !m.is_finite() {
        return Err(Error::NonFinite("mean matching input"));
    }
    let dual = norm.dual_norm(mu);
    let d = mu.len();
    if dual == T::zero() {
        return Ok(UpdateVector {
            v: vec![T::zero(); d],
            v_max,
            rule: UpdateRule::MeanMatch,
            loss: m.abs(),
            residual: m.abs(),
            rescaled: false,
        });
    }
    let cap = v_max * dual;
    let target = m.max(-cap).min(cap);
    let u = norm.steepest_unit(mu);
    let t = target / dual;
    let v: Vec<T> = u.iter().map(|&x| t * x).collect();
    let achieved = dot(&v, mu);
    Ok(UpdateVector {
        v,
        v_max,
        rule: UpdateRule::MeanMatch,
        loss: (m - achieved).abs(),
        residual: (m.abs() - cap).max(T::zero()),
        rescaled: m.abs() > cap,
    })
}

/// `err_k = E_{d_cp}[A_k(s, a) - v^T score(s, a)]`.
pub fn cfa_error<T: Scalar>(d_cp: &Occupancy<T>, scores: &ScoreTable<T>, adv: &Matrix<T>, v: &[T]) -> Result<T> {
    check_dim("update vector", scores.dim(), v.len())?;
    check_dim("occupancy states", scores.n_states(), d_cp.n_states())?;
    let fit = scores.project(v);
    let resid = Matrix::from_fn(adv.rows(), adv.cols(), |s, a| adv[(s, a)] - fit[(s, a)]);
    Ok(d_cp.expect(&resid))
}

/// Feature-coverage value with a flag for a rank-deficient covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage<T> {
    pub value: T,
    pub singular: bool,
}

/// `max_k E_{d_cp}[score_k]^T (E_{d_D}[score_k score_k^T])^{-1} E_{d_cp}[score_k]`,
/// falling back to the pseudo-inverse when the covariance is singular.
pub fn feature_coverage<T: Scalar>(
    d_cp: &Occupancy<T>,
    d_data: &Occupancy<T>,
    family: &PolicyFamily<T>,
    thetas: &[Vec<T>],
) -> Result<Coverage<T>> {
    let mut out = Coverage {
        value: T::zero(),
        singular: false,
    };
    for theta in thetas {
        let table = family.score_table(theta)?;
        let dim = table.dim();
        let mean = table.mean_under(&d_cp.d_sa);
        let mut cov = Matrix::zeros(dim, dim);
        for s in 0..table.n_states() {
            for a in 0..table.n_actions() {
                let w = d_data.d_sa[(s, a)];
                if w == T::zero() {
                    continue;
                }
                let phi = table.score(s, a);
                for i in 0..dim {
                    for j in 0..dim {
                        cov[(i, j)] = cov[(i, j)] + w * phi[i] * phi[j];
                    }
                }
            }
        }
        let (rank, pinv) = symmetric_pinv(&cov);
        let x = if rank == dim {
            Lu::factor(&cov).map(|lu| lu.solve(&mean)).unwrap_or_else(|_| pinv.matvec(&mean))
        } else {
            out.singular = true;
            pinv.matvec(&mean)
        };
        out.value = out.value.max(dot(&mean, &x));
    }
    Ok(out)
}

/// `Phi(theta) = E_{s ~ d_cp}[KL(pi_cp(.|s) || pi_theta(.|s))]`.
pub fn bc_objective<T: Scalar>(
    family: &PolicyFamily<T>,
    theta: &[T],
    pi_cp: &PolicyTable<T>,
    d_cp_states: &[T],
) -> Result<T> {
    let mut total = T::zero();
    for (s, &w) in d_cp_states.iter().enumerate() {
        if w == T::zero() {
            continue;
        }
        let lq = family.log_probs(theta, s)?;
        for (a, &p) in pi_cp.row(s).iter().enumerate() {
            if p > T::zero() {
                total = total + w * p * (p.ln() - lq[a]);
            }
        }
    }
    Ok(total)
}

/// `mu = E_{(s,a) ~ d_cp}[grad log pi_theta(a|s)]`; the gradient of
/// [`bc_objective`] is `-mu`.
pub fn comparator_mean_score<T: Scalar>(family: &PolicyFamily<T>, theta: &[T], d_cp: &Occupancy<T>) -> Result<Vec<T>> {
    Ok(family.score_table(theta)?.mean_under(&d_cp.d_sa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{figure1_mdp, hardness_bandit, occupancy};
    use crate::policy::FeatureMap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hedge_examples() {
        let pi = PolicyTable::<f64>::uniform(1, 2);
        let f = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let out = pspi_step_tabular(&pi, &f, 2f64.ln()).unwrap();
        assert!((out.prob(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(pspi_step_tabular(&pi, &f, 0.0).unwrap(), pi);
        let flat = Matrix::from_rows(&[vec![4.0, 4.0]]).unwrap();
        assert_eq!(pspi_step_tabular(&pi, &flat, 3.0).unwrap(), pi);
    }

    #[test]
    fn gaussian_step_example() {
        let st = GaussianState::<f64>::new(Matrix::identity(1), vec![0.0]).unwrap();
        let critic = QuadraticCritic {
            q: Matrix::identity(1).scaled(2.0),
            u: vec![1.0],
            c: 0.3,
        };
        let next = pspi_step_gaussian(&st, &critic, 0.5).unwrap();
        assert!((next.precision()[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((next.natural()[0] - 1.0).abs() < 1e-15);
        assert_eq!(pspi_step_gaussian(&st, &critic, 0.0).unwrap(), st);
    }

    #[test]
    fn gaussian_step_is_density_product() {
        // log pi' - log pi - eta f must be constant in a
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cov = Matrix::from_rows(&[vec![1.2, 0.3], vec![0.3, 0.8]]).unwrap();
        let st = GaussianState::from_moments(&[0.4, -0.2], &cov).unwrap();
        let critic = QuadraticCritic {
            q: Matrix::from_rows(&[vec![0.9, 0.2], vec![0.2, 0.5]]).unwrap(),
            u: vec![1.0, 2.0],
            c: -0.4,
        };
        let eta = 0.7;
        let next = pspi_step_gaussian(&st, &critic, eta).unwrap();
        let gap = |a: &[f64]| next.log_density(a).unwrap() - st.log_density(a).unwrap() - eta * critic.value(a);
        let g0 = gap(&[0.0, 0.0]);
        for _ in 0..20 {
            let a = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            assert!((gap(&a) - g0).abs() < 1e-10);
        }
    }

    #[test]
    fn hardness_closed_form() {
        assert!((cmd_step_hardness(0.5f64, 1.0, 0.25) - 0.622_459_331_201_854_6).abs() < 1e-12);
        assert_eq!(cmd_step_hardness(0.3f64, 2.0, 0.5), 0.3);
    }

    #[test]
    fn generic_cmd_matches_closed_form() {
        let fam = PolicyFamily::<f64>::HardnessOneDim;
        let f = hardness_bandit::<f64>().reward().clone();
        for &(eta, eps) in &[(0.1, 0.05), (0.5, 0.1), (1.0, 0.25), (1.0, 0.05)] {
            let mut theta = vec![0.0];
            let mut p = 0.5;
            for _ in 0..10 {
                theta = cmd_step_generic(&fam, &theta, &f, eta, &[1.0 - eps, eps], &InnerSolver::default()).unwrap();
                p = cmd_step_hardness(p, eta, eps);
                let got = fam.probs(&theta, 0).unwrap()[1];
                assert!((got - p).abs() < 1e-4, "eta {eta} eps {eps}: {got} vs {p}");
            }
        }
    }

    #[test]
    fn generic_cmd_pinned_cases() {
        let fam = PolicyFamily::tabular(2, 3);
        let theta = vec![0.3, -0.2, 0.1, 0.0, 0.5, -0.5];
        let f = Matrix::from_fn(2, 3, |s, a| (s + 2 * a) as f64);
        let out = cmd_step_generic(&fam, &theta, &f, 1e-8, &[0.5, 0.5], &InnerSolver::default()).unwrap();
        assert!(out.iter().zip(&theta).all(|(a, b)| (a - b).abs() < 1e-6));
        let flat = Matrix::from_fn(2, 3, |_, _| 2.0);
        let out = cmd_step_generic(&fam, &theta, &flat, 1.0, &[0.5, 0.5], &InnerSolver::default()).unwrap();
        let a = fam.to_policy_table(&out).unwrap();
        let b = fam.to_policy_table(&theta).unwrap();
        assert!(a.as_matrix().max_abs_diff(b.as_matrix()) < 1e-6);
    }

    #[test]
    fn mean_match_examples() {
        let v = mean_match(2.0f64, &[3.0, 4.0], 1.0, NormPair::L2).unwrap();
        assert!((v.v[0] - 0.24).abs() < 1e-15 && (v.v[1] - 0.32).abs() < 1e-15);
        assert_eq!(v.residual, 0.0);
        let v = mean_match(10.0f64, &[3.0, 4.0], 1.0, NormPair::L2).unwrap();
        assert!((v.v[0] - 0.6).abs() < 1e-15 && (v.v[1] - 0.8).abs() < 1e-15);
        assert!((v.residual - 5.0).abs() < 1e-12);
        let zero = mean_match(0.0f64, &[3.0, 4.0], 1.0, NormPair::L2).unwrap();
        assert!(zero.v.iter().all(|&x| x == 0.0));
        let flagged = mean_match(1.5f64, &[0.0, 0.0], 1.0, NormPair::L2).unwrap();
        assert_eq!(flagged.residual, 1.5);
    }

    #[test]
    fn mean_match_clip_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for norm in [NormPair::L2, NormPair::L1Linf, NormPair::LinfL1] {
            for _ in 0..300 {
                let d = rng.gen_range(1..5);
                let mu: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let m = rng.gen_range(-5.0..5.0);
                let v_max = rng.gen_range(0.1..3.0);
                let out = mean_match(m, &mu, v_max, norm).unwrap();
                assert!(norm.norm(&out.v) <= v_max + 1e-12);
                let gap = (m - dot(&out.v, &mu)).abs();
                let want = (m.abs() - v_max * norm.dual_norm(&mu)).max(0.0);
                assert!((gap - want).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn hardness_instance_is_compatible() {
        let fam = PolicyFamily::<f64>::HardnessOneDim;
        let mdp = hardness_bandit::<f64>();
        let d_cp = occupancy(&mdp, &PolicyTable::deterministic(&[1, 1], 2)).unwrap();
        let mut p = 0.5;
        for _ in 0..50 {
            let theta = [logit(p)];
            let pi = fam.to_policy_table(&theta).unwrap();
            let adv = proxy_advantage(&pi, mdp.reward()).unwrap();
            let scores = fam.score_table(&theta).unwrap();
            assert!(cfa_error(&d_cp, &scores, &adv, &[-1.0]).unwrap().abs() <= 1e-10);
            // any other direction leaves a gap of (1 - pi(1|s2)) (1 + v)
            let q = pi.prob(1, 1);
            assert!((cfa_error(&d_cp, &scores, &adv, &[0.5]).unwrap() - 1.5 * (1.0 - q)).abs() <= 1e-12);
            p = cmd_step_hardness(p, 0.5, 0.1);
        }
    }

    #[test]
    fn cfa_error_zero_update_is_mean_advantage() {
        let mdp = figure1_mdp::<f64>();
        let fam = PolicyFamily::LogLinear(FeatureMap::figure1());
        let pi = fam.to_policy_table(&[0.3]).unwrap();
        let f = Matrix::from_fn(3, 2, |s, a| (s * 2 + a) as f64);
        let adv = proxy_advantage(&pi, &f).unwrap();
        let pi_cp = PolicyTable::deterministic(&[1, 0, 0], 2);
        let d_cp = occupancy(&mdp, &pi_cp).unwrap();
        let scores = fam.score_table(&[0.3]).unwrap();
        let err = cfa_error(&d_cp, &scores, &adv, &[0.0]).unwrap();
        assert!((err - d_cp.expect(&adv)).abs() < 1e-15);
    }

    #[test]
    fn coverage_cases() {
        // one state, two actions, uniform policy: mean score under itself is zero
        let fam = PolicyFamily::<f64>::tabular(1, 2);
        let pi = PolicyTable::<f64>::uniform(1, 2);
        let d = Occupancy::from_state_dist(vec![1.0], &pi).unwrap();
        let cov = feature_coverage(&d, &d, &fam, &[vec![0.0, 0.0]]).unwrap();
        assert!(cov.value.abs() < 1e-15);
        // tabular scores always have a singular covariance (they sum to zero per state)
        assert!(cov.singular);

        let feats = PolicyFamily::LogLinear(FeatureMap::from_fn(2, 2, 1, |s, a| vec![if a == 1 { s as f64 } else { 0.0 }]).unwrap());
        let pi_d = PolicyTable::deterministic(&[0, 1], 2);
        let on = Occupancy::from_state_dist(vec![1.0, 0.0], &pi_d).unwrap();
        let off = Occupancy::from_state_dist(vec![0.0, 1.0], &pi_d).unwrap();
        // data never leaves state 0, whose features are all zero
        let c = feature_coverage(&off, &on, &feats, &[vec![0.5]]).unwrap();
        assert!(c.singular);
    }

    #[test]
    fn coverage_respects_density_ratio_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let fam = PolicyFamily::LogLinear(
                FeatureMap::from_fn(3, 3, 2, |_, _| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).unwrap(),
            );
            let theta = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let pi_d = crate::mdp::random_policy(3, 3, &mut rng);
            let pi_c = crate::mdp::random_policy(3, 3, &mut rng);
            let dd = Occupancy::from_state_dist(vec![0.3, 0.3, 0.4], &pi_d).unwrap();
            let dc = Occupancy::from_state_dist(vec![0.5, 0.2, 0.3], &pi_c).unwrap();
            let ratio = dc
                .d_sa
                .as_slice()
                .iter()
                .zip(dd.d_sa.as_slice())
                .map(|(a, b)| a / b)
                .fold(0.0, f64::max);
            let cov = feature_coverage(&dc, &dd, &fam, &[theta.clone()]).unwrap();
            assert!(!cov.singular);
            assert!(cov.value <= ratio * 2.0 + 1e-9);
            // brute-force quadratic form
            let t = fam.score_table(&theta).unwrap();
            let mu = t.mean_under(&dc.d_sa);
            let mut sig = Matrix::<f64>::zeros(2, 2);
            for s in 0..3 {
                for a in 0..3 {
                    let p = t.score(s, a);
                    for i in 0..2 {
                        for j in 0..2 {
                            sig[(i, j)] += dd.d_sa[(s, a)] * p[i] * p[j];
                        }
                    }
                }
            }
            let det = sig[(0, 0)] * sig[(1, 1)] - sig[(0, 1)] * sig[(1, 0)];
            let q: f64 = (sig[(1, 1)] * mu[0] * mu[0] - 2.0 * sig[(0, 1)] * mu[0] * mu[1] + sig[(0, 0)] * mu[1] * mu[1]) / det;
            assert!((q - cov.value).abs() <= 1e-9 * q.abs().max(1.0));
        }
    }

    #[test]
    fn bc_gradient_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mdp = figure1_mdp::<f64>();
        let fam = PolicyFamily::LogLinear(FeatureMap::figure1());
        let pi_cp = fam.to_policy_table(&[2.0]).unwrap();
        let d_cp = occupancy(&mdp, &pi_cp).unwrap();
        for _ in 0..50 {
            let theta = [rng.gen_range(-3.0..3.0)];
            let mu = comparator_mean_score(&fam, &theta, &d_cp).unwrap();
            let h = 1e-5;
            let fd = (bc_objective(&fam, &[theta[0] + h], &pi_cp, &d_cp.d_s).unwrap()
                - bc_objective(&fam, &[theta[0] - h], &pi_cp, &d_cp.d_s).unwrap())
                / (2.0 * h);
            assert!((fd + mu[0]).abs() <= 1e-5 * mu[0].abs().max(1e-3));
        }
    }
}
