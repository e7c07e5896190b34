//! Parametric policy families `pi_theta(a | s)`.
//!
//! Finite-action families are all softmax over linear logits, so scores and
//! smoothness constants share one code path: `grad log pi(a|s) = phi(s,a) -
//! E_{a' ~ pi}[phi(s,a')]`. The Gaussian family lives in [`gaussian`].

pub mod gaussian;

use serde::{Deserialize, Serialize};

use crate::config::LOGIT_CLAMP;
use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::{Matrix, NormPair};
use crate::mdp::PolicyTable;
use crate::scalar::{all_finite, dot, log_sum_exp, Scalar};

pub use gaussian::{GaussianFamily, GaussianState};

/// Dense feature map `phi[s][a] in R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    n_states: usize,
    n_actions: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(n_states: usize, n_actions: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        check_dim("feature data", n_states * n_actions * dim, data.len())?;
        if !all_finite(&data) {
            return Err(Error::NonFinite("feature map"));
        }
        Ok(Self {
            n_states,
            n_actions,
            dim,
            data,
        })
    }

    pub fn from_fn(
        n_states: usize,
        n_actions: usize,
        dim: usize,
        mut f: impl FnMut(usize, usize) -> Vec<T>,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(n_states * n_actions * dim);
        for s in 0..n_states {
            for a in 0..n_actions {
                let v = f(s, a);
                check_dim("feature vector", dim, v.len())?;
                data.extend(v);
            }
        }
        Self::new(n_states, n_actions, dim, data)
    }

    /// `phi(s, a) = e_{(s, a)}`, making the log-linear class the tabular softmax.
    pub fn one_hot(n_states: usize, n_actions: usize) -> Self {
        let d = n_states * n_actions;
        Self::from_fn(n_states, n_actions, d, |s, a| {
            let mut v = vec![T::zero(); d];
            v[s * n_actions + a] = T::one();
            v
        })
        .expect("one-hot features are consistent")
    }

    /// `phi(s, a) = code[a] * e_s`: one parameter per state, shared by the
    /// actions through fixed codes.
    pub fn state_one_hot_times_action(n_states: usize, action_codes: &[T]) -> Self {
        let n_actions = action_codes.len();
        Self::from_fn(n_states, n_actions, n_states, |s, a| {
            let mut v = vec![T::zero(); n_states];
            v[s] = action_codes[a];
            v
        })
        .expect("state features are consistent")
    }

    /// One-dimensional features of the three-state experiment:
    /// `phi(s, a1) = c_s`, `phi(s, a2) = -c_s`.
    pub fn figure1() -> Self {
        let c = crate::mdp::FIGURE1_COEFFS;
        Self::from_fn(3, 2, 1, |s, a| {
            let x = T::lit(c[s]);
            vec![if a == 0 { x } else { -x }]
        })
        .expect("figure-1 features")
    }

    /// One-dimensional features of the two-context hardness bandit:
    /// `phi(s, 1) = x(s)`, `phi(s, 0) = 0`, `x = (+1, -1)`.
    pub fn hardness() -> Self {
        Self::from_fn(2, 2, 1, |s, a| {
            let x = if s == 0 { T::one() } else { -T::one() };
            vec![if a == 1 { x } else { T::zero() }]
        })
        .expect("hardness features")
    }

    #[inline]
    pub fn phi(&self, s: usize, a: usize) -> &[T] {
        let start = (s * self.n_actions + a) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `max_s max_{a,a'} ||phi(s,a) - phi(s,a')||_*`.
    pub fn max_diameter(&self, norm: NormPair) -> T {
        let mut best = T::zero();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for b in (a + 1)..self.n_actions {
                    let diff: Vec<T> = self
                        .phi(s, a)
                        .iter()
                        .zip(self.phi(s, b))
                        .map(|(&x, &y)| x - y)
                        .collect();
                    best = best.max(norm.dual_norm(&diff));
                }
            }
        }
        best
    }

    /// Linear critic table `f(s, a) = phi(s, a)^T w`.
    pub fn linear_table(&self, w: &[T]) -> Matrix<T> {
        Matrix::from_fn(self.n_states, self.n_actions, |s, a| dot(self.phi(s, a), w))
    }
}

/// Lipschitz (`G`) and smoothness (`beta`) constants of `log pi_theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothness<T> {
    pub g: T,
    pub beta: T,
}

/// Expected KL divergence under a state distribution. `finite` is false when
/// the second policy has zero mass where the first is positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlDivergence<T> {
    pub value: T,
    pub finite: bool,
}

/// An action argument: an index for finite families, a vector for the
/// Gaussian family.
#[derive(Debug, Clone, Copy)]
pub enum Action<'a, T> {
    Discrete(usize),
    Continuous(&'a [T]),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyFamily<T> {
    /// `theta` has one entry per `(s, a)`, indexed `s * A + a`.
    TabularSoftmax { n_states: usize, n_actions: usize },
    LogLinear(FeatureMap<T>),
    /// `pi(1 | s) = sigmoid(theta * x(s))` with `x = (+1, -1)`.
    HardnessOneDim,
    Gaussian(GaussianFamily),
}

/// `score[s][a] = grad_theta log pi_theta(a | s)` for a finite family.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable<T> {
    n_states: usize,
    n_actions: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> ScoreTable<T> {
    #[inline]
    pub fn score(&self, s: usize, a: usize) -> &[T] {
        let start = (s * self.n_actions + a) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// `E_{(s,a) ~ d}[score(s, a)]`.
    pub fn mean_under(&self, d_sa: &Matrix<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let w = d_sa[(s, a)];
                if w == T::zero() {
                    continue;
                }
                for (o, &x) in out.iter_mut().zip(self.score(s, a)) {
                    *o = *o + w * x;
                }
            }
        }
        out
    }

    /// `(s, a) -> v^T score(s, a)`.
    pub fn project(&self, v: &[T]) -> Matrix<T> {
        Matrix::from_fn(self.n_states, self.n_actions, |s, a| dot(self.score(s, a), v))
    }
}

impl<T: Scalar> PolicyFamily<T> {
    pub fn tabular(n_states: usize, n_actions: usize) -> Self {
        PolicyFamily::TabularSoftmax {
            n_states,
            n_actions,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyFamily::TabularSoftmax { .. } => "tabular-softmax",
            PolicyFamily::LogLinear(_) => "log-linear",
            PolicyFamily::HardnessOneDim => "hardness-1d",
            PolicyFamily::Gaussian(_) => "gaussian-natural",
        }
    }

    /// Parameter dimension `d`.
    pub fn dim(&self) -> usize {
        match self {
            PolicyFamily::TabularSoftmax {
                n_states,
                n_actions,
            } => n_states * n_actions,
            PolicyFamily::LogLinear(f) => f.dim(),
            PolicyFamily::HardnessOneDim => 1,
            PolicyFamily::Gaussian(g) => g.dim(),
        }
    }

    pub fn n_states(&self) -> usize {
        match self {
            PolicyFamily::TabularSoftmax { n_states, .. } => *n_states,
            PolicyFamily::LogLinear(f) => f.n_states(),
            PolicyFamily::HardnessOneDim => 2,
            PolicyFamily::Gaussian(g) => g.n_states(),
        }
    }

    /// Number of actions, `None` for continuous families.
    pub fn n_actions(&self) -> Option<usize> {
        match self {
            PolicyFamily::TabularSoftmax { n_actions, .. } => Some(*n_actions),
            PolicyFamily::LogLinear(f) => Some(f.n_actions()),
            PolicyFamily::HardnessOneDim => Some(2),
            PolicyFamily::Gaussian(_) => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.n_actions().is_some()
    }

    pub fn check_theta(&self, theta: &[T]) -> Result<()> {
        check_dim("policy parameter", self.dim(), theta.len())?;
        if !all_finite(theta) {
            return Err(Error::NonFinite("policy parameter"));
        }
        Ok(())
    }

    fn require_finite(&self, operation: &'static str) -> Result<usize> {
        self.n_actions().ok_or(Error::UnsupportedFamily {
            operation,
            family: self.name(),
        })
    }

    /// Feature `phi(s, a)` of the finite family's linear logits.
    fn feature(&self, s: usize, a: usize) -> Vec<T> {
        match self {
            PolicyFamily::TabularSoftmax { n_actions, .. } => {
                let mut v = vec![T::zero(); self.dim()];
                v[s * n_actions + a] = T::one();
                v
            }
            PolicyFamily::LogLinear(f) => f.phi(s, a).to_vec(),
            PolicyFamily::HardnessOneDim => {
                let x = if s == 0 { T::one() } else { -T::one() };
                vec![if a == 1 { x } else { T::zero() }]
            }
            PolicyFamily::Gaussian(_) => unreachable!("gaussian family has no finite features"),
        }
    }

    /// Clamped logits of a finite family at state `s`.
    fn logits(&self, theta: &[T], s: usize) -> Vec<T> {
        let clamp = T::lit(LOGIT_CLAMP);
        let n_actions = self.n_actions().expect("finite family");
        (0..n_actions)
            .map(|a| {
                let z = match self {
                    PolicyFamily::TabularSoftmax { n_actions, .. } => theta[s * n_actions + a],
                    PolicyFamily::LogLinear(f) => dot(f.phi(s, a), theta),
                    PolicyFamily::HardnessOneDim => {
                        if a == 1 {
                            if s == 0 {
                                theta[0]
                            } else {
                                -theta[0]
                            }
                        } else {
                            T::zero()
                        }
                    }
                    PolicyFamily::Gaussian(_) => unreachable!(),
                };
                z.max(-clamp).min(clamp)
            })
            .collect()
    }

    /// `log pi_theta(. | s)` for a finite family.
    pub fn log_probs(&self, theta: &[T], s: usize) -> Result<Vec<T>> {
        self.require_finite("log_probs")?;
        self.check_theta(theta)?;
        let z = self.logits(theta, s);
        let lse = log_sum_exp(&z);
        Ok(z.into_iter().map(|x| x - lse).collect())
    }

    pub fn probs(&self, theta: &[T], s: usize) -> Result<Vec<T>> {
        Ok(self.log_probs(theta, s)?.into_iter().map(T::exp).collect())
    }

    /// Probability (finite families) or density (Gaussian) of an action.
    pub fn prob(&self, theta: &[T], s: usize, action: Action<'_, T>) -> Result<T> {
        Ok(self.log_prob(theta, s, action)?.exp())
    }

    pub fn log_prob(&self, theta: &[T], s: usize, action: Action<'_, T>) -> Result<T> {
        match (self, action) {
            (PolicyFamily::Gaussian(g), Action::Continuous(a)) => {
                self.check_theta(theta)?;
                g.state(theta, s)?.log_density(a)
            }
            (PolicyFamily::Gaussian(_), Action::Discrete(_)) => {
                Err(invalid("action", "gaussian family needs a continuous action"))
            }
            (_, Action::Discrete(a)) => Ok(self.log_probs(theta, s)?[a]),
            (_, Action::Continuous(_)) => {
                Err(invalid("action", "finite family needs an action index"))
            }
        }
    }

    /// `grad_theta log pi_theta(a | s)`.
    pub fn score(&self, theta: &[T], s: usize, action: Action<'_, T>) -> Result<Vec<T>> {
        match (self, action) {
            (PolicyFamily::Gaussian(g), Action::Continuous(a)) => {
                self.check_theta(theta)?;
                g.score(theta, s, a)
            }
            (_, Action::Discrete(a)) => {
                let probs = self.probs(theta, s)?;
                Ok(self.score_from_probs(&probs, s, a))
            }
            _ => Err(invalid("action", "action kind does not match the family")),
        }
    }

    fn score_from_probs(&self, probs: &[T], s: usize, a: usize) -> Vec<T> {
        let mut out = self.feature(s, a);
        for (b, &p) in probs.iter().enumerate() {
            if p == T::zero() {
                continue;
            }
            for (o, x) in out.iter_mut().zip(self.feature(s, b)) {
                *o = *o - p * x;
            }
        }
        out
    }

    /// Scores for every `(s, a)` of a finite family.
    pub fn score_table(&self, theta: &[T]) -> Result<ScoreTable<T>> {
        let n_actions = self.require_finite("score_table")?;
        self.check_theta(theta)?;
        let n_states = self.n_states();
        let dim = self.dim();
        let mut data = Vec::with_capacity(n_states * n_actions * dim);
        for s in 0..n_states {
            let probs = self.probs(theta, s)?;
            for a in 0..n_actions {
                data.extend(self.score_from_probs(&probs, s, a));
            }
        }
        Ok(ScoreTable {
            n_states,
            n_actions,
            dim,
            data,
        })
    }

    pub fn to_policy_table(&self, theta: &[T]) -> Result<PolicyTable<T>> {
        let n_actions = self.require_finite("to_policy_table")?;
        self.check_theta(theta)?;
        let n_states = self.n_states();
        let mut m = Matrix::zeros(n_states, n_actions);
        for s in 0..n_states {
            m.row_mut(s).copy_from_slice(&self.probs(theta, s)?);
        }
        PolicyTable::from_weights(m)
    }

    /// `E_{s ~ state_dist}[KL(pi_p(.|s) || pi_q(.|s))]`.
    pub fn kl_under(&self, theta_p: &[T], theta_q: &[T], state_dist: &[T]) -> Result<KlDivergence<T>> {
        check_dim("kl state distribution", self.n_states(), state_dist.len())?;
        self.check_theta(theta_p)?;
        self.check_theta(theta_q)?;
        match self {
            PolicyFamily::Gaussian(g) => {
                let mut total = T::zero();
                for (s, &w) in state_dist.iter().enumerate() {
                    if w == T::zero() {
                        continue;
                    }
                    total = total + w * g.state(theta_p, s)?.kl(&g.state(theta_q, s)?)?;
                }
                Ok(KlDivergence {
                    value: total,
                    finite: true,
                })
            }
            _ => {
                let mut total = T::zero();
                for (s, &w) in state_dist.iter().enumerate() {
                    if w == T::zero() {
                        continue;
                    }
                    let lp = self.log_probs(theta_p, s)?;
                    let lq = self.log_probs(theta_q, s)?;
                    let kl: T = lp
                        .iter()
                        .zip(&lq)
                        .map(|(&a, &b)| {
                            let p = a.exp();
                            if p == T::zero() {
                                T::zero()
                            } else {
                                p * (a - b)
                            }
                        })
                        .sum();
                    total = total + w * kl.max(T::zero());
                }
                Ok(KlDivergence {
                    value: total,
                    finite: true,
                })
            }
        }
    }

    /// `G` and `beta` for the chosen norm pair. With `D = max_s max_{a,a'}
    /// ||phi(s,a) - phi(s,a')||_*`, the score is bounded by `D` and the
    /// Hessian of `log pi` is a feature covariance bounded by `D^2 / 4`.
    /// `None` for the Gaussian family, whose score is unbounded.
    pub fn smoothness(&self, norm: NormPair) -> Option<Smoothness<T>> {
        let diameter = match self {
            PolicyFamily::TabularSoftmax { .. } => {
                norm.dual_norm(&[T::one(), -T::one()])
            }
            PolicyFamily::LogLinear(f) => f.max_diameter(norm),
            PolicyFamily::HardnessOneDim => T::one(),
            PolicyFamily::Gaussian(_) => return None,
        };
        Some(Smoothness {
            g: diameter,
            beta: diameter * diameter / T::lit(4.0),
        })
    }
}

/// `E_{s ~ state_dist}[KL(p(.|s) || q(.|s))]` between two tables.
pub fn kl_tables<T: Scalar>(
    p: &PolicyTable<T>,
    q: &PolicyTable<T>,
    state_dist: &[T],
) -> Result<KlDivergence<T>> {
    check_dim("kl states", p.n_states(), q.n_states())?;
    check_dim("kl actions", p.n_actions(), q.n_actions())?;
    check_dim("kl state distribution", p.n_states(), state_dist.len())?;
    let mut total = T::zero();
    for (s, &w) in state_dist.iter().enumerate() {
        if w == T::zero() {
            continue;
        }
        let mut kl = T::zero();
        for (&pa, &qa) in p.row(s).iter().zip(q.row(s)) {
            if pa == T::zero() {
                continue;
            }
            if qa == T::zero() {
                return Ok(KlDivergence {
                    value: T::infinity(),
                    finite: false,
                });
            }
            kl = kl + pa * (pa / qa).ln();
        }
        total = total + w * kl.max(T::zero());
    }
    Ok(KlDivergence {
        value: total,
        finite: true,
    })
}
