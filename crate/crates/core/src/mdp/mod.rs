//! Exact evaluation of finite discounted MDPs.
//!
//! All quantities are computed by direct dense solves, so they serve as
//! ground truth for the actor-update experiments.

mod instances;
pub mod io;
mod lemmas;

pub use instances::{figure1_mdp, hardness_bandit, random_mdp, random_policy, FIGURE1_COEFFS};
pub use lemmas::{check_pdl, check_telescoping, decompose_suboptimality, Decomposition};

use crate::config::{OCCUPANCY_FLOOR, STOCHASTIC_TOL};
use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::{Lu, Matrix};
use crate::scalar::Scalar;

/// Finite MDP `(S, A, P, R, gamma, d0)` stored as dense arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<T> {
    n_states: usize,
    n_actions: usize,
    /// `P[s][a][s']` flattened as `((s * A) + a) * S + s'`.
    transition: Vec<T>,
    reward: Matrix<T>,
    gamma: T,
    init_dist: Vec<T>,
    r_max: T,
}

impl<T: Scalar> TabularMdp<T> {
    /// Builds and validates an MDP. `r_max` defaults to the largest reward
    /// (or 1 when all rewards are zero).
    pub fn new(
        transition: Vec<Vec<Vec<T>>>,
        reward: Matrix<T>,
        gamma: T,
        init_dist: Vec<T>,
        r_max: Option<T>,
    ) -> Result<Self> {
        let n_states = transition.len();
        if n_states == 0 {
            return Err(invalid("mdp", "no states"));
        }
        let n_actions = transition[0].len();
        if n_actions == 0 {
            return Err(invalid("mdp", "no actions"));
        }
        let mut flat = Vec::with_capacity(n_states * n_actions * n_states);
        for row in &transition {
            check_dim("transition actions", n_actions, row.len())?;
            for dist in row {
                check_dim("transition next states", n_states, dist.len())?;
                flat.extend_from_slice(dist);
            }
        }
        check_dim("reward rows", n_states, reward.rows())?;
        check_dim("reward cols", n_actions, reward.cols())?;
        check_dim("init_dist", n_states, init_dist.len())?;
        let tol = T::lit(STOCHASTIC_TOL);
        for (i, dist) in flat.chunks(n_states).enumerate() {
            check_distribution(dist, tol).map_err(|reason| {
                invalid(
                    "transition",
                    format!("row (s={}, a={}): {reason}", i / n_actions, i % n_actions),
                )
            })?;
        }
        check_distribution(&init_dist, tol).map_err(|r| invalid("init_dist", r))?;
        if !(gamma >= T::zero() && gamma < T::one()) {
            return Err(invalid("gamma", format!("{gamma} not in [0, 1)")));
        }
        let observed_max = reward.as_slice().iter().copied().fold(T::zero(), T::max);
        let r_max = r_max.unwrap_or(if observed_max > T::zero() {
            observed_max
        } else {
            T::one()
        });
        for &r in reward.as_slice() {
            if !r.is_finite() || r < T::zero() || r > r_max {
                return Err(invalid("reward", format!("{r} outside [0, {r_max}]")));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            transition: flat,
            reward,
            gamma,
            init_dist,
            r_max,
        })
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn reward(&self) -> &Matrix<T> {
        &self.reward
    }

    pub fn init_dist(&self) -> &[T] {
        &self.init_dist
    }

    pub fn r_max(&self) -> T {
        self.r_max
    }

    /// `V_max = R_max / (1 - gamma)`.
    pub fn v_max(&self) -> T {
        self.r_max / (T::one() - self.gamma)
    }

    /// `P(. | s, a)`.
    #[inline]
    pub fn next_dist(&self, s: usize, a: usize) -> &[T] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    /// Same MDP with a different initial distribution.
    pub fn with_init_dist(&self, init_dist: Vec<T>) -> Result<Self> {
        check_dim("init_dist", self.n_states, init_dist.len())?;
        check_distribution(&init_dist, T::lit(STOCHASTIC_TOL)).map_err(|r| invalid("init_dist", r))?;
        Ok(Self {
            init_dist,
            ..self.clone()
        })
    }

    fn check_policy(&self, pi: &PolicyTable<T>) -> Result<()> {
        check_dim("policy states", self.n_states, pi.n_states())?;
        check_dim("policy actions", self.n_actions, pi.n_actions())
    }

    fn check_table(&self, f: &Matrix<T>) -> Result<()> {
        check_dim("table states", self.n_states, f.rows())?;
        check_dim("table actions", self.n_actions, f.cols())
    }

    /// State-to-state kernel under `pi`: `P_pi[s][s'] = sum_a pi(a|s) P(s'|s,a)`.
    fn policy_kernel(&self, pi: &PolicyTable<T>) -> Matrix<T> {
        let n = self.n_states;
        let mut k = Matrix::zeros(n, n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let p = pi.prob(s, a);
                if p == T::zero() {
                    continue;
                }
                for (s2, &q) in self.next_dist(s, a).iter().enumerate() {
                    k[(s, s2)] = k[(s, s2)] + p * q;
                }
            }
        }
        k
    }

    /// `E_{s' ~ P(.|s,a)}[g(s')]` for every `(s, a)`.
    fn expect_next(&self, g: &[T]) -> Matrix<T> {
        Matrix::from_fn(self.n_states, self.n_actions, |s, a| {
            crate::scalar::dot(self.next_dist(s, a), g)
        })
    }
}

fn check_distribution<T: Scalar>(p: &[T], tol: T) -> std::result::Result<(), String> {
    if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < T::zero()) {
        return Err(format!("entry {x} is negative or non-finite"));
    }
    let total: T = p.iter().copied().sum();
    if (total - T::one()).abs() > tol {
        return Err(format!("sums to {total}"));
    }
    Ok(())
}

/// Row-stochastic policy table `pi[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable<T> {
    probs: Matrix<T>,
}

impl<T: Scalar> PolicyTable<T> {
    pub fn new(probs: Matrix<T>) -> Result<Self> {
        let tol = T::lit(STOCHASTIC_TOL);
        for s in 0..probs.rows() {
            check_distribution(probs.row(s), tol)
                .map_err(|r| invalid("policy", format!("state {s}: {r}")))?;
        }
        Ok(Self { probs })
    }

    /// Normalizes each row of a nonnegative weight matrix.
    pub fn from_weights(mut weights: Matrix<T>) -> Result<Self> {
        for s in 0..weights.rows() {
            let row = weights.row_mut(s);
            let z: T = row.iter().copied().sum();
            if !(z > T::zero()) || !z.is_finite() {
                return Err(invalid("policy weights", format!("state {s} has total {z}")));
            }
            row.iter_mut().for_each(|x| *x = *x / z);
        }
        Self::new(weights)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = T::one() / T::from_usize_lossy(n_actions);
        Self {
            probs: Matrix::from_fn(n_states, n_actions, |_, _| p),
        }
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        Self {
            probs: Matrix::from_fn(actions.len(), n_actions, |s, a| {
                if actions[s] == a {
                    T::one()
                } else {
                    T::zero()
                }
            }),
        }
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> T {
        self.probs[(s, a)]
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[T] {
        self.probs.row(s)
    }

    pub fn n_states(&self) -> usize {
        self.probs.rows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.cols()
    }

    pub fn as_matrix(&self) -> &Matrix<T> {
        &self.probs
    }

    /// `f(s, pi) = sum_a pi(a|s) f(s, a)` for every state.
    pub fn average(&self, f: &Matrix<T>) -> Vec<T> {
        (0..self.n_states())
            .map(|s| crate::scalar::dot(self.row(s), f.row(s)))
            .collect()
    }

    /// Equal-weight mixture of tables (state-wise mixture of action
    /// distributions).
    pub fn mixture(tables: &[PolicyTable<T>]) -> Result<Self> {
        let first = tables.first().ok_or_else(|| invalid("mixture", "empty"))?;
        let w = T::one() / T::from_usize_lossy(tables.len());
        let mut acc = Matrix::zeros(first.n_states(), first.n_actions());
        for t in tables {
            acc = acc.add(&t.probs.scaled(w));
        }
        Self::from_weights(acc)
    }
}

/// `Q^pi`, `V^pi`, `A^pi` and `J(pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueBundle<T> {
    pub q: Matrix<T>,
    pub v: Vec<T>,
    pub adv: Matrix<T>,
    pub return_: T,
}

/// Discounted state-action occupancy `d^pi` with its state marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct Occupancy<T> {
    pub d_sa: Matrix<T>,
    pub d_s: Vec<T>,
}

impl<T: Scalar> Occupancy<T> {
    /// Occupancy built from a state distribution and a policy:
    /// `d(s, a) = mu(s) pi(a|s)`.
    pub fn from_state_dist(d_s: Vec<T>, pi: &PolicyTable<T>) -> Result<Self> {
        check_dim("state distribution", pi.n_states(), d_s.len())?;
        check_distribution(&d_s, T::lit(STOCHASTIC_TOL)).map_err(|r| invalid("state distribution", r))?;
        let d_sa = Matrix::from_fn(pi.n_states(), pi.n_actions(), |s, a| d_s[s] * pi.prob(s, a));
        Ok(Self { d_sa, d_s })
    }

    /// `E_{(s,a) ~ d}[g(s, a)]`.
    pub fn expect(&self, g: &Matrix<T>) -> T {
        crate::scalar::dot(self.d_sa.as_slice(), g.as_slice())
    }

    /// `E_{s ~ d}[h(s)]`.
    pub fn expect_state(&self, h: &[T]) -> T {
        crate::scalar::dot(&self.d_s, h)
    }

    pub fn n_states(&self) -> usize {
        self.d_s.len()
    }

    pub fn n_actions(&self) -> usize {
        self.d_sa.cols()
    }
}

/// Exact policy evaluation by a dense solve of `(I - gamma P_pi) V = r_pi`,
/// followed by `Q = R + gamma P V`.
pub fn eval_policy<T: Scalar>(mdp: &TabularMdp<T>, pi: &PolicyTable<T>) -> Result<ValueBundle<T>> {
    mdp.check_policy(pi)?;
    let n = mdp.n_states;
    let kernel = mdp.policy_kernel(pi);
    let system = Matrix::from_fn(n, n, |i, j| {
        let id = if i == j { T::one() } else { T::zero() };
        id - mdp.gamma * kernel[(i, j)]
    });
    let r_pi = pi.average(&mdp.reward);
    let v_solve = Lu::factor(&system)?.solve(&r_pi);
    let next = mdp.expect_next(&v_solve);
    let q = Matrix::from_fn(n, mdp.n_actions, |s, a| mdp.reward[(s, a)] + mdp.gamma * next[(s, a)]);
    let v = pi.average(&q);
    let adv = Matrix::from_fn(n, mdp.n_actions, |s, a| q[(s, a)] - v[s]);
    let return_ = crate::scalar::dot(&mdp.init_dist, &v);
    Ok(ValueBundle { q, v, adv, return_ })
}

/// Discounted occupancy from the flow equation
/// `d_s = (1 - gamma) d0 + gamma P_pi^T d_s`, then `d(s,a) = d_s(s) pi(a|s)`.
pub fn occupancy<T: Scalar>(mdp: &TabularMdp<T>, pi: &PolicyTable<T>) -> Result<Occupancy<T>> {
    mdp.check_policy(pi)?;
    let n = mdp.n_states;
    let kernel = mdp.policy_kernel(pi);
    let system = Matrix::from_fn(n, n, |i, j| {
        let id = if i == j { T::one() } else { T::zero() };
        id - mdp.gamma * kernel[(j, i)]
    });
    let rhs: Vec<T> = mdp
        .init_dist
        .iter()
        .map(|&x| (T::one() - mdp.gamma) * x)
        .collect();
    let mut d_s = Lu::factor(&system)?.solve(&rhs);
    let floor = T::lit(OCCUPANCY_FLOOR);
    for x in d_s.iter_mut() {
        if *x < -floor {
            return Err(Error::NegativeOccupancy { value: x.as_f64() });
        }
        if *x < T::zero() {
            *x = T::zero();
        }
    }
    let total: T = d_s.iter().copied().sum();
    d_s.iter_mut().for_each(|x| *x = *x / total);
    let d_sa = Matrix::from_fn(n, mdp.n_actions, |s, a| d_s[s] * pi.prob(s, a));
    Ok(Occupancy { d_sa, d_s })
}

/// `(T^pi f)(s, a) = R(s, a) + gamma E_{s'}[f(s', pi)]`.
pub fn bellman_apply<T: Scalar>(
    mdp: &TabularMdp<T>,
    pi: &PolicyTable<T>,
    f: &Matrix<T>,
) -> Result<Matrix<T>> {
    mdp.check_policy(pi)?;
    mdp.check_table(f)?;
    let next = mdp.expect_next(&pi.average(f));
    Ok(Matrix::from_fn(mdp.n_states, mdp.n_actions, |s, a| {
        mdp.reward[(s, a)] + mdp.gamma * next[(s, a)]
    }))
}

/// `J_f(pi) = E_{s ~ d0}[f(s, pi)]`.
pub fn critic_return<T: Scalar>(mdp: &TabularMdp<T>, pi: &PolicyTable<T>, f: &Matrix<T>) -> T {
    crate::scalar::dot(&mdp.init_dist, &pi.average(f))
}

/// Optimal deterministic policy by policy iteration on exact evaluations.
pub fn optimal_policy<T: Scalar>(mdp: &TabularMdp<T>) -> Result<PolicyTable<T>> {
    let mut actions = vec![0usize; mdp.n_states];
    for _ in 0..10_000 {
        let pi = PolicyTable::deterministic(&actions, mdp.n_actions);
        let vals = eval_policy(mdp, &pi)?;
        let mut changed = false;
        for s in 0..mdp.n_states {
            let row = vals.q.row(s);
            let current = row[actions[s]];
            let (best, &best_q) = row
                .iter()
                .enumerate()
                .fold((actions[s], &current), |b, (a, q)| if *q > *b.1 { (a, q) } else { b });
            if best_q > current + T::lit(1e-12) * (T::one() + current.abs()) {
                actions[s] = best;
                changed = true;
            }
        }
        if !changed {
            return Ok(pi);
        }
    }
    Err(invalid("policy iteration", "did not converge"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn value_iteration(mdp: &TabularMdp<f64>, pi: &PolicyTable<f64>, iters: usize) -> Matrix<f64> {
        let mut q = Matrix::zeros(mdp.n_states(), mdp.n_actions());
        for _ in 0..iters {
            q = bellman_apply(mdp, pi, &q).unwrap();
        }
        q
    }

    #[test]
    fn gamma_zero_gives_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mdp = random_mdp::<f64, _>(4, 3, 0.0, &mut rng);
        let pi = random_policy(4, 3, &mut rng);
        let vals = eval_policy(&mdp, &pi).unwrap();
        assert!(vals.q.max_abs_diff(mdp.reward()) < 1e-15);
        let occ = occupancy(&mdp, &pi).unwrap();
        for s in 0..4 {
            for a in 0..3 {
                assert!((occ.d_sa[(s, a)] - mdp.init_dist()[s] * pi.prob(s, a)).abs() < 1e-15);
            }
        }
        let f = Matrix::from_fn(4, 3, |s, a| (s * 3 + a) as f64);
        assert!(bellman_apply(&mdp, &pi, &f).unwrap().max_abs_diff(mdp.reward()) < 1e-15);
    }

    #[test]
    fn figure1_always_a1_values() {
        let mdp = figure1_mdp::<f64>();
        let pi = PolicyTable::deterministic(&[0, 0, 0], 2);
        let vals = eval_policy(&mdp, &pi).unwrap();
        for (got, want) in vals.v.iter().zip([10.0, 40.0, 40.0]) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        assert!((vals.return_ - 30.0).abs() < 1e-10);
        let occ = occupancy(&mdp, &random_policy(3, 2, &mut ChaCha8Rng::seed_from_u64(1))).unwrap();
        for &x in &occ.d_s {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_value_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mdp = random_mdp::<f64, _>(5, 3, 0.9, &mut rng);
        let pi = random_policy(5, 3, &mut rng);
        let exact = eval_policy(&mdp, &pi).unwrap();
        let iterated = value_iteration(&mdp, &pi, 10_000);
        assert!(exact.q.max_abs_diff(&iterated) < 1e-8);
    }

    #[test]
    fn bellman_two_by_two_by_hand() {
        let mdp = TabularMdp::<f64>::new(
            vec![
                vec![vec![0.3, 0.7], vec![1.0, 0.0]],
                vec![vec![0.5, 0.5], vec![0.2, 0.8]],
            ],
            Matrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 2.0]]).unwrap(),
            0.8,
            vec![0.6, 0.4],
            None,
        )
        .unwrap();
        let pi = PolicyTable::new(Matrix::from_rows(&[vec![0.25, 0.75], vec![0.9, 0.1]]).unwrap()).unwrap();
        let f = Matrix::from_rows(&[vec![3.0, 1.0], vec![2.0, 5.0]]).unwrap();
        let out = bellman_apply(&mdp, &pi, &f).unwrap();
        let fpi0 = 0.25 * 3.0 + 0.75 * 1.0;
        let fpi1 = 0.9 * 2.0 + 0.1 * 5.0;
        let want = [
            [1.0 + 0.8 * (0.3 * fpi0 + 0.7 * fpi1), 0.8 * fpi0],
            [0.5 + 0.8 * (0.5 * fpi0 + 0.5 * fpi1), 2.0 + 0.8 * (0.2 * fpi0 + 0.8 * fpi1)],
        ];
        for s in 0..2 {
            for a in 0..2 {
                assert!((out[(s, a)] - want[s][a]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn fixed_point_and_return_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mdp = random_mdp::<f64, _>(6, 4, 0.95, &mut rng);
            let pi = random_policy(6, 4, &mut rng);
            let vals = eval_policy(&mdp, &pi).unwrap();
            let tq = bellman_apply(&mdp, &pi, &vals.q).unwrap();
            assert!(tq.max_abs_diff(&vals.q) < 1e-10);
            let occ = occupancy(&mdp, &pi).unwrap();
            assert!((occ.d_sa.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-10);
            let via_occ = occ.expect(mdp.reward()) / (1.0 - mdp.gamma());
            assert!((via_occ - vals.return_).abs() < 1e-9);
            for s in 0..6 {
                let centred: f64 = (0..4).map(|a| pi.prob(s, a) * vals.adv[(s, a)]).sum();
                assert!(centred.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn occupancy_matches_monte_carlo() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mdp = random_mdp::<f64, _>(3, 2, 0.5, &mut rng);
        let pi = random_policy(3, 2, &mut rng);
        let occ = occupancy(&mdp, &pi).unwrap();
        let draw = |p: &[f64], rng: &mut ChaCha8Rng| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, &x) in p.iter().enumerate() {
                acc += x;
                if u < acc {
                    return i;
                }
            }
            p.len() - 1
        };
        let n = 1_000_000usize;
        let mut counts = Matrix::<f64>::zeros(3, 2);
        for _ in 0..n {
            let mut s = draw(mdp.init_dist(), &mut rng);
            loop {
                let a = draw(pi.row(s), &mut rng);
                // stop with probability 1 - gamma: geometric discounted horizon
                if rng.gen::<f64>() >= mdp.gamma() {
                    counts[(s, a)] += 1.0;
                    break;
                }
                s = draw(mdp.next_dist(s, a), &mut rng);
            }
        }
        for s in 0..3 {
            for a in 0..2 {
                let p = occ.d_sa[(s, a)];
                let est = counts[(s, a)] / n as f64;
                let se = (p * (1.0 - p) / n as f64).sqrt();
                assert!((est - p).abs() <= 3.0 * se + 1e-12, "({s},{a}): {est} vs {p}");
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let mdp = figure1_mdp::<f64>();
        let pi = PolicyTable::<f64>::uniform(2, 2);
        assert!(matches!(eval_policy(&mdp, &pi), Err(Error::Dimension { .. })));
    }

    #[test]
    fn rejects_bad_rows() {
        let bad = TabularMdp::new(
            vec![vec![vec![0.5, 0.4]], vec![vec![1.0, 0.0]]],
            Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap(),
            0.5,
            vec![0.5, 0.5],
            None,
        );
        assert!(matches!(bad, Err(Error::Invalid { what: "transition", .. })));
    }

    #[test]
    fn optimal_policy_on_figure1() {
        let mdp = figure1_mdp::<f64>();
        let pi = optimal_policy(&mdp).unwrap();
        assert_eq!(pi.row(0), &[0.0, 1.0]);
        assert_eq!(pi.row(1), &[1.0, 0.0]);
        let j = eval_policy(&mdp, &pi).unwrap().return_;
        assert!((j - 100.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn f32_evaluation_tracks_f64() {
        let mdp = figure1_mdp::<f32>();
        let pi = PolicyTable::<f32>::uniform(3, 2);
        let j = eval_policy(&mdp, &pi).unwrap().return_;
        assert!((j - 25.0).abs() < 1e-4);
    }
}
