//! Numerical residuals of the value-difference identities. Each function
//! evaluates both sides exactly and returns the absolute gap, which should
//! sit at round-off level for every input.

use super::{bellman_apply, critic_return, eval_policy, occupancy, PolicyTable, TabularMdp};
use crate::error::{check_dim, invalid, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

fn bellman_gap<T: Scalar>(
    mdp: &TabularMdp<T>,
    pi: &PolicyTable<T>,
    f: &Matrix<T>,
) -> Result<Matrix<T>> {
    let tf = bellman_apply(mdp, pi, f)?;
    Ok(Matrix::from_fn(f.rows(), f.cols(), |s, a| f[(s, a)] - tf[(s, a)]))
}

/// `|J_f(pi) - J(pi) - E_{d^pi}[f - T^pi f] / (1 - gamma)|`.
pub fn check_telescoping<T: Scalar>(
    mdp: &TabularMdp<T>,
    pi: &PolicyTable<T>,
    f: &Matrix<T>,
) -> Result<T> {
    let j = eval_policy(mdp, pi)?.return_;
    let jf = critic_return(mdp, pi, f);
    let d = occupancy(mdp, pi)?;
    let rhs = d.expect(&bellman_gap(mdp, pi, f)?) / (T::one() - mdp.gamma());
    Ok((jf - j - rhs).abs())
}

/// Residual of the generalized performance-difference identity
/// `J(pi') - J(pi) = ( E_{d^pi'}[f(s,pi') - f(s,pi)] + E_{d^pi'}[T^pi f - f]
/// + E_{d^pi}[f - T^pi f] ) / (1 - gamma)`.
pub fn check_pdl<T: Scalar>(
    mdp: &TabularMdp<T>,
    pi: &PolicyTable<T>,
    pi_prime: &PolicyTable<T>,
    f: &Matrix<T>,
) -> Result<T> {
    let lhs = eval_policy(mdp, pi_prime)?.return_ - eval_policy(mdp, pi)?.return_;
    let d_prime = occupancy(mdp, pi_prime)?;
    let d = occupancy(mdp, pi)?;
    let f_prime = pi_prime.average(f);
    let f_pi = pi.average(f);
    let diff: Vec<T> = f_prime.iter().zip(&f_pi).map(|(&a, &b)| a - b).collect();
    let gap = bellman_gap(mdp, pi, f)?;
    let rhs = (d_prime.expect_state(&diff) - d_prime.expect(&gap) + d.expect(&gap))
        / (T::one() - mdp.gamma());
    Ok((lhs - rhs).abs())
}

/// The three averaged terms of the suboptimality decomposition against a
/// comparator, with the closing residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition<T> {
    /// `(1/K) sum_k E_{d^cp}[f_k(s, pi_cp) - f_k(s, pi_k)]`.
    pub actor: T,
    /// `(1/K) sum_k E_{d^cp}[T^{pi_k} f_k - f_k]`.
    pub critic_cp: T,
    /// `(1/K) sum_k E_{d^{pi_k}}[f_k - T^{pi_k} f_k]`.
    pub critic_k: T,
    pub total: T,
    /// `(1 - gamma) (J(pi_cp) - J(mixture))`.
    pub target: T,
    pub residual: T,
}

pub fn decompose_suboptimality<T: Scalar, C: AsRef<Matrix<T>>>(
    mdp: &TabularMdp<T>,
    pi_cp: &PolicyTable<T>,
    policies: &[PolicyTable<T>],
    critics: &[C],
) -> Result<Decomposition<T>> {
    check_dim("decomposition critics", policies.len(), critics.len())?;
    if policies.is_empty() {
        return Err(invalid("decomposition", "needs at least one iterate"));
    }
    let k = T::from_usize_lossy(policies.len());
    let d_cp = occupancy(mdp, pi_cp)?;
    let j_cp = eval_policy(mdp, pi_cp)?.return_;
    let (mut actor, mut critic_cp, mut critic_k, mut j_mix) = (T::zero(), T::zero(), T::zero(), T::zero());
    for (pi, f) in policies.iter().zip(critics) {
        let f = f.as_ref();
        let f_cp = pi_cp.average(f);
        let f_k = pi.average(f);
        let diff: Vec<T> = f_cp.iter().zip(&f_k).map(|(&a, &b)| a - b).collect();
        actor = actor + d_cp.expect_state(&diff);
        let gap = bellman_gap(mdp, pi, f)?;
        critic_cp = critic_cp - d_cp.expect(&gap);
        critic_k = critic_k + occupancy(mdp, pi)?.expect(&gap);
        j_mix = j_mix + eval_policy(mdp, pi)?.return_;
    }
    let (actor, critic_cp, critic_k, j_mix) = (actor / k, critic_cp / k, critic_k / k, j_mix / k);
    let total = actor + critic_cp + critic_k;
    let target = (T::one() - mdp.gamma()) * (j_cp - j_mix);
    Ok(Decomposition {
        actor,
        critic_cp,
        critic_k,
        total,
        target,
        residual: (total - target).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{figure1_mdp, random_mdp, random_policy};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_table(rng: &mut ChaCha8Rng, s: usize, a: usize, scale: f64) -> Matrix<f64> {
        Matrix::from_fn(s, a, |_, _| scale * rng.gen::<f64>())
    }

    #[test]
    fn telescoping_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mdp = random_mdp::<f64, _>(4, 2, 0.9, &mut rng);
        let pi = random_policy(4, 2, &mut rng);
        let q = eval_policy(&mdp, &pi).unwrap().q;
        assert!(check_telescoping(&mdp, &pi, &q).unwrap() < 1e-10);
        let zero = Matrix::zeros(4, 2);
        assert!(check_telescoping(&mdp, &pi, &zero).unwrap() < 1e-10);
    }

    #[test]
    fn pdl_reduces_to_classical_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mdp = random_mdp::<f64, _>(5, 3, 0.8, &mut rng);
        let pi = random_policy(5, 3, &mut rng);
        let pi2 = random_policy(5, 3, &mut rng);
        let vals = eval_policy(&mdp, &pi).unwrap();
        assert!(check_pdl(&mdp, &pi, &pi, &random_table(&mut rng, 5, 3, 4.0)).unwrap() < 1e-9);
        assert!(check_pdl(&mdp, &pi, &pi2, &vals.q).unwrap() < 1e-9);
        // classical PDL: J(pi') - J(pi) = E_{d^pi'}[A^pi(s, pi')] / (1 - gamma)
        let d2 = occupancy(&mdp, &pi2).unwrap();
        let adv_pi2 = pi2.average(&vals.adv);
        let classical = d2.expect_state(&adv_pi2) / (1.0 - mdp.gamma());
        let direct = eval_policy(&mdp, &pi2).unwrap().return_ - vals.return_;
        assert!((classical - direct).abs() < 1e-9);
    }

    #[test]
    fn decomposition_exact_critic() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mdp = random_mdp::<f64, _>(4, 3, 0.9, &mut rng);
        let pi_cp = random_policy(4, 3, &mut rng);
        let pi1 = random_policy(4, 3, &mut rng);
        let q1 = eval_policy(&mdp, &pi1).unwrap().q;
        let dec = decompose_suboptimality(&mdp, &pi_cp, &[pi1.clone()], &[q1]).unwrap();
        assert!(dec.critic_cp.abs() < 1e-10 && dec.critic_k.abs() < 1e-10);
        let want = (1.0 - mdp.gamma())
            * (eval_policy(&mdp, &pi_cp).unwrap().return_ - eval_policy(&mdp, &pi1).unwrap().return_);
        assert!((dec.actor - want).abs() < 1e-9);

        let qcp = eval_policy(&mdp, &pi_cp).unwrap().q;
        let same = decompose_suboptimality(&mdp, &pi_cp, &[pi_cp.clone()], &[qcp]).unwrap();
        assert!(same.actor.abs() < 1e-10 && same.total.abs() < 1e-10);
    }

    #[test]
    fn randomized_identity_suite() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..100 {
            let ns = rng.gen_range(1..7);
            let na = rng.gen_range(1..5);
            let gamma = rng.gen_range(0.0..0.99);
            let mdp = random_mdp::<f64, _>(ns, na, gamma, &mut rng);
            let pi = random_policy(ns, na, &mut rng);
            let pi2 = random_policy(ns, na, &mut rng);
            let f = random_table(&mut rng, ns, na, mdp.v_max());
            assert!(check_telescoping(&mdp, &pi, &f).unwrap() <= 1e-9);
            assert!(check_pdl(&mdp, &pi, &pi2, &f).unwrap() <= 1e-9);
            let f2 = random_table(&mut rng, ns, na, mdp.v_max());
            let dec = decompose_suboptimality(&mdp, &pi2, &[pi.clone(), pi2.clone()], &[f, f2]).unwrap();
            assert!(dec.residual <= 1e-9);
        }
    }

    #[test]
    fn length_mismatch() {
        let mdp = figure1_mdp::<f64>();
        let pi = PolicyTable::uniform(3, 2);
        let r = decompose_suboptimality::<f64, Matrix<f64>>(&mdp, &pi, &[pi.clone()], &[]);
        assert!(r.is_err());
    }
}
