use rand::Rng;

use super::{PolicyTable, TabularMdp};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// State coefficients `c_s` of the one-parameter softmax class used with
/// [`figure1_mdp`].
pub const FIGURE1_COEFFS: [f64; 3] = [1.0, 2.0, 3.0];

/// Three absorbing states, two actions, `gamma = 0.9`, uniform `d0`,
/// `r(., a1) = (1, 4, 4)` and `r(., a2) = (2, 2, 2)`.
pub fn figure1_mdp<T: Scalar>() -> TabularMdp<T> {
    let n = 3;
    let transition = (0..n)
        .map(|s| {
            (0..2)
                .map(|_| (0..n).map(|t| if t == s { T::one() } else { T::zero() }).collect())
                .collect()
        })
        .collect();
    let r1 = [1.0, 4.0, 4.0];
    let reward = Matrix::from_fn(n, 2, |s, a| if a == 0 { T::lit(r1[s]) } else { T::two() });
    let d0 = vec![T::one() / T::lit(3.0); n];
    TabularMdp::new(transition, reward, T::lit(0.9), d0, None).expect("figure-1 MDP is valid")
}

/// Two-context bandit (`gamma = 0`) with `R(s, 1) = 1` and `R(s, 0) = 0`.
///
/// The initial distribution is the comparator's state distribution, all mass
/// on the second context, so `occupancy` under any policy is supported on
/// `s2`. The data distribution `(1 - eps, eps)` is supplied separately.
pub fn hardness_bandit<T: Scalar>() -> TabularMdp<T> {
    let transition = (0..2)
        .map(|s| {
            (0..2)
                .map(|_| (0..2).map(|t| if t == s { T::one() } else { T::zero() }).collect())
                .collect()
        })
        .collect();
    let reward = Matrix::from_fn(2, 2, |_, a| if a == 1 { T::one() } else { T::zero() });
    TabularMdp::new(transition, reward, T::zero(), vec![T::zero(), T::one()], None)
        .expect("hardness bandit is valid")
}

fn random_simplex<T: Scalar, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<T> {
    // exponential spacings give a uniform draw on the simplex
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    let mut out: Vec<T> = raw.iter().map(|&x| T::lit(x / total)).collect();
    // push rounding residue into the largest entry so the row sums exactly
    let sum: T = out.iter().copied().sum();
    let (imax, _) = out
        .iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |b, (i, &x)| if x > b.1 { (i, x) } else { b });
    out[imax] = out[imax] + (T::one() - sum);
    out
}

/// Dense random MDP with uniform-simplex transitions, rewards in `[0, 1]`
/// and `R_max = 1`.
pub fn random_mdp<T: Scalar, R: Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    rng: &mut R,
) -> TabularMdp<T> {
    let transition = (0..n_states)
        .map(|_| (0..n_actions).map(|_| random_simplex(n_states, rng)).collect())
        .collect();
    let reward = Matrix::from_fn(n_states, n_actions, |_, _| T::lit(rng.gen::<f64>()));
    let d0 = random_simplex(n_states, rng);
    TabularMdp::new(transition, reward, T::lit(gamma), d0, Some(T::one()))
        .expect("random MDP is valid")
}

pub fn random_policy<T: Scalar, R: Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    rng: &mut R,
) -> PolicyTable<T> {
    let rows: Vec<Vec<T>> = (0..n_states).map(|_| random_simplex(n_actions, rng)).collect();
    PolicyTable::new(Matrix::from_rows(&rows).expect("rectangular")).expect("simplex rows")
}
