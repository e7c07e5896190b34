//! Randomized invariants, each checked against an independent computation.

use polab::actor::{mean_match, pspi_step_tabular};
use polab::critic::{pessimism_gap, perturbed_oracle};
use polab::dro::{brute_force_linf_primal, chi2_dual, empirical_cvar_one_sided};
use polab::linalg::Matrix;
use polab::mdp::{eval_policy, occupancy, random_mdp, random_policy, TabularMdp};
use polab::policy::GaussianState;
use polab::NormPair;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn world(seed: u64) -> (TabularMdp<f64>, polab::mdp::PolicyTable<f64>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = rng.gen_range(1..=6);
    let na = rng.gen_range(1..=4);
    let gamma = rng.gen_range(0.0..0.95);
    let mdp = random_mdp(ns, na, gamma, &mut rng);
    let pi = random_policy(ns, na, &mut rng);
    (mdp, pi, rng)
}

/// `Q` by plain fixed-point iteration of the Bellman operator.
fn value_iteration(mdp: &TabularMdp<f64>, pi: &polab::mdp::PolicyTable<f64>) -> Matrix<f64> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut q = Matrix::zeros(ns, na);
    for _ in 0..2000 {
        let v: Vec<f64> = (0..ns).map(|s| (0..na).map(|a| pi.prob(s, a) * q[(s, a)]).sum()).collect();
        q = Matrix::from_fn(ns, na, |s, a| {
            let next: f64 = mdp.next_dist(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
            mdp.reward()[(s, a)] + mdp.gamma() * next
        });
    }
    q
}

fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn norm_of(norm: NormPair, v: &[f64]) -> f64 {
    match norm {
        NormPair::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        NormPair::L1Linf => l1_norm(v),
        NormPair::LinfL1 => v.iter().fold(0.0, |m: f64, x| m.max(x.abs())),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn evaluation_matches_value_iteration(seed in any::<u64>()) {
        let (mdp, pi, _) = world(seed);
        let exact = eval_policy(&mdp, &pi).unwrap();
        prop_assert!(exact.q.max_abs_diff(&value_iteration(&mdp, &pi)) <= 1e-8);
        let j: f64 = mdp.init_dist().iter().zip(&exact.v).map(|(p, v)| p * v).sum();
        prop_assert!((j - exact.return_).abs() <= 1e-10);
    }

    #[test]
    fn occupancy_is_a_distribution_with_matching_return(seed in any::<u64>()) {
        let (mdp, pi, _) = world(seed);
        let d = occupancy(&mdp, &pi).unwrap();
        let total: f64 = d.d_sa.as_slice().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-10);
        prop_assert!(d.d_sa.as_slice().iter().all(|&x| x >= -1e-15));
        let j = d.expect(mdp.reward()) / (1.0 - mdp.gamma());
        prop_assert!((j - eval_policy(&mdp, &pi).unwrap().return_).abs() <= 1e-9);
    }

    #[test]
    fn multiplicative_weights_tilts_by_critic_gaps(seed in any::<u64>(), eta in 0.0f64..5.0) {
        let (mdp, pi, mut rng) = world(seed);
        let f = Matrix::from_fn(mdp.n_states(), mdp.n_actions(), |_, _| rng.gen_range(0.0..10.0));
        let next = pspi_step_tabular(&pi, &f, eta).unwrap();
        for s in 0..mdp.n_states() {
            let row: f64 = next.row(s).iter().sum();
            prop_assert!((row - 1.0).abs() <= 1e-12);
            for a in 1..mdp.n_actions() {
                let lhs = (next.prob(s, a) / next.prob(s, 0)).ln();
                let rhs = (pi.prob(s, a) / pi.prob(s, 0)).ln() + eta * (f[(s, a)] - f[(s, 0)]);
                prop_assert!((lhs - rhs).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn perturbed_critic_never_overestimates(seed in any::<u64>(), shift in 0.0f64..3.0) {
        let (mdp, pi, _) = world(seed);
        let c = Matrix::from_fn(mdp.n_states(), mdp.n_actions(), |_, _| shift);
        let f = perturbed_oracle(&mdp, &pi, &c).unwrap();
        prop_assert!(pessimism_gap(&mdp, &pi, f.table()).unwrap() <= 1e-10);
    }

    #[test]
    fn cvar_matches_ternary_search_and_grows_with_budget(
        z in prop::collection::vec(-5.0f64..5.0, 1..40),
        c in 1.0f64..10.0,
    ) {
        let n = z.len() as f64;
        // sup_w (1/n) sum w_i z_i, 0 <= w_i <= c, mean w = 1: fill the largest
        // entries at level c. Checked here through the dual min_t t + c E[(z - t)+]
        // minimized by ternary search on the convex piecewise-linear objective.
        let obj = |t: f64| t + c * z.iter().map(|&x| (x - t).max(0.0)).sum::<f64>() / n;
        let (mut lo, mut hi) = (-6.0, 6.0);
        for _ in 0..300 {
            let (m1, m2) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
            if obj(m1) <= obj(m2) { hi = m2 } else { lo = m1 }
        }
        let want = obj(0.5 * (lo + hi));
        let got = empirical_cvar_one_sided(&z, c).unwrap().value;
        prop_assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
        prop_assert!((brute_force_linf_primal(&z, c).unwrap() - got).abs() <= 1e-9);
        let mean = z.iter().sum::<f64>() / n;
        prop_assert!(got >= mean - 1e-12);
        prop_assert!(empirical_cvar_one_sided(&z, c + 1.0).unwrap().value >= got - 1e-12);
    }

    #[test]
    fn chi2_dual_has_mean_variance_form(
        z in prop::collection::vec(-5.0f64..5.0, 1..40),
        c2 in 1.0f64..10.0,
    ) {
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let want = mean + ((c2 - 1.0) * var).sqrt();
        prop_assert!((chi2_dual(&z, c2).unwrap() - want).abs() <= 1e-8);
    }

    #[test]
    fn mean_matching_clips_inside_the_ball(
        m in -20.0f64..20.0,
        mu in prop::collection::vec(-3.0f64..3.0, 1..5),
        v_max in 0.1f64..5.0,
        which in 0usize..3,
    ) {
        let norm = [NormPair::L2, NormPair::L1Linf, NormPair::LinfL1][which];
        prop_assume!(norm.dual_norm(&mu) > 1e-6);
        let out = mean_match(m, &mu, v_max, norm).unwrap();
        let reach = v_max * norm.dual_norm(&mu);
        let inner: f64 = out.v.iter().zip(&mu).map(|(a, b)| a * b).sum();
        prop_assert!((inner - m.clamp(-reach, reach)).abs() <= 1e-9 * (1.0 + m.abs()));
        prop_assert!(norm_of(norm, &out.v) <= v_max * (1.0 + 1e-12));
    }

    #[test]
    fn projection_lands_in_ball_and_is_idempotent(
        v in prop::collection::vec(-10.0f64..10.0, 1..6),
        r in 0.1f64..5.0,
        which in 0usize..3,
    ) {
        let norm = [NormPair::L2, NormPair::L1Linf, NormPair::LinfL1][which];
        let p = norm.project(&v, r);
        prop_assert!(norm_of(norm, &p) <= r * (1.0 + 1e-12));
        let again = norm.project(&p, r);
        prop_assert!(p.iter().zip(&again).all(|(a, b)| (a - b).abs() <= 1e-12));
    }

    #[test]
    fn gaussian_kl_is_nonnegative(
        m1 in prop::collection::vec(-3.0f64..3.0, 2),
        m2 in prop::collection::vec(-3.0f64..3.0, 2),
        s1 in 0.2f64..3.0,
        s2 in 0.2f64..3.0,
    ) {
        let p = GaussianState::isotropic(&m1, s1);
        let q = GaussianState::isotropic(&m2, s2);
        // isotropic closed form
        let d2: f64 = m1.iter().zip(&m2).map(|(a, b)| (a - b).powi(2)).sum();
        let want = 0.5 * (2.0 * s1 / s2 + d2 / s2 - 2.0 + 2.0 * (s2 / s1).ln());
        let kl = p.kl(&q).unwrap();
        prop_assert!(kl >= 0.0 && (kl - want).abs() <= 1e-10);
    }
}

/// Rollouts with geometric termination estimate `d^pi` without the linear solve.
#[test]
fn occupancy_matches_monte_carlo() {
    let (mdp, pi, mut rng) = world(11);
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
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
    let runs = 200_000;
    let mut counts = Matrix::zeros(ns, na);
    for _ in 0..runs {
        let mut s = draw(mdp.init_dist(), &mut rng);
        loop {
            let a = draw(pi.row(s), &mut rng);
            if rng.gen::<f64>() >= mdp.gamma() {
                counts[(s, a)] += 1.0;
                break;
            }
            s = draw(mdp.next_dist(s, a), &mut rng);
        }
    }
    let d = occupancy(&mdp, &pi).unwrap();
    let est = counts.scaled(1.0 / runs as f64);
    assert!(est.max_abs_diff(&d.d_sa) < 5e-3, "{}", est.max_abs_diff(&d.d_sa));
}
