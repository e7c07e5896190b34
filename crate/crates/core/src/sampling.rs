//! Offline datasets of `(s, a)` pairs drawn from a data distribution.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::mdp::Occupancy;
use crate::scalar::Scalar;

/// Weighted `(s, a)` pairs. Weights sum to one; sampled datasets use `1/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub pairs: Vec<(usize, usize)>,
    pub weights: Vec<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), T)> + '_ {
        self.pairs.iter().copied().zip(self.weights.iter().copied())
    }

    /// Unweighted dataset, each pair with weight `1/N`.
    pub fn uniform(pairs: Vec<(usize, usize)>) -> Self {
        let w = T::one() / T::from_usize_lossy(pairs.len().max(1));
        let weights = vec![w; pairs.len()];
        Self { pairs, weights }
    }

    /// Per-cell empirical frequencies.
    pub fn frequencies(&self, n_states: usize, n_actions: usize) -> crate::linalg::Matrix<T> {
        let mut m = crate::linalg::Matrix::zeros(n_states, n_actions);
        for ((s, a), w) in self.iter() {
            m[(s, a)] = m[(s, a)] + w;
        }
        m
    }
}

/// `n` i.i.d. draws from `d_data` with a seeded ChaCha stream.
pub fn sample_dataset<T: Scalar>(d_data: &Occupancy<T>, n: usize, seed: u64) -> Result<Dataset<T>> {
    if n == 0 {
        return Err(invalid("sample size", "must be at least 1"));
    }
    let n_actions = d_data.n_actions();
    let weights: Vec<f64> = d_data.d_sa.as_slice().iter().map(|x| x.as_f64()).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| invalid("data distribution", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..n)
        .map(|_| {
            let i = dist.sample(&mut rng);
            (i / n_actions, i % n_actions)
        })
        .collect();
    Ok(Dataset::uniform(pairs))
}

/// Every `(s, a)` cell with its exact weight (the infinite-data limit).
pub fn exhaustive_dataset<T: Scalar>(d_data: &Occupancy<T>) -> Dataset<T> {
    let (ns, na) = (d_data.n_states(), d_data.n_actions());
    let mut pairs = Vec::with_capacity(ns * na);
    let mut weights = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            pairs.push((s, a));
            weights.push(d_data.d_sa[(s, a)]);
        }
    }
    Dataset { pairs, weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{figure1_mdp, occupancy, PolicyTable};

    fn d_cp() -> Occupancy<f64> {
        let mdp = figure1_mdp::<f64>();
        let pi = PolicyTable::deterministic(&[1, 0, 0], 2);
        occupancy(&mdp, &pi).unwrap()
    }

    #[test]
    fn exhaustive_weights_sum_to_one() {
        let ds = exhaustive_dataset(&d_cp());
        assert_eq!(ds.len(), 6);
        assert!((ds.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_draws() {
        let d = d_cp();
        let a = sample_dataset(&d, 1000, 3).unwrap();
        let b = sample_dataset(&d, 1000, 3).unwrap();
        let c = sample_dataset(&d, 1000, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.pairs, c.pairs);
    }

    #[test]
    fn frequencies_within_three_sigma() {
        let pi = PolicyTable::new(
            crate::linalg::Matrix::from_rows(&[vec![0.3, 0.7], vec![0.5, 0.5], vec![0.9, 0.1]]).unwrap(),
        )
        .unwrap();
        let d = occupancy(&figure1_mdp::<f64>(), &pi).unwrap();
        let n = 100_000;
        let freq = sample_dataset(&d, n, 11).unwrap().frequencies(3, 2);
        for s in 0..3 {
            for a in 0..2 {
                let p = d.d_sa[(s, a)];
                let se = (p * (1.0 - p) / n as f64).sqrt();
                assert!((freq[(s, a)] - p).abs() <= 3.0 * se, "{s},{a}");
            }
        }
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(sample_dataset(&d_cp(), 0, 1).is_err());
    }
}
