use super::{UpdateRule, UpdateVector};
use crate::dro::ResidualSample;
use crate::error::{invalid, Error, Result};
use crate::linalg::{symmetric_pinv, Lu, Matrix, NormPair};
use crate::scalar::{dot, Scalar};

/// Least-squares update `v = (Sigma + ridge I)^{-1} E[phi A]`, pulled back
/// radially into the `v_max` ball when it lands outside.
pub fn lspu_ols<T: Scalar>(
    sample: &ResidualSample<T>,
    v_max: T,
    ridge: T,
    norm: NormPair,
) -> Result<UpdateVector<T>> {
    if !(ridge >= T::zero()) {
        return Err(invalid("ridge", format!("{ridge} must be nonnegative")));
    }
    let d = sample.dim();
    let mut sigma = Matrix::zeros(d, d);
    let mut cross = vec![T::zero(); d];
    for ((phi, &a), &w) in sample.scores.iter().zip(&sample.targets).zip(&sample.weights) {
        for i in 0..d {
            cross[i] = cross[i] + w * phi[i] * a;
            for j in 0..d {
                sigma[(i, j)] = sigma[(i, j)] + w * phi[i] * phi[j];
            }
        }
    }
    for i in 0..d {
        sigma[(i, i)] = sigma[(i, i)] + ridge;
    }
    let (rank, _) = symmetric_pinv(&sigma);
    if rank < d {
        return Err(Error::Singular {
            context: "empirical score covariance",
            rank,
            dim: d,
        });
    }
    let raw = Lu::factor(&sigma)?.solve(&cross);
    let rescaled = norm.norm(&raw) > v_max;
    let v = norm.rescale_into(&raw, v_max);
    Ok(UpdateVector {
        loss: sample.square_loss(&v),
        v,
        v_max,
        rule: UpdateRule::LspuOls,
        residual: T::zero(),
        rescaled,
    })
}

/// Projected SGD on the squared loss, one pass over the sample in order,
/// returning the running average of the iterates. Each step uses gradient
/// `2 N p_i (v^T phi_i - A_i) phi_i`, which is the plain per-sample gradient
/// for equal weights.
pub fn lspu_sgd<T: Scalar>(
    sample: &ResidualSample<T>,
    v_max: T,
    alpha: T,
    norm: NormPair,
) -> Result<UpdateVector<T>> {
    if !(alpha > T::zero()) {
        return Err(invalid("alpha", format!("{alpha} must be positive")));
    }
    let d = sample.dim();
    let n = T::from_usize_lossy(sample.len());
    let mut v = vec![T::zero(); d];
    let mut avg = vec![T::zero(); d];
    for (i, ((phi, &a), &w)) in sample
        .scores
        .iter()
        .zip(&sample.targets)
        .zip(&sample.weights)
        .enumerate()
    {
        let coef = T::two() * alpha * n * w * (dot(&v, phi) - a);
        let stepped: Vec<T> = v.iter().zip(phi).map(|(&x, &p)| x - coef * p).collect();
        v = norm.project(&stepped, v_max);
        let k = T::from_usize_lossy(i + 1);
        for (m, &x) in avg.iter_mut().zip(&v) {
            *m = *m + (x - *m) / k;
        }
    }
    Ok(UpdateVector {
        loss: sample.square_loss(&avg),
        v: avg,
        v_max,
        rule: UpdateRule::LspuSgd,
        residual: T::zero(),
        rescaled: false,
    })
}
