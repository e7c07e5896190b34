//! Tabular critic oracles and their pessimism / Bellman-error diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::Matrix;
use crate::mdp::{bellman_apply, critic_return, eval_policy, Occupancy, PolicyTable, TabularMdp};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    #[default]
    Exact,
    Perturbed,
    Custom,
}

impl std::str::FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(OracleKind::Exact),
            "perturbed" => Ok(OracleKind::Perturbed),
            "custom" => Ok(OracleKind::Custom),
            other => Err(Error::Parse(format!("unknown oracle kind `{other}`"))),
        }
    }
}

/// Critic table `f[s][a]` in `[0, V_max]` with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticFunction<T> {
    table: Matrix<T>,
    kind: OracleKind,
    /// Largest entry of the pessimism table that produced it (0 if exact).
    perturbation: T,
}

impl<T: Scalar> CriticFunction<T> {
    /// Wraps an arbitrary table, checking `0 <= f <= v_max + 1e-12`.
    pub fn from_table(table: Matrix<T>, v_max: T) -> Result<Self> {
        let top = v_max + T::lit(1e-12);
        if let Some(&x) = table.as_slice().iter().find(|&&x| !(x >= T::zero() && x <= top)) {
            return Err(invalid("critic", format!("entry {x} outside [0, {v_max}]")));
        }
        Ok(Self {
            table,
            kind: OracleKind::Custom,
            perturbation: T::zero(),
        })
    }

    pub fn table(&self) -> &Matrix<T> {
        &self.table
    }

    pub fn kind(&self) -> OracleKind {
        self.kind
    }

    pub fn perturbation(&self) -> T {
        self.perturbation
    }

    pub fn into_table(self) -> Matrix<T> {
        self.table
    }
}

impl<T> AsRef<Matrix<T>> for CriticFunction<T> {
    fn as_ref(&self) -> &Matrix<T> {
        &self.table
    }
}

/// `f = Q^pi`.
pub fn exact_oracle<T: Scalar>(mdp: &TabularMdp<T>, pi: &PolicyTable<T>) -> Result<CriticFunction<T>> {
    Ok(CriticFunction {
        table: eval_policy(mdp, pi)?.q,
        kind: OracleKind::Exact,
        perturbation: T::zero(),
    })
}

/// `f = clamp(Q^pi - c, 0, V_max)` for a nonnegative pessimism table `c`.
pub fn perturbed_oracle<T: Scalar>(
    mdp: &TabularMdp<T>,
    pi: &PolicyTable<T>,
    pessimism: &Matrix<T>,
) -> Result<CriticFunction<T>> {
    check_dim("pessimism rows", mdp.n_states(), pessimism.rows())?;
    check_dim("pessimism cols", mdp.n_actions(), pessimism.cols())?;
    if let Some(&x) = pessimism.as_slice().iter().find(|&&x| !(x >= T::zero())) {
        return Err(invalid("pessimism", format!("entry {x} is negative")));
    }
    let q = eval_policy(mdp, pi)?.q;
    let v_max = mdp.v_max();
    let table = Matrix::from_fn(q.rows(), q.cols(), |s, a| {
        (q[(s, a)] - pessimism[(s, a)]).max(T::zero()).min(v_max)
    });
    let perturbation = pessimism.as_slice().iter().copied().fold(T::zero(), T::max);
    Ok(CriticFunction {
        table,
        kind: OracleKind::Perturbed,
        perturbation,
    })
}

/// Realized transferred Bellman error `E_{d_cp}[T^pi f - f]`.
pub fn check_transferred_bellman<T: Scalar>(
    mdp: &TabularMdp<T>,
    pi: &PolicyTable<T>,
    f: &Matrix<T>,
    d_cp: &Occupancy<T>,
) -> Result<T> {
    let tf = bellman_apply(mdp, pi, f)?;
    check_dim("occupancy states", mdp.n_states(), d_cp.n_states())?;
    let gap = Matrix::from_fn(f.rows(), f.cols(), |s, a| tf[(s, a)] - f[(s, a)]);
    Ok(d_cp.expect(&gap))
}

/// `J_f(pi) - J(pi)`; nonpositive for a pessimistic critic.
pub fn pessimism_gap<T: Scalar>(mdp: &TabularMdp<T>, pi: &PolicyTable<T>, f: &Matrix<T>) -> Result<T> {
    Ok(critic_return(mdp, pi, f) - eval_policy(mdp, pi)?.return_)
}
