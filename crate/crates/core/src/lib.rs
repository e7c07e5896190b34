//! Exact tabular evaluation and actor-update rules for offline actor-critic
//! policy optimization.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64` for everyday use.

pub mod actor;
pub mod config;
pub mod critic;
pub mod dro;
mod error;
pub mod linalg;
pub mod mdp;
pub mod policy;
pub mod sampling;
mod scalar;

pub use error::{Error, Result};
pub use linalg::{Matrix as MatrixOf, NormPair};
pub use scalar::{log_sum_exp, logit, sigmoid, Scalar};

pub type Matrix = linalg::Matrix<f64>;
pub type Mdp = mdp::TabularMdp<f64>;
pub type Policy = mdp::PolicyTable<f64>;
pub type Values = mdp::ValueBundle<f64>;
pub type Occupancy = mdp::Occupancy<f64>;
pub type Family = policy::PolicyFamily<f64>;
pub type Features = policy::FeatureMap<f64>;
pub type Critic = critic::CriticFunction<f64>;
pub type Update = actor::UpdateVector<f64>;
pub type Dataset = sampling::Dataset<f64>;
