//! Central numerical tolerances.

/// Tolerance for exact identities (fixed points, normalization, duality).
pub const IDENTITY_TOL: f64 = 1e-10;

/// Tolerance for chains of derived quantities (lemma residuals, decompositions).
pub const DERIVED_TOL: f64 = 1e-9;

/// Row-sum tolerance for stochastic matrices and distributions.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Occupancy entries in `[-OCCUPANCY_FLOOR, 0)` are clamped to zero; anything
/// more negative is reported as a failed solve.
pub const OCCUPANCY_FLOOR: f64 = 1e-14;

/// Logits are clamped to this magnitude before exponentiation.
pub const LOGIT_CLAMP: f64 = 500.0;
