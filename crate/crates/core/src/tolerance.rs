//! Default tolerances. All are relative to the scale of the matrices being
//! compared, never absolute.

/// Algebraic identities between two computed quantities.
pub const ALGEBRAIC: f64 = 1e-9;

/// Off-pattern precision mass for structural classification.
pub const STRUCTURE: f64 = 1e-8;

/// Minimum eigenvalue ratio accepted by [`crate::gaussian::is_spd`] when a
/// covariance is validated on construction.
pub const SPD: f64 = 1e-13;

/// Symmetry slack accepted on user-supplied covariances.
pub const SYMMETRY: f64 = 1e-10;
