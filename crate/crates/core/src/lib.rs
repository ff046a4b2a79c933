//! Nonsingular zero-mean Gaussian sequences over a discrete index interval
//! `[0, N]`: Markov, conditionally Markov (CM_L conditioned on the last
//! state, CM_F conditioned on the first) and reciprocal.
//!
//! The crate covers
//! - exact joint covariances and samplers for Markov and CM dynamic models
//!   ([`markov`], [`cml`]),
//! - inducing a reciprocal CM_L model from a Markov model and checking the
//!   algebraic reciprocity / Markov conditions of a CM model ([`induction`]),
//! - classifying a joint covariance by the block pattern of its precision
//!   matrix ([`structure`]),
//! - the Markov-plus-uncorrelated-vector representation of CM sequences
//!   ([`representation`]),
//! - destination-conditioned trajectories built on a nearly-constant-velocity
//!   motion model ([`trajectory`]).
//!
//! Every state is a `d`-dimensional vector and all matrices are dense
//! [`nalgebra::DMatrix<f64>`]. Sequences are zero mean throughout.

pub mod cml;
pub mod error;
pub mod gaussian;
pub mod induction;
pub mod markov;
pub mod random;
pub mod representation;
pub mod structure;
pub mod tolerance;
pub mod trajectory;

pub use cml::{BoundaryCondition, CmStep, CmlModelParams, Endpoint, EndpointJoint};
pub use error::{Error, Result};
pub use gaussian::{BlockMatrix, GaussianSpec, JointCovariance, Sequence};
pub use induction::{ConditionReport, PropagatedQuantities, Verdict};
pub use markov::MarkovModelParams;
pub use representation::{DualReport, RepresentationSpec};
pub use structure::StructureReport;
pub use trajectory::NcvConfig;
