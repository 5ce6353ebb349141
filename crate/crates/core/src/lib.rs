//! Rate-region, Gelfand-Pinsker and coset-code toolkit for three-receiver
//! discrete memoryless broadcast channels.
//!
//! The numeric core is generic: [`entropy`] works over any [`entropy::Prob`]
//! float and [`polytope`] over a [`polytope::Scalars`] pair. The aliases below
//! fix the types used by the region builders and the CLI.

pub mod channels;
pub mod coset_sim;
pub mod entropy;
pub mod error;
pub mod gelfand_pinsker;
pub mod polytope;
pub mod regions;
pub mod rng;

pub use error::{Error, Result};

/// Joint pmf with `f64` probabilities.
pub type JointPmf = entropy::LabeledJointPmf<f64>;
/// Joint pmf with `f32` probabilities.
pub type JointPmf32 = entropy::LabeledJointPmf<f32>;
/// Rational coefficients, floating constants.
pub type RateSystem = polytope::LinearSystem<polytope::Mixed>;
/// Big-rational coefficients and constants.
pub type ExactSystem = polytope::LinearSystem<polytope::Exact>;
