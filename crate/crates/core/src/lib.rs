//! Exact Gaussian statistics for pulsed optomechanical protocols.
//!
//! The crate tracks the mechanical and optical quadratures of a pulsed
//! optomechanical system in the Heisenberg picture, as linear forms over an
//! explicit registry of independent Gaussian noise sources. From these it
//! computes means, covariances and homodyne-conditioned variances exactly.
//!
//! - [`gaussian`]: linear forms, covariance extraction, conditioning.
//! - [`dynamics`]: damped, thermally driven free evolution between pulses.
//! - [`protocol`]: pulse, loss and displacement maps and their composition.
//! - [`optimize`]: homodyne angle and pulse allocation search.
//! - [`oracle`]: independent stochastic-trajectory ensemble simulator.
//! - [`experiments`]: scenario configuration, figure tables, force sensing.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod gaussian;
pub mod optimize;
pub mod oracle;
pub mod protocol;
pub mod units;

pub use error::{Error, Result};
