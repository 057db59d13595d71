//! Periodically inhomogeneous hidden Markov models.
//!
//! The crate covers a chain whose transition matrices repeat with period `L`:
//!
//! * [`link`] builds the `L` transition matrices from trigonometric logit coefficients.
//! * [`stationary`] computes the exact periodically stationary distribution and the
//!   per-time "hypothetical" stationary distribution it is often confused with.
//! * [`dwell`] gives time-varying and overall dwell-time distributions and their means.
//! * [`hmm`] adds count emissions: likelihood, local decoding, simulation.
//! * [`estimate`] fits models by maximum likelihood and produces Monte Carlo bands.
//! * [`check`] compares model-implied dwell times with those of decoded state sequences.
//! * [`presets`] holds the published two-state parameter sets.
//! * [`io`] reads and writes the CSV/JSON file formats used by the `phmm` binary.
//!
//! Time indices are 1-based (`1..=L`); state indices are 0-based in the API and 1-based
//! in files.

pub mod check;
pub mod dwell;
pub mod error;
pub mod estimate;
pub mod hmm;
pub mod io;
pub mod link;
pub mod presets;
pub mod stationary;

pub use error::{Error, Result};
pub use hmm::{EmissionSpec, HmmModel, ObservationSeries};
pub use link::{PeriodicTpm, TrigLinkSpec};
pub use stationary::{DistributionKind, PeriodicDistribution};
