//! Adaptive ε-greedy recommendation with linearized reward densities.
//!
//! The exploration rate is derived from data: the CTRs of clicked and
//! non-clicked recommendations are binned, segmented into piecewise-linear
//! densities, and the threshold maximizing a utility over both densities
//! fixes ε. Classical ε schedules and an exponentiated-gradient sampler are
//! included as baselines, together with an offline replay and simulation
//! harness.
//!
//! Modules, bottom-up:
//! - [`reward`]: per-document CTR counters and reward samples.
//! - [`density`]: least-squares segmentation into a unit-area density.
//! - [`utility`]: threshold search and the derived ε.
//! - [`policy`]: the linearized policy and the baselines.
//! - [`situation`]: ontology-based situation matching.
//! - [`harness`]: event logs, synthetic streams and evaluation.

pub mod density;
pub mod error;
pub mod harness;
pub mod policy;
pub mod reward;
pub mod situation;
pub mod utility;

pub use error::{Error, Result};
