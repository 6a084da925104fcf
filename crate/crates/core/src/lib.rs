//! Average age of information (AAoI) in unreliable tandem queues.
//!
//! Two systems are covered:
//!
//! * a two-node M/M/1 tandem with infinite buffers and a global
//!   breakdown/repair state ([`analytic_mm1`], checked against the truncated
//!   chain in [`ctmc`]);
//! * an N-stage M/G/1 tandem whose downstream nodes are bufferless and whose
//!   nodes fail only while serving ([`analytic_mg1`]).
//!
//! [`des`] simulates both systems (and an overlapping-service variant) and is
//! the arbiter wherever the closed forms are in doubt. [`experiments`] drives
//! sweeps, lambda* searches, validation reports and figure reproduction.

pub mod analytic_mg1;
pub mod analytic_mm1;
pub mod ctmc;
pub mod des;
pub mod dist;
pub mod error;
pub mod experiments;
pub mod lst_calculus;

pub use dist::DistributionSpec;
pub use error::{Error, Result};
pub use lst_calculus::{CalculusConfig, TransformFn};
