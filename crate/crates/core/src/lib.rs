//! Membership-inference evaluation over token log-probability traces.
//!
//! * [`trace`]: the per-sample trace and labeled pool types.
//! * [`attacks`]: the five membership scores (higher = more member-like).
//! * [`toylm`]: a byte-level n-gram model used as target, generator and
//!   reference at desk scale.
//! * [`eval`]: AUC and the conventional vs. synthetic non-member setups.
//! * [`ingest`]: corpus splitting, trace files and report rendering.
//! * [`cli`]: the `miaeval` command line.

pub mod attacks;
pub mod cli;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod toylm;
pub mod trace;

pub use error::{Error, Result};
