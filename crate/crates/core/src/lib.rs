//! Repair of memory-safety bugs in a small C-like language, driven by
//! under-approximate symbolic execution.
//!
//! The pipeline: [`isl`] infers per-path footprints and reports bugs,
//! [`localize`] picks fix locations and ingredients, [`pcfg`] samples
//! candidate patches, [`cluster`] groups them by their effect on the
//! [`meta`] abstraction of the heap, and [`repair`] ties the loop together.

pub mod cluster;
pub mod error;
pub mod isl;
pub mod lang;
pub mod localize;
pub mod meta;
pub mod pcfg;
pub mod repair;
pub mod report;
pub mod solver;

pub use error::{Error, Result};
