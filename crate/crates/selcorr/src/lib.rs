//! Simulation studies, file formats and the command-line front end for
//! [`selcorr_core`].
//!
//! * [`experiments`]: seeded, parallel scenario runners and their metrics.
//! * [`io`]: CSV and JSON formats for metric tables, lattices and inputs.
//! * [`report`]: selection plus conditional estimation over an input table,
//!   and calibration plot data.
//! * [`simulate`]: runs a named scenario end to end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod io;
pub mod report;
pub mod simulate;

pub use error::{Error, Result};
