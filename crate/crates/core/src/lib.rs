#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod mc;

pub use error::{Error, Result};
pub mod class_diagnostics;
pub mod convolution_stopped_sums;
pub mod large_deviations;
pub mod quad;
pub mod rare_sets;
pub mod report;
pub mod risk_engine;
pub mod scalar_laws;
pub mod vector_laws;
