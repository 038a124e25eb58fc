//! Batch front end for the raretail library: strict JSON experiment configs,
//! bundled presets, and `report.json` / `data.csv` artifacts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod config;
pub mod presets;
pub mod run;
