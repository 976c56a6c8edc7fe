//! Sequence-to-point energy disaggregation for household mains readings,
//! with appliance and cross-domain transfer learning.

pub mod dataset;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod powerdata;
pub mod seq2point;
pub mod transfer;
pub mod windowing;

pub use error::{Error, Result};
