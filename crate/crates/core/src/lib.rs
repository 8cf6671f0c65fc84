//! Inference of time-varying competition and mutualism among overlapping
//! online communities.
//!
//! The pipeline runs from raw contribution logs to weekly activity panels
//! ([`corpus`]), author/topic vector spaces and overlap series
//! ([`vectorize`]), community clusters ([`cluster`]), regularized S-Map
//! Jacobians ([`smap`]), interaction episodes ([`episodes`]) and dyadic
//! fixed-effects regressions ([`panel`]). [`oracle`] generates synthetic
//! ecosystems with analytic Jacobians for validation.

pub mod cluster;
pub mod corpus;
pub mod episodes;
pub mod error;
pub mod oracle;
pub mod panel;
pub mod pipeline;
pub mod smap;
pub mod stats;
pub mod vectorize;

pub use error::{Error, Result};
