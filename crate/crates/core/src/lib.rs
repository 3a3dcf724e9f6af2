//! Information-density sensor selection and virtual sensing.
//!
//! Sensors are compared by the angle between the principal eigenvectors of
//! their framed readings (eigen-phase) or by histogram mutual information.
//! The most informative sensors are kept as physical inputs and a dense
//! network estimates the rest.

pub mod cli;
pub mod eigenphase;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod mutualinfo;
pub mod regress;
pub mod select;
pub mod synth;

pub use error::{Error, Result};
