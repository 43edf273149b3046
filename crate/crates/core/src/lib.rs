//! Calibration-aware benchmarking for binary-decision models.
//!
//! The crate ingests per-dataset score/label tables, computes AUC, fits
//! score-to-decision calibrators (logistic, isotonic, stump) under five
//! training regimes, and reports expected accuracy, kappa, rankings, and
//! the divergence between AUC ranks and calibrated-accuracy ranks.

pub mod analysis;
pub mod calibrate;
pub mod corpus;
pub mod fixture;
pub mod metrics;
pub mod protocols;

pub use calibrate::{Calibrator, Method};
pub use corpus::{BenchmarkCorpus, DomainRegistry, FileFormat, ScoredRecord};
pub use protocols::{ProtocolRun, ProtocolSpec, Regime};
