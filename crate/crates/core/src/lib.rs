//! Online conformal prediction for time series.
//!
//! Calibrators turn a stream of non-conformity scores into thresholds; the
//! runner couples them with one-step forecasters to produce prediction
//! intervals, and `verify` checks the ECI threshold bounds empirically.

pub mod calibrators;
pub mod datagen;
pub mod error;
pub mod forecasters;
pub mod ingest;
pub mod par;
pub mod runner;
pub mod smoothing;
pub mod stats;
pub mod suite;
pub mod verify;

pub use calibrators::{Calibrator, CalibratorKind, MethodSpec, RateSchedule, StepFeedback, StepInputs};
pub use error::{Error, Result};
pub use par::Execution;
pub use smoothing::{LambdaMode, SmoothingKernel, LAMBDA_BOUND};
