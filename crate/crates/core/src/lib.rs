//! Uncertainty-gated execution of learned shape-servo policies.
//!
//! An ensemble (or dropout-sampled) policy proposes rigid end-effector
//! actions; [`se3`] aggregates them and measures their spread, [`gate`] turns
//! the step-to-step change of that spread into a proceed / request-intervention
//! decision, and [`calibration`] picks thresholds from labelled trials. The
//! [`sim`] module provides a deformable-sheet environment that produces such
//! trials, and [`campaign`] drives whole seeded campaigns.

pub mod calibration;
pub mod campaign;
pub mod error;
pub mod gate;
pub mod par;
pub mod pointcloud;
pub mod predictors;
pub mod se3;
pub mod sim;
pub mod seed;
pub mod threshold_serde;

pub use error::{Error, Result};
