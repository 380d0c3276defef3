//! Two-region MFD traffic dynamics and learning-based tracking perimeter control.
//!
//! The crate is organised bottom-up:
//!
//! - [`mfd`]: trip-completion curves, OD-level dynamics and a fixed-step integrator.
//! - [`reference`]: set-point schedules, trajectory generators, equilibria and steady-state control.
//! - [`augmented`]: the tracking-error system and the saturated control cost.
//! - [`adp`]: critic/actor learning from data (IRL) and a model-based counterpart.
//! - [`control`]: closed-loop execution, demand profiles and the SPC baseline.
//! - [`experiments`]: config-driven runs, metrics and the CLI behind `mfdpc`.

pub mod adp;
pub mod augmented;
pub mod control;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod mfd;
pub mod reference;
pub mod trace;

pub use error::{Error, Result};
