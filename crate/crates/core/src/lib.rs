//! Pseudo-spectral simulation of the two-species Nernst-Planck system coupled
//! to 2D incompressible Euler / Navier-Stokes flow on the 2π-periodic torus.
//!
//! The state is carried in charge / salt / vorticity variables `(ρ, σ, ω)`;
//! velocity, potential and the individual concentrations are derived.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod spectral;
pub mod model;
pub mod timestep;
pub mod diagnostics;
pub mod initial;
pub mod experiments;

pub use diagnostics::{DiagnosticsRecord, DifferenceNorms, RateFit};
pub use error::{Error, Result};
pub use experiments::{PicardConfig, PicardReport, SweepMode, SweepReport};
pub use initial::Preset;
pub use model::{PhysParams, SimState, Tendency, Variant};
pub use spectral::{DerivativeKind, Direction, Grid, SpectralField2D};
pub use timestep::{integrate, FnSink, Sink, Stepper, StepperConfig};
