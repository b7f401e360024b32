//! Multi-head physics-informed neural networks for branched flow.
//!
//! A particle in a weak random Gaussian potential follows Hamilton's
//! equations; this crate trains networks whose outputs satisfy those
//! equations at sampled times, one linear output head per initial condition
//! on a shared base. Freezing the base and fitting only new heads transfers
//! the learned dynamics to new initial conditions and new potentials. A
//! fixed-step RK4 integrator serves as numerical ground truth throughout.

pub mod autodiff;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod gan;
pub mod model;
pub mod plot;
pub mod potential;
pub mod train;

pub use error::{Error, Result};
