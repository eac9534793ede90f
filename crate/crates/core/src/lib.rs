//! Simulation of quantum mean estimation built on the complex-phase Grover
//! unitary 𝒰 = REFL_p · ROT_y.
//!
//! The modules follow the algorithm from the bottom up: [`prob_core`]
//! (random variables and query accounting), [`state_space`] (the unitary),
//! [`spectral`] (its eigenphase distribution), [`measurement`] (phase
//! estimation and the Hadamard test), [`maintask`] (the distinguishers),
//! [`reductions`] (the estimator ladder) and [`applications`].

pub mod applications;
pub mod error;
pub mod experiments;
pub mod instances;
pub mod maintask;
pub mod measurement;
pub mod prob_core;
pub mod reductions;
pub mod rng;
pub mod spectral;
pub mod state_space;

pub use error::{Error, Result};
pub use prob_core::{FiniteProbSpace, QueryLedger, RandVar, Transform};
pub use rng::{trial_rng, SimRng};
pub use state_space::{CState, PhasedGroverUnitary};
