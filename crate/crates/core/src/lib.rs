//! Validation-free training control from neural velocity.
//!
//! The crate bundles a small deterministic training engine ([`nn`]), per-neuron
//! velocity estimation over a frozen auxiliary set ([`velocity`]), the
//! learning-rate/stop controller and its baselines ([`controller`]), datasets
//! and auxiliary sets ([`data`]), and the experiment runner, logging and CLI
//! plumbing ([`experiment`]).

pub mod controller;
pub mod data;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod tensor;
pub mod velocity;

pub use error::{Error, Result};
