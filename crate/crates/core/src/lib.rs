//! Design-space exploration for ReRAM processing-in-memory recommender accelerators.
//!
//! The crate is organised bottom-up:
//!
//! * [`design_space`] describes joint model / quantization / ReRAM configurations and
//!   knows how to validate, count, sample and mutate them.
//! * [`crossbar`] is a bit-accurate functional model of ReRAM crossbars: differential
//!   bit-plane programming, bit-serial MVM with ADC saturation, transposed-write arrays
//!   and the MBSA squaring unit.
//! * [`mapping`] places every operator of a design point onto crossbar tiles and runs
//!   a functional forward pass through the simulated hardware.
//! * [`cost`] and [`pipeline`] estimate area, energy, power, latency and throughput.
//! * [`evaluator`] supplies the model-quality term and [`search`] runs regularized
//!   evolution over the joint space.

pub mod cost;
pub mod crossbar;
pub mod design_space;
pub mod error;
pub mod evaluator;
pub mod json;
pub mod mapping;
pub mod pipeline;
pub mod search;

pub use error::{Error, Result};

/// Activation width used throughout the toolkit. Only weights are searched.
pub const DEFAULT_ACTIVATION_BITS: u8 = 8;
