//! Deterministic discrete-event model of inter-chip spike routing.

pub mod chip;
pub mod fabric;
pub mod pipeline;
pub mod sim;
pub mod transport;
pub mod harness;
