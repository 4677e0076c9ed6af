//! Travelling-salesman controller synthesis for nondeterministic systems.
//!
//! The crate turns a sampled continuous system into a finite abstraction,
//! solves minimax reach-avoid problems on it, picks a visiting order for a
//! set of targets with an asymmetric TSP solver, and chains the resulting
//! controllers into one switching controller.

pub mod abstraction;
pub mod atsp;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod grid;
pub mod reach;
pub mod scenario;
pub mod sim;
pub mod synthesis;
pub mod system;
pub mod tsplib;

pub use error::{Error, Result};
pub use system::{Cost, FiniteSystem, FiniteSystemBuilder, StateSet, INFINITY};
