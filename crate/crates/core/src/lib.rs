//! Simulation of a time-multiplexed photonic lattice: storage bins coupled through
//! a single register mode by programmable Mach-Zehnder passes.

pub mod analysis;
pub mod device;
pub mod error;
pub mod exact;
pub mod fock;
pub mod lattice;
pub mod linalg;
pub mod ops;
pub mod scenario;
pub mod schedule;
pub mod trajectory;

pub use error::{Error, Result};
