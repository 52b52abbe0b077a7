//! Benchmark limit-state models.

pub mod brownian;
pub mod darcy;
pub mod toy;

pub use brownian::BrownianModel;
pub use darcy::{DarcyConfig, DarcyModel};
pub use toy::{Kappa, ToyModel};
