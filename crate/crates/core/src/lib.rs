//! Receding-horizon generalized Nash games for demand-side management.
//!
//! Prosumers with batteries and shiftable consumption share an aggregate
//! load limit and pay a load-dependent price. At every step the horizon game
//! is assembled ([`game`]), its variational equilibrium computed
//! ([`solver`]), and the first input applied ([`sim`]). Day-ahead and
//! no-DSM baselines run on the same scenarios.

pub mod error;
pub mod game;
pub mod instances;
pub mod linalg;
pub mod model;
pub mod output;
pub mod qp;
pub mod scenario;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
