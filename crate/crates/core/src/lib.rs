//! Workload allocation for cooperative fog computing.
//!
//! Nodes receive workload from their users and may process it, forward it
//! to neighbouring nodes or send it to the cloud. [`model`] holds the
//! response-time and power models, [`single`] the one-node problem,
//! [`central`] the cooperative problem solved in one place, and [`dist`]
//! the distributed solvers that keep node parameters private.

pub mod central;
pub mod dist;
pub mod error;
pub mod model;
pub mod pgd;
pub mod projection;
pub mod scenario;
pub mod single;
pub mod solver;
pub mod trace;

pub use error::{FogError, Result};
pub use model::{Allocation, NodeParams, PowerParams, Scenario};
