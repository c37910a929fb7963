//! Distributed LQG control of vehicle platoons under two-step delayed
//! information sharing.
//!
//! The crate covers the linearized platoon model, Riccati solvers, optimal
//! structured gains, a controller runtime with per-vehicle message passing,
//! and a Monte-Carlo simulator for comparing controllers.

pub mod config;
pub mod error;
pub mod exec;
pub mod lqr;
pub mod model;
pub mod structured;
pub mod runtime;
pub mod sim;
pub mod synthesis;
pub mod validate;

pub use error::{Error, Result};
pub use exec::ExecMode;
