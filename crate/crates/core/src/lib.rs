//! Steady axisymmetric supersonic Euler-Poisson flow in a divergent conical nozzle.

pub mod case;
pub mod cli_io;
pub mod core_model;
pub mod eigenbasis;
pub mod error;
pub mod linear_subsystem;
pub mod numerics;
pub mod outer_iteration;
pub mod radial_background;
pub mod verify_report;
pub mod vorticity_transport;

pub use error::{NozzleError, NozzleResult};
