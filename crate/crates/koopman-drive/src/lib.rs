//! Simulation and control toolkit for an inverter-fed interior permanent-magnet
//! synchronous machine (IPMSM).
//!
//! The crate models the physical drive (two-level voltage source inverter plus
//! dq-frame machine dynamics), trains a bank of Koopman-operator reduced-order
//! models from closed-loop data — one autonomous linear model per inverter
//! voltage vector — and compares three current controllers in closed loop:
//!
//! * finite-control-set MPC driven by the trained Koopman model bank,
//! * finite-control-set MPC driven by the white-box machine model,
//! * a PI field-oriented-control baseline with carrier-based PWM.
//!
//! [`analysis`] provides the spectral and time-domain metrics used to compare
//! them; [`commands`] wires everything into the `kdrive` command-line tool.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod drive;
pub mod error;
pub mod foc;
pub mod koopman;
pub mod mpc;
pub mod sim;

pub use error::{Error, Result};
