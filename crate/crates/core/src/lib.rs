//! Secrecy outage of RIS-assisted MISO wiretap links with electromagnetic
//! interference at the surface.
//!
//! [`geometry`] builds the spatial correlation of the surface, [`channel`]
//! draws channels and simulates SNRs, [`moments`] fits Bob's and Eve's SNR
//! distributions, [`secrecy`] turns the fits into outage probabilities, and
//! [`harness`] runs seeded sweeps, figure presets and self-checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod moments;
mod quad;
pub mod secrecy;
pub mod specfun;

pub use error::{Error, Result};
