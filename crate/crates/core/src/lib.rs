//! Matrix-free simulation of DFT-spread OTFS for integrated sensing and
//! communication.
//!
//! Grids are M x N and stored column-major (`vec` stacks columns), so the
//! delay / fast-time axis is contiguous. All DFTs are unitary.

// Negated comparisons are how parameter checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baselines;
pub mod channel;
pub mod detect;
pub mod error;
pub mod experiment;
pub mod fft;
pub mod lattice;
pub mod modem;
pub mod sensing;

pub use error::{Error, Result};
pub use lattice::{Domain, FrameParams, Grid, PilotConfig, QamAlphabet};
pub use modem::{Layout, TimeSignal};
