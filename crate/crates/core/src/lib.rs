//! Simulation and analysis of Stark-modulated atomic frequency comb memories
//! in site-2 151Eu:Y2SiO5.
//!
//! The crate is organised along the experimental workflow:
//!
//! * [`ion_ensemble`]: hyperfine structure, population grid, absorption spectra
//! * [`pump`]: optical pumping primitives and the enhanced-absorption preparation
//! * [`stark`]: linear Stark shifts, splitting fits and gate phases
//! * [`afc`]: closed-form comb efficiencies, comb rendering and finesse fits
//! * [`echo`]: time-domain propagation, Stark-gated recall and photon counting
//! * [`tomography`]: process tomography by maximum likelihood and the classical bound

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod afc;
pub mod echo;
pub mod error;
pub mod ion_ensemble;
pub mod material;
pub mod optim;
pub mod pump;
pub mod stark;
pub mod tomography;

pub use error::{Error, Result};
