//! Monte Carlo simulator and analysis toolkit for a heralded photon-pair
//! quantum memory chained to a telecom frequency-conversion stage.
//!
//! The crate is organized around the experiment's data flow:
//!
//! * [`stats`] — photon-number laws of the pair source and the closed-form
//!   correlation predictors everything else is checked against.
//! * [`sim`] — per-trial Monte Carlo of the write-read sequence, producing
//!   detector time-tag streams.
//! * [`qfc`] — the frequency-conversion device: efficiency vs pump power,
//!   pump noise, SNR predictors, fiber crossover analysis.
//! * [`analysis`] — recovers correlation functions, retrieval efficiencies,
//!   waveforms, and nonclassicality parameters from tag streams.
//! * [`fit`] — damped-least-squares extraction of device constants.
//! * [`config`] — scenario files, bundled presets, CSV emission.
//! * [`io`] — the on-disk tag-stream format.

pub mod analysis;
pub mod config;
pub mod error;
pub mod fit;
pub mod io;
pub mod qfc;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
