//! Simulation, equalization and compression toolkit for a dual-polarization
//! coherent optical link equalized by a small multilayer perceptron.
//!
//! The crate is organized along the processing chain:
//!
//! * [`txsim`]: PRBS source, 64-QAM mapper, RRC shaping, split-step Manakov
//!   propagation and EDFA noise.
//! * [`dsp`]: receiver linear equalization (CDC, matched filter, K normalization)
//!   and BER / Q-factor metrics.
//! * [`neuralnet`]: the MLP equalizer, windowed datasets and Adam training.
//! * [`compress`]: magnitude pruning with a polynomial schedule, INT8
//!   post-training quantization and the integer inference path.
//! * [`complexity`]: bit-operation accounting and the `.mlpz` model format.
//! * [`bench`]: experiment configuration, the end-to-end pipeline, the latency
//!   harness and CSV reports.

pub mod bench;
pub mod complexity;
pub mod compress;
pub mod dsp;
mod error;
pub mod io;
pub mod neuralnet;
pub mod qam;
pub mod special;
pub mod txsim;

pub use error::{Error, Result};

pub use num_complex::Complex64;
