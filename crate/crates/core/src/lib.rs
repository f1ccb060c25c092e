//! Sparse time-frequency reconstruction.
//!
//! A signal's Wigner-Ville distribution (WVD) and its ambiguity function (AF)
//! form a 2D Fourier pair. Auto-terms cluster around the AF origin while
//! cross-terms sit far from it, so a small centered block of AF samples is a
//! compressive measurement of a cross-term-free distribution. This crate
//! provides:
//!
//! - [`siggen`]: synthetic LFM/SFM mixtures, noise, ideal ground truth, datasets
//! - [`tfcore`]: discrete WVD and AF with a fixed unitary, centered convention
//! - [`measure`]: the masked 2D-DFT measurement operator (matrix-free + dense oracle)
//! - [`solver`]: ISTA/FISTA for the LASSO and the 13x13 `l1app` baseline
//! - [`threshnet`]: a small U-Net inference engine and the `.uwb` weight format
//! - [`uista`]: the K-layer unrolled ISTA with learned threshold maps
//! - [`eval`]: NMSE, the Monte-Carlo harness and grayscale rendering

pub mod error;
pub mod eval;
pub mod io;
pub mod measure;
pub mod siggen;
pub mod solver;
pub mod tfcore;
pub mod threshnet;
pub mod uista;

pub use error::{Error, Result};
pub use measure::{MaskSpec, MeasurementOp, SensingOperator};
pub use siggen::{BenchmarkCase, ComponentSpec, DiscreteSignal, MixtureSpec};
pub use tfcore::{AfMatrix, TfMatrix};

/// Complex sample type used throughout.
pub type C64 = num_complex::Complex64;
