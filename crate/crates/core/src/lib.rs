//! Compressive channel estimation for few-bit ADC hybrid MIMO receivers.
//!
//! The crate is organised around the receive chain:
//!
//! * [`channel`] draws sparse multipath channels and scores estimates (RSNR).
//! * [`pilot`] builds ±1/√M training sequences, their Toeplitz / block-diagonal /
//!   real-stacked measurement matrices, and probes restricted isometry constants.
//! * [`adc`] holds the Walden power model, the power-budget solver and the
//!   Lloyd–Max Gaussian quantizer.
//! * [`estimator`] runs binary iterative hard thresholding (BIHT) for support
//!   detection followed by least squares on the detected support, plus the
//!   oracle and plain least-squares baselines.
//! * [`bounds`] evaluates the oracle-assisted RSNR upper bound and the
//!   unquantized MSE band.
//! * [`harness`] drives seeded Monte Carlo sweeps and writes CSV output.

pub mod adc;
pub mod bounds;
pub mod channel;
pub mod error;
pub mod estimator;
pub mod harness;
mod linalg;
pub mod pilot;
pub mod rng;

pub use error::{Error, Result};
pub use nalgebra::Complex;

/// Complex sample type used throughout.
pub type C64 = Complex<f64>;
