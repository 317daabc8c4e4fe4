//! OFDM integrated sensing and communication toolkit.
//!
//! The crate covers the full sensing chain of a multi-user MIMO-OFDM base
//! station: exact synthesis of the ICI-bearing received matrix, Doppler
//! correction filtering and FFT range-velocity imaging, transmit and receive
//! beamforming, CA-CFAR detection with scoring metrics, and GLRT-based
//! sub-cell refinement seeded either by a full grid search or by an external
//! confidence map.

pub mod channel;
pub mod detect;
pub mod dft;
pub mod error;
pub mod glrt;
pub mod io;
pub mod params;
pub mod radar;
pub mod rx;
pub mod sim;
pub mod tx;
pub mod waveform;

pub use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;

/// Complex column vector.
pub type CVec = DVector<Complex64>;
/// Complex matrix; column-major, so each slow-time column is contiguous.
pub type CMat = DMatrix<Complex64>;
/// Real matrix used for magnitude and confidence grids.
pub type RMat = DMatrix<f64>;

pub use error::{Error, Result};
