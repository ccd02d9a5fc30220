//! Link-level simulation and union-bound analysis of spatial scattering
//! modulation (SSM) through a reconfigurable intelligent surface (RIS) in a
//! mmWave MIMO link.
//!
//! The transmitter reaches the RIS over a single line-of-sight path; the RIS
//! reaches the receiver over `L` Saleh-Valenzuela scatterers. Each symbol
//! carries `log2(L_s)` bits in the choice of scatterer the RIS steers toward
//! and `log2(M)` bits in an M-PSK symbol.
//!
//! Module map:
//!
//! * [`array_geometry`] - ULA/UPA steering vectors and their inner products.
//! * [`channel`] - channel sampling, RIS phase alignment, composite channel.
//! * [`transceiver`] - bit mapping, both signal fidelities, joint ML detection.
//! * [`analysis`] - pairwise error probabilities and the ABEP union bound.
//! * [`montecarlo`] - reproducible BER campaigns and bound comparison.
//! * [`cli`] - configuration files, CSV/manifest output, batch modes.

pub mod analysis;
pub mod array_geometry;
pub mod channel;
pub mod cli;
pub mod error;
pub mod montecarlo;
pub mod numerics;
pub mod streams;
pub mod transceiver;

pub use error::{Error, Result};
pub use num_complex::Complex64;
