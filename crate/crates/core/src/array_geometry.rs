//! Array responses for the uniform linear arrays at the transmitter and
//! receiver and the uniform planar array that forms the RIS.
//!
//! All steering vectors are normalized to unit Euclidean norm, so inner
//! products between them are Dirichlet-kernel values in `[0, 1]` magnitude.
//! Beams toward scatterers whose spatial frequencies differ by a multiple of
//! `1/N` are exactly orthogonal; for other gaps the inner product decays like
//! `1/N`.

use std::f64::consts::{PI, TAU};

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaps below this are treated as coincident beams by the closed form.
const DEGENERATE_GAP: f64 = 1e-12;

/// An angle in radians, canonically wrapped into `[-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    /// Wraps `radians` into `[-π, π]`. Values already inside the interval,
    /// including both endpoints, are kept bit-exact.
    pub fn new(radians: f64) -> Result<Self> {
        if !radians.is_finite() {
            return Err(Error::config(format!(
                "angle must be finite, got {radians}"
            )));
        }
        if (-PI..=PI).contains(&radians) {
            return Ok(Angle(radians));
        }
        let wrapped = (radians + PI).rem_euclid(TAU) - PI;
        Ok(Angle(wrapped.clamp(-PI, PI)))
    }

    pub fn radians(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Angle {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Angle::new(value)
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> f64 {
        a.0
    }
}

/// Uniform linear array with `n_elements` antennas spaced `spacing` wavelengths apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UlaGeometry {
    n_elements: usize,
    spacing: f64,
}

impl UlaGeometry {
    pub fn new(n_elements: usize, spacing_over_wavelength: f64) -> Result<Self> {
        if n_elements == 0 {
            return Err(Error::config("ULA needs at least one element"));
        }
        if !(spacing_over_wavelength.is_finite() && spacing_over_wavelength > 0.0) {
            return Err(Error::config(format!(
                "ULA spacing must be positive, got {spacing_over_wavelength}"
            )));
        }
        Ok(UlaGeometry {
            n_elements,
            spacing: spacing_over_wavelength,
        })
    }

    /// Half-wavelength array, the configuration used throughout the simulations.
    pub fn half_wavelength(n_elements: usize) -> Result<Self> {
        Self::new(n_elements, 0.5)
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn spacing_over_wavelength(&self) -> f64 {
        self.spacing
    }

    /// Normalized spatial frequency `(δ/λ)·sin θ` of a plane wave at `theta`.
    pub fn spatial_frequency(&self, theta: Angle) -> f64 {
        self.spacing * theta.radians().sin()
    }
}

/// Uniform planar array of `n_rows × n_cols` elements (the RIS).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpaGeometry {
    n_rows: usize,
    n_cols: usize,
    spacing: f64,
}

impl UpaGeometry {
    pub fn new(n_rows: usize, n_cols: usize, spacing_over_wavelength: f64) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::config(format!(
                "UPA needs at least one row and column, got {n_rows}x{n_cols}"
            )));
        }
        if !(spacing_over_wavelength.is_finite() && spacing_over_wavelength > 0.0) {
            return Err(Error::config(format!(
                "UPA spacing must be positive, got {spacing_over_wavelength}"
            )));
        }
        Ok(UpaGeometry {
            n_rows,
            n_cols,
            spacing: spacing_over_wavelength,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn spacing_over_wavelength(&self) -> f64 {
        self.spacing
    }

    /// Total number of elements `N = N_h · N_v`.
    pub fn n_elements(&self) -> usize {
        self.n_rows * self.n_cols
    }
}

/// Unit-norm complex array response.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(DVector<Complex64>);

impl SteeringVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<Complex64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<Complex64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// ULA response: entry `k` is `exp(-j·2π·(δ/λ)·k·sin θ) / √N`.
pub fn ula_steering(geom: &UlaGeometry, theta: Angle) -> SteeringVector {
    let n = geom.n_elements;
    let scale = 1.0 / (n as f64).sqrt();
    let phase_step = -TAU * geom.spatial_frequency(theta);
    SteeringVector(DVector::from_iterator(
        n,
        (0..n).map(|k| Complex64::from_polar(scale, phase_step * k as f64)),
    ))
}

/// UPA response at (`elevation`, `azimuth`).
///
/// Element `(n_h, n_v)` sits at flat index `n_h·N_v + n_v` and carries
/// `exp(-j·2π·(δ/λ)·(n_h·sin φ·cos ϕ + n_v·cos φ)) / √N`.
pub fn upa_steering(geom: &UpaGeometry, elevation: Angle, azimuth: Angle) -> SteeringVector {
    let n = geom.n_elements();
    let scale = 1.0 / (n as f64).sqrt();
    let (el, az) = (elevation.radians(), azimuth.radians());
    let row_freq = geom.spacing * el.sin() * az.cos();
    let col_freq = geom.spacing * el.cos();
    let entries = (0..geom.n_rows).flat_map(|nh| {
        (0..geom.n_cols).map(move |nv| {
            let phase = -TAU * (nh as f64 * row_freq + nv as f64 * col_freq);
            Complex64::from_polar(scale, phase)
        })
    });
    SteeringVector(DVector::from_iterator(n, entries))
}

/// Conjugate inner product `aᴴ·b`.
pub fn steering_inner_product(a: &SteeringVector, b: &SteeringVector) -> Result<Complex64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(a.0.dotc(&b.0))
}

/// Dirichlet-kernel form of `a(θ1)ᴴ·a(θ2)` for a ULA.
///
/// With `Δ = (δ/λ)(sin θ2 − sin θ1)` this is
/// `sin(πΔN) / (N sin(πΔ)) · exp(−jπΔ(N−1))`, and exactly `1` when the two
/// spatial frequencies coincide. The phase factor carries a minus sign
/// because the steering vectors use `exp(−j·2π·φ·k)` entries.
pub fn ula_inner_closed_form(geom: &UlaGeometry, theta1: Angle, theta2: Angle) -> Complex64 {
    let gap = geom.spatial_frequency(theta2) - geom.spatial_frequency(theta1);
    dirichlet_inner(geom.n_elements, gap)
}

/// Closed-form ULA inner product as a function of the spatial-frequency gap.
pub fn dirichlet_inner(n_elements: usize, gap: f64) -> Complex64 {
    if gap.abs() < DEGENERATE_GAP {
        return Complex64::new(1.0, 0.0);
    }
    let n = n_elements as f64;
    let x = PI * gap;
    let denom = x.sin();
    if denom.abs() < DEGENERATE_GAP {
        // Integer gap: every element is in phase again.
        return Complex64::new(1.0, 0.0);
    }
    let magnitude = (x * n).sin() / (n * denom);
    Complex64::from_polar(1.0, -x * (n - 1.0)) * magnitude
}

/// Circular distance between two spatial frequencies (period 1).
pub fn spatial_frequency_gap(f1: f64, f2: f64) -> f64 {
    let d = f2 - f1;
    (d - d.round()).abs()
}
