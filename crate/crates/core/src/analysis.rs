//! Pairwise error probabilities and the ABEP union bound.
//!
//! Two conditional PEP branches exist for the joint detector:
//!
//! * correct beam (`l̂ = l`, `m̂ ≠ m`): `Q(√(ρ|h_l|²|s_m − s_m̂|²/2))`;
//! * wrong beam (`l̂ ≠ l`): `½·exp(−ρ|h_l̂|²|s_m̂|²/2)`.
//!
//! The wrong-beam form follows from comparing a central and a noncentral
//! chi-square variable with two degrees of freedom; the truncated series and
//! the direct quadrature over the noncentral density are kept as independent
//! routes to the same number.
//!
//! Channel averaging is over the order statistics of `L` i.i.d. `Exp(1)`
//! gains (the `|h|²` of `CN(0, 1)` paths), either by sampling or by
//! quadrature against the exact order-statistic density.

use std::collections::HashMap;
use std::f64::consts::SQRT_2;

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::channel::complex_gaussian;
use crate::error::{Error, Result};
use crate::numerics::{
    bessel_i0, integrate_semi_infinite, integrate_split, pairwise_sum, Tolerance,
};
use crate::streams::{derive_key, substream, Domain};
use crate::transceiver::{hamming_distance, Constellation, SsmLayout, SsmSymbol};

/// Union-bound values are clamped to this ceiling.
pub const ABEP_CEILING: f64 = 0.5;

const QUADRATURE_ABS_TOL: f64 = 1e-10;
const AVERAGING_REL_TOL: f64 = 1e-9;
const ENSEMBLE_CHUNK: usize = 4096;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Gaussian tail probability `Q(x) = ½·erfc(x/√2)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Arguments of a conditional PEP evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpepInputs {
    pub snr_linear: f64,
    pub gain_sq: f64,
    /// `|s_m − s_m̂|²` for the correct-beam branch, `|s_m̂|²` for the wrong one.
    pub symbol_term: f64,
}

impl CpepInputs {
    pub fn new(snr_linear: f64, gain_sq: f64, symbol_term: f64) -> Result<Self> {
        for (name, v) in [
            ("snr", snr_linear),
            ("|h|^2", gain_sq),
            ("symbol term", symbol_term),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(CpepInputs {
            snr_linear,
            gain_sq,
            symbol_term,
        })
    }

    fn product(&self) -> f64 {
        self.snr_linear * self.gain_sq * self.symbol_term
    }

    /// Noncentrality `τ = 2ρ|h|²|s|²` of the wrong-beam branch statistic.
    pub fn noncentrality(&self) -> f64 {
        2.0 * self.product()
    }
}

/// CPEP when the scatterer is detected correctly but the symbol is not.
pub fn cpep_correct_beam(inputs: &CpepInputs) -> f64 {
    q_function((0.5 * inputs.product()).sqrt())
}

/// CPEP when the detector settles on the wrong scatterer.
pub fn cpep_wrong_beam(inputs: &CpepInputs) -> f64 {
    0.5 * (-0.5 * inputs.product()).exp()
}

/// `½·e^{−τ/2}·Σ_{k<terms} (τ/4)^k / k!`, accumulated by term ratios.
pub fn cpep_wrong_beam_series(tau: f64, terms: usize) -> Result<f64> {
    if terms == 0 {
        return Err(Error::config("series needs at least one term"));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::config(format!(
            "noncentrality must be non-negative, got {tau}"
        )));
    }
    let ratio = 0.25 * tau;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..terms {
        term *= ratio / k as f64;
        sum += term;
    }
    Ok(0.5 * (-0.5 * tau).exp() * sum)
}

/// Density of a noncentral chi-square variable with two degrees of freedom
/// and noncentrality `tau`: `½·e^{−(x+τ)/2}·I₀(√(τx))`.
pub fn noncentral_chi2_density(x: f64, tau: f64) -> Result<f64> {
    if x < 0.0 {
        return Ok(0.0);
    }
    let z = (tau * x).sqrt();
    let log_envelope = -0.5 * (x + tau);
    // I₀(z) ≤ e^z, so the density is negligible once this bound underflows.
    if log_envelope + z < -745.0 {
        return Ok(0.0);
    }
    Ok(0.5 * log_envelope.exp() * bessel_i0(z)?)
}

/// Wrong-beam CPEP as `∫₀^∞ f₂(x)·e^{−x/2} dx` by adaptive quadrature
/// (absolute tolerance `1e-10`).
pub fn cpep_wrong_beam_quadrature(tau: f64) -> Result<f64> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::config(format!(
            "noncentrality must be non-negative, got {tau}"
        )));
    }
    let integrand = |x: f64| match noncentral_chi2_density(x, tau) {
        Ok(d) => d * (-0.5 * x).exp(),
        Err(_) => f64::NAN,
    };
    let result = integrate_semi_infinite(integrand, 0.0, Tolerance::absolute(QUADRATURE_ABS_TOL))?;
    Ok(result.value)
}

/// Density of the `rank`-th largest (0-based) of `l_total` i.i.d. `Exp(1)`.
pub fn order_statistic_density(x: f64, rank: usize, l_total: usize) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let below = l_total - rank - 1; // variables smaller than x
    let log_coeff =
        ln_gamma(l_total as f64 + 1.0) - ln_gamma(rank as f64 + 1.0) - ln_gamma(below as f64 + 1.0);
    let cdf = -(-x).exp_m1();
    let mut value = (log_coeff - x * (rank as f64 + 1.0)).exp();
    if below > 0 {
        value *= cdf.powi(below as i32);
    }
    value
}

/// `E[g(X)]` for `X` the `rank`-th largest of `l_total` `Exp(1)` variables.
///
/// `rate` is the decay rate of `g` near the origin and places extra
/// quadrature breakpoints at the scale where `g` changes.
pub fn expect_order_statistic<G: Fn(f64) -> f64>(
    g: G,
    rank: usize,
    l_total: usize,
    rate: f64,
) -> Result<f64> {
    if rank >= l_total {
        return Err(Error::Index {
            index: rank,
            len: l_total,
        });
    }
    let mut breakpoints = vec![0.1, 1.0, 5.0, 20.0, 60.0];
    if rate > 0.0 {
        breakpoints.extend((-1..=4).map(|k| 10f64.powi(k) / rate).filter(|&b| b < 60.0));
    }
    let integrand = |x: f64| {
        let d = order_statistic_density(x, rank, l_total);
        if d == 0.0 {
            0.0
        } else {
            g(x) * d
        }
    };
    Ok(integrate_split(
        integrand,
        0.0,
        &breakpoints,
        Tolerance::relative(AVERAGING_REL_TOL),
    )?
    .value)
}

/// Ordered `|h|²` samples: `draws` rows of the `l_s` strongest gains.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGains {
    l_s: usize,
    values: Vec<f64>,
}

impl SampledGains {
    /// Draws `draws` channels of `l_total` `CN(0, 1)` gains and keeps the
    /// `l_s` largest `|h|²` of each, strongest first.
    pub fn draw(l_total: usize, l_s: usize, draws: usize, seed: u64) -> Result<Self> {
        if l_s == 0 || l_s > l_total {
            return Err(Error::config(format!(
                "need 1 ≤ L_s ≤ L, got L_s={l_s}, L={l_total}"
            )));
        }
        let key = derive_key(
            seed,
            Domain::Ensemble,
            ((l_total as u64) << 32) | l_s as u64,
        );
        let chunks = draws.div_ceil(ENSEMBLE_CHUNK);
        let values: Vec<f64> = (0..chunks)
            .into_par_iter()
            .flat_map_iter(|chunk| {
                let mut rng = substream(key, chunk as u64);
                let count = ENSEMBLE_CHUNK.min(draws - chunk * ENSEMBLE_CHUNK);
                let mut out = Vec::with_capacity(count * l_s);
                let mut row = vec![0.0; l_total];
                for _ in 0..count {
                    row.iter_mut()
                        .for_each(|v| *v = complex_gaussian(&mut rng).norm_sqr());
                    row.sort_by(|a, b| b.total_cmp(a));
                    out.extend_from_slice(&row[..l_s]);
                }
                out
            })
            .collect();
        Ok(SampledGains { l_s, values })
    }

    /// Wraps caller-provided rows (not required to be ordered).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let l_s = rows.first().map_or(0, Vec::len);
        if l_s == 0 {
            return Err(Error::config("gain ensemble is empty"));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != l_s) {
            return Err(Error::Dimension {
                expected: l_s,
                found: bad.len(),
            });
        }
        Ok(SampledGains {
            l_s,
            values: rows.concat(),
        })
    }

    pub fn n_draws(&self) -> usize {
        self.values.len() / self.l_s
    }

    pub fn n_scatterers(&self) -> usize {
        self.l_s
    }

    pub fn column(&self, rank: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(rank).step_by(self.l_s).copied()
    }

    /// Ensemble mean of `g` applied to column `rank`.
    pub fn mean<G: Fn(f64) -> f64 + Sync>(&self, rank: usize, g: G) -> f64 {
        let mapped: Vec<f64> = self
            .values
            .par_iter()
            .skip(rank)
            .step_by(self.l_s)
            .map(|&x| g(x))
            .collect();
        pairwise_sum(&mapped) / mapped.len() as f64
    }
}

/// How `P̄_e` is averaged over the channel.
#[derive(Debug, Clone, PartialEq)]
pub enum GainAveraging {
    /// Monte Carlo mean over a sampled ensemble.
    Sampled(SampledGains),
    /// Quadrature against the exact order-statistic density of `l_total`
    /// `Exp(1)` gains.
    OrderStatistics { l_total: usize },
}

impl GainAveraging {
    fn check(&self, layout: &SsmLayout) -> Result<()> {
        let available = match self {
            GainAveraging::Sampled(s) => {
                if s.n_draws() == 0 {
                    return Err(Error::config("gain ensemble is empty"));
                }
                s.n_scatterers()
            }
            GainAveraging::OrderStatistics { l_total } => *l_total,
        };
        if layout.n_scatterers() > available {
            return Err(Error::config(format!(
                "averaging covers {available} scatterers, layout needs {}",
                layout.n_scatterers()
            )));
        }
        Ok(())
    }

    fn expect<G: Fn(f64) -> f64 + Sync>(&self, rank: usize, g: G, rate: f64) -> Result<f64> {
        match self {
            GainAveraging::Sampled(s) => Ok(s.mean(rank, g)),
            GainAveraging::OrderStatistics { l_total } => {
                expect_order_statistic(g, rank, *l_total, rate)
            }
        }
    }
}

/// Which CPEP branch governs the pair `(l, m) → (l̂, m̂)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairKind {
    CorrectBeam,
    WrongBeam,
}

pub fn pair_kind(sent: SsmSymbol, detected: SsmSymbol) -> Option<PairKind> {
    if sent == detected {
        None
    } else if sent.scatterer_rank == detected.scatterer_rank {
        Some(PairKind::CorrectBeam)
    } else {
        Some(PairKind::WrongBeam)
    }
}

/// Channel-averaged PEP for every ordered symbol pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PepMatrix {
    layout: SsmLayout,
    values: Vec<f64>,
}

impl PepMatrix {
    /// Builds a matrix from `f(sent, detected)`; the diagonal is forced to 0.
    pub fn from_fn<F: FnMut(SsmSymbol, SsmSymbol) -> f64>(layout: SsmLayout, mut f: F) -> Self {
        let n = layout.n_symbols();
        let mut values = vec![0.0; n * n];
        for a in layout.symbols() {
            for b in layout.symbols() {
                if a != b {
                    values[layout.to_word(a) * n + layout.to_word(b)] = f(a, b);
                }
            }
        }
        PepMatrix { layout, values }
    }

    pub fn layout(&self) -> &SsmLayout {
        &self.layout
    }

    pub fn get(&self, sent: SsmSymbol, detected: SsmSymbol) -> f64 {
        let n = self.layout.n_symbols();
        self.values[self.layout.to_word(sent) * n + self.layout.to_word(detected)]
    }
}

/// `P̄_e[l, m, l̂, m̂]` at SNR `snr_linear`.
///
/// Correct-beam entries average `Q(√(ρX_l|s_m − s_m̂|²/2))` over the gain of
/// the transmitted scatterer; wrong-beam entries average
/// `½·exp(−ρX_l̂|s_m̂|²/2)` over the gain of the detected one.
pub fn average_pep(
    layout: &SsmLayout,
    cons: &Constellation,
    snr_linear: f64,
    averaging: &GainAveraging,
) -> Result<PepMatrix> {
    if cons.order() != layout.order() {
        return Err(Error::Dimension {
            expected: layout.order(),
            found: cons.order(),
        });
    }
    if !(snr_linear.is_finite() && snr_linear >= 0.0) {
        return Err(Error::config(format!(
            "SNR must be non-negative, got {snr_linear}"
        )));
    }
    averaging.check(layout)?;

    let mut cache: HashMap<(PairKind, usize, u64), f64> = HashMap::new();
    let mut lookup = |kind: PairKind, rank: usize, term: f64| -> Result<f64> {
        let key = (kind, rank, term.to_bits());
        if let Some(&v) = cache.get(&key) {
            return Ok(v);
        }
        let v = match kind {
            PairKind::CorrectBeam => averaging.expect(
                rank,
                |x| {
                    cpep_correct_beam(&CpepInputs {
                        snr_linear,
                        gain_sq: x,
                        symbol_term: term,
                    })
                },
                snr_linear * term / 4.0,
            )?,
            PairKind::WrongBeam => averaging.expect(
                rank,
                |x| {
                    cpep_wrong_beam(&CpepInputs {
                        snr_linear,
                        gain_sq: x,
                        symbol_term: term,
                    })
                },
                snr_linear * term / 2.0,
            )?,
        };
        cache.insert(key, v);
        Ok(v)
    };

    let mut failure = None;
    let matrix = PepMatrix::from_fn(*layout, |a, b| {
        let (kind, rank, term) = match pair_kind(a, b) {
            Some(PairKind::CorrectBeam) => (
                PairKind::CorrectBeam,
                a.scatterer_rank,
                (cons.point(a.symbol_index) - cons.point(b.symbol_index)).norm_sqr(),
            ),
            Some(PairKind::WrongBeam) => (
                PairKind::WrongBeam,
                b.scatterer_rank,
                cons.point(b.symbol_index).norm_sqr(),
            ),
            None => unreachable!("diagonal skipped"),
        };
        lookup(kind, rank, term).unwrap_or_else(|e| {
            failure.get_or_insert(e);
            f64::NAN
        })
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(matrix),
    }
}

/// Hamming-weighted union bound on the average bit error probability,
/// clamped to `0.5`.
pub fn abep_union_bound(pep: &PepMatrix) -> f64 {
    let layout = pep.layout();
    let n = layout.n_symbols();
    let mut sum = 0.0;
    for a in layout.symbols() {
        for b in layout.symbols() {
            if a != b {
                sum += pep.get(a, b) * hamming_distance(layout, a, b) as f64;
            }
        }
    }
    let norm = n as f64 * (n as f64).log2();
    (sum / norm).min(ABEP_CEILING)
}

/// Analytical ABEP bound over an SNR grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AbepCurve {
    pub snr_grid_db: Vec<f64>,
    pub abep: Vec<f64>,
}

impl AbepCurve {
    pub fn new(snr_grid_db: Vec<f64>, abep: Vec<f64>) -> Result<Self> {
        if snr_grid_db.len() != abep.len() {
            return Err(Error::Dimension {
                expected: snr_grid_db.len(),
                found: abep.len(),
            });
        }
        if let Some(p) = abep.iter().find(|p| !(0.0..=ABEP_CEILING).contains(*p)) {
            return Err(Error::Numeric(format!("ABEP value {p} outside [0, 0.5]")));
        }
        Ok(AbepCurve { snr_grid_db, abep })
    }

    pub fn len(&self) -> usize {
        self.abep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abep.is_empty()
    }

    /// True when the bound never increases along an ascending SNR grid
    /// (up to `rel_slack` relative quadrature noise).
    pub fn is_non_increasing(&self, rel_slack: f64) -> bool {
        self.snr_grid_db
            .windows(2)
            .zip(self.abep.windows(2))
            .all(|(s, p)| s[1] < s[0] || p[1] <= p[0] * (1.0 + rel_slack))
    }
}

/// ABEP bound at one SNR (in dB).
pub fn abep_at(
    layout: &SsmLayout,
    cons: &Constellation,
    snr_db: f64,
    averaging: &GainAveraging,
) -> Result<f64> {
    Ok(abep_union_bound(&average_pep(
        layout,
        cons,
        db_to_linear(snr_db),
        averaging,
    )?))
}

/// ABEP bound at every grid point.
pub fn abep_curve(
    layout: &SsmLayout,
    cons: &Constellation,
    snr_grid_db: &[f64],
    averaging: &GainAveraging,
) -> Result<AbepCurve> {
    let abep = snr_grid_db
        .par_iter()
        .map(|&db| abep_at(layout, cons, db, averaging))
        .collect::<Result<Vec<_>>>()?;
    AbepCurve::new(snr_grid_db.to_vec(), abep)
}

/// SNR (dB) at which the bound crosses `target`, by bisection on
/// `log(ABEP)` inside `[lo_db, hi_db]`.
pub fn snr_for_abep(
    layout: &SsmLayout,
    cons: &Constellation,
    averaging: &GainAveraging,
    target: f64,
    lo_db: f64,
    hi_db: f64,
) -> Result<f64> {
    if !(target > 0.0 && target < ABEP_CEILING) {
        return Err(Error::config(format!(
            "target ABEP must lie in (0, 0.5), got {target}"
        )));
    }
    let f = |db: f64| abep_at(layout, cons, db, averaging).map(|p| p.ln() - target.ln());
    let (mut lo, mut hi) = (lo_db, hi_db);
    let (f_lo, f_hi) = (f(lo)?, f(hi)?);
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::Numeric(format!(
            "ABEP {target:e} not bracketed by [{lo_db}, {hi_db}] dB"
        )));
    }
    while hi - lo > 1e-4 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
