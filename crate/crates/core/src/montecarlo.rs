//! BER simulation campaigns and their comparison with the union bound.
//!
//! Work is split into fixed chunks of channel draws. Draw `d` at SNR `s`
//! always uses substream `d` under a key derived from the root seed and the
//! bit pattern of `s`, and chunk results are folded in chunk order, so a
//! campaign gives identical counts on any number of threads.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{abep_curve, db_to_linear, AbepCurve, GainAveraging, SampledGains};
use crate::array_geometry::{UlaGeometry, UpaGeometry};
use crate::channel::{
    complex_gaussian, received_responses, sample_channel, select_scatterers, ChannelRealization,
    LinkGeometry,
};
use crate::error::{Error, Result};
use crate::streams::{derive_key, substream, Domain};
use crate::transceiver::{
    build_psk, hamming_distance, ml_detect, transmit_beamspace, BeamspaceObservation,
    Constellation, SsmLayout, SsmSymbol,
};
use crate::Complex64;

/// Draws per parallel work unit.
pub const CHUNK_DRAWS: usize = 64;
/// Chunks dispatched together between early-stop checks.
const CHUNKS_PER_ROUND: usize = 16;
/// Fraction of the spatial-frequency circle the default separation may fill.
const MAX_DEFAULT_OCCUPANCY: f64 = 0.75;
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    /// Per-branch `CN(0, 1)` noise on exactly orthogonal beams.
    #[default]
    Beamspace,
    /// Antenna-level signal through `H = FΨB`, then the combiner bank.
    Physical,
}

impl std::str::FromStr for Fidelity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beamspace" => Ok(Fidelity::Beamspace),
            "physical" => Ok(Fidelity::Physical),
            other => Err(Error::config(format!("unknown fidelity '{other}'"))),
        }
    }
}

/// How the analytical bound paired with a campaign averages over gains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Exact order-statistic density, integrated numerically.
    #[default]
    Quadrature,
    /// Mean over `ensemble_draws` sampled ordered gains.
    Sampled,
}

fn default_antennas() -> usize {
    32
}
fn default_ris_side() -> usize {
    64
}
fn default_spacing() -> f64 {
    0.5
}
fn default_channel_draws() -> usize {
    10_000
}
fn default_symbols_per_draw() -> usize {
    100
}
fn default_target_errors() -> u64 {
    500
}
fn default_ensemble_draws() -> usize {
    100_000
}

/// A simulation campaign. Serialized with the short keys used in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "L")]
    pub l_total: usize,
    #[serde(rename = "L_s")]
    pub l_selected: usize,
    #[serde(rename = "M")]
    pub mod_order: usize,
    #[serde(rename = "snr_db")]
    pub snr_grid_db: Vec<f64>,
    #[serde(default = "default_antennas")]
    pub n_t: usize,
    #[serde(default = "default_antennas")]
    pub n_r: usize,
    #[serde(default = "default_ris_side")]
    pub n_h: usize,
    #[serde(default = "default_ris_side")]
    pub n_v: usize,
    /// Element spacing over wavelength, shared by all arrays.
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default = "default_channel_draws")]
    pub channel_draws: usize,
    #[serde(default = "default_symbols_per_draw")]
    pub symbols_per_draw: usize,
    #[serde(default)]
    pub fidelity: Fidelity,
    #[serde(default)]
    pub seed: u64,
    /// Minimum receive spatial-frequency gap between paths. Defaults to
    /// `2/n_r`, capped at `0.75/L` so rejection sampling stays feasible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_separation: Option<f64>,
    /// Stop a point once this many bit errors are counted; 0 runs every draw.
    #[serde(default = "default_target_errors")]
    pub target_errors: u64,
    #[serde(default)]
    pub averaging: Averaging,
    #[serde(default = "default_ensemble_draws")]
    pub ensemble_draws: usize,
    #[serde(default)]
    pub noiseless: bool,
}

impl SimConfig {
    /// A config with every optional field at its default.
    pub fn new(l_total: usize, l_selected: usize, mod_order: usize, snr_grid_db: Vec<f64>) -> Self {
        SimConfig {
            l_total,
            l_selected,
            mod_order,
            snr_grid_db,
            n_t: default_antennas(),
            n_r: default_antennas(),
            n_h: default_ris_side(),
            n_v: default_ris_side(),
            spacing: default_spacing(),
            channel_draws: default_channel_draws(),
            symbols_per_draw: default_symbols_per_draw(),
            fidelity: Fidelity::default(),
            seed: 0,
            min_separation: None,
            target_errors: default_target_errors(),
            averaging: Averaging::default(),
            ensemble_draws: default_ensemble_draws(),
            noiseless: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pow2 = |name: &str, v: usize, min: usize| {
            if v < min || !v.is_power_of_two() {
                Err(Error::config(format!(
                    "{name} must be a power of two ≥ {min}, got {v}"
                )))
            } else {
                Ok(())
            }
        };
        pow2("L_s", self.l_selected, 1)?;
        pow2("M", self.mod_order, 2)?;
        if self.l_selected > self.l_total {
            return Err(Error::config(format!(
                "L_s={} exceeds L={}",
                self.l_selected, self.l_total
            )));
        }
        for (name, v) in [
            ("n_t", self.n_t),
            ("n_r", self.n_r),
            ("n_h", self.n_h),
            ("n_v", self.n_v),
            ("channel_draws", self.channel_draws),
            ("symbols_per_draw", self.symbols_per_draw),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.averaging == Averaging::Sampled && self.ensemble_draws == 0 {
            return Err(Error::config("ensemble_draws must be positive"));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::config("snr_db grid is empty"));
        }
        if let Some(s) = self.snr_grid_db.iter().find(|s| !s.is_finite()) {
            return Err(Error::config(format!(
                "snr_db values must be finite, got {s}"
            )));
        }
        let sep = self.separation();
        if !(sep.is_finite() && sep >= 0.0) {
            return Err(Error::config(format!(
                "min_separation must be non-negative, got {sep}"
            )));
        }
        if self.l_total > 1 && sep * self.l_total as f64 > 1.0 {
            return Err(Error::config(format!(
                "L={} paths cannot be separated by {sep} in spatial frequency",
                self.l_total
            )));
        }
        self.geometry()?;
        Ok(())
    }

    pub fn separation(&self) -> f64 {
        self.min_separation.unwrap_or_else(|| {
            (2.0 / self.n_r as f64).min(MAX_DEFAULT_OCCUPANCY / self.l_total as f64)
        })
    }

    pub fn geometry(&self) -> Result<LinkGeometry> {
        Ok(LinkGeometry {
            tx: UlaGeometry::new(self.n_t, self.spacing)?,
            rx: UlaGeometry::new(self.n_r, self.spacing)?,
            ris: UpaGeometry::new(self.n_h, self.n_v, self.spacing)?,
        })
    }

    pub fn layout(&self) -> Result<SsmLayout> {
        SsmLayout::new(self.l_selected, self.mod_order)
    }

    /// The gain averaging used for the paired bound.
    pub fn gain_averaging(&self) -> Result<GainAveraging> {
        Ok(match self.averaging {
            Averaging::Quadrature => GainAveraging::OrderStatistics {
                l_total: self.l_total,
            },
            Averaging::Sampled => GainAveraging::Sampled(SampledGains::draw(
                self.l_total,
                self.l_selected,
                self.ensemble_draws,
                self.seed,
            )?),
        })
    }
}

/// Bit error counts at one SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerEstimate {
    pub snr_db: f64,
    pub bit_errors: u64,
    pub bits_sent: u64,
    pub draws: u64,
    pub point: f64,
    pub ci95_half_width: f64,
}

impl BerEstimate {
    fn from_counts(snr_db: f64, bit_errors: u64, bits_sent: u64, draws: u64) -> Result<Self> {
        if bits_sent == 0 {
            return Err(Error::config("no bits were simulated"));
        }
        Ok(BerEstimate {
            snr_db,
            bit_errors,
            bits_sent,
            draws,
            point: bit_errors as f64 / bits_sent as f64,
            ci95_half_width: wilson_interval(bit_errors, bits_sent),
        })
    }

    /// One binomial standard deviation, derived from the Wilson half width.
    pub fn sigma(&self) -> f64 {
        self.ci95_half_width / Z95
    }
}

/// Half width of the 95% Wilson score interval.
///
/// # Panics
///
/// If `trials` is zero.
pub fn wilson_interval(errors: u64, trials: u64) -> f64 {
    let (lo, hi) = wilson_bounds(errors, trials);
    0.5 * (hi - lo)
}

/// Both edges of the 95% Wilson score interval.
pub fn wilson_bounds(errors: u64, trials: u64) -> (f64, f64) {
    assert!(trials > 0, "Wilson interval needs at least one trial");
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Received-signal generator for one channel draw in the physical fidelity.
///
/// The RIS profile only depends on the targeted scatterer, so the noiseless
/// response `H·a_t` is computed once per rank instead of once per slot.
struct PhysicalLink {
    responses: Vec<DVector<Complex64>>,
    combiners: Vec<DVector<Complex64>>,
}

impl PhysicalLink {
    fn new(ch: &ChannelRealization, selected: &[usize]) -> Result<Self> {
        let responses = received_responses(ch, selected)?;
        let combiners = selected
            .iter()
            .map(|&l| Ok(ch.rx_steering(l)?.into_vector()))
            .collect::<Result<_>>()?;
        Ok(PhysicalLink {
            responses,
            combiners,
        })
    }

    fn observe<R: Rng + ?Sized>(
        &self,
        sym: SsmSymbol,
        cons: &Constellation,
        snr_linear: f64,
        rng: Option<&mut R>,
    ) -> BeamspaceObservation {
        let mut y = &self.responses[sym.scatterer_rank]
            * (cons.point(sym.symbol_index) * snr_linear.sqrt());
        if let Some(rng) = rng {
            y.iter_mut().for_each(|v| *v += complex_gaussian(rng));
        }
        BeamspaceObservation {
            branches: self.combiners.iter().map(|a| a.dotc(&y)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    errors: u64,
    bits: u64,
    draws: u64,
}

impl Tally {
    fn add(&mut self, other: Tally) {
        self.errors += other.errors;
        self.bits += other.bits;
        self.draws += other.draws;
    }
}

struct PointContext<'a> {
    cfg: &'a SimConfig,
    geometry: LinkGeometry,
    layout: SsmLayout,
    cons: Constellation,
    snr_linear: f64,
    key: u64,
}

impl PointContext<'_> {
    fn run_draw(&self, draw: u64) -> Result<Tally> {
        let mut rng = substream(self.key, draw);
        let ch = sample_channel(
            self.cfg.l_total,
            &self.geometry,
            self.cfg.separation(),
            &mut rng,
        )?;
        let selected = select_scatterers(&ch, self.layout.n_scatterers())?;
        let all_gains = ch.gains();
        let gains: Vec<Complex64> = selected.iter().map(|&l| all_gains[l]).collect();
        let physical = match self.cfg.fidelity {
            Fidelity::Physical => Some(PhysicalLink::new(&ch, &selected)?),
            Fidelity::Beamspace => None,
        };
        let mut tally = Tally {
            draws: 1,
            ..Tally::default()
        };
        for _ in 0..self.cfg.symbols_per_draw {
            let sent = self
                .layout
                .from_word(rng.random_range(0..self.layout.n_symbols()));
            let noise = if self.cfg.noiseless {
                None
            } else {
                Some(&mut rng)
            };
            let obs = match &physical {
                Some(link) => link.observe(sent, &self.cons, self.snr_linear, noise),
                None => {
                    transmit_beamspace(&ch, &selected, sent, &self.cons, self.snr_linear, noise)?
                }
            };
            let detected = ml_detect(&obs, &gains, &self.cons, self.snr_linear);
            tally.errors += u64::from(hamming_distance(&self.layout, sent, detected));
            tally.bits += self.layout.bits_per_symbol() as u64;
        }
        Ok(tally)
    }

    fn run_chunk(&self, chunk: usize) -> Result<Tally> {
        let start = chunk * CHUNK_DRAWS;
        let end = (start + CHUNK_DRAWS).min(self.cfg.channel_draws);
        let mut total = Tally::default();
        for draw in start..end {
            total.add(self.run_draw(draw as u64)?);
        }
        Ok(total)
    }
}

/// Simulated BER at one SNR (dB; `-inf` means `ρ = 0`).
pub fn run_point(cfg: &SimConfig, snr_db: f64) -> Result<BerEstimate> {
    cfg.validate()?;
    let layout = cfg.layout()?;
    let ctx = PointContext {
        cfg,
        geometry: cfg.geometry()?,
        layout,
        cons: build_psk(cfg.mod_order)?,
        snr_linear: db_to_linear(snr_db),
        key: derive_key(cfg.seed, Domain::Link, snr_db.to_bits()),
    };
    let n_chunks = cfg.channel_draws.div_ceil(CHUNK_DRAWS);
    let mut total = Tally::default();
    let mut next = 0;
    'rounds: while next < n_chunks {
        let end = (next + CHUNKS_PER_ROUND).min(n_chunks);
        let tallies = (next..end)
            .into_par_iter()
            .map(|c| ctx.run_chunk(c))
            .collect::<Result<Vec<_>>>()?;
        for t in tallies {
            total.add(t);
            if cfg.target_errors > 0 && total.errors >= cfg.target_errors {
                break 'rounds;
            }
        }
        next = end;
    }
    BerEstimate::from_counts(snr_db, total.errors, total.bits, total.draws)
}

/// Simulation estimates with the matching analytical bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub estimates: Vec<BerEstimate>,
    pub bound: AbepCurve,
}

/// The analytical bound over the configured grid.
pub fn bound_curve(cfg: &SimConfig) -> Result<AbepCurve> {
    cfg.validate()?;
    abep_curve(
        &cfg.layout()?,
        &build_psk(cfg.mod_order)?,
        &cfg.snr_grid_db,
        &cfg.gain_averaging()?,
    )
}

pub fn run_sweep(cfg: &SimConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let estimates = cfg
        .snr_grid_db
        .iter()
        .map(|&s| run_point(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        estimates,
        bound: bound_curve(cfg)?,
    })
}

/// Dominance check at one SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointCheck {
    pub snr_db: f64,
    pub bound: f64,
    pub simulated: f64,
    pub sigma: f64,
    /// `simulated ≤ bound + 3σ`.
    pub dominated: bool,
    /// `bound / simulated`; absent when no errors were seen.
    pub tightness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub points: Vec<PointCheck>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn violations(&self) -> impl Iterator<Item = &PointCheck> {
        self.points.iter().filter(|p| !p.dominated)
    }
}

pub fn compare_with_bound(sim: &[BerEstimate], bound: &AbepCurve) -> Result<ValidationReport> {
    if sim.len() != bound.len() {
        return Err(Error::Dimension {
            expected: bound.len(),
            found: sim.len(),
        });
    }
    let mut points = Vec::with_capacity(sim.len());
    for ((est, &snr), &b) in sim.iter().zip(&bound.snr_grid_db).zip(&bound.abep) {
        if est.snr_db.to_bits() != snr.to_bits() {
            return Err(Error::config(format!(
                "SNR grids differ: simulated {} dB vs bound {snr} dB",
                est.snr_db
            )));
        }
        let sigma = est.sigma();
        points.push(PointCheck {
            snr_db: snr,
            bound: b,
            simulated: est.point,
            sigma,
            dominated: est.point <= b + 3.0 * sigma,
            tightness: (est.point > 0.0).then(|| b / est.point),
        });
    }
    let passed = points.iter().all(|p| p.dominated);
    Ok(ValidationReport { points, passed })
}
