//! Tx–RIS–Rx channel model.
//!
//! The transmitter sees the RIS over one line-of-sight path, `B = a_ris·a_tᴴ`.
//! The RIS sees the receiver through `L` scatterers,
//! `F = Σ h_l·a_r(θ_l)·a_risᴴ(φ_l, ϕ_l)`. The RIS applies the diagonal phase
//! matrix `Ψ` between them and the composite channel is `H = F·Ψ·B`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::array_geometry::{
    spatial_frequency_gap, ula_steering, upa_steering, Angle, SteeringVector, UlaGeometry,
    UpaGeometry,
};
use crate::error::{Error, Result};

const MAX_ATTEMPTS_PER_PATH: usize = 1_000;
const MAX_RESTARTS: usize = 100;

/// Array geometries at the three nodes of the link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub tx: UlaGeometry,
    pub rx: UlaGeometry,
    pub ris: UpaGeometry,
}

/// One RIS–Rx scatterer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub gain: Complex64,
    pub aod_elevation: Angle,
    pub aod_azimuth: Angle,
    pub aoa_rx: Angle,
}

/// A complete draw of the link: LoS angles, scatterers and array geometries.
///
/// Paths are always stored by descending `|gain|`, so the rank of a path is
/// its index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RealizationRecord")]
pub struct ChannelRealization {
    tx_aod: Angle,
    ris_aoa_elevation: Angle,
    ris_aoa_azimuth: Angle,
    paths: Vec<PathParams>,
    geometry: LinkGeometry,
}

#[derive(Deserialize)]
struct RealizationRecord {
    tx_aod: Angle,
    ris_aoa_elevation: Angle,
    ris_aoa_azimuth: Angle,
    paths: Vec<PathParams>,
    geometry: LinkGeometry,
}

impl TryFrom<RealizationRecord> for ChannelRealization {
    type Error = Error;

    fn try_from(r: RealizationRecord) -> Result<Self> {
        ChannelRealization::new(
            r.tx_aod,
            r.ris_aoa_elevation,
            r.ris_aoa_azimuth,
            r.paths,
            r.geometry,
        )
    }
}

impl ChannelRealization {
    /// Builds a realization, sorting `paths` by descending gain magnitude.
    pub fn new(
        tx_aod: Angle,
        ris_aoa_elevation: Angle,
        ris_aoa_azimuth: Angle,
        mut paths: Vec<PathParams>,
        geometry: LinkGeometry,
    ) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::config("a channel needs at least one path"));
        }
        if let Some(p) = paths
            .iter()
            .find(|p| !(p.gain.re.is_finite() && p.gain.im.is_finite()))
        {
            return Err(Error::config(format!(
                "path gain must be finite, got {}",
                p.gain
            )));
        }
        // Stable, so equal magnitudes keep their input order.
        paths.sort_by(|a, b| b.gain.norm().total_cmp(&a.gain.norm()));
        Ok(ChannelRealization {
            tx_aod,
            ris_aoa_elevation,
            ris_aoa_azimuth,
            paths,
            geometry,
        })
    }

    pub fn tx_aod(&self) -> Angle {
        self.tx_aod
    }

    pub fn ris_aoa(&self) -> (Angle, Angle) {
        (self.ris_aoa_elevation, self.ris_aoa_azimuth)
    }

    pub fn paths(&self) -> &[PathParams] {
        &self.paths
    }

    pub fn geometry(&self) -> &LinkGeometry {
        &self.geometry
    }

    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn gains(&self) -> Vec<Complex64> {
        self.paths.iter().map(|p| p.gain).collect()
    }

    fn path(&self, index: usize) -> Result<&PathParams> {
        self.paths.get(index).ok_or(Error::Index {
            index,
            len: self.paths.len(),
        })
    }

    pub fn tx_steering(&self) -> SteeringVector {
        ula_steering(&self.geometry.tx, self.tx_aod)
    }

    /// RIS response toward the transmitter (the LoS arrival direction).
    pub fn ris_los_steering(&self) -> SteeringVector {
        upa_steering(
            &self.geometry.ris,
            self.ris_aoa_elevation,
            self.ris_aoa_azimuth,
        )
    }

    /// RIS response toward scatterer `index`.
    pub fn ris_path_steering(&self, index: usize) -> Result<SteeringVector> {
        let p = self.path(index)?;
        Ok(upa_steering(
            &self.geometry.ris,
            p.aod_elevation,
            p.aod_azimuth,
        ))
    }

    /// Receive-array response from scatterer `index`.
    pub fn rx_steering(&self, index: usize) -> Result<SteeringVector> {
        let p = self.path(index)?;
        Ok(ula_steering(&self.geometry.rx, p.aoa_rx))
    }

    /// Receive spatial frequency of every path, in rank order.
    pub fn rx_spatial_frequencies(&self) -> Vec<f64> {
        self.paths
            .iter()
            .map(|p| self.geometry.rx.spatial_frequency(p.aoa_rx))
            .collect()
    }
}

/// Per-element RIS phases `ψ_n`; the reflection coefficients are `e^{jψ_n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisPhaseProfile {
    phases: Vec<f64>,
}

impl RisPhaseProfile {
    pub fn new(phases: Vec<f64>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::config("RIS phase profile cannot be empty"));
        }
        if let Some(p) = phases.iter().find(|p| !p.is_finite()) {
            return Err(Error::config(format!("RIS phase must be finite, got {p}")));
        }
        Ok(RisPhaseProfile { phases })
    }

    /// All-zero phases: the RIS acts as a plain mirror.
    pub fn zeros(n: usize) -> Self {
        RisPhaseProfile {
            phases: vec![0.0; n],
        }
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn coefficients(&self) -> DVector<Complex64> {
        DVector::from_iterator(
            self.phases.len(),
            self.phases.iter().map(|&p| Complex64::from_polar(1.0, p)),
        )
    }

    pub fn reflection_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_diagonal(&self.coefficients())
    }
}

/// One draw of `CN(0, 1)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * FRAC_1_SQRT_2
}

fn uniform_angle<R: Rng + ?Sized>(rng: &mut R) -> Angle {
    Angle::new(rng.random_range(-PI..=PI)).expect("finite by construction")
}

/// Draws a realization with `l_total` scatterers.
///
/// Gains are i.i.d. `CN(0, 1)`, every angle is uniform on `[-π, π]`, and the
/// receive spatial frequencies of distinct paths are kept at least
/// `min_separation` apart (circular distance, period one) by rejection.
pub fn sample_channel<R: Rng + ?Sized>(
    l_total: usize,
    geometry: &LinkGeometry,
    min_separation: f64,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if l_total == 0 {
        return Err(Error::config("l_total must be at least 1"));
    }
    if !(min_separation.is_finite() && min_separation >= 0.0) {
        return Err(Error::config(format!(
            "min_separation must be non-negative, got {min_separation}"
        )));
    }
    if l_total > 1 && min_separation * l_total as f64 > 1.0 {
        return Err(Error::Sampling(format!(
            "{l_total} paths cannot be separated by {min_separation} in spatial frequency"
        )));
    }

    let tx_aod = uniform_angle(rng);
    let ris_aoa_elevation = uniform_angle(rng);
    let ris_aoa_azimuth = uniform_angle(rng);

    'restart: for _ in 0..MAX_RESTARTS {
        let mut paths = Vec::with_capacity(l_total);
        let mut freqs = Vec::with_capacity(l_total);
        for _ in 0..l_total {
            let gain = complex_gaussian(rng);
            let aod_elevation = uniform_angle(rng);
            let aod_azimuth = uniform_angle(rng);
            let mut accepted = None;
            for _ in 0..MAX_ATTEMPTS_PER_PATH {
                let aoa = uniform_angle(rng);
                let f = geometry.rx.spatial_frequency(aoa);
                if freqs
                    .iter()
                    .all(|&g| spatial_frequency_gap(f, g) >= min_separation)
                {
                    accepted = Some((aoa, f));
                    break;
                }
            }
            let Some((aoa_rx, f)) = accepted else {
                continue 'restart;
            };
            freqs.push(f);
            paths.push(PathParams {
                gain,
                aod_elevation,
                aod_azimuth,
                aoa_rx,
            });
        }
        return ChannelRealization::new(
            tx_aod,
            ris_aoa_elevation,
            ris_aoa_azimuth,
            paths,
            *geometry,
        );
    }
    Err(Error::Sampling(format!(
        "no separated placement of {l_total} paths after {MAX_RESTARTS} restarts"
    )))
}

/// Indices of the `l_s` strongest scatterers, strongest first.
pub fn select_scatterers(ch: &ChannelRealization, l_s: usize) -> Result<Vec<usize>> {
    if l_s == 0 || !l_s.is_power_of_two() {
        return Err(Error::config(format!(
            "number of modulating scatterers must be a power of two, got {l_s}"
        )));
    }
    if l_s > ch.n_paths() {
        return Err(Error::config(format!(
            "cannot select {l_s} scatterers from {} paths",
            ch.n_paths()
        )));
    }
    Ok((0..l_s).collect())
}

/// `B = a_ris(φ^r, ϕ^r)·a_tᴴ(θ^t)`, an `N × N_t` rank-one matrix.
pub fn build_tx_ris_channel(ch: &ChannelRealization) -> DMatrix<Complex64> {
    ch.ris_los_steering().as_vector() * ch.tx_steering().as_vector().adjoint()
}

/// `F = Σ_l h_l·a_r(θ_l)·a_risᴴ(φ_l, ϕ_l)`, an `N_r × N` matrix.
pub fn build_ris_rx_channel(ch: &ChannelRealization) -> DMatrix<Complex64> {
    let g = ch.geometry();
    let mut f = DMatrix::zeros(g.rx.n_elements(), g.ris.n_elements());
    for (l, p) in ch.paths().iter().enumerate() {
        let ar = ch.rx_steering(l).expect("index in range");
        let aris = ch.ris_path_steering(l).expect("index in range");
        f += ar.as_vector() * aris.as_vector().adjoint() * p.gain;
    }
    f
}

/// Phases that co-phase the RIS cascade for scatterer `target`:
/// `ψ_n = arg[a_ris(path)]_n + arg[a_risᴴ(LoS)]_n`.
pub fn optimize_ris_phases(ch: &ChannelRealization, target: usize) -> Result<RisPhaseProfile> {
    let toward_path = ch.ris_path_steering(target)?;
    let toward_tx = ch.ris_los_steering();
    let phases = toward_path
        .as_slice()
        .iter()
        .zip(toward_tx.as_slice())
        .map(|(p, t)| p.arg() + t.conj().arg())
        .collect();
    RisPhaseProfile::new(phases)
}

fn check_profile(ch: &ChannelRealization, profile: &RisPhaseProfile) -> Result<()> {
    let n = ch.geometry().ris.n_elements();
    if profile.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: profile.len(),
        });
    }
    Ok(())
}

/// `H = F·Ψ·B`, an `N_r × N_t` matrix.
pub fn composite_channel(
    ch: &ChannelRealization,
    profile: &RisPhaseProfile,
) -> Result<DMatrix<Complex64>> {
    check_profile(ch, profile)?;
    let f = build_ris_rx_channel(ch);
    let b = build_tx_ris_channel(ch);
    Ok(f * profile.reflection_matrix() * b)
}

/// Scalar RIS cascade `a_risᴴ(path)·Ψ·a_ris(LoS)` seen by scatterer `path`.
pub fn cascade_gain(
    ch: &ChannelRealization,
    profile: &RisPhaseProfile,
    path: usize,
) -> Result<Complex64> {
    check_profile(ch, profile)?;
    let toward_path = ch.ris_path_steering(path)?;
    let toward_tx = ch.ris_los_steering();
    Ok(toward_path
        .as_slice()
        .iter()
        .zip(profile.phases())
        .zip(toward_tx.as_slice())
        .map(|((p, &psi), t)| p.conj() * Complex64::from_polar(1.0, psi) * t)
        .sum())
}

/// Receive-side response `H·a_t(θ^t)` to a unit symbol, in `O(L·(N + N_r))`.
pub fn received_response(
    ch: &ChannelRealization,
    profile: &RisPhaseProfile,
) -> Result<DVector<Complex64>> {
    check_profile(ch, profile)?;
    let paths = ResponseBasis::new(ch)?;
    Ok(paths.response(ch, &profile.coefficients()))
}

/// Responses for several RIS targets at once, each with the RIS co-phased
/// by [`optimize_ris_phases`]. Steering vectors are evaluated once and
/// shared, which matters for large surfaces.
pub fn received_responses(
    ch: &ChannelRealization,
    targets: &[usize],
) -> Result<Vec<DVector<Complex64>>> {
    let paths = ResponseBasis::new(ch)?;
    targets
        .iter()
        .map(|&t| {
            let toward_path = paths.ris.get(t).ok_or(Error::Index {
                index: t,
                len: paths.ris.len(),
            })?;
            let coefficients = toward_path
                .as_slice()
                .iter()
                .zip(paths.los.as_slice())
                .map(|(p, t)| Complex64::from_polar(1.0, p.arg() + t.conj().arg()))
                .collect::<Vec<_>>();
            Ok(paths.response(ch, &DVector::from_vec(coefficients)))
        })
        .collect()
}

struct ResponseBasis {
    tx_power: Complex64,
    los: SteeringVector,
    ris: Vec<SteeringVector>,
    rx: Vec<SteeringVector>,
}

impl ResponseBasis {
    fn new(ch: &ChannelRealization) -> Result<Self> {
        let at = ch.tx_steering();
        Ok(ResponseBasis {
            tx_power: at.as_vector().dotc(at.as_vector()),
            los: ch.ris_los_steering(),
            ris: (0..ch.n_paths())
                .map(|l| ch.ris_path_steering(l))
                .collect::<Result<_>>()?,
            rx: (0..ch.n_paths())
                .map(|l| ch.rx_steering(l))
                .collect::<Result<_>>()?,
        })
    }

    fn response(
        &self,
        ch: &ChannelRealization,
        coefficients: &DVector<Complex64>,
    ) -> DVector<Complex64> {
        let reflected = coefficients.component_mul(self.los.as_vector());
        let mut response = DVector::zeros(ch.geometry().rx.n_elements());
        for ((p, ris), rx) in ch.paths().iter().zip(&self.ris).zip(&self.rx) {
            let weight = p.gain * ris.as_vector().dotc(&reflected) * self.tx_power;
            response.axpy(weight, rx.as_vector(), Complex64::new(1.0, 0.0));
        }
        response
    }
}

/// `a_rᴴ(θ_probe)·H·a_t(θ^t)`: the gain a receiver beam toward `probe` sees.
pub fn effective_gain(
    ch: &ChannelRealization,
    profile: &RisPhaseProfile,
    probe: usize,
) -> Result<Complex64> {
    let ar = ch.rx_steering(probe)?;
    Ok(ar.as_vector().dotc(&received_response(ch, profile)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SVD;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geometry(nt: usize, nr: usize, nh: usize, nv: usize) -> LinkGeometry {
        LinkGeometry {
            tx: UlaGeometry::half_wavelength(nt).unwrap(),
            rx: UlaGeometry::half_wavelength(nr).unwrap(),
            ris: UpaGeometry::new(nh, nv, 0.5).unwrap(),
        }
    }

    fn path(gain: Complex64) -> PathParams {
        PathParams {
            gain,
            aod_elevation: Angle::new(0.4).unwrap(),
            aod_azimuth: Angle::new(-0.9).unwrap(),
            aoa_rx: Angle::new(0.2).unwrap(),
        }
    }

    fn broadside(gains: &[f64], geom: LinkGeometry) -> ChannelRealization {
        let half_pi = Angle::new(PI / 2.0).unwrap();
        let paths = gains
            .iter()
            .map(|&g| PathParams {
                gain: Complex64::new(g, 0.0),
                aod_elevation: half_pi,
                aod_azimuth: half_pi,
                aoa_rx: Angle::ZERO,
            })
            .collect();
        ChannelRealization::new(Angle::ZERO, half_pi, half_pi, paths, geom).unwrap()
    }

    #[test]
    fn single_path_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = sample_channel(1, &geometry(8, 8, 4, 4), 0.1, &mut rng).unwrap();
        assert_eq!(ch.n_paths(), 1);
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = geometry(32, 32, 8, 8);
        let a = sample_channel(6, &g, 2.0 / 32.0, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let b = sample_channel(6, &g, 2.0 / 32.0, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_enforces_separation_and_order() {
        let g = geometry(32, 32, 8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let ch = sample_channel(12, &g, 1.0 / 32.0, &mut rng).unwrap();
            let f = ch.rx_spatial_frequencies();
            for i in 0..f.len() {
                for j in i + 1..f.len() {
                    assert!(spatial_frequency_gap(f[i], f[j]) >= 1.0 / 32.0);
                }
            }
            for w in ch.paths().windows(2) {
                assert!(w[0].gain.norm() >= w[1].gain.norm());
            }
        }
    }

    #[test]
    fn infeasible_separation_is_a_sampling_error() {
        let g = geometry(8, 8, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_channel(10, &g, 0.2, &mut rng),
            Err(Error::Sampling(_))
        ));
        // Feasible on paper but beyond what rejection can pack.
        assert!(matches!(
            sample_channel(10, &g, 0.099, &mut rng),
            Err(Error::Sampling(_))
        ));
        assert!(sample_channel(0, &g, 0.0, &mut rng).is_err());
        assert!(sample_channel(2, &g, -1.0, &mut rng).is_err());
    }

    #[test]
    fn unit_variance_gains() {
        let g = geometry(4, 4, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| {
                sample_channel(1, &g, 0.0, &mut rng).unwrap().paths()[0]
                    .gain
                    .norm_sqr()
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean |h|^2 = {mean}");
    }

    #[test]
    fn selection_takes_strongest_first() {
        let paths = [0.2, 0.9, 0.5]
            .map(|g| path(Complex64::new(0.0, g)))
            .to_vec();
        let a = Angle::ZERO;
        let ch = ChannelRealization::new(a, a, a, paths, geometry(4, 4, 2, 2)).unwrap();
        let sel = select_scatterers(&ch, 2).unwrap();
        let mags: Vec<f64> = sel.iter().map(|&i| ch.paths()[i].gain.norm()).collect();
        assert_eq!(mags, vec![0.9, 0.5]);
        assert_eq!(select_scatterers(&ch, 1).unwrap(), vec![0]);
        assert!(select_scatterers(&ch, 4).is_err());
    }

    #[test]
    fn selection_requires_power_of_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = sample_channel(12, &geometry(8, 8, 2, 2), 0.0, &mut rng).unwrap();
        assert!(select_scatterers(&ch, 3).is_err());
        assert!(select_scatterers(&ch, 0).is_err());
        assert!(select_scatterers(&ch, 16).is_err());
        assert_eq!(select_scatterers(&ch, 8).unwrap().len(), 8);
    }

    #[test]
    fn selection_matches_independent_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let ch = sample_channel(12, &geometry(8, 8, 2, 2), 0.0, &mut rng).unwrap();
        let mut mags: Vec<f64> = ch.paths().iter().map(|p| p.gain.norm()).collect();
        mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let sel = select_scatterers(&ch, 4).unwrap();
        for (rank, &i) in sel.iter().enumerate() {
            assert_eq!(ch.paths()[i].gain.norm(), mags[rank]);
        }
    }

    #[test]
    fn all_paths_when_selecting_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ch = sample_channel(4, &geometry(8, 8, 2, 2), 0.0, &mut rng).unwrap();
        assert_eq!(select_scatterers(&ch, 4).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn tx_ris_channel_is_unit_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ch = sample_channel(3, &geometry(8, 4, 3, 4), 0.0, &mut rng).unwrap();
        let b = build_tx_ris_channel(&ch);
        assert_eq!(b.shape(), (12, 8));
        let sv = SVD::new(b.clone(), false, false).singular_values;
        assert!((sv[0] - 1.0).abs() < 1e-12);
        assert!(sv[1] < 1e-10);
        assert!((b.norm() - 1.0).abs() < 1e-12);
        let leading = ch.ris_los_steering().as_slice()[0] * ch.tx_steering().as_slice()[0].conj();
        assert!((b[(0, 0)] - leading).norm() < 1e-15);
        assert!((b[(0, 0)].norm() - 1.0 / (12.0f64 * 8.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ris_rx_channel_structure() {
        let g = geometry(4, 8, 2, 3);
        let a = Angle::new(0.3).unwrap();
        let zero =
            ChannelRealization::new(a, a, a, vec![path(Complex64::new(0.0, 0.0))], g).unwrap();
        assert!(build_ris_rx_channel(&zero).iter().all(|z| z.norm() == 0.0));

        let one =
            ChannelRealization::new(a, a, a, vec![path(Complex64::new(0.3, -1.2))], g).unwrap();
        let sv = SVD::new(build_ris_rx_channel(&one), false, false).singular_values;
        assert!(sv[1] < 1e-10);

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let ch = sample_channel(3, &g, 0.0, &mut rng).unwrap();
        let mut expected = DMatrix::<Complex64>::zeros(8, 6);
        for p in ch.paths() {
            let ar = ula_steering(&g.rx, p.aoa_rx);
            let aris = upa_steering(&g.ris, p.aod_elevation, p.aod_azimuth);
            for i in 0..8 {
                for j in 0..6 {
                    expected[(i, j)] += p.gain * ar.as_slice()[i] * aris.as_slice()[j].conj();
                }
            }
        }
        assert!((build_ris_rx_channel(&ch) - expected).norm() < 1e-13);
    }

    #[test]
    fn broadside_phases_are_zero() {
        let ch = broadside(&[1.0], geometry(4, 4, 3, 3));
        let profile = optimize_ris_phases(&ch, 0).unwrap();
        assert!(profile.phases().iter().all(|p| p.abs() < 1e-12));
    }

    #[test]
    fn phase_alignment_is_exact() {
        let g = geometry(8, 8, 8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let ch = sample_channel(6, &g, 0.0, &mut rng).unwrap();
            for l in 0..6 {
                let profile = optimize_ris_phases(&ch, l).unwrap();
                let zeta_t = ch.ris_path_steering(l).unwrap();
                let zeta_r = ch.ris_los_steering();
                let sum: Complex64 = profile
                    .phases()
                    .iter()
                    .zip(zeta_t.as_slice().iter().zip(zeta_r.as_slice()))
                    .map(|(&psi, (t, r))| {
                        Complex64::from_polar(1.0, psi - t.arg() - r.conj().arg())
                    })
                    .sum();
                assert!((sum - Complex64::new(64.0, 0.0)).norm() < 1e-9);
                let cascade = cascade_gain(&ch, &profile, l).unwrap();
                assert!((cascade - Complex64::new(1.0, 0.0)).norm() < 1e-9);
            }
        }
        let ch = sample_channel(2, &g, 0.0, &mut rng).unwrap();
        assert!(matches!(
            optimize_ris_phases(&ch, 2),
            Err(Error::Index { index: 2, len: 2 })
        ));
    }

    #[test]
    fn composite_zero_gain() {
        let ch = broadside(&[0.0, 0.0], geometry(4, 4, 2, 2));
        let h = composite_channel(&ch, &RisPhaseProfile::zeros(4)).unwrap();
        assert!(h.iter().all(|z| z.norm() == 0.0));
        assert!(composite_channel(&ch, &RisPhaseProfile::zeros(5)).is_err());
    }

    #[test]
    fn composite_collapses_for_aligned_single_path() {
        let g = geometry(8, 16, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ch = sample_channel(1, &g, 0.0, &mut rng).unwrap();
        let profile = optimize_ris_phases(&ch, 0).unwrap();
        let h = composite_channel(&ch, &profile).unwrap();
        let expected = ch.rx_steering(0).unwrap().as_vector()
            * ch.tx_steering().as_vector().adjoint()
            * ch.paths()[0].gain;
        assert!((h - expected).norm() < 1e-9);
    }

    #[test]
    fn composite_matches_entrywise_triple_product() {
        let g = geometry(4, 4, 2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..20 {
            let ch = sample_channel(6, &g, 0.0, &mut rng).unwrap();
            let phases = (0..8).map(|_| rng.random_range(-PI..PI)).collect();
            let profile = RisPhaseProfile::new(phases).unwrap();
            let f = build_ris_rx_channel(&ch);
            let b = build_tx_ris_channel(&ch);
            let mut brute = DMatrix::<Complex64>::zeros(4, 4);
            for i in 0..4 {
                for j in 0..4 {
                    for n in 0..8 {
                        brute[(i, j)] +=
                            f[(i, n)] * Complex64::from_polar(1.0, profile.phases()[n]) * b[(n, j)];
                    }
                }
            }
            assert!((composite_channel(&ch, &profile).unwrap() - brute).norm() < 1e-10);
            let response = received_response(&ch, &profile).unwrap();
            let direct = composite_channel(&ch, &profile).unwrap() * ch.tx_steering().as_vector();
            assert!((response - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn effective_gain_single_path_is_exact() {
        let g = geometry(16, 16, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ch = sample_channel(1, &g, 0.0, &mut rng).unwrap();
        let profile = optimize_ris_phases(&ch, 0).unwrap();
        let eff = effective_gain(&ch, &profile, 0).unwrap();
        assert!((eff - ch.paths()[0].gain).norm() < 1e-12);
    }

    #[test]
    fn dirichlet_nulls_remove_interfering_paths() {
        // Interferer at a spatial frequency 3/N_r away from the probe.
        let g = geometry(8, 16, 4, 4);
        let a = |x: f64| Angle::new(x).unwrap();
        let probe = PathParams {
            gain: Complex64::new(1.5, 0.0),
            aod_elevation: a(0.3),
            aod_azimuth: a(1.0),
            aoa_rx: a(0.1f64.asin()),
        };
        let interferer = PathParams {
            gain: Complex64::new(0.0, 0.8),
            aod_elevation: a(-1.2),
            aod_azimuth: a(0.4),
            aoa_rx: a(((0.5 * 0.1 + 3.0 / 16.0) / 0.5f64).asin()),
        };
        let ch =
            ChannelRealization::new(a(0.2), a(0.7), a(-0.5), vec![probe, interferer], g).unwrap();
        let profile = optimize_ris_phases(&ch, 0).unwrap();
        let eff = effective_gain(&ch, &profile, 0).unwrap();
        assert!((eff - ch.paths()[0].gain).norm() < 1e-12, "{eff}");
    }

    #[test]
    fn batched_responses_match_single_target() {
        let g = geometry(8, 8, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ch = sample_channel(5, &g, 0.1, &mut rng).unwrap();
        let batch = received_responses(&ch, &[0, 3, 1]).unwrap();
        for (&t, r) in [0, 3, 1].iter().zip(&batch) {
            let single = received_response(&ch, &optimize_ris_phases(&ch, t).unwrap()).unwrap();
            assert!((r - single).norm() < 1e-12);
        }
        assert!(received_responses(&ch, &[5]).is_err());
    }

    #[test]
    fn realization_serde_round_trip_restores_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = sample_channel(4, &geometry(4, 4, 2, 2), 0.0, &mut rng).unwrap();
        let json = serde_json::to_string(&ch).unwrap();
        let back: ChannelRealization = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ch);
        let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
        value["paths"].as_array_mut().unwrap().reverse();
        let back: ChannelRealization = serde_json::from_value(value).unwrap();
        assert_eq!(back, ch);
    }
}
