//! SSM transmitter and receiver.
//!
//! A block of `log2(L_s) + log2(M)` bits selects a scatterer rank (leading
//! bits, natural binary, MSB first) and an M-PSK symbol (trailing bits).
//! The RIS is re-pointed at the selected scatterer for every symbol. The
//! receiver projects the antenna signal onto one beam per candidate
//! scatterer and runs a joint maximum-likelihood search over
//! (scatterer, symbol).

use std::f64::consts::TAU;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::channel::{
    complex_gaussian, optimize_ris_phases, received_response, ChannelRealization,
};
use crate::error::{Error, Result};

/// Unit-energy constellation with a binary label per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
    labels: Vec<usize>,
}

impl Constellation {
    /// Validates a constellation: power-of-two size, distinct points, unit
    /// average energy, and labels forming a permutation of `0..M`.
    pub fn new(points: Vec<Complex64>, labels: Vec<usize>) -> Result<Self> {
        let m = points.len();
        if m < 2 || !m.is_power_of_two() {
            return Err(Error::config(format!(
                "modulation order must be a power of two ≥ 2, got {m}"
            )));
        }
        if labels.len() != m {
            return Err(Error::Dimension {
                expected: m,
                found: labels.len(),
            });
        }
        let mut seen = vec![false; m];
        for &l in &labels {
            if l >= m || std::mem::replace(&mut seen[l], true) {
                return Err(Error::config(format!(
                    "labels must be a permutation of 0..{m}"
                )));
            }
        }
        let energy = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / m as f64;
        if (energy - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!(
                "average symbol energy must be 1, got {energy}"
            )));
        }
        for (i, a) in points.iter().enumerate() {
            if points[i + 1..].iter().any(|b| (a - b).norm() < 1e-12) {
                return Err(Error::config("constellation points must be distinct"));
            }
        }
        Ok(Constellation { points, labels })
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.order().trailing_zeros()
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.order() as f64
    }

    /// Smallest `|s_a − s_b|²` over distinct pairs.
    pub fn min_squared_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.min((a - b).norm_sqr());
            }
        }
        best
    }
}

/// M-PSK with points `e^{j2πm/M}` and natural-binary labels.
pub fn build_psk(order: usize) -> Result<Constellation> {
    if order < 2 || !order.is_power_of_two() {
        return Err(Error::config(format!(
            "PSK order must be a power of two ≥ 2, got {order}"
        )));
    }
    let points = (0..order)
        .map(|m| {
            // Snap the axis points so BPSK/QPSK are exact.
            let z = Complex64::from_polar(1.0, TAU * m as f64 / order as f64);
            Complex64::new(snap(z.re), snap(z.im))
        })
        .collect();
    Constellation::new(points, (0..order).collect())
}

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-15 {
        r
    } else {
        x
    }
}

/// How a bit block splits between the scatterer index and the PSK symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SsmLayout {
    l_s: usize,
    order: usize,
}

impl SsmLayout {
    pub fn new(l_s: usize, order: usize) -> Result<Self> {
        if l_s == 0 || !l_s.is_power_of_two() {
            return Err(Error::config(format!(
                "L_s must be a power of two, got {l_s}"
            )));
        }
        if order < 2 || !order.is_power_of_two() {
            return Err(Error::config(format!(
                "M must be a power of two ≥ 2, got {order}"
            )));
        }
        Ok(SsmLayout { l_s, order })
    }

    pub fn n_scatterers(&self) -> usize {
        self.l_s
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn scatterer_bits(&self) -> usize {
        self.l_s.trailing_zeros() as usize
    }

    pub fn symbol_bits(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.scatterer_bits() + self.symbol_bits()
    }

    /// Number of distinct SSM symbols, `L_s · M`.
    pub fn n_symbols(&self) -> usize {
        self.l_s * self.order
    }

    /// Every symbol in lexicographic `(rank, index)` order.
    pub fn symbols(&self) -> impl Iterator<Item = SsmSymbol> + '_ {
        (0..self.l_s).flat_map(move |l| {
            (0..self.order).map(move |m| SsmSymbol {
                scatterer_rank: l,
                symbol_index: m,
            })
        })
    }

    /// Packs a symbol into one integer, scatterer bits high.
    pub fn to_word(&self, sym: SsmSymbol) -> usize {
        (sym.scatterer_rank << self.symbol_bits()) | sym.symbol_index
    }

    pub fn from_word(&self, word: usize) -> SsmSymbol {
        SsmSymbol {
            scatterer_rank: word >> self.symbol_bits(),
            symbol_index: word & (self.order - 1),
        }
    }
}

/// One transmitted SSM symbol: which scatterer and which PSK point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SsmSymbol {
    pub scatterer_rank: usize,
    pub symbol_index: usize,
}

/// The `L_s` combiner outputs, one per monitored scatterer.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamspaceObservation {
    pub branches: Vec<Complex64>,
}

/// Reads a block of 0/1 values into a symbol.
pub fn map_bits(layout: &SsmLayout, bits: &[u8]) -> Result<SsmSymbol> {
    if bits.len() != layout.bits_per_symbol() {
        return Err(Error::Dimension {
            expected: layout.bits_per_symbol(),
            found: bits.len(),
        });
    }
    let mut word = 0usize;
    for &b in bits {
        if b > 1 {
            return Err(Error::Parse(format!("bit values must be 0 or 1, got {b}")));
        }
        word = (word << 1) | b as usize;
    }
    Ok(layout.from_word(word))
}

/// Inverse of [`map_bits`].
pub fn demap(layout: &SsmLayout, sym: SsmSymbol) -> Vec<u8> {
    let word = layout.to_word(sym);
    let n = layout.bits_per_symbol();
    (0..n).map(|i| ((word >> (n - 1 - i)) & 1) as u8).collect()
}

/// Number of differing bits between the labels of `a` and `b`.
pub fn hamming_distance(layout: &SsmLayout, a: SsmSymbol, b: SsmSymbol) -> u32 {
    (layout.to_word(a) ^ layout.to_word(b)).count_ones()
}

/// Full-array received signal `y = √ρ·H·a_t·s_m + n`, `n ~ CN(0, I)`.
///
/// The RIS is aligned to `selected[sym.scatterer_rank]` for this slot.
/// Passing `None` for `rng` disables the noise.
pub fn transmit_physical<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    selected: &[usize],
    sym: SsmSymbol,
    cons: &Constellation,
    snr_linear: f64,
    rng: Option<&mut R>,
) -> Result<DVector<Complex64>> {
    let target = *selected.get(sym.scatterer_rank).ok_or(Error::Index {
        index: sym.scatterer_rank,
        len: selected.len(),
    })?;
    let profile = optimize_ris_phases(ch, target)?;
    let mut y =
        received_response(ch, &profile)? * (cons.point(sym.symbol_index) * snr_linear.sqrt());
    if let Some(rng) = rng {
        y.iter_mut().for_each(|v| *v += complex_gaussian(rng));
    }
    Ok(y)
}

/// Projects `y` onto the receive beam of every selected scatterer.
pub fn combine(
    y: &DVector<Complex64>,
    ch: &ChannelRealization,
    selected: &[usize],
) -> Result<BeamspaceObservation> {
    let n_r = ch.geometry().rx.n_elements();
    if y.len() != n_r {
        return Err(Error::Dimension {
            expected: n_r,
            found: y.len(),
        });
    }
    let branches = selected
        .iter()
        .map(|&l| Ok(ch.rx_steering(l)?.as_vector().dotc(y)))
        .collect::<Result<_>>()?;
    Ok(BeamspaceObservation { branches })
}

/// Idealized beamspace signal assuming exactly orthogonal beams: the active
/// branch carries `√ρ·h_l·s_m`, every branch gets independent `CN(0, 1)` noise.
pub fn transmit_beamspace<R: Rng + ?Sized>(
    ch: &ChannelRealization,
    selected: &[usize],
    sym: SsmSymbol,
    cons: &Constellation,
    snr_linear: f64,
    rng: Option<&mut R>,
) -> Result<BeamspaceObservation> {
    if sym.scatterer_rank >= selected.len() {
        return Err(Error::Index {
            index: sym.scatterer_rank,
            len: selected.len(),
        });
    }
    let mut branches = vec![Complex64::new(0.0, 0.0); selected.len()];
    let gain = ch
        .paths()
        .get(selected[sym.scatterer_rank])
        .ok_or(Error::Index {
            index: selected[sym.scatterer_rank],
            len: ch.n_paths(),
        })?
        .gain;
    branches[sym.scatterer_rank] = gain * cons.point(sym.symbol_index) * snr_linear.sqrt();
    if let Some(rng) = rng {
        branches
            .iter_mut()
            .for_each(|v| *v += complex_gaussian(rng));
    }
    Ok(BeamspaceObservation { branches })
}

/// Joint ML detection: `argmin_{l,m} |y_r(l) − √ρ·h_l·s_m|²`, ties going to
/// the lexicographically smallest `(l, m)`.
///
/// # Panics
///
/// If `gains` and the observation have different lengths.
pub fn ml_detect(
    obs: &BeamspaceObservation,
    gains: &[Complex64],
    cons: &Constellation,
    snr_linear: f64,
) -> SsmSymbol {
    assert_eq!(
        obs.branches.len(),
        gains.len(),
        "one gain per combiner branch"
    );
    let amplitude = snr_linear.sqrt();
    let mut best = (
        f64::INFINITY,
        SsmSymbol {
            scatterer_rank: 0,
            symbol_index: 0,
        },
    );
    for (l, (&y, &h)) in obs.branches.iter().zip(gains).enumerate() {
        let scaled = h * amplitude;
        for (m, &s) in cons.points().iter().enumerate() {
            let metric = (y - scaled * s).norm_sqr();
            if metric < best.0 {
                best = (
                    metric,
                    SsmSymbol {
                        scatterer_rank: l,
                        symbol_index: m,
                    },
                );
            }
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_geometry::{Angle, UlaGeometry, UpaGeometry};
    use crate::channel::{sample_channel, select_scatterers, LinkGeometry, PathParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn geometry(n: usize) -> LinkGeometry {
        LinkGeometry {
            tx: UlaGeometry::half_wavelength(n).unwrap(),
            rx: UlaGeometry::half_wavelength(n).unwrap(),
            ris: UpaGeometry::new(8, 8, 0.5).unwrap(),
        }
    }

    #[test]
    fn psk_points() {
        assert_eq!(build_psk(2).unwrap().points(), &[c(1.0, 0.0), c(-1.0, 0.0)]);
        assert_eq!(
            build_psk(4).unwrap().points(),
            &[c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)]
        );
        let psk8 = build_psk(8).unwrap();
        assert!((psk8.min_squared_distance() - (2.0 - 2f64.sqrt())).abs() < 1e-12);
        for m in [2, 4, 8, 16, 64] {
            assert!((build_psk(m).unwrap().average_energy() - 1.0).abs() < 1e-12);
        }
        assert!(build_psk(3).is_err());
        assert!(build_psk(1).is_err());
        assert!(build_psk(0).is_err());
    }

    #[test]
    fn constellation_validation() {
        assert!(Constellation::new(vec![c(1.0, 0.0), c(1.0, 0.0)], vec![0, 1]).is_err());
        assert!(Constellation::new(vec![c(2.0, 0.0), c(-2.0, 0.0)], vec![0, 1]).is_err());
        assert!(Constellation::new(vec![c(1.0, 0.0), c(-1.0, 0.0)], vec![1, 1]).is_err());
        assert!(Constellation::new(vec![c(1.0, 0.0), c(-1.0, 0.0)], vec![0]).is_err());
        assert!(Constellation::new(vec![c(1.0, 0.0), c(-1.0, 0.0)], vec![1, 0]).is_ok());
    }

    #[test]
    fn bit_mapping_examples() {
        let layout = SsmLayout::new(4, 4).unwrap();
        assert_eq!(
            map_bits(&layout, &[0, 0, 0, 0]).unwrap(),
            SsmSymbol {
                scatterer_rank: 0,
                symbol_index: 0
            }
        );
        let sym = map_bits(&layout, &[1, 1, 0, 1]).unwrap();
        assert_eq!(
            sym,
            SsmSymbol {
                scatterer_rank: 3,
                symbol_index: 1
            }
        );
        assert_eq!(demap(&layout, sym), vec![1, 1, 0, 1]);
        assert_eq!(
            demap(
                &layout,
                SsmSymbol {
                    scatterer_rank: 0,
                    symbol_index: 0
                }
            ),
            vec![0; 4]
        );
        assert!(map_bits(&layout, &[1, 0, 1]).is_err());
        assert!(map_bits(&layout, &[1, 0, 2, 0]).is_err());
    }

    #[test]
    fn single_scatterer_layout_carries_only_symbol_bits() {
        let layout = SsmLayout::new(1, 2).unwrap();
        assert_eq!(layout.bits_per_symbol(), 1);
        assert_eq!(
            map_bits(&layout, &[1]).unwrap(),
            SsmSymbol {
                scatterer_rank: 0,
                symbol_index: 1
            }
        );
        assert!(SsmLayout::new(3, 4).is_err());
        assert!(SsmLayout::new(4, 1).is_err());
    }

    #[test]
    fn bit_pipeline_is_exhaustively_invertible() {
        for (l_s, m) in [(1, 2), (2, 2), (4, 4), (8, 8), (2, 8)] {
            let layout = SsmLayout::new(l_s, m).unwrap();
            let n = layout.bits_per_symbol();
            for word in 0..(1usize << n) {
                let bits: Vec<u8> = (0..n).map(|i| ((word >> (n - 1 - i)) & 1) as u8).collect();
                let sym = map_bits(&layout, &bits).unwrap();
                assert!(sym.scatterer_rank < l_s && sym.symbol_index < m);
                assert_eq!(demap(&layout, sym), bits);
            }
            assert_eq!(layout.symbols().count(), l_s * m);
        }
    }

    #[test]
    fn hamming_distance_matches_bit_comparison() {
        let layout = SsmLayout::new(4, 4).unwrap();
        let a = SsmSymbol {
            scatterer_rank: 0,
            symbol_index: 0,
        };
        let b = SsmSymbol {
            scatterer_rank: 3,
            symbol_index: 1,
        };
        assert_eq!(hamming_distance(&layout, a, a), 0);
        assert_eq!(hamming_distance(&layout, a, b), 3);
        for layout in [SsmLayout::new(4, 4).unwrap(), SsmLayout::new(8, 8).unwrap()] {
            for a in layout.symbols() {
                for b in layout.symbols() {
                    let oracle = demap(&layout, a)
                        .iter()
                        .zip(demap(&layout, b))
                        .filter(|(x, y)| **x != *y)
                        .count() as u32;
                    assert_eq!(hamming_distance(&layout, a, b), oracle);
                    assert_eq!(
                        hamming_distance(&layout, a, b),
                        hamming_distance(&layout, b, a)
                    );
                }
            }
        }
    }

    #[test]
    fn noiseless_physical_signal() {
        let g = geometry(8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = sample_channel(4, &g, 0.0, &mut rng).unwrap();
        let sel = select_scatterers(&ch, 2).unwrap();
        let cons = build_psk(4).unwrap();
        let sym = SsmSymbol {
            scatterer_rank: 1,
            symbol_index: 3,
        };
        let y = transmit_physical::<ChaCha8Rng>(&ch, &sel, sym, &cons, 4.0, None).unwrap();
        let profile = optimize_ris_phases(&ch, 1).unwrap();
        let h = crate::channel::composite_channel(&ch, &profile).unwrap();
        let expected = h * ch.tx_steering().as_vector() * (cons.point(3) * 2.0);
        assert!((y - expected).norm() < 1e-12);

        let a = Angle::ZERO;
        let silent = PathParams {
            gain: c(0.0, 0.0),
            aod_elevation: a,
            aod_azimuth: a,
            aoa_rx: a,
        };
        let dead = ChannelRealization::new(a, a, a, vec![silent, silent], g).unwrap();
        let y = transmit_physical::<ChaCha8Rng>(&dead, &[0, 1], sym, &cons, 10.0, None).unwrap();
        assert!(y.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn antenna_noise_has_unit_variance() {
        let g = geometry(4);
        let a = Angle::ZERO;
        let silent = PathParams {
            gain: c(0.0, 0.0),
            aod_elevation: a,
            aod_azimuth: a,
            aoa_rx: a,
        };
        let ch = ChannelRealization::new(a, a, a, vec![silent], g).unwrap();
        let cons = build_psk(2).unwrap();
        let sym = SsmSymbol {
            scatterer_rank: 0,
            symbol_index: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let trials = 25_000; // × 4 antennas = 10^5 samples
        let mut acc = 0.0;
        for _ in 0..trials {
            let y = transmit_physical(&ch, &[0], sym, &cons, 1.0, Some(&mut rng)).unwrap();
            acc += y.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        let var = acc / (4 * trials) as f64;
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn combiner_on_orthogonal_bank() {
        // Spatial frequencies 0, 1/8, 2/8 on an 8-element array: exact nulls.
        let mut g = geometry(8);
        g.rx = UlaGeometry::half_wavelength(8).unwrap();
        let a = Angle::ZERO;
        let paths = (0..3)
            .map(|k| PathParams {
                gain: c(3.0 - k as f64, 0.0),
                aod_elevation: a,
                aod_azimuth: a,
                aoa_rx: Angle::new((k as f64 / 8.0 / 0.5).asin()).unwrap(),
            })
            .collect();
        let ch = ChannelRealization::new(a, a, a, paths, g).unwrap();
        let sel = [0, 1, 2];
        let y = ch.rx_steering(1).unwrap().into_vector();
        let obs = combine(&y, &ch, &sel).unwrap();
        assert!((obs.branches[1] - c(1.0, 0.0)).norm() < 1e-12);
        assert!(obs.branches[0].norm() < 1e-12 && obs.branches[2].norm() < 1e-12);

        let zero = DVector::zeros(8);
        assert!(combine(&zero, &ch, &sel)
            .unwrap()
            .branches
            .iter()
            .all(|z| z.norm() == 0.0));
        assert!(combine(&DVector::zeros(7), &ch, &sel).is_err());
    }

    #[test]
    fn combiner_matches_dot_products() {
        let g = geometry(16);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ch = sample_channel(6, &g, 0.0, &mut rng).unwrap();
        let sel = select_scatterers(&ch, 4).unwrap();
        let y = DVector::from_fn(16, |_, _| complex_gaussian(&mut rng));
        let obs = combine(&y, &ch, &sel).unwrap();
        for (k, &l) in sel.iter().enumerate() {
            let ar = ch.rx_steering(l).unwrap();
            let dot: Complex64 = ar
                .as_slice()
                .iter()
                .zip(y.iter())
                .map(|(a, v)| a.conj() * v)
                .sum();
            assert!((obs.branches[k] - dot).norm() < 1e-12);
        }
    }

    #[test]
    fn beamspace_signal_shapes() {
        let g = geometry(8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ch = sample_channel(6, &g, 0.0, &mut rng).unwrap();
        let sel = select_scatterers(&ch, 4).unwrap();
        let cons = build_psk(8).unwrap();
        let sym = SsmSymbol {
            scatterer_rank: 2,
            symbol_index: 5,
        };
        let obs = transmit_beamspace::<ChaCha8Rng>(&ch, &sel, sym, &cons, 9.0, None).unwrap();
        for (k, v) in obs.branches.iter().enumerate() {
            if k == 2 {
                assert_eq!(*v, ch.paths()[2].gain * cons.point(5) * 3.0);
            } else {
                assert_eq!(v.norm(), 0.0);
            }
        }
        let noisy = transmit_beamspace(&ch, &sel, sym, &cons, 0.0, Some(&mut rng)).unwrap();
        assert!(noisy.branches.iter().all(|z| z.norm() > 0.0));
        let bad = SsmSymbol {
            scatterer_rank: 4,
            symbol_index: 0,
        };
        assert!(transmit_beamspace::<ChaCha8Rng>(&ch, &sel, bad, &cons, 1.0, None).is_err());
    }

    #[test]
    fn detector_recovers_every_noiseless_symbol() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = geometry(8);
        for (l_s, m) in [(1, 2), (2, 4), (4, 4), (8, 8), (8, 2)] {
            let layout = SsmLayout::new(l_s, m).unwrap();
            let cons = build_psk(m).unwrap();
            let ch = sample_channel(8, &g, 0.0, &mut rng).unwrap();
            let sel = select_scatterers(&ch, l_s).unwrap();
            let gains: Vec<_> = sel.iter().map(|&i| ch.paths()[i].gain).collect();
            for sym in layout.symbols() {
                let obs =
                    transmit_beamspace::<ChaCha8Rng>(&ch, &sel, sym, &cons, 3.0, None).unwrap();
                assert_eq!(ml_detect(&obs, &gains, &cons, 3.0), sym);
            }
        }
    }

    #[test]
    fn detector_tie_break() {
        let cons = build_psk(2).unwrap();
        let obs = BeamspaceObservation {
            branches: vec![c(0.0, 0.0); 4],
        };
        let gains = vec![c(0.6, 0.0), c(0.0, 0.6), c(-0.6, 0.0), c(0.0, -0.6)];
        assert_eq!(
            ml_detect(&obs, &gains, &cons, 2.0),
            SsmSymbol {
                scatterer_rank: 0,
                symbol_index: 0
            }
        );
    }

    #[allow(clippy::needless_range_loop)]
    fn brute_force(
        obs: &BeamspaceObservation,
        gains: &[Complex64],
        cons: &Constellation,
        rho: f64,
    ) -> SsmSymbol {
        let mut all: Vec<(f64, usize, usize)> = Vec::new();
        for l in 0..gains.len() {
            for m in 0..cons.order() {
                let d = obs.branches[l] - gains[l] * rho.sqrt() * cons.point(m);
                all.push((d.re * d.re + d.im * d.im, l, m));
            }
        }
        let min = all.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
        let (_, l, m) = *all
            .iter()
            .filter(|t| t.0 == min)
            .min_by_key(|t| (t.1, t.2))
            .unwrap();
        SsmSymbol {
            scatterer_rank: l,
            symbol_index: m,
        }
    }

    #[test]
    fn detector_matches_brute_force_on_noisy_observations() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let g = geometry(8);
        let cons = build_psk(4).unwrap();
        let layout = SsmLayout::new(4, 4).unwrap();
        let mut ch = sample_channel(6, &g, 0.0, &mut rng).unwrap();
        for trial in 0..10_000 {
            if trial % 100 == 99 {
                ch = sample_channel(6, &g, 0.0, &mut rng).unwrap();
            }
            let sel = select_scatterers(&ch, 4).unwrap();
            let gains: Vec<_> = sel.iter().map(|&i| ch.paths()[i].gain).collect();
            let sym = layout.from_word(rng.random_range(0..16));
            let rho = 10f64.powf(rng.random_range(-1.0..2.0));
            let obs = transmit_beamspace(&ch, &sel, sym, &cons, rho, Some(&mut rng)).unwrap();
            assert_eq!(
                ml_detect(&obs, &gains, &cons, rho),
                brute_force(&obs, &gains, &cons, rho)
            );
        }
    }

    proptest! {
        #[test]
        fn detector_scale_covariance(
            seed in 0u64..1000,
            scale_re in -3.0f64..3.0,
            scale_im in -3.0f64..3.0,
        ) {
            let scale = c(scale_re, scale_im);
            prop_assume!(scale.norm() > 0.05);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cons = build_psk(4).unwrap();
            let gains: Vec<_> = (0..4).map(|_| complex_gaussian(&mut rng)).collect();
            let branches: Vec<_> = (0..4).map(|_| complex_gaussian(&mut rng) * 2.0).collect();
            let obs = BeamspaceObservation { branches: branches.clone() };
            let scaled_obs = BeamspaceObservation { branches: branches.iter().map(|b| b * scale).collect() };
            let scaled_gains: Vec<_> = gains.iter().map(|h| h * scale).collect();
            prop_assert_eq!(
                ml_detect(&obs, &gains, &cons, 3.0),
                ml_detect(&scaled_obs, &scaled_gains, &cons, 3.0)
            );
        }
    }
}
