//! Simple-source decoding of the reverberant Ambisonic field and per-band
//! channel-group mixing.

use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gammatone::GammatoneFilterbank;
use crate::geometry::{ArrayGeometry, ArrayRole};
use crate::sh::{
    sh_vector, spherical_hankel, HankelKind, RegularizationPolicy, ShIndex, Wavenumber, SPEED_OF_SOUND,
};
use crate::signal::{bin_frequency, fft_len, irfft, rfft, AmbisonicSignal};

/// Channel groups sharing one mixing coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelGroup {
    W,
    Y,
    X,
    Z,
    R,
}

impl ChannelGroup {
    pub const ALL: [ChannelGroup; 5] = [Self::W, Self::Y, Self::X, Self::Z, Self::R];

    /// Group of an ACN channel: Y is the (1,-1) dipole, Z the (1,0) dipole
    /// and X the (1,1) dipole; orders two and up form R.
    pub fn of(acn: usize) -> Self {
        match acn {
            0 => Self::W,
            1 => Self::Y,
            2 => Self::Z,
            3 => Self::X,
            _ => Self::R,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MixSubset {
    #[serde(rename = "WY")]
    Wy,
    #[serde(rename = "WYX")]
    Wyx,
    #[serde(rename = "WYZ")]
    Wyz,
    #[serde(rename = "WYXZ")]
    Wyxz,
    #[default]
    #[serde(rename = "WYXZR")]
    Wyxzr,
}

impl MixSubset {
    pub fn is_active(self, group: ChannelGroup) -> bool {
        use ChannelGroup::*;
        match group {
            W | Y => true,
            X => matches!(self, Self::Wyx | Self::Wyxz | Self::Wyxzr),
            Z => matches!(self, Self::Wyz | Self::Wyxz | Self::Wyxzr),
            R => self == Self::Wyxzr,
        }
    }

    pub fn active_groups(self) -> Vec<ChannelGroup> {
        ChannelGroup::ALL.into_iter().filter(|&g| self.is_active(g)).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Wy => "WY",
            Self::Wyx => "WYX",
            Self::Wyz => "WYZ",
            Self::Wyxz => "WYXZ",
            Self::Wyxzr => "WYXZR",
        }
    }
}

impl FromStr for MixSubset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "WY" => Self::Wy,
            "WYX" => Self::Wyx,
            "WYZ" => Self::Wyz,
            "WYXZ" => Self::Wyxz,
            "WYXZR" => Self::Wyxzr,
            other => return Err(Error::Parse(format!("unknown mixing subset {other:?}"))),
        })
    }
}

/// Per-band channel-group mixing coefficients `(w, y, x, z, r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingVector {
    coeffs: [f64; 5],
    subset: MixSubset,
}

impl MixingVector {
    /// Coefficients in `(w, y, x, z, r)` order; inactive entries must be 0.
    pub fn new(subset: MixSubset, coeffs: [f64; 5]) -> Result<Self> {
        for g in ChannelGroup::ALL {
            if !subset.is_active(g) && coeffs[g.index()] != 0.0 {
                return Err(Error::Domain(format!("{g:?} is not part of subset {}", subset.name())));
            }
            if !coeffs[g.index()].is_finite() {
                return Err(Error::Domain("mixing coefficients must be finite".into()));
            }
        }
        Ok(Self { coeffs, subset })
    }

    /// All active groups at unit weight.
    pub fn identity(subset: MixSubset) -> Self {
        let coeffs = ChannelGroup::ALL.map(|g| if subset.is_active(g) { 1.0 } else { 0.0 });
        Self { coeffs, subset }
    }

    pub fn coeffs(&self) -> [f64; 5] {
        self.coeffs
    }

    pub fn subset(&self) -> MixSubset {
        self.subset
    }

    pub fn group(&self, g: ChannelGroup) -> f64 {
        self.coeffs[g.index()]
    }

    pub fn channel(&self, acn: usize) -> f64 {
        self.group(ChannelGroup::of(acn))
    }
}

/// Normalized near-field compensation of order `n` at `x = kR`:
/// `i^(n+1) e^(-ix) / (x h2_n(x))`, soft-capped. Tends to 1 at high
/// frequency; at DC only order 0 passes.
pub fn near_field(n: usize, x: f64, reg: &RegularizationPolicy) -> Result<Complex64> {
    if x == 0.0 {
        return Ok(Complex64::new(if n == 0 { 1.0 } else { 0.0 }, 0.0));
    }
    let h = spherical_hankel(HankelKind::Second, n, x)?;
    let g = crate::sh::i_pow(n + 1) * Complex64::from_polar(1.0, -x) / (h * x);
    Ok(reg.cap(1.0).apply(g))
}

/// Loudspeaker feeds of the simple-source decoder, kept channel resolved:
/// row `c` of loudspeaker `l` is `weight(l, c) * filtered[c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedDrivingSet {
    pub sample_rate: u32,
    /// Near-field compensated channel signals, ACN order.
    pub filtered: Vec<Vec<f64>>,
    /// `alpha_l * Y_c(dir_l)` per loudspeaker and channel.
    pub weights: Vec<Vec<f64>>,
}

impl DecodedDrivingSet {
    pub fn loudspeakers(&self) -> usize {
        self.weights.len()
    }

    pub fn channels(&self) -> usize {
        self.filtered.len()
    }

    pub fn len(&self) -> usize {
        self.filtered.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, l: usize, c: usize) -> Vec<f64> {
        let w = self.weights[l][c];
        self.filtered[c].iter().map(|v| w * v).collect()
    }

    /// Plain decode: all rows of loudspeaker `l` summed.
    pub fn loudspeaker_sum(&self, l: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for c in 0..self.channels() {
            let w = self.weights[l][c];
            for (o, v) in out.iter_mut().zip(&self.filtered[c]) {
                *o += w * v;
            }
        }
        out
    }
}

/// Quadrature-weighted harmonics `alpha_l * Y_c(dir_l)`.
pub fn decoder_weights(layout: &ArrayGeometry, order: usize) -> Vec<Vec<f64>> {
    layout
        .elements()
        .iter()
        .map(|e| sh_vector(order, &e.direction).into_iter().map(|y| y * e.weight).collect())
        .collect()
}

/// Applies the order-dependent near-field filters to every channel. The
/// output keeps the input length.
pub fn near_field_filter(
    amb: &AmbisonicSignal,
    radius: f64,
    reg: &RegularizationPolicy,
    speed_of_sound: f64,
) -> Result<Vec<Vec<f64>>> {
    let len = amb.len();
    if len == 0 {
        return Err(Error::EmptySignal);
    }
    let nfft = fft_len(len);
    let fs = amb.sample_rate() as f64;
    let filters = (0..=amb.order())
        .map(|n| {
            (0..=nfft / 2)
                .map(|b| {
                    let k = Wavenumber::from_frequency(bin_frequency(b, nfft, fs), speed_of_sound)?;
                    near_field(n, k.value() * radius, reg)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(amb
        .channels()
        .par_iter()
        .enumerate()
        .map(|(acn, ch)| {
            let nf = &filters[ShIndex::from_acn(acn).order()];
            let spec: Vec<Complex64> = rfft(ch, nfft).iter().zip(nf).map(|(a, b)| a * b).collect();
            let mut t = irfft(&spec, nfft);
            t.truncate(len);
            t
        })
        .collect())
}

pub fn simple_source_decode(
    rev: &AmbisonicSignal,
    layout: &ArrayGeometry,
    reg: &RegularizationPolicy,
) -> Result<DecodedDrivingSet> {
    simple_source_decode_with(rev, layout, reg, SPEED_OF_SOUND)
}

pub fn simple_source_decode_with(
    rev: &AmbisonicSignal,
    layout: &ArrayGeometry,
    reg: &RegularizationPolicy,
    speed_of_sound: f64,
) -> Result<DecodedDrivingSet> {
    layout.require(ArrayRole::LoudspeakerArray)?;
    Ok(DecodedDrivingSet {
        sample_rate: rev.sample_rate(),
        filtered: near_field_filter(rev, layout.radius(), reg, speed_of_sound)?,
        weights: decoder_weights(layout, rev.order()),
    })
}

/// Band-split decoder rows: `bands[i][c]` is band `i` of channel `c`. The
/// loudspeaker weights are shared with the unfiltered set.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedDrivingSet {
    pub bands: Vec<Vec<Vec<Complex64>>>,
    pub weights: Vec<Vec<f64>>,
}

/// Filters every decoder row with every gammatone band. Memory grows as
/// bands x channels x length; the render path avoids this materialization.
pub fn band_filter_driving(set: &DecodedDrivingSet, fb: &GammatoneFilterbank) -> BandedDrivingSet {
    let bands = (0..fb.n_bands())
        .into_par_iter()
        .map(|i| set.filtered.iter().map(|ch| fb.analyze_band(ch, i)).collect())
        .collect();
    BandedDrivingSet { bands, weights: set.weights.clone() }
}

fn check_mix(n_bands: usize, mix: &[MixingVector], g_rev: &[f64]) -> Result<()> {
    if mix.len() != n_bands || g_rev.len() != n_bands {
        return Err(Error::Shape(format!(
            "{} mixing vectors and {} gains for {n_bands} bands",
            mix.len(),
            g_rev.len()
        )));
    }
    Ok(())
}

/// Mixes each band's rows with its mixing vector and gain, then resynthesizes.
/// Returns one signal per loudspeaker.
pub fn mix_and_gain(
    banded: &BandedDrivingSet,
    mix: &[MixingVector],
    g_rev: &[f64],
    fb: &GammatoneFilterbank,
) -> Result<Vec<Vec<f64>>> {
    fb.check_bands(banded.bands.len())?;
    check_mix(banded.bands.len(), mix, g_rev)?;
    let len = banded.bands.first().and_then(|b| b.first()).map_or(0, Vec::len);
    let speakers = banded.weights.len();
    Ok((0..speakers)
        .into_par_iter()
        .map(|l| {
            let mut out = vec![0.0; len + fb.delay_samples()];
            for (i, rows) in banded.bands.iter().enumerate() {
                let mut z = vec![Complex64::new(0.0, 0.0); len];
                for (c, row) in rows.iter().enumerate() {
                    let coeff = g_rev[i] * mix[i].channel(c) * banded.weights[l][c];
                    if coeff != 0.0 {
                        z.iter_mut().zip(row).for_each(|(a, b)| *a += b * coeff);
                    }
                }
                for (o, v) in out.iter_mut().zip(fb.synthesize_band(&z, i)) {
                    *o += v;
                }
            }
            out
        })
        .collect())
}

/// Loudspeaker feeds of decode, band filtering and mixing in one pass,
/// without materializing the banded rows. Equal to `mix_and_gain` of
/// `band_filter_driving` up to rounding.
pub fn render_reverb(
    set: &DecodedDrivingSet,
    mix: &[MixingVector],
    g_rev: &[f64],
    fb: &GammatoneFilterbank,
) -> Result<Vec<Vec<f64>>> {
    check_mix(fb.n_bands(), mix, g_rev)?;
    let len = set.len();
    Ok((0..set.loudspeakers())
        .into_par_iter()
        .map(|l| {
            let mut out = vec![0.0; len + fb.delay_samples()];
            for i in 0..fb.n_bands() {
                if g_rev[i] == 0.0 {
                    continue;
                }
                let mut v = vec![0.0; len];
                for c in 0..set.channels() {
                    let coeff = g_rev[i] * mix[i].channel(c) * set.weights[l][c];
                    if coeff != 0.0 {
                        v.iter_mut().zip(&set.filtered[c]).for_each(|(a, b)| *a += b * coeff);
                    }
                }
                let z = fb.analyze_band(&v, i);
                for (o, s) in out.iter_mut().zip(fb.synthesize_band(&z, i)) {
                    *o += s;
                }
            }
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fixtures;
    use crate::sh::{sh_eval, Direction};
    use crate::signal::energy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_amb(order: usize, len: usize, seed: u64, sample_rate: u32) -> AmbisonicSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = (0..(order + 1) * (order + 1))
            .map(|_| (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect())
            .collect();
        AmbisonicSignal::new(order, sample_rate, ch).unwrap()
    }

    fn small_bank() -> GammatoneFilterbank {
        crate::gammatone::design(16000, 12, 100.0, 6000.0).unwrap()
    }

    #[test]
    fn near_field_limits() {
        let reg = RegularizationPolicy::default();
        for n in 0..=4 {
            let hi = near_field(n, 2000.0, &reg).unwrap();
            assert!((hi - Complex64::new(1.0, 0.0)).norm() < 1e-2, "n={n}: {hi}");
            assert!(near_field(n, 0.01, &reg).unwrap().norm() <= 10.0 + 1e-9);
        }
        assert_eq!(near_field(0, 0.0, &reg).unwrap(), Complex64::new(1.0, 0.0));
        assert_eq!(near_field(3, 0.0, &reg).unwrap(), Complex64::new(0.0, 0.0));
        assert!((near_field(0, 3.7, &reg).unwrap() - Complex64::new(1.0, 0.0)).norm() < 1e-8);
    }

    // The compensation is a causal high-pass: its impulse response decays
    // before wrapping around the FFT buffer. The soft cap leaks a trace of
    // pre-ringing (below -40 dB); the time-reversed filter would put most of
    // its energy there.
    #[test]
    fn near_field_is_causal() {
        let reg = RegularizationPolicy::default();
        let nfft = 1 << 14;
        let (fs, r) = (48000.0, 1.5);
        for n in 1..=4 {
            let spec: Vec<Complex64> = (0..=nfft / 2)
                .map(|b| near_field(n, 2.0 * PI * bin_frequency(b, nfft, fs) / SPEED_OF_SOUND * r, &reg).unwrap())
                .collect();
            let h = irfft(&spec, nfft);
            let total = energy(&h);
            let tail = energy(&h[nfft - nfft / 8..]);
            assert!(tail < 1e-4 * total, "n={n}: {}", tail / total);
            let reversed: Vec<Complex64> = spec.iter().map(|v| v.conj()).collect();
            let hr = irfft(&reversed, nfft);
            assert!(energy(&hr[nfft - nfft / 8..]) > 1e3 * tail);
        }
    }

    #[test]
    fn omni_input_gives_identical_feeds() {
        let mut amb = vec![vec![0.0; 256]; 25];
        amb[0] = random_amb(0, 256, 2, 48000).into_channels().remove(0);
        let amb = AmbisonicSignal::new(4, 48000, amb).unwrap();
        let set = simple_source_decode(&amb, &fixtures::lebedev50(), &RegularizationPolicy::default()).unwrap();
        // Lebedev weights differ per node class; equal weights would give equal feeds.
        let ratio: Vec<f64> = (0..50).map(|l| set.weights[l][0] / fixtures::lebedev50().elements()[l].weight).collect();
        assert!(ratio.iter().all(|r| (r - ratio[0]).abs() < 1e-15));
        let s0 = set.loudspeaker_sum(0);
        let w0 = fixtures::lebedev50().elements()[0].weight;
        for l in 1..50 {
            let wl = fixtures::lebedev50().elements()[l].weight;
            for (a, b) in set.loudspeaker_sum(l).iter().zip(&s0) {
                assert!((a / wl - b / w0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let amb = AmbisonicSignal::zeros(4, 48000, 128);
        let set = simple_source_decode(&amb, &fixtures::lebedev50(), &RegularizationPolicy::default()).unwrap();
        assert!((0..50).all(|l| set.loudspeaker_sum(l).iter().all(|&v| v == 0.0)));
        assert!(simple_source_decode(&amb, &fixtures::em32(), &RegularizationPolicy::default()).is_err());
    }

    // Decode, radiate every loudspeaker as a delay-compensated point source
    // calibrated to unit amplitude at the centre, re-expand at the centre.
    #[test]
    fn acoustic_round_trip() {
        let layout = fixtures::lebedev50();
        let reg = RegularizationPolicy::default();
        let fs = 48000u32;
        let len = 4096;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let gains: Vec<f64> = (0..25).map(|_| rng.gen_range(0.5..1.0)).collect();
        let channels = gains
            .iter()
            .map(|g| {
                let mut c = vec![0.0; len];
                c[200] = *g;
                c
            })
            .collect();
        let amb = AmbisonicSignal::new(4, fs, channels).unwrap();
        let set = simple_source_decode(&amb, &layout, &reg).unwrap();
        let nfft = 2 * len;
        let feeds: Vec<Vec<Complex64>> = (0..50).map(|l| rfft(&set.loudspeaker_sum(l), nfft)).collect();
        let input: Vec<Vec<Complex64>> = amb.channels().iter().map(|c| rfft(c, nfft)).collect();
        let r = layout.radius();
        for b in (0..=nfft / 2).step_by(7) {
            let f = bin_frequency(b, nfft, fs as f64);
            if !(200.0..=2000.0).contains(&f) {
                continue;
            }
            let k = 2.0 * PI * f / SPEED_OF_SOUND;
            for acn in 0..25 {
                let n = ShIndex::from_acn(acn).order();
                let radiation = Complex64::from_polar(4.0 * PI * r, k * r)
                    * Complex64::new(0.0, -k)
                    * spherical_hankel(HankelKind::Second, n, k * r).unwrap();
                let coeff: Complex64 = (0..50)
                    .map(|l| feeds[l][b] * radiation * sh_eval(ShIndex::from_acn(acn), &layout.elements()[l].direction))
                    .sum();
                let bare = coeff / (4.0 * PI * crate::sh::i_pow(n));
                let db = 20.0 * (bare.norm() / input[acn][b].norm()).log10();
                assert!(db.abs() < 1.0, "{f} Hz acn {acn}: {db} dB");
            }
        }
    }

    #[test]
    fn banded_mixing_paths_agree() {
        let fb = small_bank();
        let layout = fixtures::lebedev50();
        let amb = random_amb(4, 600, 4, 16000);
        let set = simple_source_decode(&amb, &layout, &RegularizationPolicy::default()).unwrap();
        let banded = band_filter_driving(&set, &fb);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mix: Vec<MixingVector> = (0..12)
            .map(|_| MixingVector::new(MixSubset::Wyxzr, [(); 5].map(|_| rng.gen_range(-1.0..1.0))).unwrap())
            .collect();
        let g: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..2.0)).collect();
        let a = mix_and_gain(&banded, &mix, &g, &fb).unwrap();
        let b = render_reverb(&set, &mix, &g, &fb).unwrap();
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            assert!((x - y).abs() < 1e-9);
        }
        assert!(mix_and_gain(&banded, &mix[..11], &g[..11], &fb).is_err());
    }

    #[test]
    fn identity_mixing_matches_plain_decode() {
        let fb = small_bank();
        let layout = fixtures::lebedev50();
        let amb = random_amb(4, 800, 6, 16000);
        let set = simple_source_decode(&amb, &layout, &RegularizationPolicy::default()).unwrap();
        let mix = vec![MixingVector::identity(MixSubset::Wyxzr); 12];
        let out = render_reverb(&set, &mix, &[1.0; 12], &fb).unwrap();
        for l in [0, 13, 49] {
            let plain = fb.synthesize(&fb.analyze(&set.loudspeaker_sum(l))).unwrap();
            for (a, b) in out[l].iter().zip(&plain) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_group_mixing() {
        let fb = small_bank();
        let layout = fixtures::lebedev50();
        let amb = random_amb(4, 800, 7, 16000);
        let set = simple_source_decode(&amb, &layout, &RegularizationPolicy::default()).unwrap();
        let w_only = vec![MixingVector::new(MixSubset::Wyxzr, [1.0, 0.0, 0.0, 0.0, 0.0]).unwrap(); 12];
        let out = render_reverb(&set, &w_only, &[1.0; 12], &fb).unwrap();
        for l in 1..50 {
            let scale = layout.elements()[l].weight / layout.elements()[0].weight;
            for (a, b) in out[l].iter().zip(&out[0]) {
                assert!((a - scale * b).abs() < 1e-12);
            }
        }
        // A Y-only mix distributes energy like |Y_1^-1|^2 over the array.
        let y_only = vec![MixingVector::new(MixSubset::Wyxzr, [0.0, 1.0, 0.0, 0.0, 0.0]).unwrap(); 12];
        let out = render_reverb(&set, &y_only, &[1.0; 12], &fb).unwrap();
        let e: Vec<f64> = out.iter().map(|o| energy(o)).collect();
        let pattern: Vec<f64> = layout
            .elements()
            .iter()
            .map(|el| (el.weight * sh_eval(ShIndex::new(1, -1).unwrap(), &el.direction)).powi(2))
            .collect();
        let (se, sp) = (e.iter().sum::<f64>(), pattern.iter().sum::<f64>());
        for (a, b) in e.iter().zip(&pattern) {
            assert!((a / se - b / sp).abs() < 1e-9);
        }
    }

    #[test]
    fn mixing_commutes_with_speaker_permutation() {
        let fb = small_bank();
        let layout = fixtures::lebedev50();
        let amb = random_amb(4, 300, 8, 16000);
        let set = simple_source_decode(&amb, &layout, &RegularizationPolicy::default()).unwrap();
        let mut swapped = set.clone();
        swapped.weights.reverse();
        let mix = vec![MixingVector::new(MixSubset::Wyxz, [0.5, -1.0, 0.25, 1.0, 0.0]).unwrap(); 12];
        let a = render_reverb(&set, &mix, &[1.0; 12], &fb).unwrap();
        let mut b = render_reverb(&swapped, &mix, &[1.0; 12], &fb).unwrap();
        b.reverse();
        assert_eq!(a, b);
    }

    #[test]
    fn mixing_vector_rules() {
        assert!(MixingVector::new(MixSubset::Wy, [1.0, 1.0, 0.5, 0.0, 0.0]).is_err());
        let m = MixingVector::identity(MixSubset::Wyz);
        assert_eq!(m.coeffs(), [1.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(ChannelGroup::of(3), ChannelGroup::X);
        assert_eq!("wyxzr".parse::<MixSubset>().unwrap(), MixSubset::Wyxzr);
        let d = Direction::new(PI / 2.0, 0.0).unwrap();
        assert!(sh_eval(ShIndex::from_acn(3), &d) > 0.4);
    }
}
