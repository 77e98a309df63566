use num_complex::Complex64;

use super::expansion::radial_bn;
use super::{channel_count, sh_vector, ShIndex, Wavenumber};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, ArrayRole};
use crate::signal::{bin_frequency, fft_len, irfft, rfft, AmbisonicSignal, AmbisonicSpectrum};

/// Phase-preserving magnitude limiter `g / (1 + (|g|/g_max)^p)^(1/p)`.
///
/// `p = 1` is the plain soft cap; larger `p` keeps gains well below the cap
/// untouched to high precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftCap {
    pub max_gain: f64,
    pub sharpness: u32,
}

impl SoftCap {
    pub fn apply(&self, g: Complex64) -> Complex64 {
        let ratio = g.norm() / self.max_gain;
        if ratio == 0.0 {
            return g;
        }
        let p = self.sharpness.max(1) as i32;
        g / (1.0 + ratio.powi(p)).powf(1.0 / p as f64)
    }
}

/// Limits on radial inversion gains (`1/b_n` when encoding, the near-field
/// term when decoding).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RegularizationPolicy {
    /// Cap relative to the gain at the reference `kr`, dB.
    pub max_gain_db: f64,
    /// Knee exponent of the soft cap.
    pub sharpness: u32,
    /// `k r` at which the per-order reference gain is taken.
    pub reference_kr: f64,
}

impl Default for RegularizationPolicy {
    fn default() -> Self {
        Self { max_gain_db: 20.0, sharpness: 8, reference_kr: 2.0 }
    }
}

impl RegularizationPolicy {
    pub fn cap(&self, reference_gain: f64) -> SoftCap {
        SoftCap { max_gain: reference_gain * 10f64.powf(self.max_gain_db / 20.0), sharpness: self.sharpness }
    }

    /// Regularized `1/b_n(k r_e)` evaluated on the sphere surface.
    pub fn inverse_radial(&self, n: usize, k: Wavenumber, r_e: f64) -> Result<Complex64> {
        if k.value() == 0.0 {
            // DC passes through order 0 only
            return Ok(if n == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
        }
        let reference = Wavenumber::new(self.reference_kr / r_e)?;
        let g_ref = radial_bn(n, reference, r_e, r_e)?.inv().norm();
        let g = radial_bn(n, k, r_e, r_e)?.inv();
        Ok(self.cap(g_ref).apply(g))
    }
}

/// Encodes capsule pressure spectra into Ambisonic coefficients:
/// `A_nm(k) = sum_q w_q P_q(k) Y_nm(dir_q) / b_n(k r_e)`.
///
/// `pressures[q][bin]` pairs with `wavenumbers[bin]`.
pub fn sh_encode_capsules(
    pressures: &[Vec<Complex64>],
    wavenumbers: &[Wavenumber],
    geom: &ArrayGeometry,
    order: usize,
    reg: &RegularizationPolicy,
) -> Result<Vec<Vec<Complex64>>> {
    geom.require(ArrayRole::CapsuleArray)?;
    let need = channel_count(order);
    if geom.len() < need {
        return Err(Error::Undersampled { order, have: geom.len(), need });
    }
    if pressures.len() != geom.len() {
        return Err(Error::Shape(format!(
            "{} capsule spectra for {} capsules",
            pressures.len(),
            geom.len()
        )));
    }
    if pressures.iter().any(|p| p.len() != wavenumbers.len()) {
        return Err(Error::Shape("capsule spectra and wavenumber grid differ in length".into()));
    }
    let weighted_sh: Vec<Vec<f64>> = geom
        .elements()
        .iter()
        .map(|e| sh_vector(order, &e.direction).into_iter().map(|y| y * e.weight).collect())
        .collect();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); wavenumbers.len()]; need];
    for (bin, &k) in wavenumbers.iter().enumerate() {
        let inv: Vec<Complex64> = (0..=order)
            .map(|n| reg.inverse_radial(n, k, geom.radius()))
            .collect::<Result<_>>()?;
        for (acn, channel) in out.iter_mut().enumerate() {
            let n = ShIndex::from_acn(acn).order();
            let mut acc = Complex64::new(0.0, 0.0);
            for (p, ysh) in pressures.iter().zip(&weighted_sh) {
                acc += p[bin] * ysh[acn];
            }
            channel[bin] = acc * inv[n];
        }
    }
    Ok(out)
}

/// Time-domain capsule signals to a bare-convention Ambisonic signal of the
/// same length. Output samples are f32-representable.
pub fn encode_capsule_signals(
    capsules: &[Vec<f64>],
    sample_rate: u32,
    geom: &ArrayGeometry,
    order: usize,
    reg: &RegularizationPolicy,
    speed_of_sound: f64,
) -> Result<AmbisonicSignal> {
    let len = capsules.first().map_or(0, Vec::len);
    if len == 0 {
        return Err(Error::EmptySignal);
    }
    let nfft = fft_len(len);
    let spectra: Vec<Vec<Complex64>> = capsules.iter().map(|c| rfft(c, nfft)).collect();
    let ks = (0..=nfft / 2)
        .map(|b| Wavenumber::from_frequency(bin_frequency(b, nfft, sample_rate as f64), speed_of_sound))
        .collect::<Result<Vec<_>>>()?;
    let mut coeffs = sh_encode_capsules(&spectra, &ks, geom, order, reg)?;
    super::to_bare_convention(&mut coeffs);
    let channels = coeffs
        .iter()
        .map(|c| {
            let mut t = irfft(c, nfft);
            t.truncate(len);
            t.into_iter().map(crate::signal::snap_f32).collect()
        })
        .collect();
    AmbisonicSignal::new(order, sample_rate, channels)
}

/// Spectrum of a time-domain Ambisonic signal with [`fft_len`] padding.
pub fn ambisonic_spectrum(signal: &AmbisonicSignal) -> AmbisonicSpectrum {
    let nfft = fft_len(signal.len());
    AmbisonicSpectrum {
        order: signal.order(),
        sample_rate: signal.sample_rate(),
        nfft,
        channels: signal.channels().iter().map(|c| rfft(c, nfft)).collect(),
    }
}
