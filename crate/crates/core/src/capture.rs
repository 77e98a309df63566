//! Direct-sound extraction: a beam toward the known source direction, its
//! plane-wave re-spatialization, and the reverberant residual.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sh::{sh_vector, Direction};
use crate::signal::{snap, AmbisonicSignal, AmbisonicSpectrum};

/// Mono output of the beamformer together with its steering direction.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformedSignal {
    pub samples: Vec<f64>,
    pub doa: Direction,
    pub sample_rate: u32,
}

/// Sum of `Y_nm(d)^2` over all channels up to `order`, i.e. `(N+1)^2 / 4 pi`.
pub fn beam_norm(order: usize) -> f64 {
    ((order + 1) * (order + 1)) as f64 / (4.0 * PI)
}

/// Per-channel weights of the axis-symmetric max-directivity beam. With
/// `normalize` a unit plane wave from `doa` gives unit output.
pub fn beamform_weights(order: usize, doa: &Direction, normalize: bool) -> Vec<f64> {
    let y = sh_vector(order, doa);
    if normalize {
        let s = beam_norm(order);
        y.into_iter().map(|v| v / s).collect()
    } else {
        y
    }
}

pub fn beamform(amb: &AmbisonicSignal, doa: &Direction, normalize: bool) -> Result<BeamformedSignal> {
    if amb.is_empty() {
        return Err(Error::EmptySignal);
    }
    let w = beamform_weights(amb.order(), doa, normalize);
    let mut out = vec![0.0; amb.len()];
    for (ch, &wc) in amb.channels().iter().zip(&w) {
        for (o, &x) in out.iter_mut().zip(ch) {
            *o += wc * x;
        }
    }
    for v in &mut out {
        *v = snap(*v);
    }
    Ok(BeamformedSignal { samples: out, doa: *doa, sample_rate: amb.sample_rate() })
}

/// Plane-wave spatialization with bare harmonic values: channel `(n, m)`
/// carries `s_BF * Y_nm(doa)`.
pub fn spatialize_direct(bf: &BeamformedSignal, order: usize) -> Result<AmbisonicSignal> {
    let y = sh_vector(order, &bf.doa);
    let channels = y.iter().map(|&yc| bf.samples.iter().map(|&s| snap(s * yc)).collect()).collect();
    AmbisonicSignal::new(order, bf.sample_rate, channels)
}

/// Channel-wise `amb - spatialized`. Exact, so adding `spatialized` back
/// restores `amb` bit for bit.
pub fn subtract_reverb(amb: &AmbisonicSignal, spatialized: &AmbisonicSignal) -> Result<AmbisonicSignal> {
    amb.check_same_shape(spatialized)?;
    let channels = amb
        .channels()
        .iter()
        .zip(spatialized.channels())
        .map(|(a, s)| a.iter().zip(s).map(|(x, y)| x - y).collect())
        .collect();
    Ok(AmbisonicSignal::from_grid_channels(amb.order(), amb.sample_rate(), channels))
}

/// Frequency-domain beam, bin by bin.
pub fn beamform_spectrum(amb: &AmbisonicSpectrum, doa: &Direction, normalize: bool) -> Vec<Complex64> {
    let w = beamform_weights(amb.order, doa, normalize);
    let mut out = vec![Complex64::new(0.0, 0.0); amb.bins()];
    for (ch, &wc) in amb.channels.iter().zip(&w) {
        for (o, &x) in out.iter_mut().zip(ch) {
            *o += x * wc;
        }
    }
    out
}

pub fn spatialize_spectrum(bf: &[Complex64], doa: &Direction, order: usize, like: &AmbisonicSpectrum) -> AmbisonicSpectrum {
    let y = sh_vector(order, doa);
    AmbisonicSpectrum {
        order,
        sample_rate: like.sample_rate,
        nfft: like.nfft,
        channels: y.iter().map(|&yc| bf.iter().map(|&s| s * yc).collect()).collect(),
    }
}

pub fn subtract_spectrum(amb: &AmbisonicSpectrum, spatialized: &AmbisonicSpectrum) -> Result<AmbisonicSpectrum> {
    if amb.order != spatialized.order || amb.bins() != spatialized.bins() {
        return Err(Error::Shape("spectra differ in order or bin count".into()));
    }
    let channels = amb
        .channels
        .iter()
        .zip(&spatialized.channels)
        .map(|(a, s)| a.iter().zip(s).map(|(x, y)| x - y).collect())
        .collect();
    Ok(AmbisonicSpectrum { channels, ..amb.clone() })
}
