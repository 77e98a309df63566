//! Signal containers and FFT helpers.
//!
//! Time-domain Ambisonic and beamformed samples are held on a fixed grid of
//! step 2^-40 (magnitude below 2^11). Sums and differences of grid values are
//! exact in f64, which makes the direct/reverb split exactly invertible.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::sh::channel_count;

const GRID_SCALE: f64 = 1_099_511_627_776.0; // 2^40
const GRID_LIMIT: f64 = 2048.0;

/// Rounds to the sample grid used by time-domain Ambisonic signals.
pub fn snap(x: f64) -> f64 {
    (x * GRID_SCALE).round() / GRID_SCALE
}

/// Rounds to a value that is both f32-representable and on the sample grid.
pub fn snap_f32(x: f64) -> f64 {
    snap(x as f32 as f64)
}

fn check_grid_range(channels: &[Vec<f64>]) -> Result<()> {
    for ch in channels {
        for &v in ch {
            if !v.is_finite() || v.abs() >= GRID_LIMIT {
                return Err(Error::Domain(format!("sample {v} outside the supported range")));
            }
        }
    }
    Ok(())
}

/// Time-domain Ambisonic signal, channels in ACN order.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbisonicSignal {
    order: usize,
    sample_rate: u32,
    channels: Vec<Vec<f64>>,
}

impl AmbisonicSignal {
    /// Builds a signal; samples are rounded onto the sample grid.
    pub fn new(order: usize, sample_rate: u32, mut channels: Vec<Vec<f64>>) -> Result<Self> {
        if channels.len() != channel_count(order) {
            return Err(Error::Shape(format!(
                "{} channels for order {order}, expected {}",
                channels.len(),
                channel_count(order)
            )));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Shape("channels differ in length".into()));
        }
        check_grid_range(&channels)?;
        for ch in channels.iter_mut() {
            ch.iter_mut().for_each(|v| *v = snap(*v));
        }
        Ok(Self { order, sample_rate, channels })
    }

    pub fn zeros(order: usize, sample_rate: u32, len: usize) -> Self {
        Self { order, sample_rate, channels: vec![vec![0.0; len]; channel_count(order)] }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel(&self, acn: usize) -> &[f64] {
        &self.channels[acn]
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Keeps channels up to `order`.
    pub fn truncated(&self, order: usize) -> Result<Self> {
        if order > self.order {
            return Err(Error::Shape(format!("cannot truncate order {} to {order}", self.order)));
        }
        Ok(Self {
            order,
            sample_rate: self.sample_rate,
            channels: self.channels[..channel_count(order)].to_vec(),
        })
    }

    /// Channel-wise sum; exact on the sample grid.
    pub fn add(&self, other: &AmbisonicSignal) -> Result<AmbisonicSignal> {
        self.check_same_shape(other)?;
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        Ok(Self { order: self.order, sample_rate: self.sample_rate, channels })
    }

    pub(crate) fn check_same_shape(&self, other: &AmbisonicSignal) -> Result<()> {
        if self.order != other.order || self.len() != other.len() {
            return Err(Error::Shape(format!(
                "order/length ({}, {}) vs ({}, {})",
                self.order,
                self.len(),
                other.order,
                other.len()
            )));
        }
        if self.sample_rate != other.sample_rate {
            return Err(Error::SampleRate { expected: self.sample_rate, got: other.sample_rate });
        }
        Ok(())
    }

    pub(crate) fn from_grid_channels(order: usize, sample_rate: u32, channels: Vec<Vec<f64>>) -> Self {
        Self { order, sample_rate, channels }
    }
}

/// Two-ear signal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Stereo {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl Stereo {
    pub fn new(left: Vec<f64>, right: Vec<f64>) -> Self {
        Self { left, right }
    }

    pub fn len(&self) -> usize {
        self.left.len().max(self.right.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ear(&self, ear: Ear) -> &[f64] {
        match ear {
            Ear::Left => &self.left,
            Ear::Right => &self.right,
        }
    }

    pub fn map(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Stereo {
        Stereo { left: f(&self.left), right: f(&self.right) }
    }

    pub fn scaled(&self, g: f64) -> Stereo {
        self.map(|x| x.iter().map(|v| v * g).collect())
    }

    /// Sample-wise sum, zero-extending the shorter operand.
    pub fn plus(&self, other: &Stereo) -> Stereo {
        Stereo { left: add_signals(&self.left, &other.left), right: add_signals(&self.right, &other.right) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ear {
    Left,
    Right,
}

pub const EARS: [Ear; 2] = [Ear::Left, Ear::Right];

pub fn add_signals(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    out[..a.len()].copy_from_slice(a);
    out.iter_mut().zip(b).for_each(|(o, v)| *o += v);
    out
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// FFT size used for spectra of a signal of `len` samples: the next power of
/// two at least twice the length.
pub fn fft_len(len: usize) -> usize {
    (2 * len.max(1)).next_power_of_two()
}

/// Non-negative frequency bins (`nfft/2 + 1`) of a zero-padded real signal.
pub fn rfft(x: &[f64], nfft: usize) -> Vec<Complex64> {
    assert!(x.len() <= nfft, "signal longer than FFT size");
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(nfft, Complex64::new(0.0, 0.0));
    plan(nfft, false).process(&mut buf);
    buf.truncate(nfft / 2 + 1);
    buf
}

/// Inverse of [`rfft`], returning `nfft` real samples.
pub fn irfft(bins: &[Complex64], nfft: usize) -> Vec<f64> {
    assert_eq!(bins.len(), nfft / 2 + 1, "bin count does not match FFT size");
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    buf[..bins.len()].copy_from_slice(bins);
    buf[0].im = 0.0;
    if nfft % 2 == 0 {
        buf[nfft / 2].im = 0.0;
    }
    for k in 1..nfft.div_ceil(2) {
        buf[nfft - k] = bins[k].conj();
    }
    plan(nfft, true).process(&mut buf);
    let scale = 1.0 / nfft as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

/// Frequency in Hz of bin `k` for an `nfft`-point transform.
pub fn bin_frequency(k: usize, nfft: usize, sample_rate: f64) -> f64 {
    k as f64 * sample_rate / nfft as f64
}

/// Linear convolution, length `a.len() + b.len() - 1`.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 {
        let mut out = vec![0.0; out_len];
        let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        for (i, &s) in short.iter().enumerate() {
            if s != 0.0 {
                out[i..i + long.len()].iter_mut().zip(long).for_each(|(o, v)| *o += s * v);
            }
        }
        return out;
    }
    let nfft = out_len.next_power_of_two();
    let fa = rfft(a, nfft);
    let fb = rfft(b, nfft);
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let mut out = irfft(&prod, nfft);
    out.truncate(out_len);
    out
}


/// Frequency-domain Ambisonic signal: `channels[acn][bin]` over the
/// non-negative bins of an `nfft`-point transform.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbisonicSpectrum {
    pub order: usize,
    pub sample_rate: u32,
    pub nfft: usize,
    pub channels: Vec<Vec<Complex64>>,
}

impl AmbisonicSpectrum {
    pub fn bins(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }
}
