//! Fourth-order complex gammatone analysis/synthesis filterbank after
//! Hohmann (2002), with per-band energy (ATF) measurement.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{Error, Result};

const ORDER: i32 = 4;
const ERB_L: f64 = 24.7;
const ERB_Q: f64 = 9.265;
/// Synthesis delay of the filterbank, seconds.
pub const DESIGN_DELAY_S: f64 = 0.004;
const GRID_POINTS: usize = 1500;
const REFINE_ITERATIONS: usize = 100;

pub fn erb_hz(f: f64) -> f64 {
    ERB_L + f / ERB_Q
}

pub fn erb_rate(f: f64) -> f64 {
    ERB_Q * (1.0 + f / (ERB_L * ERB_Q)).ln()
}

pub fn erb_rate_to_hz(e: f64) -> f64 {
    ERB_L * ERB_Q * ((e / ERB_Q).exp() - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammatoneBand {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    coef: Complex64,
    norm: f64,
    delay: usize,
    /// Synthesis weight: phase alignment times gain.
    weight: Complex64,
}

impl GammatoneBand {
    fn new(center_hz: f64, sample_rate: f64) -> Self {
        let bandwidth_hz = erb_hz(center_hz);
        // Pole radius such that the cascade is 3 dB down at +-ERB/2.
        let phi = PI * bandwidth_hz / sample_rate;
        let u = 10f64.powf(-3.0 / ORDER as f64 / 10.0);
        let p = (-2.0 + 2.0 * u * phi.cos()) / (1.0 - u);
        let lambda = -p / 2.0 - (p * p / 4.0 - 1.0).sqrt();
        let beta = 2.0 * PI * center_hz / sample_rate;
        let coef = Complex64::from_polar(lambda, beta);
        Self {
            center_hz,
            bandwidth_hz,
            coef,
            norm: 2.0 * (1.0 - lambda).powi(ORDER),
            delay: 0,
            weight: Complex64::new(1.0, 0.0),
        }
    }

    /// Analysis response at normalized angular frequency `w` (rad/sample).
    fn response(&self, w: f64) -> Complex64 {
        let d = Complex64::new(1.0, 0.0) - self.coef * Complex64::from_polar(1.0, -w);
        self.norm / d.powi(ORDER)
    }

    fn filter(&self, x: &[f64]) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v * self.norm, 0.0)).collect();
        for _ in 0..ORDER {
            let mut state = Complex64::new(0.0, 0.0);
            for v in out.iter_mut() {
                state = *v + self.coef * state;
                *v = state;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammatoneFilterbank {
    sample_rate: u32,
    delay: usize,
    bands: Vec<GammatoneBand>,
}

/// Per-band energies.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedEnergy(pub Vec<f64>);

impl BandedEnergy {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_db(&self) -> Vec<f64> {
        self.0.iter().map(|&e| 10.0 * e.max(1e-300).log10()).collect()
    }
}

pub fn design(sample_rate: u32, n_bands: usize, f_lo: f64, f_hi: f64) -> Result<GammatoneFilterbank> {
    let fs = sample_rate as f64;
    if !(f_lo > 0.0 && f_lo < f_hi && f_hi < fs / 2.0) {
        return Err(Error::Filterbank(format!(
            "band range [{f_lo}, {f_hi}] Hz must satisfy 0 < f_lo < f_hi < {}",
            fs / 2.0
        )));
    }
    if n_bands < 2 {
        return Err(Error::Filterbank("need at least two bands".into()));
    }
    let (e_lo, e_hi) = (erb_rate(f_lo), erb_rate(f_hi));
    let step = (e_hi - e_lo) / (n_bands - 1) as f64;
    let mut bands: Vec<GammatoneBand> =
        (0..n_bands).map(|i| GammatoneBand::new(erb_rate_to_hz(e_lo + step * i as f64), fs)).collect();

    let delay = (DESIGN_DELAY_S * fs).round() as usize;
    let mut impulse = vec![0.0; delay + 1];
    impulse[0] = 1.0;
    for band in &mut bands {
        let h = band.filter(&impulse);
        let (peak, _) = h
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, v)| if v.norm() > acc.1 { (i, v.norm()) } else { acc });
        band.delay = delay - peak;
        band.weight = h[peak].norm() / h[peak];
    }

    let mut fb = GammatoneFilterbank { sample_rate, delay, bands };
    let centers: Vec<f64> = fb.bands.iter().map(|b| 2.0 * PI * b.center_hz / fs).collect();
    for _ in 0..100 {
        let resp: Vec<f64> = centers.iter().map(|&w| fb.response(w).norm()).collect();
        let mut worst: f64 = 0.0;
        for (band, r) in fb.bands.iter_mut().zip(&resp) {
            band.weight /= r;
            worst = worst.max((r - 1.0).abs());
        }
        if worst < 1e-12 {
            break;
        }
    }
    fb.refine_truncated_bands()?;
    Ok(fb)
}

impl GammatoneFilterbank {
    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn bands(&self) -> &[GammatoneBand] {
        &self.bands
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bands.iter().map(|b| b.center_hz).collect()
    }

    /// Low bands whose envelope peaks after the design delay cannot be peak
    /// aligned; their complex synthesis weights are refit so the summed
    /// magnitude response is flat (free phase below the crossover, pure
    /// design delay above it, aligned bands left untouched).
    fn refine_truncated_bands(&mut self) -> Result<()> {
        let free: Vec<usize> = (0..self.n_bands()).filter(|&i| self.bands[i].delay == 0).collect();
        let Some(&last) = free.last() else {
            return Ok(());
        };
        let fs = self.sample_rate as f64;
        let crossover = 1.5 * self.bands[last].center_hz;
        let (lo, hi) = (self.bands[0].center_hz, self.bands[self.n_bands() - 1].center_hz);
        let grid: Vec<f64> = (0..GRID_POINTS)
            .map(|i| 2.0 * PI / fs * lo * (hi / lo).powf(i as f64 / (GRID_POINTS - 1) as f64))
            .collect();
        // Real-linear map from (Re c, Im c) of each free band to the response.
        let basis: Vec<Vec<(Complex64, Complex64)>> = grid
            .iter()
            .map(|&w| {
                free.iter()
                    .map(|&i| {
                        let b = &self.bands[i];
                        let (hp, hn) = (b.response(w), b.response(-w).conj());
                        let e = Complex64::from_polar(0.5, -w * b.delay as f64);
                        ((hp + hn) * e, Complex64::new(0.0, 1.0) * (hp - hn) * e)
                    })
                    .collect()
            })
            .collect();
        for _ in 0..REFINE_ITERATIONS {
            let mut rows = Vec::with_capacity(2 * grid.len());
            let mut target = Vec::with_capacity(2 * grid.len());
            for (&w, cols) in grid.iter().zip(&basis) {
                let total = self.response(w);
                let fixed = total
                    - free.iter().zip(cols).map(|(&i, (br, bi))| br * self.bands[i].weight.re + bi * self.bands[i].weight.im).sum::<Complex64>();
                let want = if w / (2.0 * PI) * fs > crossover {
                    Complex64::from_polar(1.0, -w * self.delay as f64)
                } else {
                    total / total.norm()
                } - fixed;
                rows.push(cols.iter().map(|c| c.0.re).chain(cols.iter().map(|c| c.1.re)).collect());
                rows.push(cols.iter().map(|c| c.0.im).chain(cols.iter().map(|c| c.1.im)).collect());
                target.push(want.re);
                target.push(want.im);
            }
            let x = crate::linalg::least_squares(&rows, &target)?;
            for (k, &i) in free.iter().enumerate() {
                self.bands[i].weight = Complex64::new(x[k], x[k + free.len()]);
            }
        }
        Ok(())
    }

    /// Analysis-to-synthesis delay in samples.
    pub fn delay_samples(&self) -> usize {
        self.delay
    }

    /// Transfer function of analysis followed by synthesis for real input,
    /// at `w` rad/sample. Includes the design delay.
    pub fn response(&self, w: f64) -> Complex64 {
        self.bands
            .iter()
            .map(|b| {
                let pos = b.weight * b.response(w);
                let neg = (b.weight * b.response(-w)).conj();
                0.5 * (pos + neg) * Complex64::from_polar(1.0, -w * b.delay as f64)
            })
            .sum()
    }

    pub fn analyze_band(&self, x: &[f64], band: usize) -> Vec<Complex64> {
        self.bands[band].filter(x)
    }

    pub fn analyze(&self, x: &[f64]) -> Vec<Vec<Complex64>> {
        (0..self.n_bands()).map(|i| self.analyze_band(x, i)).collect()
    }

    /// Real contribution of one band to the synthesis output. The result is
    /// `delay_samples()` longer than the band signal.
    pub fn synthesize_band(&self, z: &[Complex64], band: usize) -> Vec<f64> {
        let b = &self.bands[band];
        let mut out = vec![0.0; z.len() + self.delay];
        let factor = b.weight;
        for (o, v) in out[b.delay..].iter_mut().zip(z) {
            *o = (factor * v).re;
        }
        out
    }

    pub fn synthesize(&self, bands: &[Vec<Complex64>]) -> Result<Vec<f64>> {
        self.check_bands(bands.len())?;
        let len = bands.iter().map(Vec::len).max().unwrap_or(0) + self.delay;
        let mut out = vec![0.0; len];
        for (i, z) in bands.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.synthesize_band(z, i)) {
                *o += v;
            }
        }
        Ok(out)
    }

    /// Analysis, per-band scaling and synthesis, one band at a time.
    pub fn apply_band_gains(&self, x: &[f64], gains: &[f64]) -> Result<Vec<f64>> {
        self.check_bands(gains.len())?;
        let mut out = vec![0.0; x.len() + self.delay];
        for (i, &g) in gains.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let mut z = self.analyze_band(x, i);
            z.iter_mut().for_each(|v| *v *= g);
            for (o, v) in out.iter_mut().zip(self.synthesize_band(&z, i)) {
                *o += v;
            }
        }
        Ok(out)
    }

    /// Energy at the output of every analysis filter.
    pub fn atf(&self, x: &[f64]) -> BandedEnergy {
        BandedEnergy((0..self.n_bands()).map(|i| band_energy(&self.analyze_band(x, i))).collect())
    }

    /// Plain-text band table (index, centre frequency, bandwidth).
    pub fn band_table(&self) -> String {
        let mut s = String::from("band\tf_c_hz\terb_hz\n");
        for (i, b) in self.bands.iter().enumerate() {
            let _ = writeln!(s, "{i}\t{:.3}\t{:.3}", b.center_hz, b.bandwidth_hz);
        }
        s
    }

    pub(crate) fn check_bands(&self, n: usize) -> Result<()> {
        if n != self.n_bands() {
            return Err(Error::Shape(format!("{n} bands given, filterbank has {}", self.n_bands())));
        }
        Ok(())
    }
}

pub fn band_energy(z: &[Complex64]) -> f64 {
    z.iter().map(Complex64::norm_sqr).sum()
}

impl Default for GammatoneFilterbank {
    fn default() -> Self {
        design(44100, 42, 70.0, 16700.0).expect("default filterbank parameters are valid")
    }
}
