//! Objective evaluation: interaural coherence per band, Schroeder decay
//! curves with T30/EDT, and ATF/IC comparison reports.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gammatone::GammatoneFilterbank;
use crate::signal::Stereo;

/// Default interaural lag window, seconds.
pub const DEFAULT_MAX_LAG_S: f64 = 0.001;
/// Upper edge of the band range used for the IC summary, Hz.
pub const IC_SUMMARY_MAX_HZ: f64 = 1500.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceProfile {
    pub ic: Vec<f64>,
    /// Lag of the maximum, samples; positive when the right ear lags.
    pub lag: Vec<i64>,
    /// Bands where an ear carries no energy (IC reported as 0).
    pub silent: Vec<bool>,
}

pub fn max_lag_samples(max_lag_s: f64, sample_rate: u32) -> usize {
    (max_lag_s * sample_rate as f64).round() as usize
}

/// Signed maximum over `|q| <= max_lag` of the normalized cross-correlation
/// `sum_n l[n] r[n+q] / sqrt(E_l E_r)`. Returns `(ic, lag, silent)`; the
/// first maximum in ascending lag order wins.
pub fn band_coherence(left: &[f64], right: &[f64], max_lag: usize) -> (f64, i64, bool) {
    let el: f64 = left.iter().map(|v| v * v).sum();
    let er: f64 = right.iter().map(|v| v * v).sum();
    if el == 0.0 || er == 0.0 {
        return (0.0, 0, true);
    }
    let norm = (el * er).sqrt();
    let mut best = (f64::NEG_INFINITY, 0i64);
    let max_lag = max_lag as i64;
    for q in -max_lag..=max_lag {
        let c = cross_correlation(left, right, q) / norm;
        if c > best.0 {
            best = (c, q);
        }
    }
    (best.0, best.1, false)
}

/// `sum_n l[n] r[n+q]` over the overlap.
pub fn cross_correlation(left: &[f64], right: &[f64], q: i64) -> f64 {
    let (l, r) = if q >= 0 {
        (left, right.get(q as usize..).unwrap_or(&[]))
    } else {
        (left.get((-q) as usize..).unwrap_or(&[]), right)
    };
    l.iter().zip(r).map(|(a, b)| a * b).sum()
}

/// IC from pre-split band signals (`left[i]`, `right[i]` per band).
pub fn iacc(left: &[Vec<f64>], right: &[Vec<f64>], max_lag: usize) -> Result<CoherenceProfile> {
    if left.len() != right.len() {
        return Err(Error::Shape("ears have different band counts".into()));
    }
    if left.iter().zip(right).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::Shape("band signals differ in length between ears".into()));
    }
    let per_band: Vec<(f64, i64, bool)> =
        left.par_iter().zip(right).map(|(l, r)| band_coherence(l, r, max_lag)).collect();
    Ok(CoherenceProfile {
        ic: per_band.iter().map(|b| b.0).collect(),
        lag: per_band.iter().map(|b| b.1).collect(),
        silent: per_band.iter().map(|b| b.2).collect(),
    })
}

/// Per-band IC of a binaural signal; bands are the real parts of the
/// gammatone analysis outputs.
pub fn interaural_coherence(brir: &Stereo, fb: &GammatoneFilterbank, max_lag_s: f64) -> CoherenceProfile {
    let max_lag = max_lag_samples(max_lag_s, fb.sample_rate());
    let per_band: Vec<(f64, i64, bool)> = (0..fb.n_bands())
        .into_par_iter()
        .map(|i| {
            let l: Vec<f64> = fb.analyze_band(&brir.left, i).iter().map(|v| v.re).collect();
            let r: Vec<f64> = fb.analyze_band(&brir.right, i).iter().map(|v| v.re).collect();
            band_coherence(&l, &r, max_lag)
        })
        .collect();
    CoherenceProfile {
        ic: per_band.iter().map(|b| b.0).collect(),
        lag: per_band.iter().map(|b| b.1).collect(),
        silent: per_band.iter().map(|b| b.2).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    pub sample_rate: u32,
    /// Level in dB re total energy, one value per sample.
    pub level_db: Vec<f64>,
    /// None when the curve does not reach -35 dB.
    pub t30: Option<f64>,
    /// None when the curve does not reach -10 dB.
    pub edt: Option<f64>,
}

impl DecayCurve {
    pub fn time(&self, n: usize) -> f64 {
        n as f64 / self.sample_rate as f64
    }
}

pub fn schroeder_edc(ir: &[f64], sample_rate: u32) -> Result<DecayCurve> {
    schroeder_edc_energy(&ir.iter().map(|v| v * v).collect::<Vec<_>>(), sample_rate)
}

/// Decay curve of both ears' summed energy.
pub fn schroeder_edc_stereo(ir: &Stereo, sample_rate: u32) -> Result<DecayCurve> {
    let mut e = vec![0.0; ir.len()];
    for x in [&ir.left, &ir.right] {
        e.iter_mut().zip(x.iter()).for_each(|(a, v)| *a += v * v);
    }
    schroeder_edc_energy(&e, sample_rate)
}

fn schroeder_edc_energy(e: &[f64], sample_rate: u32) -> Result<DecayCurve> {
    let mut tail = vec![0.0; e.len()];
    let mut acc = 0.0;
    for (t, v) in tail.iter_mut().zip(e).rev() {
        acc += v;
        *t = acc;
    }
    if !(acc > 0.0) {
        return Err(Error::EmptySignal);
    }
    let level_db: Vec<f64> = tail.iter().map(|t| 10.0 * (t / acc).log10()).collect();
    // Both T30 and EDT extrapolate the fitted slope to a 60 dB decay.
    let fit = |hi: f64, lo: f64| {
        let start = level_db.iter().position(|&l| l <= hi)?;
        let end = level_db.iter().position(|&l| l <= lo)?;
        if end <= start {
            return None;
        }
        let n = (end - start + 1) as f64;
        let (mut st, mut sl, mut stt, mut stl) = (0.0, 0.0, 0.0, 0.0);
        for (k, &l) in level_db[start..=end].iter().enumerate() {
            let t = (start + k) as f64 / sample_rate as f64;
            st += t;
            sl += l;
            stt += t * t;
            stl += t * l;
        }
        let slope = (n * stl - st * sl) / (n * stt - st * st);
        (slope < 0.0).then(|| -60.0 / slope)
    };
    Ok(DecayCurve { sample_rate, t30: fit(-5.0, -35.0), edt: fit(0.0, -10.0), level_db })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateReport {
    pub name: String,
    pub atf_left_db: Vec<f64>,
    pub atf_right_db: Vec<f64>,
    pub coherence: CoherenceProfile,
    pub decay: DecayCurve,
    /// Mean |ATF difference| to the reference over bands and ears, dB.
    pub mean_atf_error_db: f64,
    /// Mean |IC difference| over bands below 1.5 kHz.
    pub mean_ic_error_low: f64,
    /// |T30 - T30_ref| / T30_ref when both are defined.
    pub t30_rel_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub centers_hz: Vec<f64>,
    pub reference: CandidateReport,
    pub candidates: Vec<CandidateReport>,
}

fn describe(name: &str, ir: &Stereo, fb: &GammatoneFilterbank, max_lag_s: f64) -> Result<CandidateReport> {
    Ok(CandidateReport {
        name: name.to_string(),
        atf_left_db: fb.atf(&ir.left).to_db(),
        atf_right_db: fb.atf(&ir.right).to_db(),
        coherence: interaural_coherence(ir, fb, max_lag_s),
        decay: schroeder_edc_stereo(ir, fb.sample_rate())?,
        mean_atf_error_db: 0.0,
        mean_ic_error_low: 0.0,
        t30_rel_error: Some(0.0),
    })
}

pub fn compare_report(
    reference: &Stereo,
    candidates: &[(String, Stereo)],
    fb: &GammatoneFilterbank,
    max_lag_s: f64,
) -> Result<EvaluationReport> {
    let centers = fb.centers();
    let reference = describe("reference", reference, fb, max_lag_s)?;
    let low: Vec<usize> = (0..centers.len()).filter(|&i| centers[i] < IC_SUMMARY_MAX_HZ).collect();
    let candidates = candidates
        .iter()
        .map(|(name, ir)| {
            let mut c = describe(name, ir, fb, max_lag_s)?;
            let diffs = c
                .atf_left_db
                .iter()
                .zip(&reference.atf_left_db)
                .chain(c.atf_right_db.iter().zip(&reference.atf_right_db))
                .map(|(a, b)| (a - b).abs());
            c.mean_atf_error_db = diffs.sum::<f64>() / (2 * centers.len()) as f64;
            c.mean_ic_error_low = low
                .iter()
                .map(|&i| (c.coherence.ic[i] - reference.coherence.ic[i]).abs())
                .sum::<f64>()
                / low.len().max(1) as f64;
            c.t30_rel_error = match (c.decay.t30, reference.decay.t30) {
                (Some(a), Some(b)) => Some((a - b).abs() / b),
                _ => None,
            };
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport { centers_hz: centers, reference, candidates })
}

impl EvaluationReport {
    /// Per-band table: candidate, band, f_c_hz, atf_left_db, atf_right_db, ic, ic_ref.
    pub fn bands_csv(&self) -> String {
        let mut s = String::from("candidate,band,f_c_hz,atf_left_db,atf_right_db,ic,ic_ref\n");
        for c in std::iter::once(&self.reference).chain(&self.candidates) {
            for (i, f) in self.centers_hz.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{i},{f:.3},{:.4},{:.4},{:.5},{:.5}",
                    c.name, c.atf_left_db[i], c.atf_right_db[i], c.coherence.ic[i], self.reference.coherence.ic[i]
                );
            }
        }
        s
    }

    /// Decay curves decimated to 1 ms: time_s, then one column per candidate.
    pub fn edc_csv(&self) -> String {
        let all: Vec<&CandidateReport> = std::iter::once(&self.reference).chain(&self.candidates).collect();
        let mut s = String::from("time_s");
        for c in &all {
            let _ = write!(s, ",{}", c.name);
        }
        s.push('\n');
        let fs = self.reference.decay.sample_rate as usize;
        let step = (fs / 1000).max(1);
        let len = all.iter().map(|c| c.decay.level_db.len()).max().unwrap_or(0);
        for n in (0..len).step_by(step) {
            let _ = write!(s, "{:.4}", n as f64 / fs as f64);
            for c in &all {
                match c.decay.level_db.get(n) {
                    Some(v) if v.is_finite() => {
                        let _ = write!(s, ",{v:.3}");
                    }
                    _ => s.push_str(",-inf"),
                }
            }
            s.push('\n');
        }
        s
    }

    /// One line per candidate with the summary errors.
    pub fn summary(&self) -> String {
        let fmt_t30 = |t: Option<f64>| t.map_or("undefined".to_string(), |v| format!("{v:.3} s"));
        let mut s = format!("reference: T30 {}\n", fmt_t30(self.reference.decay.t30));
        for c in &self.candidates {
            let _ = writeln!(
                s,
                "{}: mean |ATF error| {:.2} dB, mean |IC error| (<1.5 kHz) {:.3}, T30 {} ({})",
                c.name,
                c.mean_atf_error_db,
                c.mean_ic_error_low,
                fmt_t30(c.decay.t30),
                match (c.decay.t30, self.reference.decay.t30) {
                    (Some(t), Some(r)) => format!("{:+.1}%", 100.0 * (t / r - 1.0)),
                    _ => "n/a".into(),
                },
            );
        }
        s
    }
}
