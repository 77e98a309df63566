use num_complex::Complex64;

use super::{map_indexed, split_brir, BandedStereo, ExecMode, ImpulseResponseSet, ENERGY_FLOOR_DB};
use crate::capture::beamform;
use crate::error::{Error, Result};
use crate::gammatone::{band_energy, GammatoneFilterbank};
use crate::linalg::solve;
use crate::sh::Direction;
use crate::signal::{convolve, Stereo};
use crate::vbap::VbapGains;

const MAX_ITERATIONS: usize = 100;
const TOLERANCE: f64 = 1e-4;
/// Ring-out kept after the last non-zero sample of a direct part, seconds.
const RING_S: f64 = 0.3;

/// `h_BF * sum_j g_j BRIR_{l_j}` per ear: the panned direct sound heard in
/// the playback room.
pub fn direct_chain(set: &ImpulseResponseSet, h_bf: &[f64], gains: &VbapGains) -> Result<Stereo> {
    let mut mix = [vec![0.0; set.brir_play[0].len()], vec![0.0; set.brir_play[0].len()]];
    for (&l, &g) in gains.triangle.iter().zip(&gains.gains) {
        let b = set
            .brir_play
            .get(l)
            .ok_or_else(|| Error::Shape(format!("no playback BRIR for loudspeaker {l}")))?;
        for (m, x) in mix.iter_mut().zip([&b.left, &b.right]) {
            m.iter_mut().zip(x).for_each(|(a, v)| *a += g * v);
        }
    }
    let [l, r] = mix;
    Ok(Stereo::new(convolve(h_bf, &l), convolve(h_bf, &r)))
}

/// Band-split direct reproduction with per-band gains:
/// `g_dir^(i) * analysis_i(h_BF * G^T BRIR)`.
pub fn assemble_direct_brinr(
    set: &ImpulseResponseSet,
    gains: &VbapGains,
    doa: &Direction,
    fb: &GammatoneFilterbank,
    g_dir: &[f64],
) -> Result<BandedStereo> {
    fb.check_bands(g_dir.len())?;
    let bf = beamform(&set.rir_rec, doa, true)?;
    let chain = direct_chain(set, &bf.samples, gains)?;
    Ok(BandedStereo::analyze(&chain, fb, ExecMode::Parallel).scaled(g_dir))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectGains {
    /// Ear-weighted gains.
    pub gains: Vec<f64>,
    pub per_ear: [Vec<f64>; 2],
    /// Bands below the energy floor (gain 0).
    pub flagged: Vec<bool>,
    pub iterations: [usize; 2],
}

/// Beamforms the recording, pans it, splits both chains and solves the
/// direct gains.
pub fn optimize_direct_gains(
    set: &ImpulseResponseSet,
    gains: &VbapGains,
    doa: &Direction,
    fb: &GammatoneFilterbank,
    x: f64,
) -> Result<DirectGains> {
    let bf = beamform(&set.rir_rec, doa, true)?;
    let chain = direct_chain(set, &bf.samples, gains)?;
    let (ref_dir, _) = split_brir(&set.brir_ref, set.t_split, set.sample_rate)?;
    let (rep_dir, _) = split_brir(&chain, set.t_split, set.sample_rate)?;
    solve_direct_gains(&ref_dir, &rep_dir, fb, x, ExecMode::Parallel)
}

/// Per ear, finds non-negative band gains `g` with
/// `ATF_i(synth(g * analysis(rep))) = ATF_i(synth(analysis(ref)))`, started
/// from the per-band ratio; then averages the ears with weight `x`. The
/// bands overlap, so each band's energy is a quadratic form in all gains.
pub fn solve_direct_gains(
    reference: &Stereo,
    reproduced: &Stereo,
    fb: &GammatoneFilterbank,
    x: f64,
    mode: ExecMode,
) -> Result<DirectGains> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("ear weight {x} must lie in [0, 1]")));
    }
    let ring = (RING_S * fb.sample_rate() as f64) as usize;
    let ones = vec![1.0; fb.n_bands()];
    let mut per_ear = Vec::with_capacity(2);
    for (t, r) in [(&reference.left, &reproduced.left), (&reference.right, &reproduced.right)] {
        let target = fb.atf(&fb.apply_band_gains(trimmed(t, ring), &ones)?).0;
        per_ear.push(ear_gains(&target, trimmed(r, ring), fb, mode));
    }
    let (l, r) = (&per_ear[0], &per_ear[1]);
    let n = fb.n_bands();
    let flagged: Vec<bool> = (0..n).map(|i| (x > 0.0 && l.flagged[i]) || (x < 1.0 && r.flagged[i])).collect();
    let gains = (0..n).map(|i| if flagged[i] { 0.0 } else { x * l.gains[i] + (1.0 - x) * r.gains[i] }).collect();
    Ok(DirectGains {
        gains,
        flagged,
        iterations: [l.iterations, r.iterations],
        per_ear: [l.gains.clone(), r.gains.clone()],
    })
}

fn trimmed(x: &[f64], ring: usize) -> &[f64] {
    let last = x.iter().rposition(|v| *v != 0.0).map_or(0, |p| p + 1);
    &x[..(last + ring).min(x.len())]
}

struct EarGains {
    gains: Vec<f64>,
    flagged: Vec<bool>,
    iterations: usize,
}

/// Band `i`'s energy as a quadratic form in all band gains.
struct BandGram {
    m: Vec<Vec<f64>>,
}

impl BandGram {
    fn energy(&self, g: &[f64]) -> f64 {
        self.m.iter().zip(g).map(|(row, a)| a * row.iter().zip(g).map(|(m, b)| m * b).sum::<f64>()).sum()
    }
}

fn ear_gains(target: &[f64], rep: &[f64], fb: &GammatoneFilterbank, mode: ExecMode) -> EarGains {
    let n = fb.n_bands();
    let bands: Vec<Vec<Complex64>> = map_indexed(mode, n, |j| fb.analyze_band(rep, j));
    let rep_atf: Vec<f64> = bands.iter().map(|z| band_energy(z)).collect();
    let synth: Vec<Vec<f64>> = map_indexed(mode, n, |j| fb.synthesize_band(&bands[j], j));
    drop(bands);
    let grams: Vec<BandGram> = map_indexed(mode, n, |i| {
        let y: Vec<Vec<Complex64>> = (0..n).map(|j| fb.analyze_band(&synth[j], i)).collect();
        let m = y
            .iter()
            .map(|a| y.iter().map(|b| a.iter().zip(b).map(|(p, q)| (p * q.conj()).re).sum()).collect())
            .collect();
        BandGram { m }
    });

    let floor = 10f64.powf(ENERGY_FLOOR_DB / 10.0);
    let peak_t = target.iter().cloned().fold(0.0, f64::max);
    let peak_r = rep_atf.iter().cloned().fold(0.0, f64::max);
    let flagged: Vec<bool> =
        (0..n).map(|i| !(target[i] > floor * peak_t && rep_atf[i] > floor * peak_r)).collect();
    // Per-band ratio against the unit-gain resynthesis.
    let ones = vec![1.0; n];
    let mut g: Vec<f64> = (0..n)
        .map(|i| {
            let unit = grams[i].energy(&ones);
            if flagged[i] || !(unit > 0.0) {
                0.0
            } else {
                (target[i] / unit).sqrt()
            }
        })
        .collect();
    let active: Vec<usize> = (0..n).filter(|&i| g[i] > 0.0).collect();
    let iterations = levenberg_marquardt(&grams, target, &active, &mut g);
    EarGains { gains: g, flagged, iterations }
}

/// Sum of squared log-energy errors over the active bands.
fn log_residual(grams: &[BandGram], target: &[f64], active: &[usize], g: &[f64]) -> Vec<f64> {
    active.iter().map(|&i| (grams[i].energy(g) / target[i]).ln()).collect()
}

/// Solves `energy_i(g) = target_i` on the active bands by damped Gauss-Newton
/// in `u = ln g`, which keeps the gains positive. Returns the iteration count.
fn levenberg_marquardt(grams: &[BandGram], target: &[f64], active: &[usize], g: &mut [f64]) -> usize {
    let k = active.len();
    let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut r = log_residual(grams, target, active, g);
    let mut lambda = 1e-3;
    let mut iterations = 1;
    while iterations < MAX_ITERATIONS && r.iter().any(|v| !(v.abs() < TOLERANCE)) {
        iterations += 1;
        // d r_a / d u_b = 2 g_b (M_a g)_b / energy_a
        let jac: Vec<Vec<f64>> = active
            .iter()
            .map(|&a| {
                let m = &grams[a].m;
                let e = grams[a].energy(g);
                active
                    .iter()
                    .map(|&b| 2.0 * g[b] * m[b].iter().zip(g.iter()).map(|(x, y)| x * y).sum::<f64>() / e)
                    .collect()
            })
            .collect();
        let mut jtj = vec![vec![0.0; k]; k];
        let mut jtr = vec![0.0; k];
        for (row, ra) in jac.iter().zip(&r) {
            for p in 0..k {
                jtr[p] += row[p] * ra;
                for q in 0..k {
                    jtj[p][q] += row[p] * row[q];
                }
            }
        }
        let c0 = cost(&r);
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for (p, row) in a.iter_mut().enumerate() {
                row[p] += lambda * jtj[p][p].max(1e-12);
            }
            let Ok(step) = solve(a, jtr.iter().map(|v| -v).collect()) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = g.to_vec();
            for (&b, d) in active.iter().zip(&step) {
                trial[b] *= d.clamp(-20.0, 20.0).exp();
            }
            let rt = log_residual(grams, target, active, &trial);
            if cost(&rt) < c0 {
                g.copy_from_slice(&trial);
                r = rt;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    iterations
}
