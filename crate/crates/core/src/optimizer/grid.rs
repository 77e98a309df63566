use num_complex::Complex64;
use rayon::prelude::*;

use super::{map_indexed, reverb_gain, ExecMode, GridSpec, ReverbChain};
use crate::ambidec::{ChannelGroup, MixSubset, MixingVector};
use crate::gammatone::{band_energy, GammatoneFilterbank};
use crate::metrics::cross_correlation;
use crate::signal::Stereo;

/// Terms: 0 is the (gained) direct reproduction, 1..=5 the reverb groups.
const TERMS: usize = 6;
type Mat = [[f64; TERMS]; TERMS];
/// Mixed chain energy below this fraction of `|m|^2` times the strongest
/// group energy is treated as zero.
const CANCELLATION: f64 = 1e-12;

/// One band's reproduction as a function of the mixing vector. With
/// `v = (1, g m_w, g m_y, g m_x, g m_z, g m_r)` the ear signals are
/// `sum_a v_a s_a`, so their energies and lagged cross-correlations are
/// quadratic forms in `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandModel {
    pub band: usize,
    pub ic_ref: f64,
    /// Reference reverberant energy per ear.
    pub target: [f64; 2],
    /// Reverberant energy of the direct reproduction per ear.
    pub residual: [f64; 2],
    active: [bool; TERMS],
    /// Complex band energy Gram of the reverb groups, per ear.
    chain_gram: [[[f64; 5]; 5]; 2],
    /// Gram of the real band signals, per ear.
    real_gram: [Mat; 2],
    /// `lags[q + max_lag][a][b] = sum_n s_a^L[n] s_b^R[n + q]`.
    lags: Vec<Mat>,
    max_lag: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub g_rev: f64,
    pub ic: f64,
    pub lag: i64,
    pub error: f64,
    pub clamped: bool,
    pub no_energy: bool,
}

impl BandModel {
    /// `direct[ear]` and `groups[ear][g]` are complex band signals; `None`
    /// marks an inactive group.
    pub fn new(
        band: usize,
        direct: [&[Complex64]; 2],
        groups: [Vec<Option<Vec<Complex64>>>; 2],
        residual: [f64; 2],
        target: [f64; 2],
        ic_ref: f64,
        max_lag: usize,
    ) -> Self {
        let len = direct
            .iter()
            .map(|d| d.len())
            .chain(groups.iter().flatten().flatten().map(Vec::len))
            .max()
            .unwrap_or(0);
        let mut active = [true; TERMS];
        for g in 0..5 {
            active[g + 1] = groups[0][g].is_some() && groups[1][g].is_some();
        }
        let real = |ear: usize| -> Vec<Vec<f64>> {
            (0..TERMS)
                .map(|a| {
                    let z: &[Complex64] = if a == 0 {
                        direct[ear]
                    } else {
                        groups[ear][a - 1].as_deref().unwrap_or(&[])
                    };
                    let mut v: Vec<f64> = z.iter().map(|c| c.re).collect();
                    v.resize(len, 0.0);
                    v
                })
                .collect()
        };
        let sig = [real(0), real(1)];
        let mut real_gram = [[[0.0; TERMS]; TERMS]; 2];
        let mut chain_gram = [[[0.0; 5]; 5]; 2];
        for e in 0..2 {
            for a in 0..TERMS {
                for b in 0..TERMS {
                    if active[a] && active[b] {
                        real_gram[e][a][b] = sig[e][a].iter().zip(&sig[e][b]).map(|(x, y)| x * y).sum();
                    }
                }
            }
            for a in 0..5 {
                for b in 0..5 {
                    if let (Some(x), Some(y)) = (&groups[e][a], &groups[e][b]) {
                        chain_gram[e][a][b] = x.iter().zip(y).map(|(p, q)| (p * q.conj()).re).sum();
                    }
                }
            }
        }
        let q_max = max_lag as i64;
        let lags = (-q_max..=q_max)
            .map(|q| {
                let mut m = [[0.0; TERMS]; TERMS];
                for a in 0..TERMS {
                    for b in 0..TERMS {
                        if active[a] && active[b] {
                            m[a][b] = cross_correlation(&sig[0][a], &sig[1][b], q);
                        }
                    }
                }
                m
            })
            .collect();
        Self { band, ic_ref, target, residual, active, chain_gram, real_gram, lags, max_lag }
    }

    /// Builds band `i` from the full direct chain (scaled by `g_dir`), its
    /// direct part, and the reverb chain.
    #[allow(clippy::too_many_arguments)]
    pub fn from_chains(
        fb: &GammatoneFilterbank,
        i: usize,
        g_dir: f64,
        chain_dir: &Stereo,
        rep_dir: &Stereo,
        reverb: &ReverbChain,
        target: [f64; 2],
        ic_ref: f64,
        max_lag: usize,
        subset: MixSubset,
    ) -> Self {
        let ears = [(&chain_dir.left, &rep_dir.left), (&chain_dir.right, &rep_dir.right)];
        let mut direct = Vec::with_capacity(2);
        let mut residual = [0.0; 2];
        for (e, (full, dir)) in ears.iter().enumerate() {
            let mut z = fb.analyze_band(full, i);
            z.iter_mut().for_each(|v| *v *= g_dir);
            let rev: Vec<f64> = full.iter().zip(dir.iter()).map(|(a, b)| a - b).collect();
            residual[e] = g_dir * g_dir * band_energy(&fb.analyze_band(&rev, i));
            direct.push(z);
        }
        let groups = [0, 1].map(|e| {
            ChannelGroup::ALL
                .iter()
                .map(|&g| subset.is_active(g).then(|| fb.analyze_band(&reverb.groups[e][g.index()], i)))
                .collect()
        });
        Self::new(i, [&direct[0], &direct[1]], groups, residual, target, ic_ref, max_lag)
    }

    pub fn evaluate(&self, m: &[f64; 5], y: f64) -> Candidate {
        let mut per = [(0.0, false, false); 2];
        for (e, p) in per.iter_mut().enumerate() {
            let den: f64 = (0..5)
                .map(|a| m[a] * (0..5).map(|b| self.chain_gram[e][a][b] * m[b]).sum::<f64>())
                .sum();
            // Mixes that cancel to rounding noise carry no energy.
            let strongest = (0..5).map(|a| self.chain_gram[e][a][a]).fold(0.0, f64::max);
            let scale: f64 = m.iter().map(|v| v * v).sum::<f64>() * strongest;
            let den = if den > CANCELLATION * scale { den } else { 0.0 };
            *p = reverb_gain(self.target[e], self.residual[e], den);
        }
        let g = y * per[0].0 + (1.0 - y) * per[1].0;
        let weighted = |k: fn(&(f64, bool, bool)) -> bool| (y > 0.0 && k(&per[0])) || (y < 1.0 && k(&per[1]));
        let mut v = [1.0; TERMS];
        for a in 0..5 {
            v[a + 1] = g * m[a];
        }
        let form = |mat: &Mat| -> f64 {
            let mut s = 0.0;
            for a in 0..TERMS {
                if !self.active[a] || v[a] == 0.0 {
                    continue;
                }
                let mut r = 0.0;
                for b in 0..TERMS {
                    if self.active[b] {
                        r += mat[a][b] * v[b];
                    }
                }
                s += v[a] * r;
            }
            s
        };
        let el = form(&self.real_gram[0]);
        let er = form(&self.real_gram[1]);
        let (ic, lag) = if el > 0.0 && er > 0.0 {
            let norm = (el * er).sqrt();
            let mut best = (f64::NEG_INFINITY, 0i64);
            for (k, mat) in self.lags.iter().enumerate() {
                let c = form(mat) / norm;
                if c > best.0 {
                    best = (c, k as i64 - self.max_lag as i64);
                }
            }
            best
        } else {
            (0.0, 0)
        };
        Candidate {
            g_rev: g,
            ic,
            lag,
            error: (ic - self.ic_ref).abs(),
            clamped: weighted(|p| p.1),
            no_energy: weighted(|p| p.2),
        }
    }
}

/// Exhaustive search of one band. The smallest IC error wins; among equal
/// errors the lexicographically smallest `(w, y, x, z, r)`. With `tie > 0`
/// every point within `tie` of the smallest error counts as a tie, and the
/// one nearest the plain decode (all active coefficients 1, clipped to the
/// bounds) is taken instead.
pub fn grid_search_band(
    model: &BandModel,
    grid: &GridSpec,
    y: f64,
    tie: f64,
    mode: ExecMode,
) -> (MixingVector, Candidate) {
    let points = grid.points();
    let cands: Vec<Candidate> = match mode {
        ExecMode::Sequential => points.iter().map(|p| model.evaluate(p, y)).collect(),
        ExecMode::Parallel => points.par_iter().map(|p| model.evaluate(p, y)).collect(),
    };
    let mut best = 0;
    for (k, c) in cands.iter().enumerate() {
        if c.error < cands[best].error {
            best = k;
        }
    }
    if tie > 0.0 {
        let limit = cands[best].error + tie;
        let plain: [f64; 5] = std::array::from_fn(|k| grid.values(k).last().map_or(0.0, |v| v.min(1.0)));
        let dist = |p: &[f64; 5]| p.iter().zip(&plain).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let mut pick = best;
        for (k, c) in cands.iter().enumerate() {
            if c.error <= limit && dist(&points[k]) < dist(&points[pick]) {
                pick = k;
            }
        }
        best = pick;
    }
    let mix = MixingVector::new(grid.subset, points[best]).expect("grid points respect the subset");
    (mix, cands[best])
}

pub fn grid_search_ic(
    models: &[BandModel],
    grid: &GridSpec,
    y: f64,
    tie: f64,
    mode: ExecMode,
) -> Vec<(MixingVector, Candidate)> {
    let inner = if mode == ExecMode::Parallel { ExecMode::Sequential } else { mode };
    map_indexed(mode, models.len(), |i| grid_search_band(&models[i], grid, y, tie, inner))
}
