use num_complex::Complex64;

use super::{map_indexed, BandedStereo, ExecMode, ImpulseResponseSet};
use crate::ambidec::{simple_source_decode_with, ChannelGroup, DecodedDrivingSet, MixingVector};
use crate::error::{Error, Result};
use crate::gammatone::GammatoneFilterbank;
use crate::geometry::ArrayGeometry;
use crate::sh::RegularizationPolicy;
use crate::signal::{irfft, rfft, AmbisonicSignal, Stereo};

/// Decoded reverberation heard through the playback room, summed per channel
/// group: `groups[ear][g] = sum_{c in g} f_c * sum_l w_lc BRIR_l`. Mixing is
/// linear in the groups, so any mixing vector is a weighted sum of these.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverbChain {
    pub groups: [Vec<Vec<f64>>; 2],
}

impl ReverbChain {
    pub fn new(
        set: &ImpulseResponseSet,
        h_rev: &AmbisonicSignal,
        layout: &ArrayGeometry,
        reg: &RegularizationPolicy,
        speed_of_sound: f64,
    ) -> Result<Self> {
        let decoded = simple_source_decode_with(h_rev, layout, reg, speed_of_sound)?;
        Self::from_decoded(&decoded, &set.brir_play)
    }

    pub fn from_decoded(decoded: &DecodedDrivingSet, brir_play: &[Stereo]) -> Result<Self> {
        if decoded.loudspeakers() != brir_play.len() {
            return Err(Error::Shape(format!(
                "{} decoder rows for {} playback BRIRs",
                decoded.loudspeakers(),
                brir_play.len()
            )));
        }
        if decoded.is_empty() {
            return Err(Error::EmptySignal);
        }
        let brir_len = brir_play.iter().map(Stereo::len).max().unwrap_or(0);
        let out_len = decoded.len() + brir_len - 1;
        let nfft = out_len.next_power_of_two();
        let bins = nfft / 2 + 1;
        let f_spec: Vec<Vec<Complex64>> = decoded.filtered.iter().map(|f| rfft(f, nfft)).collect();
        let groups = [0usize, 1].map(|ear| {
            let mut acc = vec![vec![Complex64::new(0.0, 0.0); bins]; ChannelGroup::ALL.len()];
            for (c, fc) in f_spec.iter().enumerate() {
                let mut proj = vec![0.0; brir_len];
                for (l, b) in brir_play.iter().enumerate() {
                    let w = decoded.weights[l][c];
                    let x = if ear == 0 { &b.left } else { &b.right };
                    proj.iter_mut().zip(x).for_each(|(p, v)| *p += w * v);
                }
                let bspec = rfft(&proj, nfft);
                let g = &mut acc[ChannelGroup::of(c).index()];
                g.iter_mut().zip(fc.iter().zip(&bspec)).for_each(|(a, (p, q))| *a += p * q);
            }
            acc.iter()
                .map(|spec| {
                    let mut t = irfft(spec, nfft);
                    t.truncate(out_len);
                    t
                })
                .collect::<Vec<_>>()
        });
        Ok(Self { groups })
    }

    pub fn len(&self) -> usize {
        self.groups[0].first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `sum_g m_g groups[ear][g]`.
    pub fn mixed(&self, ear: usize, mix: &MixingVector) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (g, sig) in self.groups[ear].iter().enumerate() {
            let m = mix.coeffs()[g];
            if m != 0.0 {
                out.iter_mut().zip(sig).for_each(|(o, v)| *o += m * v);
            }
        }
        out
    }
}

/// Band-split reverb reproduction: `g_rev^(i) * analysis_i(sum_g m_g^(i) groups_g)`.
pub fn assemble_reverb_brinr(
    chain: &ReverbChain,
    mix: &[MixingVector],
    g_rev: &[f64],
    fb: &GammatoneFilterbank,
) -> Result<BandedStereo> {
    fb.check_bands(mix.len())?;
    fb.check_bands(g_rev.len())?;
    let ear = |e: usize| {
        map_indexed(ExecMode::Parallel, fb.n_bands(), |i| {
            let mut z = fb.analyze_band(&chain.mixed(e, &mix[i]), i);
            z.iter_mut().for_each(|v| *v *= g_rev[i]);
            z
        })
    };
    Ok(BandedStereo { left: ear(0), right: ear(1) })
}

/// Gain that fills the reverberant energy gap of one band and ear:
/// `g^2 = (target - residual) / chain`. Returns `(g, clamped, no_energy)`;
/// a non-positive gap clamps to 0, as does a silent chain.
pub fn reverb_gain(target: f64, residual: f64, chain: f64) -> (f64, bool, bool) {
    if !(chain > 0.0) {
        return (0.0, false, true);
    }
    let gap = target - residual;
    if !(gap > 0.0) {
        return (0.0, true, false);
    }
    ((gap / chain).sqrt(), false, false)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReverbGains {
    pub gains: Vec<f64>,
    pub per_ear: [Vec<f64>; 2],
    pub clamped: Vec<bool>,
    pub no_energy: Vec<bool>,
}

/// Per-band reverb gains for fixed mixing vectors, treating the direct
/// residual and the reverb chain as uncorrelated; ears averaged with `y`.
pub fn optimize_reverb_gain(
    ref_rev: &Stereo,
    chain: &ReverbChain,
    mix: &[MixingVector],
    direct_residual: &BandedStereo,
    fb: &GammatoneFilterbank,
    y: f64,
) -> Result<ReverbGains> {
    if !(0.0..=1.0).contains(&y) {
        return Err(Error::Domain(format!("ear weight {y} must lie in [0, 1]")));
    }
    fb.check_bands(mix.len())?;
    fb.check_bands(direct_residual.n_bands())?;
    let target = [fb.atf(&ref_rev.left).0, fb.atf(&ref_rev.right).0];
    let residual = direct_residual.atf();
    let unit = assemble_reverb_brinr(chain, mix, &vec![1.0; fb.n_bands()], fb)?.atf();
    let n = fb.n_bands();
    let per: Vec<[(f64, bool, bool); 2]> = (0..n)
        .map(|i| [0, 1].map(|e| reverb_gain(target[e][i], residual[e][i], unit[e][i])))
        .collect();
    let weighted = |pick: fn(&(f64, bool, bool)) -> bool, i: usize| {
        (y > 0.0 && pick(&per[i][0])) || (y < 1.0 && pick(&per[i][1]))
    };
    Ok(ReverbGains {
        gains: per.iter().map(|p| y * p[0].0 + (1.0 - y) * p[1].0).collect(),
        per_ear: [0, 1].map(|e| per.iter().map(|p| p[e].0).collect()),
        clamped: (0..n).map(|i| weighted(|p| p.1, i)).collect(),
        no_energy: (0..n).map(|i| weighted(|p| p.2, i)).collect(),
    })
}
