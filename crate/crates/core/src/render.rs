//! Loudspeaker driving signals from a recording and a compensation profile,
//! and their binaural rendering through playback-room BRIRs.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::ambidec::{render_reverb, simple_source_decode_with};
use crate::error::{Error, Result};
use crate::gammatone::GammatoneFilterbank;
use crate::geometry::ArrayGeometry;
use crate::optimizer::{separate, CompensationProfile, OptimizerConfig};
use crate::sh::Direction;
use crate::signal::{irfft, rfft, AmbisonicSignal, Stereo};
use crate::vbap::{direct_driving_signals, triangulate, vbap_gains_on};

/// Compensated feeds: the band-shaped direct sound panned with VBAP plus the
/// mixed, band-gained reverb decode, summed per loudspeaker.
pub fn render_compensated(
    amb: &AmbisonicSignal,
    layout: &ArrayGeometry,
    doa: &Direction,
    profile: &CompensationProfile,
    fb: &GammatoneFilterbank,
    config: &OptimizerConfig,
) -> Result<Vec<Vec<f64>>> {
    profile.validate()?;
    if profile.n_bands() != fb.n_bands() || profile.sample_rate != amb.sample_rate() {
        return Err(Error::Shape(format!(
            "profile has {} bands at {} Hz, filterbank {} bands, signal {} Hz",
            profile.n_bands(),
            profile.sample_rate,
            fb.n_bands(),
            amb.sample_rate()
        )));
    }
    let (bf, rev) = separate(amb, doa)?;
    let pan = vbap_gains_on(doa, layout, &triangulate(layout)?, config.pan)?;
    let direct = direct_driving_signals(&bf, &pan, &profile.g_dir, fb)?;
    let decoded = simple_source_decode_with(&rev, layout, &config.regularization, config.speed_of_sound)?;
    let mut feeds = render_reverb(&decoded, &profile.mix, &profile.g_rev, fb)?;
    for (&l, d) in pan.triangle.iter().zip(&direct) {
        let f = &mut feeds[l];
        if f.len() < d.len() {
            f.resize(d.len(), 0.0);
        }
        f.iter_mut().zip(d).for_each(|(a, b)| *a += b);
    }
    Ok(feeds)
}

/// Unprocessed baseline: the plain simple-source decode of the whole signal.
pub fn render_unp(amb: &AmbisonicSignal, layout: &ArrayGeometry, config: &OptimizerConfig) -> Result<Vec<Vec<f64>>> {
    let decoded = simple_source_decode_with(amb, layout, &config.regularization, config.speed_of_sound)?;
    Ok((0..decoded.loudspeakers()).into_par_iter().map(|l| decoded.loudspeaker_sum(l)).collect())
}

/// `sum_l feed_l * BRIR_l` per ear.
pub fn binauralize(feeds: &[Vec<f64>], brirs: &[Stereo]) -> Result<Stereo> {
    if feeds.len() != brirs.len() {
        return Err(Error::Shape(format!("{} feeds for {} BRIRs", feeds.len(), brirs.len())));
    }
    let flen = feeds.iter().map(Vec::len).max().unwrap_or(0);
    let blen = brirs.iter().map(Stereo::len).max().unwrap_or(0);
    if flen == 0 || blen == 0 {
        return Err(Error::EmptySignal);
    }
    let out_len = flen + blen - 1;
    let nfft = out_len.next_power_of_two();
    let bins = nfft / 2 + 1;
    let zero = || [vec![Complex64::new(0.0, 0.0); bins], vec![Complex64::new(0.0, 0.0); bins]];
    let [l, r] = feeds
        .par_iter()
        .zip(brirs)
        .map(|(f, b)| {
            let fs = rfft(f, nfft);
            [&b.left, &b.right].map(|x| rfft(x, nfft).iter().zip(&fs).map(|(p, q)| p * q).collect::<Vec<_>>())
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(zero(), |mut acc, s| {
            for (a, v) in acc.iter_mut().zip(&s) {
                a.iter_mut().zip(v).for_each(|(p, q)| *p += q);
            }
            acc
        });
    let back = |s: &[Complex64]| {
        let mut t = irfft(s, nfft);
        t.truncate(out_len);
        t
    };
    Ok(Stereo::new(back(&l), back(&r)))
}
