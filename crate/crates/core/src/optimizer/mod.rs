//! Compensation profile optimization: direct gains, reverb gains and
//! per-band mixing vectors from recording and playback impulse responses.

mod direct;
mod grid;
mod profile;
mod reverb;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambidec::{MixSubset, MixingVector};
use crate::capture::{beamform, spatialize_direct, subtract_reverb};
use crate::error::{Error, Result};
use crate::gammatone::{band_energy, GammatoneFilterbank};
use crate::geometry::ArrayGeometry;
use crate::metrics::{interaural_coherence, max_lag_samples, DEFAULT_MAX_LAG_S};
use crate::sh::{Direction, RegularizationPolicy};
use crate::signal::{AmbisonicSignal, Stereo};
use crate::vbap::{triangulate, vbap_gains_on, PanNormalization, VbapGains};

pub use direct::{assemble_direct_brinr, direct_chain, optimize_direct_gains, solve_direct_gains, DirectGains};
pub use grid::{grid_search_band, grid_search_ic, BandModel, Candidate};
pub use profile::ProfileFlags;
pub use reverb::{assemble_reverb_brinr, optimize_reverb_gain, reverb_gain, ReverbChain, ReverbGains};

/// Default direct/reverb boundary after the onset, seconds.
pub const DEFAULT_T_SPLIT_S: f64 = 0.010;
/// Onset: first sample within this many dB of the peak.
pub const ONSET_THRESHOLD_DB: f64 = -20.0;
/// Default IC tie tolerance of the grid search.
pub const DEFAULT_IC_TIE_TOLERANCE: f64 = 0.03;
/// Bands this far below the peak band are not optimized.
pub const ENERGY_FLOOR_DB: f64 = -80.0;

/// Everything the optimizer measures: the reference BRIR of the source in the
/// recording room, the Ambisonic RIR at the recording position, and one BRIR
/// per playback loudspeaker.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponseSet {
    pub brir_ref: Stereo,
    pub rir_rec: AmbisonicSignal,
    pub brir_play: Vec<Stereo>,
    pub sample_rate: u32,
    pub t_split: f64,
}

impl ImpulseResponseSet {
    pub fn new(
        brir_ref: Stereo,
        rir_rec: AmbisonicSignal,
        brir_play: Vec<Stereo>,
        sample_rate: u32,
        t_split: f64,
    ) -> Result<Self> {
        if !(t_split > 0.0) {
            return Err(Error::Domain(format!("t_split {t_split} must be positive")));
        }
        if rir_rec.sample_rate() != sample_rate {
            return Err(Error::SampleRate { expected: sample_rate, got: rir_rec.sample_rate() });
        }
        if brir_ref.left.len() != brir_ref.right.len() || brir_ref.is_empty() {
            return Err(Error::Shape("reference BRIR ears must be non-empty and equally long".into()));
        }
        if brir_play.is_empty() {
            return Err(Error::Shape("no playback BRIRs".into()));
        }
        let len = brir_play[0].left.len();
        if brir_play.iter().any(|b| b.left.len() != len || b.right.len() != len) {
            return Err(Error::Shape("playback BRIRs differ in length".into()));
        }
        Ok(Self { brir_ref, rir_rec, brir_play, sample_rate, t_split })
    }

    pub fn loudspeakers(&self) -> usize {
        self.brir_play.len()
    }

    fn check_layout(&self, layout: &ArrayGeometry) -> Result<()> {
        if layout.len() != self.loudspeakers() {
            return Err(Error::Shape(format!(
                "{} playback BRIRs for {} loudspeakers",
                self.loudspeakers(),
                layout.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

/// `f(0..n)` in order, on the calling thread or across the rayon pool.
pub(crate) fn map_indexed<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        ExecMode::Parallel => (0..n).into_par_iter().map(f).collect(),
    }
}

/// Gammatone analysis outputs per band and ear: `left[i]`, `right[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedStereo {
    pub left: Vec<Vec<Complex64>>,
    pub right: Vec<Vec<Complex64>>,
}

impl BandedStereo {
    pub fn analyze(x: &Stereo, fb: &GammatoneFilterbank, mode: ExecMode) -> Self {
        let left = map_indexed(mode, fb.n_bands(), |i| fb.analyze_band(&x.left, i));
        let right = map_indexed(mode, fb.n_bands(), |i| fb.analyze_band(&x.right, i));
        Self { left, right }
    }

    pub fn n_bands(&self) -> usize {
        self.left.len()
    }

    pub fn ear(&self, ear: usize) -> &[Vec<Complex64>] {
        if ear == 0 {
            &self.left
        } else {
            &self.right
        }
    }

    /// Band energies `[left, right]`.
    pub fn atf(&self) -> [Vec<f64>; 2] {
        [0, 1].map(|e| self.ear(e).iter().map(|z| band_energy(z)).collect())
    }

    pub fn scaled(&self, gains: &[f64]) -> Self {
        let s = |bands: &[Vec<Complex64>]| -> Vec<Vec<Complex64>> {
            bands.iter().zip(gains).map(|(z, g)| z.iter().map(|v| v * g).collect()).collect()
        };
        Self { left: s(&self.left), right: s(&self.right) }
    }
}

/// First sample (over both ears) within 20 dB of the joint peak.
pub fn onset(ir: &Stereo) -> Result<usize> {
    let peak = ir.left.iter().chain(&ir.right).fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 || !peak.is_finite() {
        return Err(Error::OnsetNotFound);
    }
    let thr = peak * 10f64.powf(ONSET_THRESHOLD_DB / 20.0);
    let first = |x: &[f64]| x.iter().position(|v| v.abs() >= thr).unwrap_or(usize::MAX);
    Ok(first(&ir.left).min(first(&ir.right)))
}

/// Complementary rectangular split `t_split` seconds after the onset.
/// `direct + reverb` equals the input exactly.
pub fn split_brir(brir: &Stereo, t_split: f64, sample_rate: u32) -> Result<(Stereo, Stereo)> {
    if !(t_split > 0.0) {
        return Err(Error::Domain(format!("t_split {t_split} must be positive")));
    }
    let cut = onset(brir)? + (t_split * sample_rate as f64).round() as usize;
    if cut >= brir.len() {
        return Err(Error::Domain(format!(
            "split point {cut} is beyond the impulse response ({} samples)",
            brir.len()
        )));
    }
    let part = |x: &[f64], direct: bool| -> Vec<f64> {
        x.iter().enumerate().map(|(n, &v)| if (n < cut) == direct { v } else { 0.0 }).collect()
    };
    Ok((
        Stereo::new(part(&brir.left, true), part(&brir.right, true)),
        Stereo::new(part(&brir.left, false), part(&brir.right, false)),
    ))
}

/// Mixing-coefficient search grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Symmetric bounds for (w, y, x, z, r).
    pub bounds: [f64; 5],
    pub steps: [f64; 5],
    pub subset: MixSubset,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { bounds: [1.0; 5], steps: [0.25; 5], subset: MixSubset::default() }
    }
}

impl GridSpec {
    pub fn uniform(bound: f64, step: f64, subset: MixSubset) -> Self {
        Self { bounds: [bound; 5], steps: [step; 5], subset }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, (&b, &s)) in self.bounds.iter().zip(&self.steps).enumerate() {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Domain(format!("grid step {s} for coefficient {k} must be positive")));
            }
            if !(b.is_finite() && b >= 0.0) || (b != 0.0 && b < s) {
                return Err(Error::Domain(format!("grid bound {b} for coefficient {k} must be 0 or at least the step {s}")));
            }
        }
        Ok(())
    }

    /// Values of coefficient `k` in ascending order; `[0]` when the group is
    /// inactive or its bound is 0.
    pub fn values(&self, k: usize) -> Vec<f64> {
        let group = crate::ambidec::ChannelGroup::ALL[k];
        if !self.subset.is_active(group) || self.bounds[k] == 0.0 {
            return vec![0.0];
        }
        let n = (self.bounds[k] / self.steps[k] + 1e-9).floor() as i64;
        (-n..=n).map(|j| j as f64 * self.steps[k]).collect()
    }

    /// All grid points in lexicographic (w, y, x, z, r) order.
    pub fn points(&self) -> Vec<[f64; 5]> {
        let axes: Vec<Vec<f64>> = (0..5).map(|k| self.values(k)).collect();
        let mut out = vec![[0.0; 5]];
        for (k, axis) in axes.iter().enumerate() {
            out = out
                .iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = *p;
                        q[k] = v;
                        q
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Left-ear weight of the direct gains.
    pub x: f64,
    /// Left-ear weight of the reverb gains.
    pub y: f64,
    pub grid: GridSpec,
    pub max_lag_s: f64,
    /// IC errors this close to the best count as ties; see `grid_search_band`.
    pub ic_tie_tolerance: f64,
    pub pan: PanNormalization,
    pub regularization: RegularizationPolicy,
    pub speed_of_sound: f64,
    pub exec: ExecMode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            x: 0.5,
            y: 0.5,
            grid: GridSpec::default(),
            max_lag_s: DEFAULT_MAX_LAG_S,
            ic_tie_tolerance: DEFAULT_IC_TIE_TOLERANCE,
            pan: PanNormalization::default(),
            regularization: RegularizationPolicy::default(),
            speed_of_sound: crate::sh::SPEED_OF_SOUND,
            exec: ExecMode::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("x", self.x), ("y", self.y)] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Domain(format!("ear weight {name} = {w} must lie in [0, 1]")));
            }
        }
        if !(self.max_lag_s >= 0.0) {
            return Err(Error::Domain("maximum lag must be non-negative".into()));
        }
        if !(self.ic_tie_tolerance >= 0.0 && self.ic_tie_tolerance.is_finite()) {
            return Err(Error::Domain("IC tie tolerance must be finite and non-negative".into()));
        }
        self.grid.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompensationProfile {
    pub sample_rate: u32,
    pub centers_hz: Vec<f64>,
    pub g_dir: Vec<f64>,
    pub g_rev: Vec<f64>,
    pub mix: Vec<MixingVector>,
    pub subset: MixSubset,
    pub x: f64,
    pub y: f64,
    pub grid: GridSpec,
    pub t_split: f64,
    pub flags: Vec<ProfileFlags>,
    /// |IC - IC_ref| of the selected grid point, per band.
    pub ic_error: Vec<f64>,
}

impl CompensationProfile {
    pub fn n_bands(&self) -> usize {
        self.g_dir.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_bands();
        if [self.centers_hz.len(), self.g_rev.len(), self.mix.len(), self.flags.len(), self.ic_error.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::Shape("profile columns differ in length".into()));
        }
        if self.g_dir.iter().chain(&self.g_rev).any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::Domain("profile gains must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Profile plus the diagnostics gathered on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimization {
    pub profile: CompensationProfile,
    pub warnings: Vec<String>,
    pub direct: DirectGains,
    pub vbap: VbapGains,
}

/// Beamformed direct signal and the reverberant residual of a recording.
pub fn separate(amb: &AmbisonicSignal, doa: &Direction) -> Result<(crate::capture::BeamformedSignal, AmbisonicSignal)> {
    let bf = beamform(amb, doa, true)?;
    let spat = spatialize_direct(&bf, amb.order())?;
    let rev = subtract_reverb(amb, &spat)?;
    Ok((bf, rev))
}

/// Split, direct gains, direct-path residual reverb, then the per-band
/// mixing-vector search with matched reverb gains.
pub fn optimize_profile(
    set: &ImpulseResponseSet,
    layout: &ArrayGeometry,
    doa: &Direction,
    fb: &GammatoneFilterbank,
    config: &OptimizerConfig,
) -> Result<Optimization> {
    config.validate()?;
    set.check_layout(layout)?;
    if fb.sample_rate() != set.sample_rate {
        return Err(Error::SampleRate { expected: set.sample_rate, got: fb.sample_rate() });
    }
    let mode = config.exec;
    let fs = set.sample_rate;
    let (ref_dir, ref_rev) = split_brir(&set.brir_ref, set.t_split, fs)?;
    let (bf, h_rev) = separate(&set.rir_rec, doa)?;
    let vbap = vbap_gains_on(doa, layout, &triangulate(layout)?, config.pan)?;
    let chain_dir = direct_chain(set, &bf.samples, &vbap)?;
    let (rep_dir, _) = split_brir(&chain_dir, set.t_split, fs)?;
    let direct = solve_direct_gains(&ref_dir, &rep_dir, fb, config.x, mode)?;

    let reverb = ReverbChain::new(set, &h_rev, layout, &config.regularization, config.speed_of_sound)?;
    let ic_ref = interaural_coherence(&set.brir_ref, fb, config.max_lag_s);
    let max_lag = max_lag_samples(config.max_lag_s, fs);
    let ref_rev_atf = [fb.atf(&ref_rev.left).0, fb.atf(&ref_rev.right).0];
    let results = map_indexed(mode, fb.n_bands(), |i| {
        let model = BandModel::from_chains(
            fb,
            i,
            direct.gains[i],
            &chain_dir,
            &rep_dir,
            &reverb,
            [ref_rev_atf[0][i], ref_rev_atf[1][i]],
            ic_ref.ic[i],
            max_lag,
            config.grid.subset,
        );
        // Bands are already parallel; the inner search stays on this thread.
        let inner = if mode == ExecMode::Parallel { ExecMode::Sequential } else { mode };
        grid_search_band(&model, &config.grid, config.y, config.ic_tie_tolerance, inner)
    });

    let centers = fb.centers();
    let mut warnings = Vec::new();
    let mut flags = Vec::with_capacity(results.len());
    for (i, (_, cand)) in results.iter().enumerate() {
        let f = ProfileFlags {
            direct_floor: direct.flagged[i],
            reverb_clamped: cand.clamped,
            reverb_no_energy: cand.no_energy,
        };
        if f.reverb_clamped {
            warnings.push(format!(
                "band {i} ({:.0} Hz): the playback room already supplies at least the reference reverberant energy; reverb gain clamped to 0 (compensation needs a playback T30 no longer than the recording room's)",
                centers[i]
            ));
        }
        if f.reverb_no_energy {
            warnings.push(format!("band {i} ({:.0} Hz): reverb chain carries no energy; reverb gain set to 0", centers[i]));
        }
        if f.direct_floor {
            warnings.push(format!("band {i} ({:.0} Hz): direct energy below the floor; direct gain set to 0", centers[i]));
        }
        flags.push(f);
    }
    let profile = CompensationProfile {
        sample_rate: fs,
        centers_hz: centers,
        g_dir: direct.gains.clone(),
        g_rev: results.iter().map(|r| r.1.g_rev).collect(),
        mix: results.iter().map(|r| r.0).collect(),
        subset: config.grid.subset,
        x: config.x,
        y: config.y,
        grid: config.grid.clone(),
        t_split: set.t_split,
        flags,
        ic_error: results.iter().map(|r| r.1.error).collect(),
    };
    profile.validate()?;
    Ok(Optimization { profile, warnings, direct, vbap })
}
