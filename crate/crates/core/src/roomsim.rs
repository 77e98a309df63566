//! Synthetic shoebox acoustics: image-source RIRs with an exponential noise
//! tail, Ambisonic receivers, a parametric binaural receiver, and complete
//! impulse-response fixtures.

use std::f64::consts::PI;
use std::str::FromStr;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fixtures, ArrayGeometry};
use crate::optimizer::{ImpulseResponseSet, DEFAULT_T_SPLIT_S};
use crate::sh::{channel_count, sh_vector, Direction};
use crate::signal::{fft_len, irfft, rfft, snap, snap_f32, AmbisonicSignal, Stereo};

pub use crate::sh::SPEED_OF_SOUND;
pub const SAMPLE_RATE: u32 = 44_100;
pub const DEFAULT_HEAD_RADIUS: f64 = 0.0875;
pub const DEFAULT_IMAGE_ORDER: usize = 3;

/// Shadow filter impulse responses are truncated to this many samples.
const SHADOW_TAPS: usize = 128;
const SH_TAIL_STREAM: u64 = 100;

fn default_sample_rate() -> u32 {
    SAMPLE_RATE
}

fn default_speed() -> f64 {
    SPEED_OF_SOUND
}

/// Wall absorption: one value for all six surfaces, or
/// `[x0, x1, y0, y1, z0, z1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Absorption {
    Uniform(f64),
    PerSurface([f64; 6]),
}

impl Absorption {
    fn surfaces(&self) -> [f64; 6] {
        match *self {
            Absorption::Uniform(a) => [a; 6],
            Absorption::PerSurface(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TailModel {
    /// Image sources up to `order`, no noise.
    ImageSource { order: usize },
    /// Direct path plus noise tail.
    NoiseTail,
    /// Image sources up to `order` plus noise tail.
    Hybrid { order: usize },
}

impl Default for TailModel {
    fn default() -> Self {
        TailModel::Hybrid { order: DEFAULT_IMAGE_ORDER }
    }
}

impl TailModel {
    fn image_order(&self) -> usize {
        match *self {
            TailModel::ImageSource { order } | TailModel::Hybrid { order } => order,
            TailModel::NoiseTail => 0,
        }
    }

    fn has_tail(&self) -> bool {
        !matches!(self, TailModel::ImageSource { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub dimensions: [f64; 3],
    pub absorption: Absorption,
    /// Overrides `absorption` with a uniform Sabine value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t60: Option<f64>,
    pub source: [f64; 3],
    pub receiver: [f64; 3],
    pub seed: u64,
    #[serde(default)]
    pub tail: TailModel,
    /// Output length; defaults to T60 + 50 ms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_s: Option<f64>,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
    #[serde(default = "default_speed")]
    pub speed_of_sound: f64,
}

impl RoomSpec {
    pub fn new(dimensions: [f64; 3], t60: f64, source: [f64; 3], receiver: [f64; 3], seed: u64) -> Self {
        Self {
            dimensions,
            absorption: Absorption::Uniform(0.5),
            t60: Some(t60),
            source,
            receiver,
            seed,
            tail: TailModel::default(),
            length_s: None,
            sample_rate: SAMPLE_RATE,
            speed_of_sound: SPEED_OF_SOUND,
        }
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface_areas(&self) -> [f64; 6] {
        let [x, y, z] = self.dimensions;
        [y * z, y * z, x * z, x * z, x * y, x * y]
    }

    fn sabine(&self) -> f64 {
        24.0 * 10f64.ln() / self.speed_of_sound
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Domain(format!("room dimensions {:?} must be positive", self.dimensions)));
        }
        for (name, p) in [("source", self.source), ("receiver", self.receiver)] {
            if !self.inside(p) {
                return Err(Error::Domain(format!("{name} {p:?} is not strictly inside the room")));
            }
        }
        if self.source == self.receiver {
            return Err(Error::Domain("source and receiver coincide".into()));
        }
        if let Some(t) = self.t60 {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Domain(format!("T60 {t} must be positive")));
            }
        } else if self.absorption.surfaces().iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(Error::Domain("wall absorption must lie in (0, 1]".into()));
        }
        if self.sample_rate == 0 || !(self.speed_of_sound > 0.0) {
            return Err(Error::Domain("sample rate and speed of sound must be positive".into()));
        }
        if let Some(l) = self.length_s {
            if !(l > 0.0) {
                return Err(Error::Domain(format!("length {l} must be positive")));
            }
        }
        self.wall_absorption().map(|_| ())
    }

    pub fn inside(&self, p: [f64; 3]) -> bool {
        p.iter().zip(&self.dimensions).all(|(x, d)| *x > 0.0 && *x < *d)
    }

    /// Per-surface absorption after applying the T60 override.
    pub fn wall_absorption(&self) -> Result<[f64; 6]> {
        match self.t60 {
            Some(t) => {
                let s: f64 = self.surface_areas().iter().sum();
                let a = self.sabine() * self.volume() / (s * t);
                if a > 1.0 {
                    return Err(Error::Domain(format!("T60 {t} s is too short for this room (Sabine absorption {a:.3})")));
                }
                Ok([a; 6])
            }
            None => Ok(self.absorption.surfaces()),
        }
    }

    pub fn t60_s(&self) -> Result<f64> {
        if let Some(t) = self.t60 {
            return Ok(t);
        }
        let a: f64 = self.wall_absorption()?.iter().zip(self.surface_areas()).map(|(a, s)| a * s).sum();
        Ok(self.sabine() * self.volume() / a)
    }

    pub fn len_samples(&self) -> Result<usize> {
        let secs = match self.length_s {
            Some(l) => l,
            None => self.t60_s()? + 0.05,
        };
        Ok((secs * self.sample_rate as f64).ceil() as usize)
    }

    fn mean_free_time(&self) -> f64 {
        let s: f64 = self.surface_areas().iter().sum();
        4.0 * self.volume() / s / self.speed_of_sound
    }
}

#[derive(Debug, Clone, Copy)]
struct Image {
    position: [f64; 3],
    amplitude: f64,
    order: usize,
}

fn image_coord(u: i64, s: f64, l: f64) -> f64 {
    if u.rem_euclid(2) == 0 {
        u as f64 * l + s
    } else {
        (u + 1) as f64 * l - s
    }
}

/// Hits on the (lower, upper) wall of one axis for image index `u`.
fn wall_hits(u: i64) -> (i32, i32) {
    let a = u.unsigned_abs() as i32;
    if u >= 0 {
        (a / 2, (a + 1) / 2)
    } else {
        ((a + 1) / 2, a / 2)
    }
}

fn images(room: &RoomSpec, order: usize) -> Result<Vec<Image>> {
    let beta = room.wall_absorption()?.map(|a| (1.0 - a).max(0.0).sqrt());
    let k = order as i64;
    let mut out = Vec::new();
    for ux in -k..=k {
        for uy in -k..=k {
            for uz in -k..=k {
                let o = (ux.abs() + uy.abs() + uz.abs()) as usize;
                if o > order {
                    continue;
                }
                let u = [ux, uy, uz];
                let mut amplitude = 1.0;
                let mut position = [0.0; 3];
                for axis in 0..3 {
                    position[axis] = image_coord(u[axis], room.source[axis], room.dimensions[axis]);
                    let (lo, hi) = wall_hits(u[axis]);
                    amplitude *= beta[2 * axis].powi(lo) * beta[2 * axis + 1].powi(hi);
                }
                if amplitude > 0.0 {
                    out.push(Image { position, amplitude, order: o });
                }
            }
        }
    }
    Ok(out)
}

fn offset(from: [f64; 3], to: [f64; 3]) -> ([f64; 3], f64) {
    let v = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
    let d = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (v, d)
}

/// Expected squared tail amplitude per sample: the diffuse image density
/// `c / (4 pi V)` decaying at 60 dB per T60, faded in over one mean free
/// time after the first reflection.
fn tail_envelope(room: &RoomSpec, len: usize) -> Result<Vec<f64>> {
    let fs = room.sample_rate as f64;
    let c = room.speed_of_sound;
    let t60 = room.t60_s()?;
    let first = images(room, 1)?
        .iter()
        .filter(|im| im.order == 1)
        .map(|im| offset(room.receiver, im.position).1 / c)
        .fold(f64::INFINITY, f64::min);
    let first = if first.is_finite() { first } else { offset(room.receiver, room.source).1 / c };
    let fade = room.mean_free_time();
    let density = c / (4.0 * PI * room.volume() * fs);
    let decay = 6.0 * 10f64.ln() / t60;
    Ok((0..len)
        .map(|n| {
            let t = n as f64 / fs;
            let w = if t < first {
                0.0
            } else if t < first + fade {
                0.5 - 0.5 * (PI * (t - first) / fade).cos()
            } else {
                1.0
            };
            (w * density * (-decay * t).exp()).sqrt()
        })
        .collect())
}

fn gaussian_noise(seed: u64, stream: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Ambisonic RIR at the receiver (bare convention: a plane wave of amplitude
/// `s` from `d` appears as `s Y(d)`).
pub fn simulate_ambisonic_rir(room: &RoomSpec, order: usize) -> Result<AmbisonicSignal> {
    room.validate()?;
    let len = room.len_samples()?;
    let fs = room.sample_rate as f64;
    let c = channel_count(order);
    let mut channels = vec![vec![0.0; len]; c];
    for im in images(room, room.tail.image_order())? {
        let (v, d) = offset(room.receiver, im.position);
        let n = (d / room.speed_of_sound * fs).round() as usize;
        if n >= len {
            continue;
        }
        let y = sh_vector(order, &Direction::from_vector(v)?);
        let a = im.amplitude / (4.0 * PI * d);
        for (ch, yc) in channels.iter_mut().zip(&y) {
            ch[n] += a * yc;
        }
    }
    if room.tail.has_tail() {
        // Isotropic: each orthonormal channel carries 1/(4 pi) of the
        // pressure variance.
        let env = tail_envelope(room, len)?;
        let scale = 1.0 / (4.0 * PI).sqrt();
        for (i, ch) in channels.iter_mut().enumerate() {
            let noise = gaussian_noise(room.seed, SH_TAIL_STREAM + i as u64, len);
            for ((x, e), z) in ch.iter_mut().zip(&env).zip(noise) {
                *x += scale * e * z;
            }
        }
    }
    for ch in &mut channels {
        for x in ch.iter_mut() {
            *x = snap(*x);
        }
    }
    AmbisonicSignal::new(order, room.sample_rate, channels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinauralModel {
    DelayOnly,
    #[default]
    DelayShadow,
}

/// Target interaural coherence of the noise tail.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TailCoherence {
    /// Diffuse field between two points one head diameter apart:
    /// `sin(k 2r) / (k 2r)`.
    #[default]
    Diffuse,
    Constant { value: f64 },
}

impl TailCoherence {
    fn at(&self, freq_hz: f64, radius: f64, c: f64) -> f64 {
        match *self {
            TailCoherence::Diffuse => {
                let x = 2.0 * PI * freq_hz / c * 2.0 * radius;
                if x.abs() < 1e-12 {
                    1.0
                } else {
                    x.sin() / x
                }
            }
            TailCoherence::Constant { value } => value.clamp(-1.0, 1.0),
        }
    }
}

fn default_radius() -> f64 {
    DEFAULT_HEAD_RADIUS
}

fn default_ear_axis() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

/// Spherical-head receiver. `ear_axis` points at the left ear; the default
/// listener faces +x with the left ear at +y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinauralReceiver {
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_ear_axis")]
    pub ear_axis: [f64; 3],
    #[serde(default)]
    pub model: BinauralModel,
    #[serde(default)]
    pub tail_coherence: TailCoherence,
}

impl Default for BinauralReceiver {
    fn default() -> Self {
        Self {
            radius: DEFAULT_HEAD_RADIUS,
            ear_axis: default_ear_axis(),
            model: BinauralModel::default(),
            tail_coherence: TailCoherence::default(),
        }
    }
}

impl BinauralReceiver {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::Domain(format!("head radius {} must be positive", self.radius)));
        }
        Direction::from_vector(self.ear_axis).map(|_| ())
    }

    fn axis(&self) -> [f64; 3] {
        Direction::from_vector(self.ear_axis).map(|d| d.to_vector()).unwrap_or([0.0, 1.0, 0.0])
    }

    /// Woodworth ITD in seconds, positive when the source is on the left.
    pub fn itd(&self, dir: [f64; 3], speed_of_sound: f64) -> f64 {
        let s = dot(dir, self.axis()).clamp(-1.0, 1.0);
        let theta = s.asin();
        self.radius / speed_of_sound * (theta + theta.sin())
    }

    /// Brown-Duda head-shadow coefficient for an ear, limited to 1 so only
    /// the shadowed side is filtered.
    fn shadow_alpha(&self, dir: [f64; 3], ear_sign: f64) -> f64 {
        let cos_inc = (ear_sign * dot(dir, self.axis())).clamp(-1.0, 1.0);
        let inc = cos_inc.acos();
        let alpha_min = 0.1;
        let a = (1.0 + alpha_min / 2.0) + (1.0 - alpha_min / 2.0) * (inc * 180.0 / 150.0).cos();
        a.min(1.0)
    }

    fn shadow_ir(&self, alpha: f64, fs: f64, c: f64) -> Vec<f64> {
        let beta = 2.0 * c / self.radius;
        let k = 2.0 * fs;
        let b0 = (alpha * k + beta) / (k + beta);
        let b1 = (beta - alpha * k) / (k + beta);
        let a1 = (beta - k) / (k + beta);
        let mut h = vec![0.0; SHADOW_TAPS];
        let mut prev_x = 0.0;
        let mut prev_y = 0.0;
        for (n, y) in h.iter_mut().enumerate() {
            let x = if n == 0 { 1.0 } else { 0.0 };
            *y = b0 * x + b1 * prev_x - a1 * prev_y;
            prev_x = x;
            prev_y = *y;
        }
        h
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Binaural RIR at the receiver position.
pub fn simulate_brir(room: &RoomSpec, head: &BinauralReceiver) -> Result<Stereo> {
    room.validate()?;
    head.validate()?;
    let len = room.len_samples()?;
    let fs = room.sample_rate as f64;
    let c = room.speed_of_sound;
    let mut ears = [vec![0.0; len], vec![0.0; len]];
    for im in images(room, room.tail.image_order())? {
        let (v, d) = offset(room.receiver, im.position);
        let dir = Direction::from_vector(v)?.to_vector();
        let itd = head.itd(dir, c);
        let a = im.amplitude / (4.0 * PI * d);
        for (ear, sign) in ears.iter_mut().zip([1.0, -1.0]) {
            let t = d / c - sign * itd / 2.0;
            let n = (t * fs).round() as usize;
            if n >= len {
                continue;
            }
            let alpha = match head.model {
                BinauralModel::DelayOnly => 1.0,
                BinauralModel::DelayShadow => head.shadow_alpha(dir, sign),
            };
            if alpha >= 1.0 {
                ear[n] += a;
            } else {
                for (x, h) in ear[n..].iter_mut().zip(head.shadow_ir(alpha, fs, c)) {
                    *x += a * h;
                }
            }
        }
    }
    if room.tail.has_tail() {
        let env = tail_envelope(room, len)?;
        let [nl, nr] = coherent_noise_pair(room, head, len);
        for (ear, noise) in ears.iter_mut().zip([nl, nr]) {
            for ((x, e), z) in ear.iter_mut().zip(&env).zip(noise) {
                *x += e * z;
            }
        }
    }
    let [left, right] = ears.map(|e| e.into_iter().map(snap_f32).collect::<Vec<_>>());
    Ok(Stereo::new(left, right))
}

/// Two unit-variance noises with frequency-dependent coherence:
/// `L = N1`, `R = g N1 + sqrt(1 - g^2) N2`.
fn coherent_noise_pair(room: &RoomSpec, head: &BinauralReceiver, len: usize) -> [Vec<f64>; 2] {
    let n1 = gaussian_noise(room.seed, 1, len);
    let n2 = gaussian_noise(room.seed, 2, len);
    let nfft = fft_len(len);
    let s1 = rfft(&n1, nfft);
    let s2 = rfft(&n2, nfft);
    let fs = room.sample_rate as f64;
    let mixed: Vec<Complex64> = s1
        .iter()
        .zip(&s2)
        .enumerate()
        .map(|(k, (a, b))| {
            let g = head.tail_coherence.at(k as f64 * fs / nfft as f64, head.radius, room.speed_of_sound);
            a * g + b * (1.0 - g * g).max(0.0).sqrt()
        })
        .collect();
    let mut right = irfft(&mixed, nfft);
    right.truncate(len);
    [n1, right]
}

/// Named fixture scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Recording room T30 about 0.5 s, comparable to the playback room.
    TheaterLike,
    /// Recording room T30 about 1.5 s, playback room 0.5 s.
    ChurchLike,
    /// Direct-path-only playback BRIRs.
    AnechoicPlayback,
    /// Identical recording and playback rooms with the source on a
    /// loudspeaker position, first reflections more than 12 ms late.
    EqualRooms,
    /// Playback room more reverberant (1.5 s) than the recording room (0.5 s).
    ReverberantPlayback,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::TheaterLike,
        Scenario::ChurchLike,
        Scenario::AnechoicPlayback,
        Scenario::EqualRooms,
        Scenario::ReverberantPlayback,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::TheaterLike => "theater-like",
            Scenario::ChurchLike => "church-like",
            Scenario::AnechoicPlayback => "anechoic-playback",
            Scenario::EqualRooms => "equal-rooms",
            Scenario::ReverberantPlayback => "reverberant-playback",
        }
    }

    pub fn spec(self) -> ScenarioSpec {
        let listening_room = |t60: f64, seed: u64| {
            let rx = [5.0, 4.0, 2.0];
            RoomSpec::new([10.0, 8.0, 4.0], t60, [6.5, 4.0, 2.0], rx, seed)
        };
        let talker = |rx: [f64; 3], dist: f64, az_deg: f64| {
            let a = az_deg.to_radians();
            [rx[0] + dist * a.cos(), rx[1] + dist * a.sin(), rx[2]]
        };
        let theater = || {
            let rx = [8.0, 7.0, 1.7];
            RoomSpec::new([20.0, 15.0, 8.0], 0.5, talker(rx, 5.0, 30.0), rx, 11)
        };
        let large = |seed: u64| {
            let rx = [6.0, 5.0, 4.0];
            RoomSpec::new([12.0, 10.0, 8.0], 0.5, [7.5, 5.0, 4.0], rx, seed)
        };
        let (recording, playback) = match self {
            Scenario::TheaterLike => (theater(), listening_room(0.5, 1000)),
            Scenario::ChurchLike => {
                let rx = [12.0, 9.0, 1.7];
                (RoomSpec::new([30.0, 20.0, 15.0], 1.5, talker(rx, 10.0, 30.0), rx, 21), listening_room(0.5, 2000))
            }
            Scenario::AnechoicPlayback => {
                let mut play = large(3000);
                play.tail = TailModel::ImageSource { order: 0 };
                play.length_s = Some(0.05);
                (large(31), play)
            }
            Scenario::EqualRooms => (large(41), large(4000)),
            Scenario::ReverberantPlayback => (theater(), listening_room(1.5, 5000)),
        };
        ScenarioSpec {
            recording,
            playback,
            head: BinauralReceiver::default(),
            order: 4,
            t_split: DEFAULT_T_SPLIT_S,
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown scenario '{s}'")))
    }
}

/// Scenario file contents. The playback room's `source` is ignored: one BRIR
/// is simulated per loudspeaker of the layout, centred on the playback
/// receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub recording: RoomSpec,
    pub playback: RoomSpec,
    #[serde(default)]
    pub head: BinauralReceiver,
    pub order: usize,
    pub t_split: f64,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub set: ImpulseResponseSet,
    pub layout: ArrayGeometry,
    pub doa: Direction,
    pub spec: ScenarioSpec,
}

pub fn build_fixture(scenario: Scenario) -> Fixture {
    build_fixture_from(&scenario.spec(), &fixtures::lebedev50()).expect("built-in scenarios are valid")
}

/// Reference BRIR, recording SH RIR, and one playback BRIR per loudspeaker.
/// Playback BRIRs are scaled by `4 pi R` so each direct path has unit
/// amplitude at the listener.
pub fn build_fixture_from(spec: &ScenarioSpec, layout: &ArrayGeometry) -> Result<Fixture> {
    let rec = &spec.recording;
    let play = &spec.playback;
    if rec.sample_rate != play.sample_rate {
        return Err(Error::SampleRate { expected: rec.sample_rate, got: play.sample_rate });
    }
    let brir_ref = simulate_brir(rec, &spec.head)?;
    let rir_rec = simulate_ambisonic_rir(rec, spec.order)?;
    let r = layout.radius();
    let brir_play = layout
        .directions()
        .enumerate()
        .map(|(l, dir)| {
            let v = dir.to_vector();
            let mut room = play.clone();
            room.source = [0, 1, 2].map(|i| play.receiver[i] + r * v[i]);
            room.seed = play.seed.wrapping_add(l as u64);
            simulate_brir(&room, &spec.head).map(|b| b.map(|x| x.iter().map(|v| snap_f32(v * 4.0 * PI * r)).collect()))
        })
        .collect::<Result<Vec<_>>>()?;
    let doa = Direction::from_vector(offset(rec.receiver, rec.source).0)?;
    let set = ImpulseResponseSet::new(brir_ref, rir_rec, brir_play, rec.sample_rate, spec.t_split)?;
    Ok(Fixture { set, layout: layout.clone(), doa, spec: spec.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::beamform;
    use crate::gammatone::GammatoneFilterbank;
    use crate::metrics::{interaural_coherence, schroeder_edc};
    use crate::sh::sh_vector;

    fn anechoic(source: [f64; 3]) -> RoomSpec {
        let mut room = RoomSpec::new([10.0, 8.0, 6.0], 0.5, source, [5.0, 4.0, 3.0], 7);
        room.t60 = None;
        room.absorption = Absorption::Uniform(1.0);
        room.tail = TailModel::ImageSource { order: 0 };
        room.length_s = Some(0.05);
        room
    }

    fn onset(x: &[f64]) -> usize {
        x.iter().position(|v| v.abs() > 0.0).unwrap()
    }

    #[test]
    fn anechoic_direct_path() {
        let room = anechoic([7.0, 5.0, 3.5]);
        let amb = simulate_ambisonic_rir(&room, 2).unwrap();
        let (v, d) = offset(room.receiver, room.source);
        let n = (d / SPEED_OF_SOUND * SAMPLE_RATE as f64).round() as usize;
        let y = sh_vector(2, &Direction::from_vector(v).unwrap());
        for (c, ch) in amb.channels().iter().enumerate() {
            let expect = snap(y[c] / (4.0 * PI * d));
            assert_eq!(ch[n], expect);
            assert_eq!(ch.iter().filter(|v| **v != 0.0).count(), usize::from(expect != 0.0));
        }
    }

    #[test]
    fn image_counts_and_walls() {
        let room = RoomSpec::new([5.0, 4.0, 3.0], 0.4, [1.0, 1.0, 1.0], [4.0, 3.0, 2.0], 0);
        // Octahedral numbers of lattice points with |u|_1 <= K.
        for (k, count) in [(0, 1), (1, 7), (2, 25), (3, 63)] {
            assert_eq!(images(&room, k).unwrap().len(), count);
        }
        assert_eq!(image_coord(1, 1.0, 5.0), 9.0);
        assert_eq!(image_coord(-1, 1.0, 5.0), -1.0);
        assert_eq!(image_coord(2, 1.0, 5.0), 11.0);
        assert_eq!(wall_hits(3), (1, 2));
        assert_eq!(wall_hits(-3), (2, 1));
    }

    #[test]
    fn geometry_errors() {
        let mut room = anechoic([7.0, 5.0, 3.5]);
        room.source = [10.0, 5.0, 3.0];
        assert!(simulate_ambisonic_rir(&room, 1).is_err());
        let mut room = anechoic([7.0, 5.0, 3.5]);
        room.dimensions[2] = -1.0;
        assert!(simulate_brir(&room, &BinauralReceiver::default()).is_err());
        let mut room = RoomSpec::new([3.0, 3.0, 3.0], 0.05, [1.0, 1.0, 1.0], [2.0, 2.0, 2.0], 0);
        assert!(room.validate().is_err());
        room.t60 = None;
        room.absorption = Absorption::Uniform(0.0);
        assert!(room.validate().is_err());
        let head = BinauralReceiver { radius: 0.0, ..Default::default() };
        assert!(simulate_brir(&anechoic([7.0, 5.0, 3.5]), &head).is_err());
    }

    #[test]
    fn tail_decay_matches_t60() {
        for t60 in [0.5, 1.5] {
            let mut room = RoomSpec::new([20.0, 15.0, 8.0], t60, [12.0, 9.0, 1.7], [8.0, 7.0, 1.7], 3);
            room.tail = TailModel::NoiseTail;
            room.length_s = Some(1.2 * t60);
            let amb = simulate_ambisonic_rir(&room, 1).unwrap();
            let edc = schroeder_edc(amb.channel(0), SAMPLE_RATE).unwrap();
            let t30 = edc.t30.unwrap();
            assert!((t30 / t60 - 1.0).abs() < 0.05, "T30 {t30} vs {t60}");
            let brir = simulate_brir(&room, &BinauralReceiver::default()).unwrap();
            let t30 = schroeder_edc(&brir.left, SAMPLE_RATE).unwrap().t30.unwrap();
            assert!((t30 / t60 - 1.0).abs() < 0.05, "BRIR T30 {t30} vs {t60}");
            // Early reflections steepen the start of the curve a little.
            room.tail = TailModel::default();
            let amb = simulate_ambisonic_rir(&room, 1).unwrap();
            let t30 = schroeder_edc(amb.channel(0), SAMPLE_RATE).unwrap().t30.unwrap();
            assert!((t30 / t60 - 1.0).abs() < 0.1, "hybrid T30 {t30} vs {t60}");
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let room = Scenario::TheaterLike.spec().recording;
        let a = simulate_ambisonic_rir(&room, 2).unwrap();
        let b = simulate_ambisonic_rir(&room, 2).unwrap();
        assert_eq!(a, b);
        let head = BinauralReceiver::default();
        assert_eq!(simulate_brir(&room, &head).unwrap(), simulate_brir(&room, &head).unwrap());
        let mut other = room.clone();
        other.seed += 1;
        assert_ne!(simulate_brir(&other, &head).unwrap(), simulate_brir(&room, &head).unwrap());
    }

    #[test]
    fn median_plane_symmetry() {
        let head = BinauralReceiver { model: BinauralModel::DelayOnly, ..Default::default() };
        let b = simulate_brir(&anechoic([8.0, 4.0, 4.5]), &head).unwrap();
        assert_eq!(b.left, b.right);
        // Receiver centred in y: image pairs mirror across the median plane.
        let mut room = RoomSpec::new([10.0, 8.0, 6.0], 0.6, [8.0, 4.0, 2.0], [5.0, 4.0, 3.0], 2);
        room.tail = TailModel::ImageSource { order: 3 };
        for model in [BinauralModel::DelayOnly, BinauralModel::DelayShadow] {
            let b = simulate_brir(&room, &BinauralReceiver { model, ..Default::default() }).unwrap();
            assert_eq!(b.left, b.right);
        }
    }

    #[test]
    fn woodworth_itd_at_ninety_degrees() {
        let head = BinauralReceiver { model: BinauralModel::DelayOnly, ..Default::default() };
        let itd = head.itd([0.0, 1.0, 0.0], SPEED_OF_SOUND);
        let oracle = 0.0875 / 343.0 * (PI / 2.0 + 1.0);
        assert!((itd - oracle).abs() < 1e-15);
        assert!((itd - 0.655e-3).abs() < 1e-6);
        let b = simulate_brir(&anechoic([5.0, 6.5, 3.0]), &head).unwrap();
        let lag = onset(&b.right) as f64 - onset(&b.left) as f64;
        assert!((lag / SAMPLE_RATE as f64 - oracle).abs() <= 1.0 / SAMPLE_RATE as f64);
        // Source on the right: mirrored.
        let b = simulate_brir(&anechoic([5.0, 1.5, 3.0]), &head).unwrap();
        assert!(onset(&b.left) > onset(&b.right));
    }

    #[test]
    fn shadow_filters_only_the_far_ear() {
        let head = BinauralReceiver::default();
        let b = simulate_brir(&anechoic([5.0, 6.5, 3.0]), &head).unwrap();
        let (nl, nr) = (onset(&b.left), onset(&b.right));
        assert_eq!(b.left.iter().filter(|v| **v != 0.0).count(), 1);
        assert!(b.right[nr..].iter().filter(|v| **v != 0.0).count() > 10);
        // Unit DC gain on the shadowed ear.
        let dc: f64 = b.right.iter().sum();
        assert!((dc / b.left[nl] - 1.0).abs() < 1e-4);
        assert!(b.right[nr].abs() < b.left[nl].abs());
    }

    #[test]
    fn direct_arrival_within_one_sample() {
        for src in [[7.0, 5.0, 3.5], [2.0, 1.0, 1.0], [9.5, 7.5, 5.5]] {
            let room = anechoic(src);
            let d = offset(room.receiver, room.source).1;
            let amb = simulate_ambisonic_rir(&room, 1).unwrap();
            let n = onset(amb.channel(0)) as f64;
            assert!((n - d / SPEED_OF_SOUND * SAMPLE_RATE as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn zero_target_coherence_tail() {
        let fb = GammatoneFilterbank::default();
        // Long decay: the spread of a measured coherence scales with
        // 1/sqrt(bandwidth * duration).
        let mut room = RoomSpec::new([40.0, 30.0, 20.0], 10.0, [24.0, 16.0, 1.7], [20.0, 15.0, 1.7], 9);
        room.tail = TailModel::NoiseTail;
        let head = BinauralReceiver {
            tail_coherence: TailCoherence::Constant { value: 0.0 },
            ..Default::default()
        };
        let mut b = simulate_brir(&room, &head).unwrap();
        // Drop the direct path so only the tail is measured.
        let cut = onset(&b.left).max(onset(&b.right)) + 40;
        for x in b.left[..cut].iter_mut().chain(b.right[..cut].iter_mut()) {
            *x = 0.0;
        }
        let prof = interaural_coherence(&b, &fb, 0.001);
        for (ic, fc) in prof.ic.iter().zip(fb.centers()) {
            if fc > 500.0 {
                assert!(*ic < 0.2, "IC {ic} at {fc} Hz");
            }
        }
    }

    #[test]
    fn beamformer_finds_direct_path() {
        let room = Scenario::ChurchLike.spec().recording;
        let amb = simulate_ambisonic_rir(&room, 4).unwrap();
        let n0 = onset(amb.channel(0));
        let win = AmbisonicSignal::new(
            4,
            SAMPLE_RATE,
            amb.channels().iter().map(|c| c[n0..n0 + 40].to_vec()).collect(),
        )
        .unwrap();
        let truth = Direction::from_vector(offset(room.receiver, room.source).0).unwrap();
        let golden = PI * (3.0 - 5f64.sqrt());
        let mut best = (f64::NEG_INFINITY, truth);
        for i in 0..400 {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / 400.0;
            let rho = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            let d = Direction::from_vector([rho * a.cos(), rho * a.sin(), z]).unwrap();
            let e: f64 = beamform(&win, &d, true).unwrap().samples.iter().map(|v| v * v).sum();
            if e > best.0 {
                best = (e, d);
            }
        }
        assert!(best.1.angle_to(&truth) < 0.15, "argmax off by {}", best.1.angle_to(&truth));
    }

    #[test]
    fn fixtures_are_complete() {
        let f = build_fixture(Scenario::AnechoicPlayback);
        assert_eq!(f.set.loudspeakers(), 50);
        assert_eq!(f.set.rir_rec.order(), 4);
        // Calibrated unit direct path, nothing else.
        for b in &f.set.brir_play {
            for ear in [&b.left, &b.right] {
                let dc: f64 = ear.iter().sum();
                assert!((dc - 1.0).abs() < 1e-4, "direct DC gain {dc}");
            }
        }
        assert!(f.doa.angle_to(&Direction::from_vector([1.0, 0.0, 0.0]).unwrap()) < 1e-12);
        for sc in Scenario::ALL {
            assert_eq!(sc.name().parse::<Scenario>().unwrap(), sc);
            let spec = sc.spec();
            spec.recording.validate().unwrap();
            spec.playback.validate().unwrap();
        }
        let spec = Scenario::ChurchLike.spec();
        assert_eq!(spec.recording.t60_s().unwrap(), 1.5);
        assert_eq!(spec.playback.t60_s().unwrap(), 0.5);
        let text = toml::to_string(&spec).unwrap();
        assert_eq!(toml::from_str::<ScenarioSpec>(&text).unwrap(), spec);
    }

    #[test]
    fn equal_rooms_first_reflection_is_late() {
        let spec = Scenario::EqualRooms.spec();
        for room in [&spec.recording, &spec.playback] {
            let direct = offset(room.receiver, room.source).1;
            for im in images(room, 1).unwrap().iter().filter(|i| i.order == 1) {
                let d = offset(room.receiver, im.position).1;
                assert!((d - direct) / SPEED_OF_SOUND > 0.012);
            }
        }
    }
}
