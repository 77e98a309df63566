//! Multichannel WAV files. Reads PCM 8/16/24/32 and float32, writes float32.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::signal::{AmbisonicSignal, Stereo};

pub const MAX_CHANNELS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct WavData {
    pub sample_rate: u32,
    /// One vector per channel.
    pub channels: Vec<Vec<f64>>,
}

impl WavData {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn wav_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if matches!(io.kind(), std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::Other) => {
            Error::Wav(format!("{}: truncated or malformed file ({io})", path.display()))
        }
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::Wav(format!("{}: {other}", path.display())),
    }
}

/// Integer PCM is scaled by `2^-(bits-1)`, so 16-bit data lands in [-1, 1).
pub fn read_wav(path: &Path) -> Result<WavData> {
    let reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    let n_ch = spec.channels as usize;
    if n_ch == 0 || n_ch > MAX_CHANNELS {
        return Err(Error::Wav(format!("{}: {n_ch} channels (1 to {MAX_CHANNELS} supported)", path.display())));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(path, e))?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / f64::from(1u32 << (bits - 1));
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| wav_err(path, e))?
        }
        (fmt, bits) => {
            return Err(Error::Wav(format!("{}: unsupported {bits}-bit {fmt:?} samples", path.display())));
        }
    };
    let frames = interleaved.len() / n_ch;
    let mut channels = vec![Vec::with_capacity(frames); n_ch];
    for frame in interleaved.chunks_exact(n_ch) {
        for (c, v) in channels.iter_mut().zip(frame) {
            c.push(*v);
        }
    }
    Ok(WavData { sample_rate: spec.sample_rate, channels })
}

/// Float32 output; shorter channels are zero-padded to the longest.
pub fn write_wav(path: &Path, sample_rate: u32, channels: &[Vec<f64>]) -> Result<()> {
    if channels.is_empty() || channels.len() > MAX_CHANNELS {
        return Err(Error::Wav(format!("{} channels (1 to {MAX_CHANNELS} supported)", channels.len())));
    }
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    let len = channels.iter().map(Vec::len).max().unwrap_or(0);
    for n in 0..len {
        for c in channels {
            w.write_sample(c.get(n).copied().unwrap_or(0.0) as f32).map_err(|e| wav_err(path, e))?;
        }
    }
    w.finalize().map_err(|e| wav_err(path, e))
}

/// ACN channel order; the order follows from the channel count.
pub fn read_ambisonic(path: &Path) -> Result<AmbisonicSignal> {
    let w = read_wav(path)?;
    let n = w.channels.len();
    let root = (n as f64).sqrt().round() as usize;
    if root * root != n {
        return Err(Error::Wav(format!("{}: {n} channels is not a full ACN set", path.display())));
    }
    AmbisonicSignal::new(root - 1, w.sample_rate, w.channels)
}

pub fn write_ambisonic(path: &Path, amb: &AmbisonicSignal) -> Result<()> {
    write_wav(path, amb.sample_rate(), amb.channels())
}

pub fn read_stereo(path: &Path) -> Result<(u32, Stereo)> {
    let w = read_wav(path)?;
    if w.channels.len() != 2 {
        return Err(Error::Wav(format!("{}: expected 2 channels, got {}", path.display(), w.channels.len())));
    }
    let mut ch = w.channels.into_iter();
    let (l, r) = (ch.next().unwrap_or_default(), ch.next().unwrap_or_default());
    Ok((w.sample_rate, Stereo::new(l, r)))
}

pub fn write_stereo(path: &Path, sample_rate: u32, s: &Stereo) -> Result<()> {
    write_wav(path, sample_rate, &[s.left.clone(), s.right.clone()])
}
