//! Pipeline configuration (TOML) and the on-disk impulse-response set.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gammatone::{design, GammatoneFilterbank};
use crate::geometry::{ArrayGeometry, ArrayRole};
use crate::io::{read_ambisonic, read_stereo, write_ambisonic, write_stereo};
use crate::optimizer::{ImpulseResponseSet, OptimizerConfig, DEFAULT_T_SPLIT_S};
use crate::roomsim::Fixture;
use crate::sh::Direction;

/// Azimuth counted from +x towards +y, elevation up from the horizontal
/// plane, both in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Doa {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl Doa {
    pub fn direction(&self) -> Result<Direction> {
        if !(-90.0..=90.0).contains(&self.elevation_deg) {
            return Err(Error::Domain(format!("elevation {} deg outside [-90, 90]", self.elevation_deg)));
        }
        Direction::new((90.0 - self.elevation_deg).to_radians(), self.azimuth_deg.to_radians().rem_euclid(std::f64::consts::TAU))
    }

    pub fn from_direction(d: &Direction) -> Self {
        Self { azimuth_deg: d.phi().to_degrees(), elevation_deg: 90.0 - d.theta().to_degrees() }
    }
}

impl std::str::FromStr for Doa {
    type Err = Error;

    /// `"az,el"` in degrees.
    fn from_str(s: &str) -> Result<Self> {
        let (a, e) = s.split_once(',').ok_or_else(|| Error::Parse(format!("direction {s:?} is not az,el")))?;
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad angle {v:?}")));
        Ok(Self { azimuth_deg: num(a)?, elevation_deg: num(e)? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterbankParams {
    pub bands: usize,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Default for FilterbankParams {
    fn default() -> Self {
        Self { bands: 42, f_lo: 70.0, f_hi: 16700.0 }
    }
}

impl FilterbankParams {
    pub fn build(&self, sample_rate: u32) -> Result<GammatoneFilterbank> {
        design(sample_rate, self.bands, self.f_lo, self.f_hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paths {
    /// Directory in the layout written by `save_set`.
    pub set: PathBuf,
    /// Loudspeaker layout; defaults to the set's own `layout.geom`.
    #[serde(default)]
    pub layout: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub paths: Paths,
    /// Overrides the direction stored with the set.
    #[serde(default)]
    pub doa: Option<Doa>,
    /// Truncates the recording to this order when given.
    #[serde(default)]
    pub order: Option<usize>,
    #[serde(default)]
    pub t_split: Option<f64>,
    #[serde(default)]
    pub filterbank: FilterbankParams,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

/// `read_to_string` with the path in the error message.
pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

impl PipelineConfig {
    /// Relative paths resolve against the directory of the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.paths.set);
        fix(&mut cfg.paths.output);
        if let Some(l) = cfg.paths.layout.as_mut() {
            fix(l);
        }
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if let Some(t) = self.t_split {
            if !(t > 0.0) {
                return Err(Error::Domain(format!("t_split {t} must be positive")));
            }
        }
        if let Some(d) = self.doa {
            d.direction()?;
        }
        Ok(())
    }

    fn check_files(&self) -> Result<()> {
        let meta = self.paths.set.join(SET_META);
        let mut need = vec![meta];
        need.extend(self.paths.layout.clone());
        for p in need {
            if !p.exists() {
                return Err(Error::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    format!("{} does not exist", p.display()),
                )));
            }
        }
        Ok(())
    }

    /// Fully resolved settings, for writing next to the results.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

const SET_META: &str = "set.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SetMeta {
    sample_rate: u32,
    t_split: f64,
    loudspeakers: usize,
    doa: Doa,
}

/// An impulse-response set with its layout and source direction.
#[derive(Debug, Clone)]
pub struct StoredSet {
    pub set: ImpulseResponseSet,
    pub layout: ArrayGeometry,
    pub doa: Direction,
}

impl From<Fixture> for StoredSet {
    fn from(f: Fixture) -> Self {
        Self { set: f.set, layout: f.layout, doa: f.doa }
    }
}

/// Writes `brir_ref.wav`, `rir_rec.wav`, `brir_play/NNN.wav`,
/// `layout.geom` and `set.toml` into `dir`.
pub fn save_set(dir: &Path, s: &StoredSet) -> Result<()> {
    let play = dir.join("brir_play");
    std::fs::create_dir_all(&play)?;
    let fs = s.set.sample_rate;
    write_stereo(&dir.join("brir_ref.wav"), fs, &s.set.brir_ref)?;
    write_ambisonic(&dir.join("rir_rec.wav"), &s.set.rir_rec)?;
    for (l, b) in s.set.brir_play.iter().enumerate() {
        write_stereo(&play.join(format!("{l:03}.wav")), fs, b)?;
    }
    s.layout.save(&dir.join("layout.geom"))?;
    let meta = SetMeta {
        sample_rate: fs,
        t_split: s.set.t_split,
        loudspeakers: s.set.loudspeakers(),
        doa: Doa::from_direction(&s.doa),
    };
    std::fs::write(dir.join(SET_META), toml::to_string(&meta).expect("metadata serializes"))?;
    Ok(())
}

pub fn load_set(dir: &Path) -> Result<StoredSet> {
    let meta: SetMeta = toml::from_str(&read_text(&dir.join(SET_META))?)
        .map_err(|e| Error::Parse(format!("{}: {e}", dir.join(SET_META).display())))?;
    let (fs_ref, brir_ref) = read_stereo(&dir.join("brir_ref.wav"))?;
    let rir_rec = read_ambisonic(&dir.join("rir_rec.wav"))?;
    let brir_play = (0..meta.loudspeakers)
        .map(|l| {
            let (fs, b) = read_stereo(&dir.join("brir_play").join(format!("{l:03}.wav")))?;
            if fs != meta.sample_rate {
                return Err(Error::SampleRate { expected: meta.sample_rate, got: fs });
            }
            Ok(b)
        })
        .collect::<Result<Vec<_>>>()?;
    if fs_ref != meta.sample_rate {
        return Err(Error::SampleRate { expected: meta.sample_rate, got: fs_ref });
    }
    let layout = ArrayGeometry::load(&dir.join("layout.geom"))?;
    layout.require(ArrayRole::LoudspeakerArray)?;
    let set = ImpulseResponseSet::new(brir_ref, rir_rec, brir_play, meta.sample_rate, meta.t_split)?;
    Ok(StoredSet { set, layout, doa: meta.doa.direction()? })
}

/// Set, layout, direction and filterbank as the config resolves them.
pub fn resolve(cfg: &PipelineConfig) -> Result<(StoredSet, GammatoneFilterbank)> {
    let mut s = load_set(&cfg.paths.set)?;
    if let Some(p) = &cfg.paths.layout {
        s.layout = ArrayGeometry::load(p)?;
    }
    if let Some(d) = cfg.doa {
        s.doa = d.direction()?;
    }
    if let Some(n) = cfg.order {
        s.set.rir_rec = s.set.rir_rec.truncated(n)?;
    }
    s.set.t_split = cfg.t_split.unwrap_or(s.set.t_split);
    let fb = cfg.filterbank.build(s.set.sample_rate)?;
    Ok((s, fb))
}

impl Default for Paths {
    fn default() -> Self {
        Self { set: PathBuf::from("set"), layout: None, output: PathBuf::from("out") }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            doa: None,
            order: None,
            t_split: Some(DEFAULT_T_SPLIT_S),
            filterbank: FilterbankParams::default(),
            optimizer: OptimizerConfig::default(),
        }
    }
}
