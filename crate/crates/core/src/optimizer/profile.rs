use std::collections::HashMap;
use std::fmt::Write as _;

use super::{CompensationProfile, GridSpec};
use crate::ambidec::{MixSubset, MixingVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProfileFlags {
    /// Band below the energy floor; direct gain set to 0.
    pub direct_floor: bool,
    /// Direct residual already exceeds the reverberant target.
    pub reverb_clamped: bool,
    /// Reverb chain silent in this band.
    pub reverb_no_energy: bool,
}

impl ProfileFlags {
    fn encode(self) -> String {
        let mut s = String::new();
        for (on, c) in [(self.direct_floor, 'F'), (self.reverb_clamped, 'C'), (self.reverb_no_energy, 'N')] {
            if on {
                s.push(c);
            }
        }
        if s.is_empty() {
            s.push('-');
        }
        s
    }

    fn decode(s: &str) -> Result<Self> {
        let mut f = Self::default();
        for c in s.chars() {
            match c {
                'F' => f.direct_floor = true,
                'C' => f.reverb_clamped = true,
                'N' => f.reverb_no_energy = true,
                '-' => {}
                _ => return Err(Error::Parse(format!("unknown profile flag {c:?}"))),
            }
        }
        Ok(f)
    }
}

const MAGIC: &str = "# roomcomp profile v1";
const COLUMNS: &str = "# i f_c g_dir g_rev w y x z r flags ic_err";

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

fn num(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse(format!("bad number {s:?}")))
}

fn five(s: &str) -> Result<[f64; 5]> {
    let v: Vec<f64> = s.split_whitespace().map(num).collect::<Result<_>>()?;
    v.try_into().map_err(|_| Error::Parse(format!("expected 5 values, got {s:?}")))
}

impl CompensationProfile {
    /// Plain text; floats are written in shortest round-trip form so
    /// `parse(to_text())` is exact.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MAGIC}");
        let _ = writeln!(s, "sample_rate = {}", self.sample_rate);
        let _ = writeln!(s, "bands = {}", self.n_bands());
        let _ = writeln!(s, "subset = {}", self.subset.name());
        let _ = writeln!(s, "x = {:?}", self.x);
        let _ = writeln!(s, "y = {:?}", self.y);
        let _ = writeln!(s, "t_split = {:?}", self.t_split);
        let _ = writeln!(s, "grid_subset = {}", self.grid.subset.name());
        let _ = writeln!(s, "grid_bounds = {}", list(&self.grid.bounds));
        let _ = writeln!(s, "grid_steps = {}", list(&self.grid.steps));
        let _ = writeln!(s, "{COLUMNS}");
        for i in 0..self.n_bands() {
            let _ = writeln!(
                s,
                "{i} {:?} {:?} {:?} {} {} {:?}",
                self.centers_hz[i],
                self.g_dir[i],
                self.g_rev[i],
                list(&self.mix[i].coeffs()),
                self.flags[i].encode(),
                self.ic_error[i],
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some(MAGIC) {
            return Err(Error::Parse("missing profile header".into()));
        }
        let mut head = HashMap::new();
        let mut rows = Vec::new();
        for line in lines {
            if line.starts_with('#') {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                head.insert(k.trim().to_string(), v.trim().to_string());
            } else {
                rows.push(line);
            }
        }
        let get = |k: &str| head.get(k).map(String::as_str).ok_or_else(|| Error::Parse(format!("missing {k}")));
        let sample_rate = get("sample_rate")?.parse().map_err(|_| Error::Parse("bad sample_rate".into()))?;
        let bands: usize = get("bands")?.parse().map_err(|_| Error::Parse("bad band count".into()))?;
        let subset: MixSubset = get("subset")?.parse()?;
        let grid = GridSpec {
            bounds: five(get("grid_bounds")?)?,
            steps: five(get("grid_steps")?)?,
            subset: get("grid_subset")?.parse()?,
        };
        if rows.len() != bands {
            return Err(Error::Parse(format!("header says {bands} bands, found {} rows", rows.len())));
        }
        let mut p = CompensationProfile {
            sample_rate,
            centers_hz: Vec::with_capacity(bands),
            g_dir: Vec::with_capacity(bands),
            g_rev: Vec::with_capacity(bands),
            mix: Vec::with_capacity(bands),
            subset,
            x: num(get("x")?)?,
            y: num(get("y")?)?,
            grid,
            t_split: num(get("t_split")?)?,
            flags: Vec::with_capacity(bands),
            ic_error: Vec::with_capacity(bands),
        };
        for (k, row) in rows.iter().enumerate() {
            let f: Vec<&str> = row.split_whitespace().collect();
            if f.len() != 11 {
                return Err(Error::Parse(format!("row {k}: expected 11 fields, got {}", f.len())));
            }
            if f[0] != k.to_string() {
                return Err(Error::Parse(format!("row {k}: band index {}", f[0])));
            }
            p.centers_hz.push(num(f[1])?);
            p.g_dir.push(num(f[2])?);
            p.g_rev.push(num(f[3])?);
            let m = five(&f[4..9].join(" "))?;
            p.mix.push(MixingVector::new(subset, m)?);
            p.flags.push(ProfileFlags::decode(f[9])?);
            p.ic_error.push(num(f[10])?);
        }
        p.validate()?;
        Ok(p)
    }
}
