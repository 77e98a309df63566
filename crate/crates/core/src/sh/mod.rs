//! Real spherical harmonics, spherical Bessel/Hankel functions, sound-field
//! expansions and rigid-sphere capsule encoding.
//!
//! Harmonics are real and orthonormal over the unit sphere, without the
//! Condon-Shortley phase, in ACN channel order.

mod bessel;
mod encode;
mod expansion;

pub use bessel::{
    spherical_bessel_j, spherical_bessel_j_deriv, spherical_bessel_y, spherical_hankel,
    spherical_hankel_deriv, HankelKind,
};
pub use encode::{
    ambisonic_spectrum, encode_capsule_signals, sh_encode_capsules, RegularizationPolicy, SoftCap,
};
pub(crate) use expansion::i_pow;
pub use expansion::{
    evaluate_field, plane_wave_coeffs, point_source_coeffs, radial_bn, radial_bn_deriv,
    to_bare_convention,
};

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Speed of sound used unless configured otherwise, m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;

/// A direction on the unit sphere. `theta` is measured from the +z pole,
/// `phi` is the azimuth counted from +x towards +y.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Direction {
    theta: f64,
    phi: f64,
}

impl Direction {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !theta.is_finite() || !phi.is_finite() {
            return Err(Error::Domain("direction angles must be finite".into()));
        }
        if !(0.0..=PI).contains(&theta) {
            return Err(Error::Domain(format!("elevation {theta} outside [0, pi]")));
        }
        Ok(Self { theta, phi: phi.rem_euclid(2.0 * PI) })
    }

    /// Direction of a (not necessarily normalized) Cartesian vector.
    pub fn from_vector(v: [f64; 3]) -> Result<Self> {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Domain("zero-length direction vector".into()));
        }
        let theta = (v[2] / norm).clamp(-1.0, 1.0).acos();
        let phi = v[1].atan2(v[0]);
        Self::new(theta, phi)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn to_vector(&self) -> [f64; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        [st * cp, st * sp, ct]
    }

    /// Angle between two directions, radians.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        let a = self.to_vector();
        let b = other.to_vector();
        let c = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
        let sin = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        sin.atan2(a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
    }
}

/// Order/degree pair with its ACN channel number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShIndex {
    n: usize,
    m: i64,
}

impl ShIndex {
    pub fn new(n: usize, m: i64) -> Result<Self> {
        if m.unsigned_abs() as usize > n {
            return Err(Error::Domain(format!("|m| = {} exceeds order {n}", m.abs())));
        }
        Ok(Self { n, m })
    }

    pub fn from_acn(acn: usize) -> Self {
        let n = (acn as f64).sqrt().floor() as usize;
        // guard against rounding of the square root
        let n = if (n + 1) * (n + 1) <= acn { n + 1 } else if n * n > acn { n - 1 } else { n };
        let m = acn as i64 - (n * n + n) as i64;
        Self { n, m }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> i64 {
        self.m
    }

    pub fn acn(&self) -> usize {
        ((self.n * self.n + self.n) as i64 + self.m) as usize
    }
}

/// Number of channels of an order-`order` representation.
pub fn channel_count(order: usize) -> usize {
    (order + 1) * (order + 1)
}

/// All indices up to `order` in ACN order.
pub fn indices(order: usize) -> impl Iterator<Item = ShIndex> {
    (0..channel_count(order)).map(ShIndex::from_acn)
}

/// Associated Legendre function without the Condon-Shortley phase.
pub fn assoc_legendre(n: usize, m: usize, x: f64) -> Result<f64> {
    if m > n {
        return Err(Error::Domain(format!("degree {m} exceeds order {n}")));
    }
    if !(x.abs() <= 1.0) {
        return Err(Error::Domain(format!("argument {x} outside [-1, 1]")));
    }
    Ok(legendre_unchecked(n, m, x))
}

fn legendre_unchecked(n: usize, m: usize, x: f64) -> f64 {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    for k in 0..m {
        pmm *= (2 * k + 1) as f64 * s;
    }
    if n == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    if n == m + 1 {
        return pm1;
    }
    let mut pm2 = pmm;
    for l in (m + 2)..=n {
        let p = ((2 * l - 1) as f64 * x * pm1 - (l + m - 1) as f64 * pm2) / (l - m) as f64;
        pm2 = pm1;
        pm1 = p;
    }
    pm1
}

fn normalization(n: usize, m: usize) -> f64 {
    // (n-m)!/(n+m)! as a running product
    let mut ratio = 1.0;
    for k in (n - m + 1)..=(n + m) {
        ratio /= k as f64;
    }
    ((2 * n + 1) as f64 * ratio / (4.0 * PI)).sqrt()
}

/// Real orthonormal spherical harmonic.
pub fn sh_eval(idx: ShIndex, dir: &Direction) -> f64 {
    let am = idx.m.unsigned_abs() as usize;
    let base = normalization(idx.n, am) * legendre_unchecked(idx.n, am, dir.theta.cos());
    match idx.m {
        m if m < 0 => base * 2f64.sqrt() * (am as f64 * dir.phi).sin(),
        0 => base,
        _ => base * 2f64.sqrt() * (am as f64 * dir.phi).cos(),
    }
}

/// All harmonics up to `order` evaluated at `dir`, ACN order.
pub fn sh_vector(order: usize, dir: &Direction) -> Vec<f64> {
    indices(order).map(|idx| sh_eval(idx, dir)).collect()
}

/// Wavenumber in rad/m.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Wavenumber(f64);

impl Wavenumber {
    pub fn new(k: f64) -> Result<Self> {
        if !(k >= 0.0) || !k.is_finite() {
            return Err(Error::Domain(format!("wavenumber {k} must be finite and >= 0")));
        }
        Ok(Self(k))
    }

    pub fn from_frequency(freq_hz: f64, speed_of_sound: f64) -> Result<Self> {
        Self::new(2.0 * PI * freq_hz / speed_of_sound)
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}
