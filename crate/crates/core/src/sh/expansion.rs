use std::f64::consts::PI;

use num_complex::Complex64;

use super::bessel::{bessel_j_deriv_unchecked, bessel_j_unchecked};
use super::{indices, sh_eval, spherical_hankel, spherical_hankel_deriv, Direction, HankelKind};
use super::{ShIndex, Wavenumber};
use crate::error::{Error, Result};

/// `i^n`
pub(crate) fn i_pow(n: usize) -> Complex64 {
    match n % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Rigid-sphere radial term `b_n(kr)` for an array of radius `r_e`.
pub fn radial_bn(n: usize, k: Wavenumber, r: f64, r_e: f64) -> Result<Complex64> {
    check_radii(r, r_e)?;
    let k = k.value();
    if k == 0.0 {
        return Ok(if n == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
    }
    let ratio = scattering_ratio(n, k * r_e)?;
    let h = spherical_hankel(HankelKind::Second, n, k * r)?;
    Ok(Complex64::new(bessel_j_unchecked(n, k * r), 0.0) - ratio * h)
}

/// Radial derivative `d/dr b_n(kr)`.
pub fn radial_bn_deriv(n: usize, k: Wavenumber, r: f64, r_e: f64) -> Result<Complex64> {
    check_radii(r, r_e)?;
    let k = k.value();
    if k == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let ratio = scattering_ratio(n, k * r_e)?;
    let hd = spherical_hankel_deriv(HankelKind::Second, n, k * r)?;
    Ok(k * (Complex64::new(bessel_j_deriv_unchecked(n, k * r), 0.0) - ratio * hd))
}

fn scattering_ratio(n: usize, kre: f64) -> Result<Complex64> {
    let hd = spherical_hankel_deriv(HankelKind::Second, n, kre)?;
    Ok(Complex64::new(bessel_j_deriv_unchecked(n, kre), 0.0) / hd)
}

fn check_radii(r: f64, r_e: f64) -> Result<()> {
    if !(r_e > 0.0) {
        return Err(Error::Domain(format!("array radius {r_e} must be positive")));
    }
    if !(r >= r_e) {
        return Err(Error::Domain(format!("evaluation radius {r} inside the rigid sphere {r_e}")));
    }
    Ok(())
}

/// Spherical-harmonic expansion of a sound field with the radial function
/// `j_n(kr)` factored out of the coefficients.
#[derive(Debug, Clone)]
pub struct FieldExpansion {
    pub order: usize,
    pub coeffs: Vec<Complex64>,
    /// Expansion only converges for radii below this value (point sources).
    pub max_radius: Option<f64>,
}

impl FieldExpansion {
    /// Pressure `sum_nm c_nm j_n(kr) Y_nm(dir)`.
    pub fn pressure(&self, k: Wavenumber, r: f64, dir: &Direction) -> Result<Complex64> {
        if let Some(limit) = self.max_radius {
            if r >= limit {
                return Err(Error::Domain(format!(
                    "evaluation radius {r} not inside the source radius {limit}"
                )));
            }
        }
        evaluate_field(&self.coeffs, self.order, k, r, dir)
    }
}

/// `sum_nm coeffs[acn] j_n(kr) Y_nm(dir)`.
pub fn evaluate_field(
    coeffs: &[Complex64],
    order: usize,
    k: Wavenumber,
    r: f64,
    dir: &Direction,
) -> Result<Complex64> {
    if coeffs.len() != super::channel_count(order) {
        return Err(Error::Shape(format!("{} coefficients for order {order}", coeffs.len())));
    }
    let kr = k.value() * r;
    let mut acc = Complex64::new(0.0, 0.0);
    for idx in indices(order) {
        let radial = bessel_j_unchecked(idx.order(), kr);
        acc += coeffs[idx.acn()] * radial * sh_eval(idx, dir);
    }
    Ok(acc)
}

/// Plane wave incident from `dir_s`: coefficients `4 pi i^n Y_nm(dir_s)`.
pub fn plane_wave_coeffs(dir_s: &Direction, order: usize) -> FieldExpansion {
    let coeffs = indices(order)
        .map(|idx| 4.0 * PI * i_pow(idx.order()) * sh_eval(idx, dir_s))
        .collect();
    FieldExpansion { order, coeffs, max_radius: None }
}

/// Point source at `(r_s, dir_s)`: coefficients `i k h_n^{(1)}(k r_s) Y_nm(dir_s)`.
pub fn point_source_coeffs(
    r_s: f64,
    dir_s: &Direction,
    k: Wavenumber,
    order: usize,
) -> Result<FieldExpansion> {
    if !(k.value() > 0.0) {
        return Err(Error::Domain("point-source expansion needs k > 0".into()));
    }
    if !(r_s > 0.0) {
        return Err(Error::Domain(format!("source radius {r_s} must be positive")));
    }
    let ik = Complex64::new(0.0, k.value());
    let mut hankel = Vec::with_capacity(order + 1);
    for n in 0..=order {
        hankel.push(spherical_hankel(HankelKind::First, n, k.value() * r_s)?);
    }
    let coeffs = indices(order).map(|idx| ik * hankel[idx.order()] * sh_eval(idx, dir_s)).collect();
    Ok(FieldExpansion { order, coeffs, max_radius: Some(r_s) })
}

/// Converts encoder coefficients (plane wave from `d` carrying `s` gives
/// `4 pi i^n Y(d) s`) to the bare-harmonic convention used for time signals
/// (`Y(d) s`). `spectrum[acn][bin]` holds non-negative frequency bins.
pub fn to_bare_convention(spectrum: &mut [Vec<Complex64>]) {
    for (acn, channel) in spectrum.iter_mut().enumerate() {
        let n = ShIndex::from_acn(acn).order();
        let factor = (4.0 * PI * i_pow(n)).inv();
        channel.iter_mut().for_each(|v| *v *= factor);
    }
}
