use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HankelKind {
    First,
    Second,
}

/// Spherical Bessel function of the first kind, `j_n(x)`, `x >= 0`.
pub fn spherical_bessel_j(n: usize, x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("j_n requires finite x >= 0, got {x}")));
    }
    Ok(bessel_j_unchecked(n, x))
}

pub(crate) fn bessel_j_unchecked(n: usize, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let (s, c) = x.sin_cos();
    let j0 = if x < 1e-4 { 1.0 - x * x / 6.0 } else { s / x };
    if n == 0 {
        return j0;
    }
    let j1 = if x < 1e-4 { x / 3.0 - x * x * x / 30.0 } else { s / (x * x) - c / x };
    if n == 1 {
        return j1;
    }
    if x > n as f64 {
        // upward recurrence is stable while n < x
        let (mut prev, mut cur) = (j0, j1);
        for k in 1..n {
            let next = (2 * k + 1) as f64 / x * cur - prev;
            prev = cur;
            cur = next;
        }
        return cur;
    }
    miller_downward(n, x, j0, j1)
}

fn miller_downward(n: usize, x: f64, j0: f64, j1: f64) -> f64 {
    let start = n + 20 + (40.0 * n as f64).sqrt() as usize + x as usize;
    let mut next = 0.0;
    let mut cur = 1e-100;
    let mut wanted = 0.0;
    let mut f0 = 0.0;
    let mut f1 = 0.0;
    let mut norm = 0.0;
    for k in (0..=start).rev() {
        norm += (2 * k + 1) as f64 * cur * cur;
        if k == n {
            wanted = cur;
        }
        if k == 1 {
            f1 = cur;
        }
        if k == 0 {
            f0 = cur;
            break;
        }
        let prev = (2 * k + 1) as f64 / x * cur - next;
        next = cur;
        cur = prev;
        if cur.abs() > 1e100 {
            cur *= 1e-100;
            next *= 1e-100;
            wanted *= 1e-100;
            f1 *= 1e-100;
            norm *= 1e-200;
        }
    }
    // sum_k (2k+1) j_k(x)^2 = 1 fixes the scale; j0/j1 fix the sign
    let scale = 1.0 / norm.sqrt();
    let sign = if j0.abs() >= j1.abs() { (f0 * j0).signum() } else { (f1 * j1).signum() };
    wanted * scale * sign
}

/// Spherical Bessel function of the second kind, `y_n(x)`, `x > 0`.
pub fn spherical_bessel_y(n: usize, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("y_n requires finite x > 0, got {x}")));
    }
    Ok(bessel_y_unchecked(n, x))
}

fn bessel_y_unchecked(n: usize, x: f64) -> f64 {
    let (s, c) = x.sin_cos();
    let y0 = -c / x;
    if n == 0 {
        return y0;
    }
    let y1 = -c / (x * x) - s / x;
    let (mut prev, mut cur) = (y0, y1);
    for k in 1..n {
        let next = (2 * k + 1) as f64 / x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Derivative `j_n'(x)`, `x >= 0`.
pub fn spherical_bessel_j_deriv(n: usize, x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("j_n' requires finite x >= 0, got {x}")));
    }
    Ok(bessel_j_deriv_unchecked(n, x))
}

pub(crate) fn bessel_j_deriv_unchecked(n: usize, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 1 { 1.0 / 3.0 } else { 0.0 };
    }
    if n == 0 {
        return -bessel_j_unchecked(1, x);
    }
    if x < 1e-3 {
        // leading series terms avoid cancellation in the recurrence
        let nf = n as f64;
        let mut dfact = 1.0;
        for k in 0..=n {
            dfact *= (2 * k + 1) as f64;
        }
        let lead = x.powi(n as i32 - 1) / dfact;
        return lead * (nf - (nf + 2.0) * x * x / (2.0 * (2.0 * nf + 3.0)));
    }
    bessel_j_unchecked(n - 1, x) - (n + 1) as f64 / x * bessel_j_unchecked(n, x)
}

fn bessel_y_deriv_unchecked(n: usize, x: f64) -> f64 {
    if n == 0 {
        return -bessel_y_unchecked(1, x);
    }
    bessel_y_unchecked(n - 1, x) - (n + 1) as f64 / x * bessel_y_unchecked(n, x)
}

/// Spherical Hankel function `h_n^{(1)} = j_n + i y_n` or `h_n^{(2)} = j_n - i y_n`, `x > 0`.
pub fn spherical_hankel(kind: HankelKind, n: usize, x: f64) -> Result<Complex64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("h_n requires finite x > 0, got {x}")));
    }
    let j = bessel_j_unchecked(n, x);
    let y = bessel_y_unchecked(n, x);
    Ok(match kind {
        HankelKind::First => Complex64::new(j, y),
        HankelKind::Second => Complex64::new(j, -y),
    })
}

/// Derivative of the spherical Hankel function with respect to its argument.
pub fn spherical_hankel_deriv(kind: HankelKind, n: usize, x: f64) -> Result<Complex64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("h_n' requires finite x > 0, got {x}")));
    }
    let j = bessel_j_deriv_unchecked(n, x);
    let y = bessel_y_deriv_unchecked(n, x);
    Ok(match kind {
        HankelKind::First => Complex64::new(j, y),
        HankelKind::Second => Complex64::new(j, -y),
    })
}
