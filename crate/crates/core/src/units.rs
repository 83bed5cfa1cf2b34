//! Physical constants and unit conversions.

use std::f64::consts::PI;

/// Speed of light in vacuum, m/s.
pub const C: f64 = 299_792_458.0;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Angular frequency (rad/s) of a vacuum wavelength in nm.
#[inline]
pub fn omega_from_nm(lambda_nm: f64) -> f64 {
    2.0 * PI * C / (lambda_nm * 1e-9)
}

/// Vacuum wavelength in nm of an angular frequency in rad/s.
#[inline]
pub fn nm_from_omega(omega: f64) -> f64 {
    2.0 * PI * C / omega * 1e9
}

/// Ordinary frequency in THz of an angular frequency in rad/s.
#[inline]
pub fn thz_from_omega(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e12)
}

#[inline]
pub fn omega_from_thz(f_thz: f64) -> f64 {
    f_thz * 2.0 * PI * 1e12
}

/// Spectral amplitude width sigma (rad/s) of a transform-limited Gaussian
/// pulse with intensity FWHM `fwhm_fs`.
///
/// The amplitude is taken as `exp(-(w - w0)^2 / (2 sigma^2))`, so the spectral
/// intensity FWHM is `2 sqrt(ln 2) sigma` and the time-bandwidth product of the
/// intensity profiles is `4 ln 2`.
pub fn sigma_from_pulse_fwhm_fs(fwhm_fs: f64) -> f64 {
    2.0 * std::f64::consts::LN_2.sqrt() / (fwhm_fs * 1e-15)
}

/// Roman numeral for band labels (1 -> "I").
pub fn roman(mut n: u32) -> String {
    const TABLE: [(u32, &str); 13] = [
        (1000, "M"),
        (900, "CM"),
        (500, "D"),
        (400, "CD"),
        (100, "C"),
        (90, "XC"),
        (50, "L"),
        (40, "XL"),
        (10, "X"),
        (9, "IX"),
        (5, "V"),
        (4, "IV"),
        (1, "I"),
    ];
    let mut out = String::new();
    for &(value, sym) in &TABLE {
        while n >= value {
            out.push_str(sym);
            n -= value;
        }
    }
    out
}

/// Inverse of [`roman`]; `None` for malformed numerals.
pub fn parse_roman(s: &str) -> Option<u32> {
    let digit = |c: char| match c {
        'I' => Some(1),
        'V' => Some(5),
        'X' => Some(10),
        'L' => Some(50),
        'C' => Some(100),
        'D' => Some(500),
        'M' => Some(1000),
        _ => None,
    };
    let values: Option<Vec<u32>> = s.chars().map(digit).collect();
    let values = values?;
    if values.is_empty() {
        return None;
    }
    let mut total = 0i64;
    for (i, &v) in values.iter().enumerate() {
        if values.get(i + 1).is_some_and(|&next| next > v) {
            total -= v as i64;
        } else {
            total += v as i64;
        }
    }
    let n = u32::try_from(total).ok()?;
    (n > 0 && roman(n) == s).then_some(n)
}
