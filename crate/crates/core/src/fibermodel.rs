//! Tube-type dispersion model of inhibited-coupling hollow-core fiber.
//!
//! The effective index of the HE_{m,n} core mode is
//!
//! ```text
//! n_eff = n_gas - j^2 / (2 k0^2 n_gas R^2)
//!               - j^2 / (k0^3 n_gas^2 R^3) * cot(psi) / sqrt(eps - 1) * (eps + 1) / 2
//! psi   = k0 t sqrt(n_si^2 - n_gas^2),   eps = n_si^2 / n_gas^2
//! ```
//!
//! with `j = j_{m-1,n}` the Bessel zero, `R` the effective core radius and `t`
//! the strut thickness. The cotangent diverges at the strut resonances
//! `psi = j pi`, which split the spectrum into transmission bands labelled
//! I, II, ... from the long-wavelength side.
//!
//! All frequency derivatives are taken on the excess wavevector
//! `q(w) = w (n_eff - 1) / c`, so that `k = w / c + q` and the large vacuum part
//! never enters a finite difference.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gasmedia::{GasState, SellmeierModel};
use crate::numerics::{bessel_j_zero, bisect};
use crate::units::{nm_from_omega, omega_from_nm, roman, parse_roman, C};

/// Half-width of the rejected zone around each resonance, relative to `lambda_j`.
pub const RESONANCE_EXCLUSION: f64 = 0.005;

/// Relative step in omega for the five-point first derivative.
pub const DIFF_REL_STEP: f64 = 2e-4;

/// Relative step in omega for the Richardson-extrapolated second derivative.
pub const DIFF2_REL_STEP: f64 = 5e-4;

const FIXED_POINT_TOL_NM: f64 = 1e-9;
const FIXED_POINT_MAX_ITER: usize = 100;
const STEP_HALVINGS: usize = 12;
const ZDW_SCAN_POINTS: usize = 2000;

/// Cladding microstructure. It does not enter the dispersion model, which
/// depends only on core radius and strut thickness.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cladding {
    #[default]
    Tubular,
    Kagome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberModel {
    /// Effective core radius, um.
    pub r_eff_um: f64,
    /// Silica strut thickness, nm.
    pub t_nm: f64,
    pub mode_m: u32,
    pub mode_n: u32,
    pub silica: SellmeierModel,
    #[serde(default)]
    pub cladding: Cladding,
    /// `j_{m-1,n}`, cached at construction.
    bessel_root: f64,
}

impl FiberModel {
    pub fn new(
        r_eff_um: f64,
        t_nm: f64,
        mode_m: u32,
        mode_n: u32,
        silica: SellmeierModel,
    ) -> Result<Self> {
        if !(r_eff_um > 0.0 && r_eff_um.is_finite()) {
            return Err(Error::validation("fiber.R_eff_um", format!("must be > 0, got {r_eff_um}")));
        }
        if !(t_nm > 0.0 && t_nm.is_finite()) {
            return Err(Error::validation("fiber.t_nm", format!("must be > 0, got {t_nm}")));
        }
        if mode_m < 1 {
            return Err(Error::validation("fiber.mode_m", "must be >= 1"));
        }
        if mode_n < 1 {
            return Err(Error::validation("fiber.mode_n", "must be >= 1"));
        }
        let bessel_root = bessel_j_zero(mode_m - 1, mode_n)?;
        Ok(Self {
            r_eff_um,
            t_nm,
            mode_m,
            mode_n,
            silica,
            cladding: Cladding::default(),
            bessel_root,
        })
    }

    pub fn with_cladding(mut self, cladding: Cladding) -> Self {
        self.cladding = cladding;
        self
    }

    pub fn with_thickness(&self, t_nm: f64) -> Result<Self> {
        Self::new(self.r_eff_um, t_nm, self.mode_m, self.mode_n, self.silica.clone())
            .map(|f| f.with_cladding(self.cladding))
    }

    pub fn with_radius(&self, r_eff_um: f64) -> Result<Self> {
        Self::new(r_eff_um, self.t_nm, self.mode_m, self.mode_n, self.silica.clone())
            .map(|f| f.with_cladding(self.cladding))
    }

    /// `j_{m-1,n}` for the configured HE mode.
    pub fn bessel_root(&self) -> f64 {
        self.bessel_root
    }
}

/// Transmission-band label; band 1 ("I") is the longest-wavelength band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BandLabel(pub u32);

impl fmt::Display for BandLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&roman(self.0))
    }
}

impl Serialize for BandLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&roman(self.0))
    }
}

impl<'de> Deserialize<'de> for BandLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_roman(&s)
            .map(BandLabel)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid band label '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub label: BandLabel,
    pub lo_nm: f64,
    pub hi_nm: f64,
}

impl Band {
    pub fn contains(&self, lambda_nm: f64) -> bool {
        lambda_nm > self.lo_nm && lambda_nm < self.hi_nm
    }
}

/// Strut resonances inside a window and the bands they delimit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandStructure {
    /// `lambda_j` inside the window, j increasing (wavelength decreasing).
    pub resonances_nm: Vec<f64>,
    /// Bands inside the window, label increasing (wavelength decreasing).
    pub bands: Vec<Band>,
}

impl BandStructure {
    pub fn band(&self, label: BandLabel) -> Option<&Band> {
        self.bands.iter().find(|b| b.label == label)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A resonance with its order `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Resonance {
    order: usize,
    lambda_nm: f64,
}

fn index_sq_clamped(model: &SellmeierModel, lambda_nm: f64) -> Result<f64> {
    let (lo, hi) = model.valid_range_nm;
    Ok(1.0 + model.susceptibility(lambda_nm.clamp(lo, hi))?)
}

fn gas_index_sq_clamped(gas: &GasState, lambda_nm: f64) -> Result<f64> {
    let (lo, hi) = gas.sellmeier.valid_range_nm;
    Ok(1.0 + gas.susceptibility(lambda_nm.clamp(lo, hi))?)
}

/// Solve `lambda_j = (2t/j) sqrt(n_si^2 - n_gas^2)` by fixed-point iteration.
///
/// Indices are evaluated at the nearest point of their validity windows when
/// the iterate leaves them; such resonances are only used for band counting.
fn resonance(fiber: &FiberModel, gas: &GasState, order: usize) -> Result<f64> {
    let scale = 2.0 * fiber.t_nm / order as f64;
    let mut lambda = scale * (1.45f64 * 1.45 - 1.0).sqrt();
    for _ in 0..FIXED_POINT_MAX_ITER {
        let contrast = index_sq_clamped(&fiber.silica, lambda)? - gas_index_sq_clamped(gas, lambda)?;
        if contrast <= 0.0 {
            return Err(Error::validation(
                "gas",
                format!("gas index exceeds silica index near {lambda:.1} nm"),
            ));
        }
        let next = scale * contrast.sqrt();
        let delta = (next - lambda).abs();
        lambda = next;
        if delta < FIXED_POINT_TOL_NM {
            return Ok(lambda);
        }
    }
    Err(Error::NonConvergence {
        what: format!("resonance lambda_{order} fixed point"),
        iterations: FIXED_POINT_MAX_ITER,
        last: lambda,
        delta: f64::NAN,
    })
}

/// All resonances with `lambda_j >= floor_nm`, j = 1, 2, ...
fn resonances_above(fiber: &FiberModel, gas: &GasState, floor_nm: f64) -> Result<Vec<Resonance>> {
    let mut out = Vec::new();
    for order in 1.. {
        let lambda_nm = resonance(fiber, gas, order)?;
        if lambda_nm < floor_nm {
            break;
        }
        out.push(Resonance { order, lambda_nm });
    }
    Ok(out)
}

fn check_window(fiber: &FiberModel, gas: &GasState, window_nm: (f64, f64)) -> Result<()> {
    let (lo, hi) = window_nm;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::validation(
            "window",
            format!("empty wavelength window [{lo}, {hi}] nm"),
        ));
    }
    for model in [&fiber.silica, &gas.sellmeier] {
        for l in [lo, hi] {
            if !model.contains(l) {
                return Err(Error::Range {
                    species: model.species.clone(),
                    lambda_nm: l,
                    min_nm: model.valid_range_nm.0,
                    max_nm: model.valid_range_nm.1,
                });
            }
        }
    }
    Ok(())
}

fn build_bands(res: &[Resonance], window_nm: (f64, f64)) -> BandStructure {
    let (lo, hi) = window_nm;
    let above = res.iter().filter(|r| r.lambda_nm >= hi).count() as u32;
    let inside: Vec<f64> = res
        .iter()
        .filter(|r| r.lambda_nm > lo && r.lambda_nm < hi)
        .map(|r| r.lambda_nm)
        .collect();
    let mut edges = vec![hi];
    edges.extend(&inside);
    edges.push(lo);
    let bands = edges
        .windows(2)
        .enumerate()
        .map(|(i, w)| Band {
            label: BandLabel(above + 1 + i as u32),
            lo_nm: w[1],
            hi_nm: w[0],
        })
        .collect();
    BandStructure {
        resonances_nm: inside,
        bands,
    }
}

/// Strut resonances inside `window_nm` and the resulting band partition.
pub fn resonance_wavelengths(
    fiber: &FiberModel,
    gas: &GasState,
    window_nm: (f64, f64),
) -> Result<BandStructure> {
    check_window(fiber, gas, window_nm)?;
    let res = resonances_above(fiber, gas, window_nm.0)?;
    Ok(build_bands(&res, window_nm))
}

/// Wavevector and its first two frequency derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    /// rad/m
    pub k: f64,
    /// s/m
    pub beta1: f64,
    /// s^2/m
    pub beta2: f64,
}

/// The three contributions to `n_eff - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexTerms {
    /// `n_gas - 1`
    pub gas: f64,
    /// Core-size term, always negative.
    pub core: f64,
    /// Strut-resonance term.
    pub strut: f64,
}

impl IndexTerms {
    pub fn excess(&self) -> f64 {
        self.gas + self.core + self.strut
    }
}

/// A fiber filled with a given gas, with its band structure resolved over a
/// wavelength window. All dispersion queries go through this type.
#[derive(Debug, Clone, PartialEq)]
pub struct FilledFiber {
    pub fiber: FiberModel,
    pub gas: GasState,
    pub window_nm: (f64, f64),
    pub bands: BandStructure,
    /// Includes resonances just outside the window so exclusion zones and
    /// labels are right at the window edges.
    resonances: Vec<Resonance>,
}

impl FilledFiber {
    pub fn new(fiber: FiberModel, gas: GasState, window_nm: (f64, f64)) -> Result<Self> {
        check_window(&fiber, &gas, window_nm)?;
        let resonances = resonances_above(&fiber, &gas, window_nm.0 * (1.0 - 2.0 * RESONANCE_EXCLUSION))?;
        let bands = build_bands(&resonances, window_nm);
        Ok(Self {
            fiber,
            gas,
            window_nm,
            bands,
            resonances,
        })
    }

    /// Window spanning the overlap of the gas and silica validity ranges.
    pub fn full_window(fiber: FiberModel, gas: GasState) -> Result<Self> {
        let lo = fiber.silica.valid_range_nm.0.max(gas.sellmeier.valid_range_nm.0);
        let hi = fiber.silica.valid_range_nm.1.min(gas.sellmeier.valid_range_nm.1);
        Self::new(fiber, gas, (lo, hi))
    }

    /// Band containing `lambda_nm`, rejecting the window exterior and the
    /// exclusion zones around resonances.
    pub fn band_of(&self, lambda_nm: f64) -> Result<BandLabel> {
        let (lo, hi) = self.window_nm;
        if !(lambda_nm >= lo && lambda_nm <= hi) {
            return Err(Error::Range {
                species: format!("fiber window ({}+silica)", self.gas.species),
                lambda_nm,
                min_nm: lo,
                max_nm: hi,
            });
        }
        let mut above = 0;
        for r in &self.resonances {
            if (lambda_nm - r.lambda_nm).abs() <= RESONANCE_EXCLUSION * r.lambda_nm {
                return Err(Error::Divergence {
                    lambda_nm,
                    resonance_nm: r.lambda_nm,
                    order: r.order,
                });
            }
            if r.lambda_nm > lambda_nm {
                above += 1;
            }
        }
        Ok(BandLabel(above + 1))
    }

    pub fn band_of_omega(&self, omega: f64) -> Result<BandLabel> {
        self.band_of(nm_from_omega(omega))
    }

    /// The individual terms of the index model, without the exclusion-zone
    /// check (only the material validity windows are enforced).
    pub fn index_terms(&self, lambda_nm: f64) -> Result<IndexTerms> {
        let chi_gas = self.gas.susceptibility(lambda_nm)?;
        let n_gas = (1.0 + chi_gas).sqrt();
        let gas = chi_gas / (1.0 + n_gas);
        let n_si2 = 1.0 + self.fiber.silica.susceptibility(lambda_nm)?;
        let k0 = 2.0 * std::f64::consts::PI / (lambda_nm * 1e-9);
        let r = self.fiber.r_eff_um * 1e-6;
        let t = self.fiber.t_nm * 1e-9;
        let j2 = self.fiber.bessel_root.powi(2);
        let contrast = n_si2 - n_gas * n_gas;
        let psi = k0 * t * contrast.sqrt();
        let eps = n_si2 / (n_gas * n_gas);
        let core = -j2 / (2.0 * k0 * k0 * n_gas * r * r);
        let strut = -j2 / (k0.powi(3) * n_gas * n_gas * r.powi(3)) * (psi.cos() / psi.sin())
            / (eps - 1.0).sqrt()
            * (eps + 1.0)
            / 2.0;
        Ok(IndexTerms { gas, core, strut })
    }

    /// `n_eff - 1` inside a band.
    pub fn index_excess(&self, lambda_nm: f64) -> Result<f64> {
        self.band_of(lambda_nm)?;
        Ok(self.index_terms(lambda_nm)?.excess())
    }

    pub fn effective_index(&self, lambda_nm: f64) -> Result<f64> {
        Ok(1.0 + self.index_excess(lambda_nm)?)
    }

    /// Excess wavevector `w (n_eff - 1) / c`, rad/m.
    pub fn excess_wavevector(&self, omega: f64) -> Result<f64> {
        Ok(omega * self.index_excess(nm_from_omega(omega))? / C)
    }

    /// Propagation constant `w n_eff / c`, rad/m.
    pub fn wavevector(&self, omega: f64) -> Result<f64> {
        Ok(omega / C + self.excess_wavevector(omega)?)
    }

    /// Excess wavevector at `omega` restricted to `band`; stencil points that
    /// leave the band are reported as stencil errors.
    fn q_in_band(&self, omega: f64, band: BandLabel, lambda_nm: f64, rel_step: f64) -> Result<f64> {
        match self.band_of_omega(omega) {
            Ok(b) if b == band => self.excess_wavevector(omega),
            Ok(_) | Err(Error::Divergence { .. }) | Err(Error::Range { .. }) => {
                Err(Error::Stencil { lambda_nm, rel_step })
            }
            Err(e) => Err(e),
        }
    }

    /// `k`, `beta1 = dk/dw` and `beta2 = d2k/dw2` at `lambda_nm`.
    ///
    /// `beta1` is a five-point central difference with relative step
    /// [`DIFF_REL_STEP`];
    /// `beta2` is a Richardson-extrapolated central second difference with
    /// relative step [`DIFF2_REL_STEP`]. Both steps are halved if the stencil
    /// touches a resonance exclusion zone or the window edge.
    pub fn dispersion_derivatives(&self, lambda_nm: f64) -> Result<Dispersion> {
        let band = self.band_of(lambda_nm)?;
        let omega = omega_from_nm(lambda_nm);
        let q0 = self.excess_wavevector(omega)?;
        let mut rel1 = DIFF_REL_STEP;
        let mut rel2 = DIFF2_REL_STEP;
        for _ in 0..=STEP_HALVINGS {
            let attempt = (|| -> Result<(f64, f64)> {
                let h = rel1 * omega;
                let q = |x: f64| self.q_in_band(omega + x, band, lambda_nm, rel1);
                let beta1 = 1.0 / C
                    + (q(-2.0 * h)? - 8.0 * q(-h)? + 8.0 * q(h)? - q(2.0 * h)?) / (12.0 * h);

                let h2 = rel2 * omega;
                let second = |step: f64| -> Result<f64> {
                    let p = self.q_in_band(omega + step, band, lambda_nm, rel2)?;
                    let m = self.q_in_band(omega - step, band, lambda_nm, rel2)?;
                    Ok((p - 2.0 * q0 + m) / (step * step))
                };
                let d_h = second(h2)?;
                let d_2h = second(2.0 * h2)?;
                Ok((beta1, (4.0 * d_h - d_2h) / 3.0))
            })();
            match attempt {
                Ok((beta1, beta2)) => {
                    return Ok(Dispersion {
                        k: omega / C + q0,
                        beta1,
                        beta2,
                    })
                }
                Err(Error::Stencil { .. }) => {
                    rel1 *= 0.5;
                    rel2 *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
        Err(Error::Stencil {
            lambda_nm,
            rel_step: rel1,
        })
    }

    pub fn beta1(&self, omega: f64) -> Result<f64> {
        Ok(self.dispersion_derivatives(nm_from_omega(omega))?.beta1)
    }

    pub fn beta2_at(&self, lambda_nm: f64) -> Result<f64> {
        Ok(self.dispersion_derivatives(lambda_nm)?.beta2)
    }

    /// Zero-dispersion wavelengths inside `band`, ascending.
    ///
    /// beta2 is sampled on a uniform frequency grid across the band (outside
    /// the exclusion zones); every sign change is refined by bisection to a
    /// relative wavelength tolerance of 1e-9.
    pub fn find_zdw(&self, band: &Band) -> Result<Vec<f64>> {
        let lo = band.lo_nm * (1.0 + 1.01 * RESONANCE_EXCLUSION);
        let hi = band.hi_nm * (1.0 - 1.01 * RESONANCE_EXCLUSION);
        let lo = lo.max(self.window_nm.0);
        let hi = hi.min(self.window_nm.1);
        if hi <= lo {
            return Ok(Vec::new());
        }
        let (w_lo, w_hi) = (omega_from_nm(hi), omega_from_nm(lo));
        let samples: Vec<(f64, Option<f64>)> = (0..ZDW_SCAN_POINTS)
            .map(|i| {
                let w = w_lo + (w_hi - w_lo) * i as f64 / (ZDW_SCAN_POINTS - 1) as f64;
                let l = nm_from_omega(w);
                (l, self.beta2_at(l).ok())
            })
            .collect();
        let mut roots = Vec::new();
        for pair in samples.windows(2) {
            if let ((l0, Some(b0)), (l1, Some(b1))) = (pair[0], pair[1]) {
                if b0 == 0.0 {
                    roots.push(l0);
                } else if b0.signum() != b1.signum() && b1 != 0.0 {
                    let root = bisect(|l| self.beta2_at(l), l1, l0, 1e-9, 0.0)?;
                    roots.push(root);
                }
            }
        }
        roots.sort_by(f64::total_cmp);
        Ok(roots)
    }
}
