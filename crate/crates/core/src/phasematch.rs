//! Phase matching of degenerate-pump four-wave mixing.
//!
//! The mismatch is `dk = k(w_s) + k(w_i) - 2 k(w_p)` (plus an optional Kerr
//! term). Roots are located on the symmetric detuning line
//! `w_s = w_p + dw`, `w_i = w_p - dw`, so energy conservation holds by
//! construction. Each root is annotated with the band of every photon, the
//! phase-matching angle and the phase-matching width.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibermodel::{BandLabel, FilledFiber};
use crate::gasmedia::nonlinear_index;
use crate::numerics::bisect;
use crate::units::{nm_from_omega, omega_from_nm, omega_from_thz, thz_from_omega, C};

/// Residual below which a phase-matching root is accepted, rad/m.
pub const RESIDUAL_TOL: f64 = 1e-4;

/// Near-pump cutoff on `|dw| / 2pi`, THz.
pub const DEFAULT_CUTOFF_THZ: f64 = 5.0;

pub const DEFAULT_SCAN_POINTS: usize = 4000;

const REFINE_SUBDIVISIONS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMatchOptions {
    /// Smallest detuning scanned, rad/s.
    pub min_detuning: f64,
    /// Largest detuning scanned, rad/s. `None` runs to the edge of the
    /// fiber's wavelength window on either side of the pump.
    pub max_detuning: Option<f64>,
    pub scan_points: usize,
    /// Peak pump power for the Kerr contribution; 0 disables it.
    pub pump_peak_power_w: f64,
}

impl Default for PhaseMatchOptions {
    fn default() -> Self {
        Self {
            min_detuning: omega_from_thz(DEFAULT_CUTOFF_THZ),
            max_detuning: None,
            scan_points: DEFAULT_SCAN_POINTS,
            pump_peak_power_w: 0.0,
        }
    }
}

/// Branch identity used for continuity tracking: the bands of the signal and
/// idler photons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BranchKey {
    pub band_s: BandLabel,
    pub band_i: BandLabel,
}

impl std::fmt::Display for BranchKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.band_s, self.band_i)
    }
}

/// One phase-matched solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMatchBranch {
    /// rad/s
    pub omega_p: f64,
    /// rad/s; the higher-frequency photon.
    pub omega_s: f64,
    /// rad/s
    pub omega_i: f64,
    pub band_p: BandLabel,
    pub band_s: BandLabel,
    pub band_i: BandLabel,
    /// Orientation of the phase-matching stripe in the (w_s, w_i) plane,
    /// degrees in (-90, 90].
    pub theta_deg: f64,
    /// The same stripe drawn in the (lambda_s, lambda_i) plane.
    pub theta_wavelength_deg: f64,
    /// Phase-matching width `|1 / (2 L^2 (b1p - b1s)(b1p - b1i))|` for L = 1 m,
    /// (rad/s)^2. Scale by `1 / L^2` for other lengths.
    pub delta_phi_unit_length: f64,
    /// Inverse group velocities, s/m.
    pub beta1_p: f64,
    pub beta1_s: f64,
    pub beta1_i: f64,
    /// Mismatch at the returned root, rad/m.
    pub residual: f64,
}

impl PhaseMatchBranch {
    pub fn detuning(&self) -> f64 {
        self.omega_s - self.omega_p
    }

    pub fn lambda_p_nm(&self) -> f64 {
        nm_from_omega(self.omega_p)
    }

    pub fn lambda_s_nm(&self) -> f64 {
        nm_from_omega(self.omega_s)
    }

    pub fn lambda_i_nm(&self) -> f64 {
        nm_from_omega(self.omega_i)
    }

    pub fn key(&self) -> BranchKey {
        BranchKey {
            band_s: self.band_s,
            band_i: self.band_i,
        }
    }
}

/// Phase-matching stripe angle and width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleWidth {
    pub theta_deg: f64,
    /// (rad/s)^2
    pub delta_phi_width: f64,
}

/// `theta = -atan((b1p - b1s) / (b1p - b1i))` and
/// `width = |1 / (2 L^2 (b1p - b1s)(b1p - b1i))|`.
///
/// When `b1p == b1i` the stripe is vertical and theta is reported as +90 deg;
/// the width is then infinite.
pub fn angle_width(beta1_p: f64, beta1_s: f64, beta1_i: f64, length_m: f64) -> AngleWidth {
    let ds = beta1_p - beta1_s;
    let di = beta1_p - beta1_i;
    let theta_deg = if di == 0.0 {
        90.0
    } else {
        let t = -(ds / di).atan().to_degrees();
        // atan never returns exactly -90 for finite input, but keep the
        // half-open interval explicit.
        if t <= -90.0 {
            90.0
        } else {
            t
        }
    };
    let denom = 2.0 * length_m * length_m * ds * di;
    let delta_phi_width = if denom == 0.0 {
        f64::INFINITY
    } else {
        (1.0 / denom).abs()
    };
    AngleWidth {
        theta_deg,
        delta_phi_width,
    }
}

pub fn pm_angle_width(branch: &PhaseMatchBranch, length_m: f64) -> AngleWidth {
    angle_width(branch.beta1_p, branch.beta1_s, branch.beta1_i, length_m)
}

/// Map a frequency-plane stripe angle to the wavelength plane:
/// `tan(theta_lambda) = (lambda_i / lambda_s)^2 tan(theta)`.
pub fn wavelength_plane_angle(theta_deg: f64, omega_s: f64, omega_i: f64) -> f64 {
    if theta_deg == 90.0 {
        return 90.0;
    }
    let ratio = (omega_s / omega_i).powi(2);
    (ratio * theta_deg.to_radians().tan()).atan().to_degrees()
}

/// Kerr coefficient `gamma = n2 w / (c A_eff)` with `A_eff = pi R_eff^2`, 1/(W m).
pub fn nonlinear_coefficient(fiber: &FilledFiber, omega_p: f64) -> f64 {
    let r = fiber.fiber.r_eff_um * 1e-6;
    nonlinear_index(&fiber.gas) * omega_p / (C * std::f64::consts::PI * r * r)
}

/// Full (un-linearised) mismatch `k(w_s) + k(w_i) - 2 k(w_p)`, rad/m, plus
/// `2 gamma P` when `pump_peak_power_w > 0`.
///
/// The vacuum contributions are summed separately so that exact energy
/// conservation cancels them without rounding.
pub fn delta_k(
    fiber: &FilledFiber,
    omega_p: f64,
    omega_s: f64,
    omega_i: f64,
    pump_peak_power_w: f64,
) -> Result<f64> {
    let qs = fiber.excess_wavevector(omega_s)?;
    let qi = fiber.excess_wavevector(omega_i)?;
    let qp = fiber.excess_wavevector(omega_p)?;
    let vacuum = ((omega_s - omega_p) + (omega_i - omega_p)) / C;
    let mut dk = (qs + qi - 2.0 * qp) + vacuum;
    if pump_peak_power_w > 0.0 {
        dk += 2.0 * nonlinear_coefficient(fiber, omega_p) * pump_peak_power_w;
    }
    Ok(dk)
}

/// Roots plus any diagnostics raised while finding them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseMatchSolution {
    pub branches: Vec<PhaseMatchBranch>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    detuning: f64,
    key: BranchKey,
    dk: f64,
}

fn sample(
    fiber: &FilledFiber,
    omega_p: f64,
    detuning: f64,
    power: f64,
) -> Option<Sample> {
    let omega_s = omega_p + detuning;
    let omega_i = omega_p - detuning;
    let band_s = fiber.band_of_omega(omega_s).ok()?;
    let band_i = fiber.band_of_omega(omega_i).ok()?;
    let dk = delta_k(fiber, omega_p, omega_s, omega_i, power).ok()?;
    Some(Sample {
        detuning,
        key: BranchKey { band_s, band_i },
        dk,
    })
}

fn detuning_limit(fiber: &FilledFiber, omega_p: f64) -> f64 {
    let w_min = omega_from_nm(fiber.window_nm.1);
    let w_max = omega_from_nm(fiber.window_nm.0);
    (omega_p - w_min).min(w_max - omega_p) * (1.0 - 1e-12)
}

fn refine_root(
    fiber: &FilledFiber,
    omega_p: f64,
    lo: f64,
    hi: f64,
    power: f64,
) -> Result<f64> {
    bisect(
        |d| delta_k(fiber, omega_p, omega_p + d, omega_p - d, power),
        lo,
        hi,
        0.0,
        RESIDUAL_TOL,
    )
}

/// Annotate a root with bands, group delays, angle and width.
pub fn make_branch(
    fiber: &FilledFiber,
    omega_p: f64,
    detuning: f64,
    power: f64,
) -> Result<PhaseMatchBranch> {
    let omega_s = omega_p + detuning;
    let omega_i = omega_p - detuning;
    let band_p = fiber.band_of_omega(omega_p)?;
    let band_s = fiber.band_of_omega(omega_s)?;
    let band_i = fiber.band_of_omega(omega_i)?;
    let beta1_p = fiber.beta1(omega_p)?;
    let beta1_s = fiber.beta1(omega_s)?;
    let beta1_i = fiber.beta1(omega_i)?;
    let aw = angle_width(beta1_p, beta1_s, beta1_i, 1.0);
    let residual = delta_k(fiber, omega_p, omega_s, omega_i, power)?;
    Ok(PhaseMatchBranch {
        omega_p,
        omega_s,
        omega_i,
        band_p,
        band_s,
        band_i,
        theta_deg: aw.theta_deg,
        theta_wavelength_deg: wavelength_plane_angle(aw.theta_deg, omega_s, omega_i),
        delta_phi_unit_length: aw.delta_phi_width,
        beta1_p,
        beta1_s,
        beta1_i,
        residual,
    })
}

/// All phase-matching roots for pump frequency `omega_p`.
///
/// The detuning axis is sampled on `opts.scan_points` uniform points;
/// samples whose signal or idler falls outside the window or in a resonance
/// exclusion zone are dropped. Sign changes between neighbouring samples with
/// the same band assignment are bisected to `|dk| <= 1e-4 rad/m`. Cells around
/// local minima of `|dk|` without a sign change are subdivided; a pair of roots
/// found there is kept and reported as a grid-too-coarse warning.
pub fn solve_phase_matching(
    fiber: &FilledFiber,
    omega_p: f64,
    opts: &PhaseMatchOptions,
) -> Result<PhaseMatchSolution> {
    fiber.band_of_omega(omega_p)?;
    if opts.scan_points < 2 {
        return Err(Error::validation("phasematch.scan_points", "need at least 2 points"));
    }
    let limit = detuning_limit(fiber, omega_p);
    let hi = opts.max_detuning.map_or(limit, |m| m.min(limit));
    let lo = opts.min_detuning;
    if !(lo > 0.0) {
        return Err(Error::validation(
            "phasematch.cutoff_THz",
            "near-pump cutoff must be positive",
        ));
    }
    let mut solution = PhaseMatchSolution::default();
    if hi <= lo {
        return Ok(solution);
    }
    let power = opts.pump_peak_power_w;
    let n = opts.scan_points;
    let samples: Vec<Option<Sample>> = (0..n)
        .map(|i| {
            let d = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            sample(fiber, omega_p, d, power)
        })
        .collect();

    let mut roots: Vec<f64> = Vec::new();
    for w in samples.windows(2) {
        if let (Some(a), Some(b)) = (w[0], w[1]) {
            if a.key == b.key && a.dk.signum() != b.dk.signum() {
                let r = refine_root(fiber, omega_p, a.detuning, b.detuning, power)?;
                roots.push(r);
            }
        }
    }

    // Double roots hiding inside a single cell.
    for i in 1..n.saturating_sub(1) {
        let (Some(prev), Some(cur), Some(next)) = (samples[i - 1], samples[i], samples[i + 1]) else {
            continue;
        };
        let same_band = prev.key == cur.key && cur.key == next.key;
        let same_sign = prev.dk.signum() == cur.dk.signum() && cur.dk.signum() == next.dk.signum();
        let local_min = cur.dk.abs() <= prev.dk.abs() && cur.dk.abs() <= next.dk.abs();
        if !(same_band && same_sign && local_min) {
            continue;
        }
        let mut sub = Vec::with_capacity(2 * REFINE_SUBDIVISIONS + 1);
        for k in 0..=2 * REFINE_SUBDIVISIONS {
            let d = prev.detuning
                + (next.detuning - prev.detuning) * k as f64 / (2 * REFINE_SUBDIVISIONS) as f64;
            sub.push((d, delta_k(fiber, omega_p, omega_p + d, omega_p - d, power)?));
        }
        let mut found = Vec::new();
        for p in sub.windows(2) {
            if p[0].1.signum() != p[1].1.signum() {
                found.push(refine_root(fiber, omega_p, p[0].0, p[1].0, power)?);
            }
        }
        if !found.is_empty() {
            let msg = format!(
                "grid too coarse: {} roots share the scan cell near detuning {:.3} THz at pump {:.2} nm",
                found.len(),
                thz_from_omega(cur.detuning),
                nm_from_omega(omega_p)
            );
            log::warn!("{msg}");
            solution.warnings.push(msg);
            roots.extend(found);
        }
    }

    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    for r in roots {
        let branch = make_branch(fiber, omega_p, r, power)?;
        if branch.residual.abs() > RESIDUAL_TOL {
            let msg = format!(
                "root near detuning {:.3} THz rejected: residual {:.3e} rad/m",
                thz_from_omega(r),
                branch.residual
            );
            log::warn!("{msg}");
            solution.warnings.push(msg);
            continue;
        }
        solution.branches.push(branch);
    }
    Ok(solution)
}

/// One point of a spectral density map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRecord {
    pub lambda_p_nm: f64,
    /// `|w_p - w_s/i|`, rad/s.
    pub delta_omega: f64,
    pub theta_deg: f64,
    pub band_p: BandLabel,
    pub band_s: BandLabel,
    pub band_i: BandLabel,
    pub lambda_s_nm: f64,
    pub lambda_i_nm: f64,
}

impl DensityRecord {
    /// Pump/signal/idler band triple identifying the branch family.
    pub fn family(&self) -> (BandLabel, BandLabel, BandLabel) {
        (self.band_p, self.band_s, self.band_i)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DensityMap {
    /// Sorted by pump wavelength, then detuning.
    pub records: Vec<DensityRecord>,
    /// Pump wavelengths that could not be solved, with the reason.
    pub gaps: Vec<(f64, String)>,
    pub warnings: Vec<String>,
}

impl DensityMap {
    pub fn families(&self) -> BTreeSet<(BandLabel, BandLabel, BandLabel)> {
        self.records.iter().map(DensityRecord::family).collect()
    }

    /// CSV with header `lambda_p_nm,delta_omega_THz,theta_deg,band_s,band_i`;
    /// the detuning column is `dw / 2pi` in THz.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda_p_nm,delta_omega_THz,theta_deg,band_s,band_i\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{:.6},{:.6},{:.6},{},{}",
                r.lambda_p_nm,
                thz_from_omega(r.delta_omega),
                r.theta_deg,
                r.band_s,
                r.band_i
            );
        }
        out
    }
}

/// Pump wavelengths `steps` points from `lo` to `hi` inclusive.
pub fn pump_grid(pump_range_nm: (f64, f64), steps: usize) -> Vec<f64> {
    let (lo, hi) = pump_range_nm;
    if steps == 0 || hi < lo {
        return Vec::new();
    }
    if steps == 1 {
        return vec![lo];
    }
    (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect()
}

/// FWM spectral density map over a range of pump wavelengths.
///
/// Pump steps are solved independently (in parallel); a failing step is
/// recorded as a gap instead of aborting the map.
pub fn density_map(
    fiber: &FilledFiber,
    pump_range_nm: (f64, f64),
    steps: usize,
    opts: &PhaseMatchOptions,
) -> DensityMap {
    let pumps = pump_grid(pump_range_nm, steps);
    let solved: Vec<(f64, Result<PhaseMatchSolution>)> = pumps
        .par_iter()
        .map(|&lp| (lp, solve_phase_matching(fiber, omega_from_nm(lp), opts)))
        .collect();
    let mut map = DensityMap::default();
    for (lp, res) in solved {
        match res {
            Ok(sol) => {
                map.warnings.extend(sol.warnings);
                map.records.extend(sol.branches.iter().map(|b| DensityRecord {
                    lambda_p_nm: lp,
                    delta_omega: b.detuning(),
                    theta_deg: b.theta_deg,
                    band_p: b.band_p,
                    band_s: b.band_s,
                    band_i: b.band_i,
                    lambda_s_nm: b.lambda_s_nm(),
                    lambda_i_nm: b.lambda_i_nm(),
                }));
            }
            Err(e) => map.gaps.push((lp, e.to_string())),
        }
    }
    map.records.sort_by(|a, b| {
        a.lambda_p_nm
            .total_cmp(&b.lambda_p_nm)
            .then(a.delta_omega.total_cmp(&b.delta_omega))
    });
    map
}
