//! Parameter studies: fiber length, gas pressure and strut thickness.
//!
//! Sweep points are evaluated in parallel and merged in axis order, so output
//! does not depend on the number of worker threads.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fibermodel::{BandStructure, FilledFiber};
use crate::gasmedia::GasDatabase;
use crate::jsa::{build_jsa, jsi, JsaOptions, PumpSpectrum};
use crate::numerics::linear_fit;
use crate::phasematch::{
    density_map, solve_phase_matching, BranchKey, DensityMap, PhaseMatchBranch,
    PhaseMatchSolution,
};
use crate::schmidt::{marginals, schmidt_decompose};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub key: Option<BranchKey>,
    pub branch: Option<PhaseMatchBranch>,
    pub k_flat: Option<f64>,
    pub k_complex: Option<f64>,
    pub theta_deg: Option<f64>,
    pub theta_wavelength_deg: Option<f64>,
    /// JSI marginal centroids.
    pub idler_nm: Option<f64>,
    pub signal_nm: Option<f64>,
    /// rad/s
    pub idler_omega: Option<f64>,
    pub signal_omega: Option<f64>,
    pub artifacts: Vec<String>,
    /// Set when the point could not be evaluated.
    pub error: Option<String>,
}

impl SweepPoint {
    fn gap(value: f64, error: String) -> Self {
        Self {
            value,
            error: Some(error),
            ..Default::default()
        }
    }
}

/// Linear fits over a pressure sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureFit {
    /// Idler centroid sensitivity in ordinary frequency, THz/bar.
    pub idler_thz_per_bar: f64,
    /// The same in angular frequency, rad/ps per bar.
    pub idler_rad_per_ps_per_bar: f64,
    pub idler_r_squared: f64,
    pub theta_deg_per_bar: f64,
    pub theta_r_squared: f64,
    pub theta_wavelength_deg_per_bar: f64,
    /// Idler centroid span over the sweep, THz.
    pub idler_span_thz: f64,
    pub idler_span_rad_per_ps: f64,
    pub points_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Swept parameter, e.g. `fiber_length_m`.
    pub axis: String,
    pub points: Vec<SweepPoint>,
    pub fit: Option<PressureFit>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9}")).unwrap_or_default()
}

impl SweepResult {
    /// Summary CSV `param,value,K_flat,K_complex,theta_deg,idler_nm,signal_nm`;
    /// gaps leave the derived columns empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("param,value,K_flat,K_complex,theta_deg,idler_nm,signal_nm\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{:.6},{},{},{},{},{}",
                self.axis,
                p.value,
                opt(p.k_flat),
                opt(p.k_complex),
                opt(p.theta_deg),
                opt(p.idler_nm),
                opt(p.signal_nm)
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Values of the successfully evaluated points.
    pub fn ok_points(&self) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(|p| p.error.is_none())
    }

    pub fn gaps(&self) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(|p| p.error.is_some())
    }
}

fn check_monotone(values: &[f64], key: &str) -> Result<()> {
    let inc = values.windows(2).all(|w| w[1] > w[0]);
    let dec = values.windows(2).all(|w| w[1] < w[0]);
    if inc || dec {
        Ok(())
    } else {
        Err(Error::validation(key, "sweep axis must be strictly monotone"))
    }
}

fn evaluate(
    fiber: &FilledFiber,
    pump: &PumpSpectrum,
    branch: &PhaseMatchBranch,
    length_m: f64,
    opts: &JsaOptions,
    artifact: Option<PathBuf>,
    value: f64,
) -> Result<SweepPoint> {
    let grid = build_jsa(fiber, pump, branch, length_m, opts)?;
    let k_flat = schmidt_decompose(&grid, true)?.k;
    let k_complex = schmidt_decompose(&grid, false)?.k;
    let intensity = jsi(&grid);
    let m = marginals(&intensity);
    let mut artifacts = Vec::new();
    if let Some(path) = artifact {
        std::fs::write(&path, intensity.to_csv())?;
        artifacts.push(path.display().to_string());
    }
    Ok(SweepPoint {
        value,
        key: Some(branch.key()),
        branch: Some(branch.clone()),
        k_flat: Some(k_flat),
        k_complex: Some(k_complex),
        theta_deg: Some(branch.theta_deg),
        theta_wavelength_deg: Some(branch.theta_wavelength_deg),
        idler_nm: Some(m.idler_centroid_nm),
        signal_nm: Some(m.signal_centroid_nm),
        idler_omega: Some(m.idler_centroid_omega),
        signal_omega: Some(m.signal_centroid_omega),
        artifacts,
        error: None,
    })
}

fn artifact_path(dir: Option<&Path>, prefix: &str, value: f64, unit: &str) -> Option<PathBuf> {
    dir.map(|d| d.join(format!("jsi_{prefix}{value:.4}{unit}.csv")))
}

/// JSA, JSI and Schmidt numbers for each fiber length, on the branch
/// selected by the config at its nominal pressure.
pub fn sweep_length(
    cfg: &RunConfig,
    db: &GasDatabase,
    lengths_m: &[f64],
    artifacts_dir: Option<&Path>,
) -> Result<SweepResult> {
    for &l in lengths_m {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::validation("sweep.lengths_m", "lengths must be positive"));
        }
    }
    check_monotone(lengths_m, "sweep.lengths_m")?;
    let fiber = cfg.filled_fiber(db)?;
    let pump = cfg.pump_spectrum()?;
    let solution = solve_phase_matching(&fiber, cfg.pump_omega(), &cfg.phase_match_options())?;
    let branch = cfg.select_branch(&solution)?;
    let opts = cfg.jsa_options();
    let points = lengths_m
        .par_iter()
        .map(|&l| {
            let path = artifact_path(artifacts_dir, "L", l, "m");
            evaluate(&fiber, &pump, &branch, l, &opts, path, l)
                .unwrap_or_else(|e| SweepPoint::gap(l, e.to_string()))
        })
        .collect();
    Ok(SweepResult {
        axis: "fiber_length_m".into(),
        points,
        fit: None,
    })
}

fn nearest(prev: &PhaseMatchBranch, solution: &PhaseMatchSolution) -> Option<PhaseMatchBranch> {
    let dist = |b: &PhaseMatchBranch| (b.omega_s - prev.omega_s).hypot(b.omega_i - prev.omega_i);
    let same_key = solution.branches.iter().filter(|b| b.key() == prev.key());
    same_key
        .min_by(|a, b| dist(a).total_cmp(&dist(b)))
        .or_else(|| solution.branches.iter().min_by(|a, b| dist(a).total_cmp(&dist(b))))
        .cloned()
}

/// Re-solve and evaluate the branch at each pressure of the config's gas.
///
/// The first point uses the config's branch selection; later points follow
/// the nearest branch in `(w_s, w_i)` to the previous one, preferring the same
/// band assignment. Pressures with no root are recorded as gaps.
pub fn sweep_pressure(
    cfg: &RunConfig,
    db: &GasDatabase,
    pressures_bar: &[f64],
    artifacts_dir: Option<&Path>,
) -> Result<SweepResult> {
    if pressures_bar.iter().any(|&p| !(0.0..=20.0).contains(&p)) {
        return Err(Error::validation(
            "sweep.pressures_bar",
            "pressures must lie within 0-20 bar",
        ));
    }
    check_monotone(pressures_bar, "sweep.pressures_bar")?;
    let base = cfg.filled_fiber(db)?;
    let pump = cfg.pump_spectrum()?;
    let pm_opts = cfg.phase_match_options();
    let fibers: Vec<Result<FilledFiber>> = pressures_bar
        .iter()
        .map(|&p| {
            let gas = base.gas.with_pressure(p)?;
            FilledFiber::new(base.fiber.clone(), gas, base.window_nm)
        })
        .collect();
    let solutions: Vec<std::result::Result<PhaseMatchSolution, String>> = fibers
        .par_iter()
        .map(|f| match f {
            Ok(f) => solve_phase_matching(f, cfg.pump_omega(), &pm_opts).map_err(|e| e.to_string()),
            Err(e) => Err(e.to_string()),
        })
        .collect();

    let mut chosen: Vec<std::result::Result<PhaseMatchBranch, String>> = Vec::new();
    let mut prev: Option<PhaseMatchBranch> = None;
    for sol in &solutions {
        let pick = match sol {
            Err(e) => Err(e.clone()),
            Ok(s) => {
                let b = match &prev {
                    None => cfg.select_branch(s).ok(),
                    Some(p) => nearest(p, s),
                };
                b.ok_or_else(|| "no phase-matched branch (lost branch)".to_string())
            }
        };
        if let Ok(b) = &pick {
            prev = Some(b.clone());
        }
        chosen.push(pick);
    }

    let opts = cfg.jsa_options();
    let points: Vec<SweepPoint> = pressures_bar
        .par_iter()
        .zip(fibers.par_iter())
        .zip(chosen.par_iter())
        .map(|((&p, fiber), branch)| match (fiber, branch) {
            (Ok(f), Ok(b)) => {
                let path = artifact_path(artifacts_dir, "P", p, "bar");
                evaluate(f, &pump, b, cfg.fiber_length_m, &opts, path, p)
                    .unwrap_or_else(|e| SweepPoint::gap(p, e.to_string()))
            }
            (Err(e), _) => SweepPoint::gap(p, e.to_string()),
            (_, Err(e)) => SweepPoint::gap(p, e.clone()),
        })
        .collect();
    let fit = pressure_fit(&points).ok();
    Ok(SweepResult {
        axis: "pressure_bar".into(),
        points,
        fit,
    })
}

/// Linear fits of idler centroid frequency and stripe angle against pressure.
pub fn pressure_fit(points: &[SweepPoint]) -> Result<PressureFit> {
    let ok: Vec<&SweepPoint> = points
        .iter()
        .filter(|p| p.idler_omega.is_some() && p.theta_deg.is_some())
        .collect();
    let p: Vec<f64> = ok.iter().map(|x| x.value).collect();
    let w: Vec<f64> = ok.iter().map(|x| x.idler_omega.unwrap_or(f64::NAN)).collect();
    let th: Vec<f64> = ok.iter().map(|x| x.theta_deg.unwrap_or(f64::NAN)).collect();
    let thl: Vec<f64> = ok
        .iter()
        .map(|x| x.theta_wavelength_deg.unwrap_or(f64::NAN))
        .collect();
    let fw = linear_fit(&p, &w)?;
    let ft = linear_fit(&p, &th)?;
    let fl = linear_fit(&p, &thl)?;
    let span = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - w.iter().cloned().fold(f64::INFINITY, f64::min);
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok(PressureFit {
        idler_thz_per_bar: fw.slope / two_pi / 1e12,
        idler_rad_per_ps_per_bar: fw.slope / 1e12,
        idler_r_squared: fw.r_squared,
        theta_deg_per_bar: ft.slope,
        theta_r_squared: ft.r_squared,
        theta_wavelength_deg_per_bar: fl.slope,
        idler_span_thz: span / two_pi / 1e12,
        idler_span_rad_per_ps: span / 1e12,
        points_used: ok.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThicknessMap {
    pub t_nm: f64,
    pub bands: BandStructure,
    pub map: DensityMap,
}

/// Band structure and density map for each strut thickness, over the
/// `[density_map]` pump range of the config.
pub fn sweep_thickness(cfg: &RunConfig, db: &GasDatabase, t_nm: &[f64]) -> Result<Vec<ThicknessMap>> {
    if t_nm.is_empty() {
        return Ok(Vec::new());
    }
    if t_nm.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::validation("sweep.t_nm", "thicknesses must be positive"));
    }
    let dm = cfg.density_map.as_ref().ok_or_else(|| {
        Error::validation("density_map", "a [density_map] block is required for thickness sweeps")
    })?;
    let base = cfg.fiber_model(db)?;
    let gas = cfg.gas_state(db)?;
    let opts = cfg.phase_match_options();
    t_nm.iter()
        .map(|&t| {
            let fiber = FilledFiber::full_window(base.with_thickness(t)?, gas.clone())?;
            let map = density_map(&fiber, (dm.pump_range_nm[0], dm.pump_range_nm[1]), dm.steps, &opts);
            Ok(ThicknessMap {
                t_nm: t,
                bands: fiber.bands.clone(),
                map,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn cfg(n: usize) -> RunConfig {
        let mut c = RunConfig::nominal();
        c.fiber.t_nm = 645.0;
        c.gas.temperature_k = Some(273.15);
        c.grid.n = n;
        c.phasematch.idler_near_nm = Some(1540.0);
        c
    }

    #[test]
    fn single_length_single_record() {
        let db = GasDatabase::bundled();
        let r = sweep_length(&cfg(64), &db, &[1.0], None).unwrap();
        assert_eq!(r.points.len(), 1);
        assert!(r.points[0].k_flat.unwrap() >= 1.0);
        assert!(r.to_csv().starts_with("param,value,K_flat,K_complex,theta_deg,idler_nm,signal_nm\n"));
    }

    #[test]
    fn invalid_axes_rejected() {
        let db = GasDatabase::bundled();
        assert!(sweep_length(&cfg(32), &db, &[1.0, -1.0], None).is_err());
        assert!(sweep_length(&cfg(32), &db, &[1.0, 0.5, 0.8], None).is_err());
        assert!(sweep_pressure(&cfg(32), &db, &[3.0, 25.0], None).is_err());
    }

    #[test]
    fn empty_thickness_list() {
        let db = GasDatabase::bundled();
        assert!(sweep_thickness(&cfg(32), &db, &[]).unwrap().is_empty());
    }

    #[test]
    fn pressure_sweep_keeps_branch_and_fits() {
        let db = GasDatabase::bundled();
        let r = sweep_pressure(&cfg(64), &db, &[3.0, 3.2, 3.4], None).unwrap();
        let keys: Vec<_> = r.ok_points().map(|p| p.key).collect();
        assert_eq!(keys.len(), 3);
        assert!(keys.windows(2).all(|w| w[0] == w[1]));
        let fit = r.fit.unwrap();
        assert!(fit.idler_rad_per_ps_per_bar < 0.0);
        assert!((fit.idler_rad_per_ps_per_bar / fit.idler_thz_per_bar - 2.0 * std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let db = GasDatabase::bundled();
        let c = cfg(48);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sweep_pressure(&c, &db, &[3.0, 3.3, 3.6], None).unwrap().to_csv())
        };
        assert_eq!(run(1), run(3));
    }
}
