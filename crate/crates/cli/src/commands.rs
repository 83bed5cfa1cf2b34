use std::fmt::Write as _;

use hcfwm::config::RunConfig;
use hcfwm::error::{Error, Result};
use hcfwm::fibermodel::FilledFiber;
use hcfwm::gasmedia::GasDatabase;
use hcfwm::jsa::{build_jsa, jsi, JsaGrid};
use hcfwm::phasematch::{density_map, solve_phase_matching, PhaseMatchBranch};
use hcfwm::schmidt::{marginals, schmidt_decompose, schmidt_decompose_jsi};
use hcfwm::sweeps::{sweep_length, sweep_pressure, sweep_thickness, SweepResult};
use hcfwm::tomography::{power_scaling_check, reconstruct_jsi, simulate_set_scan};
use hcfwm::units::{omega_from_nm, thz_from_omega};

use crate::output::RunDir;

const DISPERSION_SAMPLES: usize = 2000;

pub struct Context {
    pub cfg: RunConfig,
    pub db: GasDatabase,
}

impl Context {
    fn fiber(&self) -> Result<FilledFiber> {
        self.cfg.filled_fiber(&self.db)
    }

    fn branch(&self, fiber: &FilledFiber) -> Result<(PhaseMatchBranch, Vec<String>)> {
        let sol = solve_phase_matching(fiber, self.cfg.pump_omega(), &self.cfg.phase_match_options())?;
        Ok((self.cfg.select_branch(&sol)?, sol.warnings))
    }

    fn jsa(&self, fiber: &FilledFiber, branch: &PhaseMatchBranch) -> Result<JsaGrid> {
        build_jsa(
            fiber,
            &self.cfg.pump_spectrum()?,
            branch,
            self.cfg.fiber_length_m,
            &self.cfg.jsa_options(),
        )
    }

    fn csv(&self) -> bool {
        self.cfg.output.wants("csv")
    }

    fn json(&self) -> bool {
        self.cfg.output.wants("json")
    }
}

pub fn dispersion(ctx: &Context, out: &mut RunDir) -> Result<()> {
    let fiber = ctx.fiber()?;
    if ctx.json() {
        out.write(
            "bands.json",
            &fiber.bands.to_json()?,
            format!(
                "{} bands, {} resonances in [{:.0}, {:.0}] nm",
                fiber.bands.bands.len(),
                fiber.bands.resonances_nm.len(),
                fiber.window_nm.0,
                fiber.window_nm.1
            ),
        )?;
        let mut zdw = Vec::new();
        for band in &fiber.bands.bands {
            zdw.push(serde_json::json!({ "band": band.label, "zdw_nm": fiber.find_zdw(band)? }));
        }
        let n: usize = zdw.iter().map(|z| z["zdw_nm"].as_array().map_or(0, |a| a.len())).sum();
        out.write("zdw.json", &serde_json::to_string_pretty(&zdw)?, format!("{n} zero-dispersion wavelengths"))?;
    }
    if ctx.csv() {
        let (lo, hi) = fiber.window_nm;
        let mut csv = String::from("lambda_nm,band,n_eff,beta1_s_per_m,beta2_s2_per_m\n");
        let mut rows = 0;
        for i in 0..DISPERSION_SAMPLES {
            let l = lo + (hi - lo) * (i as f64 + 0.5) / DISPERSION_SAMPLES as f64;
            let Ok(band) = fiber.band_of(l) else { continue };
            let d = match fiber.dispersion_derivatives(l) {
                Ok(d) => d,
                Err(Error::Stencil { .. }) => continue,
                Err(e) => return Err(e),
            };
            let _ = writeln!(
                csv,
                "{:.6},{},{:.12},{:.9e},{:.9e}",
                l,
                band,
                fiber.effective_index(l)?,
                d.beta1,
                d.beta2
            );
            rows += 1;
        }
        out.write("dispersion.csv", &csv, format!("{rows} wavelength samples"))?;
    }
    Ok(())
}

pub fn phasematch(ctx: &Context, out: &mut RunDir) -> Result<()> {
    let fiber = ctx.fiber()?;
    let sol = solve_phase_matching(&fiber, ctx.cfg.pump_omega(), &ctx.cfg.phase_match_options())?;
    out.warnings.extend(sol.warnings.iter().cloned());
    let summary = format!("{} branches at pump {:.3} nm", sol.branches.len(), ctx.cfg.pump.lambda_nm);
    if ctx.json() {
        out.write("branches.json", &serde_json::to_string_pretty(&sol.branches)?, summary.clone())?;
    }
    if ctx.csv() {
        let mut csv = String::from(
            "lambda_s_nm,lambda_i_nm,delta_omega_THz,band_p,band_s,band_i,theta_deg,theta_wavelength_deg,delta_phi_rad2_per_s2,beta1_p_s_per_m,beta1_s_s_per_m,beta1_i_s_per_m,residual_rad_per_m\n",
        );
        for b in &sol.branches {
            let _ = writeln!(
                csv,
                "{:.6},{:.6},{:.6},{},{},{},{:.6},{:.6},{:.9e},{:.12e},{:.12e},{:.12e},{:.3e}",
                b.lambda_s_nm(),
                b.lambda_i_nm(),
                thz_from_omega(b.detuning()),
                b.band_p,
                b.band_s,
                b.band_i,
                b.theta_deg,
                b.theta_wavelength_deg,
                b.delta_phi_unit_length / ctx.cfg.fiber_length_m.powi(2),
                b.beta1_p,
                b.beta1_s,
                b.beta1_i,
                b.residual
            );
        }
        out.write("branches.csv", &csv, summary)?;
    }
    Ok(())
}

pub fn jsa(ctx: &Context, out: &mut RunDir) -> Result<()> {
    let fiber = ctx.fiber()?;
    let (branch, warnings) = ctx.branch(&fiber)?;
    out.warnings.extend(warnings);
    let grid = ctx.jsa(&fiber, &branch)?;
    out.warnings.extend(grid.metadata.warnings.iter().cloned());
    let m = marginals(&jsi(&grid));
    let summary = format!(
        "{}x{} grid, signal {:.2} nm, idler {:.2} nm",
        grid.n_s(),
        grid.n_i(),
        m.signal_centroid_nm,
        m.idler_centroid_nm
    );
    if ctx.json() {
        out.write("jsa.json", &grid.to_json()?, summary.clone())?;
    }
    if ctx.csv() {
        out.write("jsi.csv", &jsi(&grid).to_csv(), summary)?;
    }
    Ok(())
}

pub fn schmidt(ctx: &Context, out: &mut RunDir) -> Result<()> {
    let fiber = ctx.fiber()?;
    let (branch, warnings) = ctx.branch(&fiber)?;
    out.warnings.extend(warnings);
    let grid = ctx.jsa(&fiber, &branch)?;
    out.warnings.extend(grid.metadata.warnings.iter().cloned());
    let flat = schmidt_decompose(&grid, true)?;
    let complex = schmidt_decompose(&grid, false)?;
    if ctx.json() {
        out.write("schmidt_flat.json", &flat.to_json()?, format!("flat-phase K = {:.6}", flat.k))?;
        out.write("schmidt_complex.json", &complex.to_json()?, format!("complex K = {:.6}", complex.k))?;
    }
    if ctx.csv() {
        let n = complex.signal_modes.len();
        out.write("signal_modes.csv", &complex.signal_modes_csv(), format!("{n} signal modes"))?;
        out.write("idler_modes.csv", &complex.idler_modes_csv(), format!("{n} idler modes"))?;
    }
    Ok(())
}

pub fn set_sim(ctx: &Context, out: &mut RunDir) -> Result<()> {
    let fiber = ctx.fiber()?;
    let (branch, warnings) = ctx.branch(&fiber)?;
    out.warnings.extend(warnings);
    let grid = ctx.jsa(&fiber, &branch)?;
    let truth = jsi(&grid);
    let s = &ctx.cfg.set;
    let seeds: Vec<f64> = (0..s.steps)
        .map(|k| {
            let l = s.seed_range_nm[0] + (s.seed_range_nm[1] - s.seed_range_nm[0]) * k as f64 / (s.steps - 1) as f64;
            omega_from_nm(l)
        })
        .collect();
    let powers = vec![s.seed_power_w; seeds.len()];
    let params = ctx.cfg.set_params()?;
    let scan = simulate_set_scan(&truth, &seeds, &powers, &params)?;
    let rec = reconstruct_jsi(&scan)?;
    let k_truth = schmidt_decompose_jsi(&truth)?.k;
    let k_rec = schmidt_decompose_jsi(&rec)?.k;
    // The seed range usually covers only part of the idler axis; a noiseless
    // scan gives the truth restricted to the same window.
    let mut clean = params.clone();
    clean.noise = Default::default();
    let windowed = reconstruct_jsi(&simulate_set_scan(&truth, &seeds, &powers, &clean)?)?;
    let k_window = schmidt_decompose_jsi(&windowed)?.k;
    let scaling = match (&s.seed_powers_w, &s.pump_powers_w) {
        (Some(sp), Some(pp)) => Some(power_scaling_check(&truth, sp, pp, &params)?),
        _ => None,
    };
    if ctx.csv() {
        out.write(
            "set_scan.csv",
            &scan.to_csv(),
            format!("{} slices x {} signal samples", scan.slices.len(), scan.signal_omega.len()),
        )?;
        out.write("reconstruction.csv", &rec.to_csv(), format!("reconstructed JSI, flat-phase K = {k_rec:.6}"))?;
    }
    if ctx.json() {
        let doc = serde_json::json!({
            "K_truth_flat": k_truth,
            "K_truth_in_seed_window_flat": k_window,
            "K_reconstructed_flat": k_rec,
            "slices": scan.slices.len(),
            "power_scaling": scaling,
        });
        let summary = match &scaling {
            Some(p) => format!(
                "K truth {k_truth:.6}, in seed window {k_window:.6}, reconstructed {k_rec:.6}; exponents seed {:.4}, pump {:.4}",
                p.seed_exponent, p.pump_exponent
            ),
            None => format!("K truth {k_truth:.6}, in seed window {k_window:.6}, reconstructed {k_rec:.6}"),
        };
        out.write("set.json", &serde_json::to_string_pretty(&doc)?, summary)?;
    }
    Ok(())
}

fn write_sweep(ctx: &Context, out: &mut RunDir, result: &SweepResult, summary: String) -> Result<()> {
    for p in result.gaps() {
        out.warnings.push(format!(
            "{} = {}: {}",
            result.axis,
            p.value,
            p.error.as_deref().unwrap_or("")
        ));
    }
    for p in result.ok_points() {
        for a in &p.artifacts {
            let name = std::path::Path::new(a)
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            out.record(&name, format!("JSI at {} = {}", result.axis, p.value));
        }
    }
    if ctx.csv() {
        out.write("summary.csv", &result.to_csv(), summary.clone())?;
    }
    if ctx.json() {
        out.write("sweep.json", &result.to_json()?, summary)?;
    }
    Ok(())
}

pub fn sweep_length_cmd(ctx: &Context, out: &mut RunDir) -> Result<()> {
    let lengths = ctx
        .cfg
        .sweep
        .lengths_m
        .clone()
        .ok_or_else(|| Error::validation("sweep.lengths_m", "missing; required by sweep-length"))?;
    let dir = ctx.csv().then(|| out.path().to_path_buf());
    let r = sweep_length(&ctx.cfg, &ctx.db, &lengths, dir.as_deref())?;
    let ks: Vec<String> = r
        .points
        .iter()
        .map(|p| p.k_flat.map_or("gap".into(), |k| format!("{k:.4}")))
        .collect();
    write_sweep(ctx, out, &r, format!("{} lengths, flat-phase K = [{}]", r.points.len(), ks.join(", ")))
}

pub fn sweep_pressure_cmd(ctx: &Context, out: &mut RunDir) -> Result<()> {
    let pressures = ctx
        .cfg
        .sweep
        .pressures_bar
        .clone()
        .ok_or_else(|| Error::validation("sweep.pressures_bar", "missing; required by sweep-pressure"))?;
    let dir = ctx.csv().then(|| out.path().to_path_buf());
    let r = sweep_pressure(&ctx.cfg, &ctx.db, &pressures, dir.as_deref())?;
    let summary = match &r.fit {
        Some(f) => format!(
            "{} pressures; idler slope {:.3} rad/ps/bar ({:.3} THz/bar), R2 {:.5}; span {:.2} rad/ps; theta slope {:.3} deg/bar",
            r.points.len(),
            f.idler_rad_per_ps_per_bar,
            f.idler_thz_per_bar,
            f.idler_r_squared,
            f.idler_span_rad_per_ps,
            f.theta_deg_per_bar
        ),
        None => format!("{} pressures; too few points for a fit", r.points.len()),
    };
    write_sweep(ctx, out, &r, summary)
}

pub fn density_map_cmd(ctx: &Context, out: &mut RunDir) -> Result<()> {
    let write_map = |out: &mut RunDir, suffix: &str, bands: &hcfwm::fibermodel::BandStructure, map: &hcfwm::phasematch::DensityMap| -> Result<()> {
        out.warnings.extend(map.warnings.iter().cloned());
        for (lp, e) in &map.gaps {
            out.warnings.push(format!("pump {lp:.3} nm: {e}"));
        }
        let fams: Vec<String> = map
            .families()
            .iter()
            .map(|(p, s, i)| format!("{p}/{s}/{i}"))
            .collect();
        let summary = format!("{} records, families (p/s/i) [{}]", map.records.len(), fams.join(", "));
        if ctx.csv() {
            out.write(&format!("density_map{suffix}.csv"), &map.to_csv(), summary)?;
        }
        if ctx.json() {
            out.write(&format!("bands{suffix}.json"), &bands.to_json()?, format!("{} bands", bands.bands.len()))?;
        }
        Ok(())
    };
    match &ctx.cfg.sweep.t_nm {
        Some(ts) => {
            for m in sweep_thickness(&ctx.cfg, &ctx.db, ts)? {
                write_map(out, &format!("_t{:.0}", m.t_nm), &m.bands, &m.map)?;
            }
        }
        None => {
            let dm = ctx.cfg.density_map.as_ref().ok_or_else(|| {
                Error::validation("density_map", "missing; required by density-map")
            })?;
            let fiber = ctx.fiber()?;
            let map = density_map(
                &fiber,
                (dm.pump_range_nm[0], dm.pump_range_nm[1]),
                dm.steps,
                &ctx.cfg.phase_match_options(),
            );
            write_map(out, "", &fiber.bands, &map)?;
        }
    }
    Ok(())
}
