//! Run configuration (TOML).
//!
//! Parsing is strict: unknown keys are rejected so a unit typo such as
//! `t_um` fails loudly. Frequencies written in THz (`sigma_THz`,
//! `period_THz`, `cutoff_THz`) are ordinary frequencies, `omega / 2pi`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibermodel::{BandLabel, Cladding, FiberModel, FilledFiber};
use crate::gasmedia::{GasDatabase, GasState, DEFAULT_TEMPERATURE_K};
use crate::jsa::{JsaOptions, PhiMode, PumpSpectrum, DEFAULT_GRID_N, DEFAULT_SPAN};
use crate::phasematch::{
    PhaseMatchBranch, PhaseMatchOptions, PhaseMatchSolution, DEFAULT_CUTOFF_THZ,
    DEFAULT_SCAN_POINTS,
};
use crate::tomography::{NoiseModel, SetParams};
use crate::units::{nm_from_omega, omega_from_nm, omega_from_thz, sigma_from_pulse_fwhm_fs};

fn default_mode() -> u32 {
    1
}

fn default_length() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberConfig {
    #[serde(rename = "R_eff_um")]
    pub r_eff_um: f64,
    pub t_nm: f64,
    #[serde(default = "default_mode")]
    pub mode_m: u32,
    #[serde(default = "default_mode")]
    pub mode_n: u32,
    #[serde(default)]
    pub cladding: Cladding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasConfig {
    pub species: String,
    pub pressure_bar: f64,
    #[serde(rename = "temperature_K", default, skip_serializing_if = "Option::is_none")]
    pub temperature_k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationConfig {
    pub depth: f64,
    #[serde(rename = "period_THz")]
    pub period_thz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpConfig {
    pub lambda_nm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_fwhm_fs: Option<f64>,
    #[serde(rename = "sigma_THz", default, skip_serializing_if = "Option::is_none")]
    pub sigma_thz: Option<f64>,
    /// Peak power for the optional Kerr term; 0 disables it.
    #[serde(rename = "peak_power_W", default)]
    pub peak_power_w: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulation: Option<ModulationConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub span: f64,
    #[serde(default)]
    pub phi_mode: PhiMode,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: DEFAULT_GRID_N,
            span: DEFAULT_SPAN,
            phi_mode: PhiMode::Linearized,
        }
    }
}

fn default_cutoff() -> f64 {
    DEFAULT_CUTOFF_THZ
}

fn default_scan_points() -> usize {
    DEFAULT_SCAN_POINTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseMatchConfig {
    #[serde(rename = "cutoff_THz", default = "default_cutoff")]
    pub cutoff_thz: f64,
    #[serde(default = "default_scan_points")]
    pub scan_points: usize,
    /// Restrict branch selection to these bands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_s: Option<BandLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band_i: Option<BandLabel>,
    /// Pick the branch whose idler is closest to this wavelength.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idler_near_nm: Option<f64>,
}

impl Default for PhaseMatchConfig {
    fn default() -> Self {
        Self {
            cutoff_thz: DEFAULT_CUTOFF_THZ,
            scan_points: DEFAULT_SCAN_POINTS,
            band_s: None,
            band_i: None,
            idler_near_nm: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lengths_m: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pressures_bar: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_nm: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityMapConfig {
    pub pump_range_nm: [f64; 2],
    pub steps: usize,
}

fn default_set_range() -> [f64; 2] {
    [1530.0, 1560.0]
}

fn default_set_steps() -> usize {
    201
}

fn one() -> f64 {
    1.0
}

fn default_seed_power() -> f64 {
    50e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetConfig {
    #[serde(default = "default_set_range")]
    pub seed_range_nm: [f64; 2],
    #[serde(default = "default_set_steps")]
    pub steps: usize,
    #[serde(rename = "seed_power_W", default = "default_seed_power")]
    pub seed_power_w: f64,
    #[serde(rename = "pump_power_W", default = "one")]
    pub pump_power_w: f64,
    #[serde(default = "one")]
    pub duty_cycle: f64,
    #[serde(default = "one")]
    pub integration_s: f64,
    #[serde(default = "one")]
    pub gain: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub dark: f64,
    #[serde(default)]
    pub rng_seed: u64,
    /// Power grids for the scaling check; omitted means no check.
    #[serde(rename = "seed_powers_W", default, skip_serializing_if = "Option::is_none")]
    pub seed_powers_w: Option<Vec<f64>>,
    #[serde(rename = "pump_powers_W", default, skip_serializing_if = "Option::is_none")]
    pub pump_powers_w: Option<Vec<f64>>,
}

impl Default for SetConfig {
    fn default() -> Self {
        Self {
            seed_range_nm: default_set_range(),
            steps: default_set_steps(),
            seed_power_w: default_seed_power(),
            pump_power_w: 1.0,
            duty_cycle: 1.0,
            integration_s: 1.0,
            gain: 1.0,
            noise_sigma: 0.0,
            dark: 0.0,
            rng_seed: 0,
            seed_powers_w: None,
            pump_powers_w: None,
        }
    }
}

fn default_out_dir() -> String {
    "out".into()
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            formats: default_formats(),
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_length")]
    pub fiber_length_m: f64,
    pub fiber: FiberConfig,
    pub gas: GasConfig,
    pub pump: PumpConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub phasematch: PhaseMatchConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_map: Option<DensityMapConfig>,
    #[serde(default)]
    pub set: SetConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn positive(v: f64, key: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(key, format!("must be positive, got {v}")))
    }
}

fn all_positive(v: &Option<Vec<f64>>, key: &str) -> Result<()> {
    if let Some(list) = v {
        for &x in list {
            positive(x, key)?;
        }
    }
    Ok(())
}

impl RunConfig {
    /// Nominal operating point: t = 630 nm, R_eff = 22 um, Xe 3.4 bar,
    /// 1030 nm pump, 280 fs pulses, 1 m of fiber.
    pub fn nominal() -> Self {
        Self {
            fiber_length_m: 1.0,
            fiber: FiberConfig {
                r_eff_um: 22.0,
                t_nm: 630.0,
                mode_m: 1,
                mode_n: 1,
                cladding: Cladding::Tubular,
            },
            gas: GasConfig {
                species: "xenon".into(),
                pressure_bar: 3.4,
                temperature_k: None,
            },
            pump: PumpConfig {
                lambda_nm: 1030.0,
                pulse_fwhm_fs: Some(280.0),
                sigma_thz: None,
                peak_power_w: 0.0,
                modulation: None,
            },
            grid: GridConfig::default(),
            phasematch: PhaseMatchConfig::default(),
            sweep: SweepConfig::default(),
            density_map: None,
            set: SetConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        positive(self.fiber_length_m, "fiber_length_m")?;
        positive(self.fiber.r_eff_um, "fiber.R_eff_um")?;
        positive(self.fiber.t_nm, "fiber.t_nm")?;
        if self.fiber.mode_m == 0 || self.fiber.mode_n == 0 {
            return Err(Error::validation("fiber.mode_m", "mode indices must be >= 1"));
        }
        if !(self.gas.pressure_bar >= 0.0 && self.gas.pressure_bar.is_finite()) {
            return Err(Error::validation("gas.pressure_bar", "must be >= 0"));
        }
        if let Some(t) = self.gas.temperature_k {
            positive(t, "gas.temperature_K")?;
        }
        positive(self.pump.lambda_nm, "pump.lambda_nm")?;
        match (self.pump.pulse_fwhm_fs, self.pump.sigma_thz) {
            (Some(w), None) => positive(w, "pump.pulse_fwhm_fs")?,
            (None, Some(s)) => positive(s, "pump.sigma_THz")?,
            _ => {
                return Err(Error::validation(
                    "pump.pulse_fwhm_fs",
                    "exactly one of pump.pulse_fwhm_fs and pump.sigma_THz must be given",
                ))
            }
        }
        if !(self.pump.peak_power_w >= 0.0 && self.pump.peak_power_w.is_finite()) {
            return Err(Error::validation("pump.peak_power_W", "must be >= 0"));
        }
        if let Some(m) = &self.pump.modulation {
            if !(m.depth >= 0.0 && m.depth.is_finite()) {
                return Err(Error::validation("pump.modulation.depth", "must be >= 0"));
            }
            positive(m.period_thz, "pump.modulation.period_THz")?;
        }
        if self.grid.n < 2 {
            return Err(Error::validation("grid.N", "must be at least 2"));
        }
        positive(self.grid.span, "grid.span")?;
        positive(self.phasematch.cutoff_thz, "phasematch.cutoff_THz")?;
        if self.phasematch.scan_points < 2 {
            return Err(Error::validation("phasematch.scan_points", "must be at least 2"));
        }
        if let Some(l) = self.phasematch.idler_near_nm {
            positive(l, "phasematch.idler_near_nm")?;
        }
        all_positive(&self.sweep.lengths_m, "sweep.lengths_m")?;
        all_positive(&self.sweep.t_nm, "sweep.t_nm")?;
        if let Some(p) = &self.sweep.pressures_bar {
            if p.iter().any(|&x| !(0.0..=20.0).contains(&x)) {
                return Err(Error::validation(
                    "sweep.pressures_bar",
                    "pressures must lie within 0-20 bar",
                ));
            }
        }
        if let Some(d) = &self.density_map {
            positive(d.pump_range_nm[0], "density_map.pump_range_nm")?;
            positive(d.pump_range_nm[1], "density_map.pump_range_nm")?;
        }
        let s = &self.set;
        positive(s.seed_range_nm[0], "set.seed_range_nm")?;
        positive(s.seed_range_nm[1], "set.seed_range_nm")?;
        if s.seed_range_nm[1] <= s.seed_range_nm[0] {
            return Err(Error::validation("set.seed_range_nm", "must be increasing"));
        }
        if s.steps < 2 {
            return Err(Error::validation("set.steps", "must be at least 2"));
        }
        self.set_params()?.validate()?;
        positive(s.seed_power_w, "set.seed_power_W")?;
        all_positive(&s.seed_powers_w, "set.seed_powers_W")?;
        all_positive(&s.pump_powers_w, "set.pump_powers_W")?;
        for f in &self.output.formats {
            if f != "csv" && f != "json" {
                return Err(Error::validation(
                    "output.formats",
                    format!("unknown format '{f}' (expected csv or json)"),
                ));
            }
        }
        Ok(())
    }

    pub fn temperature_k(&self) -> f64 {
        self.gas.temperature_k.unwrap_or(DEFAULT_TEMPERATURE_K)
    }

    pub fn gas_state(&self, db: &GasDatabase) -> Result<GasState> {
        db.gas(&self.gas.species, self.gas.pressure_bar, self.temperature_k())
    }

    pub fn fiber_model(&self, db: &GasDatabase) -> Result<FiberModel> {
        Ok(FiberModel::new(
            self.fiber.r_eff_um,
            self.fiber.t_nm,
            self.fiber.mode_m,
            self.fiber.mode_n,
            db.silica()?,
        )?
        .with_cladding(self.fiber.cladding))
    }

    pub fn filled_fiber(&self, db: &GasDatabase) -> Result<FilledFiber> {
        FilledFiber::full_window(self.fiber_model(db)?, self.gas_state(db)?)
    }

    pub fn pump_omega(&self) -> f64 {
        omega_from_nm(self.pump.lambda_nm)
    }

    /// Gaussian amplitude width, rad/s.
    pub fn pump_sigma(&self) -> f64 {
        match (self.pump.pulse_fwhm_fs, self.pump.sigma_thz) {
            (Some(fwhm), _) => sigma_from_pulse_fwhm_fs(fwhm),
            (None, Some(s)) => omega_from_thz(s),
            (None, None) => f64::NAN,
        }
    }

    pub fn pump_spectrum(&self) -> Result<PumpSpectrum> {
        let w0 = self.pump_omega();
        let sigma = self.pump_sigma();
        match &self.pump.modulation {
            None => PumpSpectrum::gaussian(w0, sigma),
            Some(m) => {
                PumpSpectrum::modulated_gaussian(w0, sigma, m.depth, omega_from_thz(m.period_thz))
            }
        }
    }

    pub fn phase_match_options(&self) -> PhaseMatchOptions {
        PhaseMatchOptions {
            min_detuning: omega_from_thz(self.phasematch.cutoff_thz),
            max_detuning: None,
            scan_points: self.phasematch.scan_points,
            pump_peak_power_w: self.pump.peak_power_w,
        }
    }

    pub fn jsa_options(&self) -> JsaOptions {
        JsaOptions {
            n: self.grid.n,
            span: self.grid.span,
            mode: self.grid.phi_mode,
            pump_peak_power_w: self.pump.peak_power_w,
        }
    }

    pub fn set_params(&self) -> Result<SetParams> {
        let s = &self.set;
        Ok(SetParams {
            gain: s.gain,
            pump_power_w: s.pump_power_w,
            duty_cycle: s.duty_cycle,
            integration_s: s.integration_s,
            noise: NoiseModel {
                relative_sigma: s.noise_sigma,
                dark: s.dark,
                seed: s.rng_seed,
            },
        })
    }

    /// Branch chosen by the `[phasematch]` selection keys: optional band
    /// filter, then the idler closest to `idler_near_nm`, else the branch
    /// nearest the pump.
    pub fn select_branch(&self, solution: &PhaseMatchSolution) -> Result<PhaseMatchBranch> {
        let pm = &self.phasematch;
        let candidates = solution.branches.iter().filter(|b| {
            pm.band_s.is_none_or(|s| b.band_s == s) && pm.band_i.is_none_or(|i| b.band_i == i)
        });
        let chosen = match pm.idler_near_nm {
            Some(target) => candidates.min_by(|a, b| {
                (a.lambda_i_nm() - target)
                    .abs()
                    .total_cmp(&(b.lambda_i_nm() - target).abs())
            }),
            None => candidates.min_by(|a, b| a.detuning().total_cmp(&b.detuning())),
        };
        chosen.cloned().ok_or_else(|| {
            Error::Degenerate(format!(
                "no phase-matched branch for pump {:.3} nm matches the [phasematch] selection",
                nm_from_omega(self.pump_omega())
            ))
        })
    }
}
