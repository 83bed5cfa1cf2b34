//! Joint spectral amplitude `F(w_s, w_i) = alpha(w_s + w_i) * phi(w_s, w_i)`.
//!
//! Grids are signal-major: `values[j * n_i + k] = F(omega_s[j], omega_i[k])`.
//! Both axes of a constructed grid share one spacing, so `omega_s[j] +
//! omega_i[k]` depends only on `j + k` and the pump factor is evaluated once
//! per anti-diagonal.

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibermodel::FilledFiber;
use crate::numerics::CubicSpline;
use crate::phasematch::{pm_angle_width, PhaseMatchBranch};
use crate::units::nm_from_omega;

pub const DEFAULT_GRID_N: usize = 512;
pub const DEFAULT_SPAN: f64 = 4.0;
/// Largest tolerated fraction of grid cells outside the transmission bands.
pub const MAX_CLIPPED_FRACTION: f64 = 0.2;

const CONVOLUTION_NODES: usize = 4001;
const MODULATED_SAMPLES: usize = 4001;
const MODULATED_HALF_WIDTH_SIGMAS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PumpShape {
    /// `A(w) = (pi sigma^2)^(-1/4) exp(-(w - w0)^2 / (2 sigma^2))`
    Gaussian { sigma: f64 },
    /// Complex amplitude on a strictly increasing axis, unit L2 norm.
    Sampled {
        omega: Vec<f64>,
        amplitude: Vec<Complex64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PumpSpectrum {
    /// rad/s
    pub omega0: f64,
    pub shape: PumpShape,
    #[serde(skip)]
    splines: Option<(CubicSpline, CubicSpline)>,
}

impl PumpSpectrum {
    pub fn gaussian(omega0: f64, sigma: f64) -> Result<Self> {
        if !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(Error::validation("pump.lambda_nm", "must be positive and finite"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::validation("pump.sigma", "Gaussian width must be positive"));
        }
        Ok(Self {
            omega0,
            shape: PumpShape::Gaussian { sigma },
            splines: None,
        })
    }

    pub fn sampled(omega0: f64, omega: Vec<f64>, amplitude: Vec<Complex64>) -> Result<Self> {
        if omega.len() != amplitude.len() || omega.len() < 3 {
            return Err(Error::validation(
                "pump.samples",
                "need at least three samples with matching lengths",
            ));
        }
        if omega.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("pump.samples", "axis must be strictly increasing"));
        }
        if amplitude.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::validation("pump.samples", "amplitude must be finite"));
        }
        let power = trapezoid(&omega, |i| amplitude[i].norm_sqr());
        if !(power > 0.0) {
            return Err(Error::validation("pump.samples", "amplitude is identically zero"));
        }
        let scale = power.sqrt().recip();
        let amplitude: Vec<Complex64> = amplitude.into_iter().map(|a| a * scale).collect();
        let re = CubicSpline::new(omega.clone(), amplitude.iter().map(|a| a.re).collect())?;
        let im = CubicSpline::new(omega.clone(), amplitude.iter().map(|a| a.im).collect())?;
        Ok(Self {
            omega0,
            shape: PumpShape::Sampled { omega, amplitude },
            splines: Some((re, im)),
        })
    }

    /// Gaussian times `1 + depth * sin(2 pi (w - w0) / period)`, sampled over
    /// +-10 sigma.
    pub fn modulated_gaussian(omega0: f64, sigma: f64, depth: f64, period: f64) -> Result<Self> {
        let base = Self::gaussian(omega0, sigma)?;
        if !(depth.is_finite() && depth >= 0.0) {
            return Err(Error::validation("pump.modulation.depth", "must be >= 0"));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::validation("pump.modulation.period_THz", "must be positive"));
        }
        let half = MODULATED_HALF_WIDTH_SIGMAS * sigma;
        let omega: Vec<f64> = (0..MODULATED_SAMPLES)
            .map(|i| omega0 - half + 2.0 * half * i as f64 / (MODULATED_SAMPLES - 1) as f64)
            .collect();
        let amplitude = omega
            .iter()
            .map(|&w| {
                let m = 1.0 + depth * (2.0 * std::f64::consts::PI * (w - omega0) / period).sin();
                base.amplitude(w) * m
            })
            .collect();
        Self::sampled(omega0, omega, amplitude)
    }

    fn ensure_splines(&mut self) -> Result<()> {
        if let PumpShape::Sampled { omega, amplitude } = &self.shape {
            if self.splines.is_none() {
                let re = CubicSpline::new(omega.clone(), amplitude.iter().map(|a| a.re).collect())?;
                let im = CubicSpline::new(omega.clone(), amplitude.iter().map(|a| a.im).collect())?;
                self.splines = Some((re, im));
            }
        }
        Ok(())
    }

    /// Rebuild interpolants after deserialization.
    pub fn prepared(mut self) -> Result<Self> {
        self.ensure_splines()?;
        Ok(self)
    }

    /// Spectral amplitude `A(w)`; zero outside a sampled support.
    pub fn amplitude(&self, omega: f64) -> Complex64 {
        match &self.shape {
            PumpShape::Gaussian { sigma } => {
                let d = (omega - self.omega0) / sigma;
                let norm = (std::f64::consts::PI * sigma * sigma).powf(-0.25);
                Complex64::new(norm * (-0.5 * d * d).exp(), 0.0)
            }
            PumpShape::Sampled { .. } => match &self.splines {
                Some((re, im)) => Complex64::new(re.eval(omega), im.eval(omega)),
                None => Complex64::new(0.0, 0.0),
            },
        }
    }

    /// Width parameter of the equivalent Gaussian: `sigma` itself, or
    /// `sqrt(2) * rms width of |A|^2` for sampled spectra.
    pub fn effective_sigma(&self) -> f64 {
        match &self.shape {
            PumpShape::Gaussian { sigma } => *sigma,
            PumpShape::Sampled { omega, amplitude } => {
                let p = trapezoid(omega, |i| amplitude[i].norm_sqr());
                let mean = trapezoid(omega, |i| omega[i] * amplitude[i].norm_sqr()) / p;
                let var =
                    trapezoid(omega, |i| (omega[i] - mean).powi(2) * amplitude[i].norm_sqr()) / p;
                (2.0 * var).sqrt()
            }
        }
    }

    fn support(&self) -> Option<(f64, f64)> {
        match &self.shape {
            PumpShape::Gaussian { .. } => None,
            PumpShape::Sampled { omega, .. } => Some((omega[0], omega[omega.len() - 1])),
        }
    }
}

fn trapezoid(x: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    (1..x.len())
        .map(|i| 0.5 * (f(i - 1) + f(i)) * (x[i] - x[i - 1]))
        .sum()
}

/// Pump autoconvolution `alpha(Omega) = int A(w) A(Omega - w) dw`.
///
/// The Gaussian branch is closed form, `exp(-(Omega - 2 w0)^2 / (4 sigma^2))`,
/// with unit peak. Sampled spectra use trapezoid quadrature over the overlap
/// of the support with its reflection; outside twice the support the result
/// is zero.
pub fn pump_alpha(pump: &PumpSpectrum, omega_sum: f64) -> Complex64 {
    match (&pump.shape, pump.support()) {
        (PumpShape::Gaussian { sigma }, _) => {
            let d = omega_sum - 2.0 * pump.omega0;
            Complex64::new((-d * d / (4.0 * sigma * sigma)).exp(), 0.0)
        }
        (PumpShape::Sampled { .. }, Some((a, b))) => {
            let lo = a.max(omega_sum - b);
            let hi = b.min(omega_sum - a);
            if hi <= lo {
                return Complex64::new(0.0, 0.0);
            }
            let m = CONVOLUTION_NODES;
            let h = (hi - lo) / (m - 1) as f64;
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..m {
                let w = lo + h * n as f64;
                let weight = if n == 0 || n == m - 1 { 0.5 } else { 1.0 };
                acc += pump.amplitude(w) * pump.amplitude(omega_sum - w) * weight;
            }
            acc * h
        }
        _ => Complex64::new(0.0, 0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiMode {
    /// First-order Taylor expansion around the solved branch.
    #[default]
    Linearized,
    /// Exact mismatch with the pump at the mean frequency `(w_s + w_i) / 2`.
    Full,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// `sinc(dk L / 2) exp(i dk L / 2)` for a mismatch `dk` in the
/// `2 k_p - k_s - k_i` convention.
pub fn phi_from_mismatch(dk: f64, length_m: f64) -> Complex64 {
    let x = 0.5 * dk * length_m;
    Complex64::from_polar(sinc(x), x)
}

/// Linearised mismatch `(w_s - w_s0)(b1p - b1s) + (w_i - w_i0)(b1p - b1i)`.
pub fn linearized_mismatch(branch: &PhaseMatchBranch, omega_s: f64, omega_i: f64) -> f64 {
    (omega_s - branch.omega_s) * (branch.beta1_p - branch.beta1_s)
        + (omega_i - branch.omega_i) * (branch.beta1_p - branch.beta1_i)
}

/// Exact mismatch `2 k((w_s + w_i)/2) - k(w_s) - k(w_i)` less the Kerr term.
pub fn full_mismatch(
    fiber: &FilledFiber,
    omega_s: f64,
    omega_i: f64,
    pump_peak_power_w: f64,
) -> Result<f64> {
    let mean = 0.5 * (omega_s + omega_i);
    Ok(-crate::phasematch::delta_k(fiber, mean, omega_s, omega_i, pump_peak_power_w)?)
}

/// Phase-matching function at one point.
pub fn phi(
    fiber: &FilledFiber,
    branch: &PhaseMatchBranch,
    omega_s: f64,
    omega_i: f64,
    length_m: f64,
    mode: PhiMode,
    pump_peak_power_w: f64,
) -> Result<Complex64> {
    let dk = match mode {
        PhiMode::Linearized => linearized_mismatch(branch, omega_s, omega_i),
        PhiMode::Full => {
            fiber.band_of_omega(omega_s)?;
            fiber.band_of_omega(omega_i)?;
            full_mismatch(fiber, omega_s, omega_i, pump_peak_power_w)?
        }
    };
    Ok(phi_from_mismatch(dk, length_m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JsaOptions {
    pub n: usize,
    /// Half-width multiplier applied to `max(sqrt(2) sigma, sqrt(dphi))`.
    pub span: f64,
    pub mode: PhiMode,
    pub pump_peak_power_w: f64,
}

impl Default for JsaOptions {
    fn default() -> Self {
        Self {
            n: DEFAULT_GRID_N,
            span: DEFAULT_SPAN,
            mode: PhiMode::Linearized,
            pump_peak_power_w: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberSummary {
    pub r_eff_um: f64,
    pub t_nm: f64,
    pub mode_m: u32,
    pub mode_n: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasSummary {
    pub species: String,
    pub pressure_bar: f64,
    pub temperature_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpSummary {
    pub omega0: f64,
    pub lambda_nm: f64,
    pub kind: String,
    pub effective_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsaMetadata {
    pub fiber: Option<FiberSummary>,
    pub gas: Option<GasSummary>,
    pub length_m: f64,
    pub pump: Option<PumpSummary>,
    pub mode: PhiMode,
    pub branch: Option<PhaseMatchBranch>,
    pub clipped_fraction: f64,
    pub warnings: Vec<String>,
}

impl JsaMetadata {
    pub fn bare(length_m: f64) -> Self {
        Self {
            fiber: None,
            gas: None,
            length_m,
            pump: None,
            mode: PhiMode::Linearized,
            branch: None,
            clipped_fraction: 0.0,
            warnings: Vec::new(),
        }
    }
}

/// Complex JSA on a rectangular grid, signal-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JsaGrid {
    pub omega_s: Vec<f64>,
    pub omega_i: Vec<f64>,
    pub values: Vec<Complex64>,
    pub metadata: JsaMetadata,
}

fn check_axis(axis: &[f64], key: &str) -> Result<()> {
    if axis.len() < 2 {
        return Err(Error::validation(key, "axis needs at least two points"));
    }
    if axis.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::validation(key, "axis must be strictly increasing"));
    }
    Ok(())
}

fn spacing(axis: &[f64]) -> f64 {
    (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64
}

impl JsaGrid {
    pub fn new(
        omega_s: Vec<f64>,
        omega_i: Vec<f64>,
        values: Vec<Complex64>,
        metadata: JsaMetadata,
    ) -> Result<Self> {
        check_axis(&omega_s, "omega_s")?;
        check_axis(&omega_i, "omega_i")?;
        if values.len() != omega_s.len() * omega_i.len() {
            return Err(Error::validation("values", "length must be n_s * n_i"));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::validation("values", "must be finite"));
        }
        Ok(Self {
            omega_s,
            omega_i,
            values,
            metadata,
        })
    }

    /// Build from a function on the given axes.
    pub fn from_fn(
        omega_s: Vec<f64>,
        omega_i: Vec<f64>,
        metadata: JsaMetadata,
        f: impl Fn(f64, f64) -> Complex64 + Sync,
    ) -> Result<Self> {
        let ni = omega_i.len();
        let values: Vec<Complex64> = omega_s
            .par_iter()
            .flat_map_iter(|&ws| omega_i.iter().map(move |&wi| (ws, wi)).collect::<Vec<_>>())
            .map(|(ws, wi)| f(ws, wi))
            .collect();
        debug_assert_eq!(values.len(), omega_s.len() * ni);
        Self::new(omega_s, omega_i, values, metadata)
    }

    pub fn n_s(&self) -> usize {
        self.omega_s.len()
    }

    pub fn n_i(&self) -> usize {
        self.omega_i.len()
    }

    pub fn get(&self, j: usize, k: usize) -> Complex64 {
        self.values[j * self.n_i() + k]
    }

    pub fn cell_area(&self) -> f64 {
        spacing(&self.omega_s) * spacing(&self.omega_i)
    }

    /// `sum |F|^2 dws dwi`.
    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.cell_area()
    }

    /// Rescale to `sum |F|^2 dws dwi = 1`.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Degenerate("JSA grid is identically zero".into()));
        }
        let s = n.sqrt().recip();
        for v in &mut self.values {
            *v *= s;
        }
        Ok(())
    }

    pub fn transpose(&self) -> Self {
        let (ns, ni) = (self.n_s(), self.n_i());
        let mut values = Vec::with_capacity(self.values.len());
        for k in 0..ni {
            for j in 0..ns {
                values.push(self.values[j * ni + k]);
            }
        }
        Self {
            omega_s: self.omega_i.clone(),
            omega_i: self.omega_s.clone(),
            values,
            metadata: self.metadata.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = JsaDocument {
            layout: "row-major; row j = omega_s[j], column k = omega_i[k]".into(),
            omega_s_rad_per_s: self.omega_s.clone(),
            omega_i_rad_per_s: self.omega_i.clone(),
            lambda_s_nm: self.omega_s.iter().map(|&w| nm_from_omega(w)).collect(),
            lambda_i_nm: self.omega_i.iter().map(|&w| nm_from_omega(w)).collect(),
            metadata: self.metadata.clone(),
            normalization: "sum(|F|^2) * d_omega_s * d_omega_i = 1".into(),
            magnitude: self.values.iter().map(|v| v.norm()).collect(),
            phase: self.values.iter().map(|v| v.arg()).collect(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: JsaDocument = serde_json::from_str(text)?;
        if doc.magnitude.len() != doc.phase.len() {
            return Err(Error::Parse("magnitude and phase lengths differ".into()));
        }
        let values = doc
            .magnitude
            .iter()
            .zip(&doc.phase)
            .map(|(&m, &p)| Complex64::from_polar(m, p))
            .collect();
        Self::new(doc.omega_s_rad_per_s, doc.omega_i_rad_per_s, values, doc.metadata)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct JsaDocument {
    layout: String,
    omega_s_rad_per_s: Vec<f64>,
    omega_i_rad_per_s: Vec<f64>,
    lambda_s_nm: Vec<f64>,
    lambda_i_nm: Vec<f64>,
    metadata: JsaMetadata,
    normalization: String,
    magnitude: Vec<f64>,
    phase: Vec<f64>,
}

/// Real intensity grid, signal-major like [`JsaGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct JsiGrid {
    pub omega_s: Vec<f64>,
    pub omega_i: Vec<f64>,
    pub values: Vec<f64>,
}

impl JsiGrid {
    pub fn new(omega_s: Vec<f64>, omega_i: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_axis(&omega_s, "omega_s")?;
        check_axis(&omega_i, "omega_i")?;
        if values.len() != omega_s.len() * omega_i.len() {
            return Err(Error::validation("values", "length must be n_s * n_i"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("values", "must be finite"));
        }
        Ok(Self {
            omega_s,
            omega_i,
            values,
        })
    }

    pub fn n_s(&self) -> usize {
        self.omega_s.len()
    }

    pub fn n_i(&self) -> usize {
        self.omega_i.len()
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.n_i() + k]
    }

    /// Mean cell area; exact for uniform axes.
    pub fn cell_area(&self) -> f64 {
        spacing(&self.omega_s) * spacing(&self.omega_i)
    }

    /// Copy scaled to unit plain sum.
    pub fn normalized_unit_sum(&self) -> Result<Self> {
        let s: f64 = self.values.iter().sum();
        if !(s > 0.0) {
            return Err(Error::Degenerate("JSI grid has no positive weight".into()));
        }
        Ok(Self {
            omega_s: self.omega_s.clone(),
            omega_i: self.omega_i.clone(),
            values: self.values.iter().map(|v| v / s).collect(),
        })
    }

    /// CSV: the first row holds the signal axis (nm), each following row
    /// starts with its idler wavelength (nm). Values are `|F|^2` with
    /// `sum |F|^2 dws dwi = 1` for grids from [`jsi`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda_i_nm\\lambda_s_nm");
        for &ws in &self.omega_s {
            let _ = write!(out, ",{:.6}", nm_from_omega(ws));
        }
        out.push('\n');
        for (k, &wi) in self.omega_i.iter().enumerate() {
            let _ = write!(out, "{:.6}", nm_from_omega(wi));
            for j in 0..self.n_s() {
                let _ = write!(out, ",{:.9e}", self.get(j, k));
            }
            out.push('\n');
        }
        out
    }
}

/// `|F|^2` elementwise.
pub fn jsi(grid: &JsaGrid) -> JsiGrid {
    JsiGrid {
        omega_s: grid.omega_s.clone(),
        omega_i: grid.omega_i.clone(),
        values: grid.values.iter().map(|v| v.norm_sqr()).collect(),
    }
}

/// Grid half-width per axis, rad/s.
pub fn grid_half_width(pump: &PumpSpectrum, branch: &PhaseMatchBranch, length_m: f64, span: f64) -> f64 {
    let alpha_w = std::f64::consts::SQRT_2 * pump.effective_sigma();
    let phi_w = pm_angle_width(branch, length_m).delta_phi_width.sqrt();
    let w = if phi_w.is_finite() { alpha_w.max(phi_w) } else { alpha_w };
    span * w
}

/// Sample `alpha * phi` around a solved branch and normalise.
///
/// Cells whose signal or idler frequency is outside the transmission bands
/// are set to zero; their fraction is recorded in the metadata and is fatal
/// above 20%.
pub fn build_jsa(
    fiber: &FilledFiber,
    pump: &PumpSpectrum,
    branch: &PhaseMatchBranch,
    length_m: f64,
    opts: &JsaOptions,
) -> Result<JsaGrid> {
    if !(length_m > 0.0 && length_m.is_finite()) {
        return Err(Error::validation("fiber_length_m", "must be positive"));
    }
    if opts.n < 2 {
        return Err(Error::validation("grid.N", "must be at least 2"));
    }
    if !(opts.span > 0.0 && opts.span.is_finite()) {
        return Err(Error::validation("grid.span", "must be positive"));
    }
    if ((pump.omega0 - branch.omega_p) / branch.omega_p).abs() > 1e-9 {
        return Err(Error::validation(
            "pump.lambda_nm",
            "pump centre differs from the phase-matched branch pump",
        ));
    }
    let n = opts.n;
    let half = grid_half_width(pump, branch, length_m, opts.span);
    let h = 2.0 * half / (n - 1) as f64;
    let axis = |c: f64| -> Vec<f64> { (0..n).map(|j| c - half + h * j as f64).collect() };
    let omega_s = axis(branch.omega_s);
    let omega_i = axis(branch.omega_i);

    let in_band = |w: f64| fiber.band_of_omega(w).is_ok();
    let ok_s: Vec<bool> = omega_s.iter().map(|&w| in_band(w)).collect();
    let ok_i: Vec<bool> = omega_i.iter().map(|&w| in_band(w)).collect();

    // Everything below depends on j, k or j + k only.
    let sum0 = omega_s[0] + omega_i[0];
    let alpha: Vec<Complex64> = (0..2 * n - 1)
        .into_par_iter()
        .map(|m| pump_alpha(pump, sum0 + h * m as f64))
        .collect();

    let power = opts.pump_peak_power_w;
    let (q_s, q_i, q_p) = match opts.mode {
        PhiMode::Linearized => (Vec::new(), Vec::new(), Vec::new()),
        PhiMode::Full => {
            let excess = |w: f64, ok: bool| -> Result<f64> {
                if ok {
                    fiber.excess_wavevector(w)
                } else {
                    Ok(f64::NAN)
                }
            };
            let q_s = omega_s
                .iter()
                .zip(&ok_s)
                .map(|(&w, &ok)| excess(w, ok))
                .collect::<Result<Vec<_>>>()?;
            let q_i = omega_i
                .iter()
                .zip(&ok_i)
                .map(|(&w, &ok)| excess(w, ok))
                .collect::<Result<Vec<_>>>()?;
            let q_p = (0..2 * n - 1)
                .map(|m| {
                    let w = 0.5 * (sum0 + h * m as f64);
                    excess(w, in_band(w))
                })
                .collect::<Result<Vec<_>>>()?;
            (q_s, q_i, q_p)
        }
    };
    let kerr = if power > 0.0 {
        2.0 * crate::phasematch::nonlinear_coefficient(fiber, branch.omega_p) * power
    } else {
        0.0
    };

    let values: Vec<Complex64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|j| {
            let omega_s = &omega_s;
            let omega_i = &omega_i;
            let (ok_s, ok_i, alpha) = (&ok_s, &ok_i, &alpha);
            let (q_s, q_i, q_p) = (&q_s, &q_i, &q_p);
            (0..n).map(move |k| {
                if !(ok_s[j] && ok_i[k]) {
                    return Complex64::new(0.0, 0.0);
                }
                let dk = match opts.mode {
                    PhiMode::Linearized => linearized_mismatch(branch, omega_s[j], omega_i[k]),
                    PhiMode::Full => {
                        let qp = q_p[j + k];
                        if qp.is_nan() {
                            return Complex64::new(0.0, 0.0);
                        }
                        // Vacuum parts cancel exactly since the pump sits at the mean.
                        -(q_s[j] + q_i[k] - 2.0 * qp) - kerr
                    }
                };
                alpha[j + k] * phi_from_mismatch(dk, length_m)
            })
        })
        .collect();

    let clipped = ok_s
        .iter()
        .flat_map(|&a| ok_i.iter().map(move |&b| !(a && b)))
        .filter(|&c| c)
        .count() as f64
        / (n * n) as f64;
    let mut warnings = Vec::new();
    if clipped > MAX_CLIPPED_FRACTION {
        return Err(Error::validation(
            "grid.span",
            format!(
                "{:.1}% of the JSA grid lies outside the transmission bands (limit {:.0}%)",
                100.0 * clipped,
                100.0 * MAX_CLIPPED_FRACTION
            ),
        ));
    }
    if clipped > 0.0 {
        let msg = format!(
            "{:.2}% of the JSA grid lies outside the transmission bands and was set to zero",
            100.0 * clipped
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let metadata = JsaMetadata {
        fiber: Some(FiberSummary {
            r_eff_um: fiber.fiber.r_eff_um,
            t_nm: fiber.fiber.t_nm,
            mode_m: fiber.fiber.mode_m,
            mode_n: fiber.fiber.mode_n,
        }),
        gas: Some(GasSummary {
            species: fiber.gas.species.clone(),
            pressure_bar: fiber.gas.pressure_bar,
            temperature_k: fiber.gas.temperature_k,
        }),
        length_m,
        pump: Some(PumpSummary {
            omega0: pump.omega0,
            lambda_nm: nm_from_omega(pump.omega0),
            kind: match pump.shape {
                PumpShape::Gaussian { .. } => "gaussian".into(),
                PumpShape::Sampled { .. } => "sampled".into(),
            },
            effective_sigma: pump.effective_sigma(),
        }),
        mode: opts.mode,
        branch: Some(branch.clone()),
        clipped_fraction: clipped,
        warnings,
    };
    let mut grid = JsaGrid::new(omega_s, omega_i, values, metadata)?;
    grid.normalize()?;
    Ok(grid)
}
