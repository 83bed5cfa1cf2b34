//! Schmidt decomposition of discretised joint spectra.
//!
//! Grid values are weighted by `sqrt(cell area)` before the SVD so the
//! coefficients approximate those of the continuum kernel.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsa::{JsaGrid, JsiGrid};
use crate::units::nm_from_omega;

/// Coefficients below this fraction of the leading one are dropped.
pub const TRUNCATION: f64 = 1e-12;
/// Tolerance on `sum c_n = 1` accepted by [`schmidt_number`].
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Number of mode pairs retained in a [`SchmidtResult`].
pub const DEFAULT_KEPT_MODES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchmidtResult {
    /// Descending, summing to one.
    #[serde(rename = "c")]
    pub coefficients: Vec<f64>,
    #[serde(rename = "K")]
    pub k: f64,
    pub purity: f64,
    pub flat_phase: bool,
    #[serde(skip)]
    pub omega_s: Vec<f64>,
    #[serde(skip)]
    pub omega_i: Vec<f64>,
    /// Orthonormal discrete vectors on `omega_s`, leading modes first.
    #[serde(skip)]
    pub signal_modes: Vec<Vec<Complex64>>,
    #[serde(skip)]
    pub idler_modes: Vec<Vec<Complex64>>,
}

impl SchmidtResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Signal modes as CSV columns: `lambda_s_nm,S0_re,S0_im,S1_re,...`.
    pub fn signal_modes_csv(&self) -> String {
        modes_csv("lambda_s_nm", "S", &self.omega_s, &self.signal_modes)
    }

    /// Idler modes as CSV columns: `lambda_i_nm,I0_re,I0_im,...`.
    pub fn idler_modes_csv(&self) -> String {
        modes_csv("lambda_i_nm", "I", &self.omega_i, &self.idler_modes)
    }
}

fn modes_csv(axis_name: &str, prefix: &str, axis: &[f64], modes: &[Vec<Complex64>]) -> String {
    let mut out = String::from(axis_name);
    for n in 0..modes.len() {
        let _ = write!(out, ",{prefix}{n}_re,{prefix}{n}_im");
    }
    out.push('\n');
    for (r, &w) in axis.iter().enumerate() {
        let _ = write!(out, "{:.6}", nm_from_omega(w));
        for m in modes {
            let _ = write!(out, ",{:.9e},{:.9e}", m[r].re, m[r].im);
        }
        out.push('\n');
    }
    out
}

/// `K = 1 / sum c_n^2` for normalised, non-negative coefficients.
pub fn schmidt_number(c: &[f64]) -> Result<f64> {
    if c.is_empty() {
        return Err(Error::validation("c", "no coefficients"));
    }
    if c.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::validation("c", "coefficients must be finite and non-negative"));
    }
    let sum: f64 = c.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::validation(
            "c",
            format!("coefficients sum to {sum}, expected 1"),
        ));
    }
    Ok(1.0 / c.iter().map(|x| x * x).sum::<f64>())
}

fn finish(
    singular: Vec<f64>,
    u_cols: Vec<Vec<Complex64>>,
    v_cols: Vec<Vec<Complex64>>,
    flat_phase: bool,
    omega_s: Vec<f64>,
    omega_i: Vec<f64>,
) -> Result<SchmidtResult> {
    let mut order: Vec<usize> = (0..singular.len()).collect();
    order.sort_by(|&a, &b| singular[b].total_cmp(&singular[a]));
    let lead = singular[order[0]].powi(2);
    if !(lead > 0.0) {
        return Err(Error::Degenerate("grid is identically zero".into()));
    }
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| singular[i].powi(2) >= TRUNCATION * lead)
        .collect();
    let total: f64 = kept.iter().map(|&i| singular[i].powi(2)).sum();
    let coefficients: Vec<f64> = kept.iter().map(|&i| singular[i].powi(2) / total).collect();
    let k = schmidt_number(&coefficients)?;
    let n_modes = kept.len().min(DEFAULT_KEPT_MODES);
    let signal_modes = kept[..n_modes].iter().map(|&i| u_cols[i].clone()).collect();
    let idler_modes = kept[..n_modes].iter().map(|&i| v_cols[i].clone()).collect();
    Ok(SchmidtResult {
        coefficients,
        k,
        purity: 1.0 / k,
        flat_phase,
        omega_s,
        omega_i,
        signal_modes,
        idler_modes,
    })
}

fn check_finite<'a>(mut values: impl Iterator<Item = &'a f64>) -> Result<()> {
    if values.any(|v| !v.is_finite()) {
        return Err(Error::validation("values", "grid contains non-finite values"));
    }
    Ok(())
}

fn decompose_real(
    rows: usize,
    cols: usize,
    values: &[f64],
    omega_s: Vec<f64>,
    omega_i: Vec<f64>,
) -> Result<SchmidtResult> {
    check_finite(values.iter())?;
    if values.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("grid is identically zero".into()));
    }
    let m = DMatrix::from_row_slice(rows, cols, values);
    let svd = m.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Degenerate("SVD returned no U".into()))?;
    let vt = svd.v_t.ok_or_else(|| Error::Degenerate("SVD returned no V".into()))?;
    let r = svd.singular_values.len();
    let u_cols = (0..r)
        .map(|n| u.column(n).iter().map(|&x| Complex64::new(x, 0.0)).collect())
        .collect();
    let v_cols = (0..r)
        .map(|n| vt.row(n).iter().map(|&x| Complex64::new(x, 0.0)).collect())
        .collect();
    finish(svd.singular_values.as_slice().to_vec(), u_cols, v_cols, true, omega_s, omega_i)
}

fn decompose_complex(grid: &JsaGrid, weight: f64) -> Result<SchmidtResult> {
    if grid.values.iter().all(|v| v.norm_sqr() == 0.0) {
        return Err(Error::Degenerate("grid is identically zero".into()));
    }
    let data: Vec<Complex64> = grid.values.iter().map(|v| v * weight).collect();
    let m = DMatrix::from_row_slice(grid.n_s(), grid.n_i(), &data);
    let svd = m.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Degenerate("SVD returned no U".into()))?;
    let vt = svd.v_t.ok_or_else(|| Error::Degenerate("SVD returned no V".into()))?;
    let r = svd.singular_values.len();
    let u_cols = (0..r).map(|n| u.column(n).iter().copied().collect()).collect();
    // F = U S V^H, so the idler mode is the conjugate of the row of V^H.
    let v_cols = (0..r)
        .map(|n| vt.row(n).iter().map(|x| x.conj()).collect())
        .collect();
    finish(
        svd.singular_values.as_slice().to_vec(),
        u_cols,
        v_cols,
        false,
        grid.omega_s.clone(),
        grid.omega_i.clone(),
    )
}

/// Decompose a complex JSA grid. With `flat_phase` the magnitude `|F|` is
/// decomposed instead, as for a JSI measured without phase information.
pub fn schmidt_decompose(grid: &JsaGrid, flat_phase: bool) -> Result<SchmidtResult> {
    if grid.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::validation("values", "grid contains non-finite values"));
    }
    let weight = grid.cell_area().sqrt();
    if flat_phase {
        let mag: Vec<f64> = grid.values.iter().map(|v| v.norm() * weight).collect();
        decompose_real(grid.n_s(), grid.n_i(), &mag, grid.omega_s.clone(), grid.omega_i.clone())
    } else {
        decompose_complex(grid, weight)
    }
}

/// Flat-phase decomposition of an intensity grid (decomposes `sqrt(JSI)`).
pub fn schmidt_decompose_jsi(jsi: &JsiGrid) -> Result<SchmidtResult> {
    if jsi.values.iter().any(|&v| v < 0.0) {
        return Err(Error::validation("values", "JSI must be non-negative"));
    }
    let weight = jsi.cell_area().sqrt();
    let amp: Vec<f64> = jsi.values.iter().map(|v| v.sqrt() * weight).collect();
    decompose_real(jsi.n_s(), jsi.n_i(), &amp, jsi.omega_s.clone(), jsi.omega_i.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    /// `sum_k JSI[j, k] * d_omega_i`
    pub signal: Vec<f64>,
    /// `sum_j JSI[j, k] * d_omega_s`
    pub idler: Vec<f64>,
    pub signal_centroid_nm: f64,
    pub idler_centroid_nm: f64,
    /// Intensity-weighted mean frequency, rad/s.
    pub signal_centroid_omega: f64,
    pub idler_centroid_omega: f64,
}

fn centroid(axis: &[f64], weights: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return f64::NAN;
    }
    axis.iter().zip(weights).map(|(&x, &w)| f(x) * w).sum::<f64>() / total
}

/// Signal and idler marginal spectra with their centroids.
pub fn marginals(jsi: &JsiGrid) -> Marginals {
    let (ns, ni) = (jsi.n_s(), jsi.n_i());
    let dws = (jsi.omega_s[ns - 1] - jsi.omega_s[0]) / (ns - 1) as f64;
    let dwi = (jsi.omega_i[ni - 1] - jsi.omega_i[0]) / (ni - 1) as f64;
    let signal: Vec<f64> = (0..ns)
        .map(|j| (0..ni).map(|k| jsi.get(j, k)).sum::<f64>() * dwi)
        .collect();
    let idler: Vec<f64> = (0..ni)
        .map(|k| (0..ns).map(|j| jsi.get(j, k)).sum::<f64>() * dws)
        .collect();
    Marginals {
        signal_centroid_nm: centroid(&jsi.omega_s, &signal, nm_from_omega),
        idler_centroid_nm: centroid(&jsi.omega_i, &idler, nm_from_omega),
        signal_centroid_omega: centroid(&jsi.omega_s, &signal, |w| w),
        idler_centroid_omega: centroid(&jsi.omega_i, &idler, |w| w),
        signal,
        idler,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jsa::JsaMetadata;
    use proptest::prelude::*;

    fn axis(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    fn grid_from(n: usize, lo: f64, hi: f64, f: impl Fn(f64, f64) -> Complex64 + Sync) -> JsaGrid {
        JsaGrid::from_fn(axis(n, lo, hi), axis(n, lo, hi), JsaMetadata::bare(1.0), f).unwrap()
    }

    #[test]
    fn schmidt_number_examples() {
        assert_eq!(schmidt_number(&[1.0]).unwrap(), 1.0);
        assert_eq!(schmidt_number(&[0.5, 0.5]).unwrap(), 2.0);
        let lam: f64 = 0.5;
        let c: Vec<f64> = (0..80).map(|n| (1.0 - lam) * lam.powi(n)).collect();
        assert!((schmidt_number(&c).unwrap() - 3.0).abs() < 1e-12);
        assert!(schmidt_number(&[0.5, 0.4]).is_err());
        assert!(schmidt_number(&[1.5, -0.5]).is_err());
    }

    #[test]
    fn factorable_grid_has_unit_k() {
        let g = grid_from(64, -6.0, 6.0, |x, y| {
            Complex64::new((-(x - 0.5).powi(2)).exp() * (-0.3 * y * y).exp() * (1.0 + 0.1 * y), 0.0)
        });
        for flat in [true, false] {
            let r = schmidt_decompose(&g, flat).unwrap();
            assert!((r.coefficients[0] - 1.0).abs() < 1e-9);
            assert!((r.k - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mehler_kernel_matches_closed_form() {
        let mu: f64 = 0.9;
        let t = (1.0 - (1.0 - mu * mu).sqrt()) / mu;
        let lam = t * t;
        let g = grid_from(512, -20.0, 20.0, |x, y| {
            Complex64::new((-(x * x + y * y) / 2.0 + mu * x * y).exp(), 0.0)
        });
        let r = schmidt_decompose(&g, false).unwrap();
        for n in 0..=10 {
            let exact = (1.0 - lam) * lam.powi(n as i32);
            assert!((r.coefficients[n] - exact).abs() < 1e-6, "n={n}");
        }
        let k_exact = (1.0 + lam) / (1.0 - lam);
        assert!((k_exact - 1.0 / (1.0 - mu * mu).sqrt()).abs() < 1e-12);
        assert!(((r.k - k_exact) / k_exact).abs() < 1e-4);
    }

    #[test]
    fn separable_phase_and_transpose_invariance() {
        let g = grid_from(96, -5.0, 5.0, |x, y| {
            Complex64::new((-(x * x + y * y) / 2.0 + 0.6 * x * y).exp(), 0.0)
                * Complex64::from_polar(1.0, 0.3 * x * y)
        });
        let base = schmidt_decompose(&g, false).unwrap();
        let mut phased = g.clone();
        let n = g.n_i();
        for j in 0..g.n_s() {
            for k in 0..n {
                let u = (g.omega_s[j] * 1.7).sin() + 0.2 * g.omega_s[j].powi(3);
                let v = (g.omega_i[k] * 0.9).cos() * 3.0;
                phased.values[j * n + k] *= Complex64::from_polar(1.0, u + v);
            }
        }
        let p = schmidt_decompose(&phased, false).unwrap();
        for (a, b) in base.coefficients.iter().zip(&p.coefficients).take(20) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((base.k - p.k).abs() < 1e-9);
        let t = schmidt_decompose(&g.transpose(), false).unwrap();
        assert!((base.k - t.k).abs() <= 1e-12 * base.k);
    }

    #[test]
    fn modes_are_orthonormal() {
        let g = grid_from(80, -5.0, 5.0, |x, y| {
            Complex64::new((-(x * x + y * y) / 2.0 + 0.7 * x * y).exp(), 0.0)
                * Complex64::from_polar(1.0, 0.4 * x * y)
        });
        let r = schmidt_decompose(&g, false).unwrap();
        for modes in [&r.signal_modes, &r.idler_modes] {
            for (a, ma) in modes.iter().enumerate() {
                for (b, mb) in modes.iter().enumerate() {
                    let dot: Complex64 = ma.iter().zip(mb).map(|(x, y)| x.conj() * y).sum();
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - expect).norm() < 1e-8, "{a} {b} {dot}");
                }
            }
        }
        // Leading pair reconstructs the kernel's dominant component.
        let s0 = (r.coefficients[0]).sqrt();
        assert!(s0 > 0.0);
        assert!(r.signal_modes_csv().starts_with("lambda_s_nm,S0_re,S0_im"));
    }

    #[test]
    fn zero_grid_is_degenerate() {
        let g = grid_from(8, 0.0, 1.0, |_, _| Complex64::new(0.0, 0.0));
        assert!(matches!(schmidt_decompose(&g, false), Err(Error::Degenerate(_))));
        assert!(matches!(schmidt_decompose(&g, true), Err(Error::Degenerate(_))));
    }

    #[test]
    fn marginals_of_separable_grid() {
        let xs = axis(50, 1.0e15, 1.1e15);
        let f = |w: f64| (-((w - 1.04e15) / 1e13).powi(2)).exp();
        let g = |w: f64| (-((w - 1.06e15) / 2e13).powi(2)).exp();
        let vals: Vec<f64> = xs.iter().flat_map(|&a| xs.iter().map(move |&b| f(a) * g(b))).collect();
        let jsi = JsiGrid::new(xs.clone(), xs.clone(), vals).unwrap();
        let m = marginals(&jsi);
        let gs: f64 = xs.iter().map(|&w| g(w)).sum();
        for (j, &w) in xs.iter().enumerate() {
            let expect = f(w) * gs * (xs[1] - xs[0]);
            assert!((m.signal[j] - expect).abs() <= 1e-12 * expect.max(1e-300));
        }
        assert!(m.signal_centroid_omega < m.idler_centroid_omega);
        let sym = JsiGrid::new(xs.clone(), xs.clone(), xs.iter().flat_map(|&a| xs.iter().map(move |&b| f(a) * f(b))).collect()).unwrap();
        let ms = marginals(&sym);
        assert!((ms.signal_centroid_nm - ms.idler_centroid_nm).abs() < 1e-9);
    }

    #[test]
    fn json_fields() {
        let g = grid_from(16, -3.0, 3.0, |x, y| Complex64::new((-(x * x + y * y)).exp(), 0.0));
        let r = schmidt_decompose(&g, true).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert!(v["c"].is_array() && v["K"].is_number() && v["purity"].is_number());
        assert_eq!(v["flat_phase"], serde_json::Value::Bool(true));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn random_grids_satisfy_invariants(
            vals in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 36),
        ) {
            let values: Vec<Complex64> = vals.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
            prop_assume!(values.iter().any(|v| v.norm() > 1e-3));
            let g = JsaGrid::new(axis(6, 0.0, 1.0), axis(6, 0.0, 1.0), values, JsaMetadata::bare(1.0)).unwrap();
            let r = schmidt_decompose(&g, false).unwrap();
            let sum: f64 = r.coefficients.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(r.coefficients.iter().all(|&c| c >= 0.0));
            prop_assert!(r.coefficients.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(r.k >= 1.0 - 1e-12);
            prop_assert!((r.purity * r.k - 1.0).abs() < 1e-12);
            let t = schmidt_decompose(&g.transpose(), false).unwrap();
            prop_assert!((t.k - r.k).abs() < 1e-9 * r.k);
        }
    }
}
