//! Stimulated emission tomography: seeded slices of the JSI, seed-power
//! normalisation, reconstruction and power-law checks.
//!
//! A slice recorded with the idler seeded at `w_i` is
//! `C * P_pump^2 * N_seed(w_i) * JSI(w_s, w_i) * (1 + sigma xi) + dark`, with
//! `N_seed = duty * P_seed * tau / (hbar w_i)` the seed photon number per
//! integration window.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsa::JsiGrid;
use crate::numerics::{linear_fit, LinearFit};
use crate::units::{nm_from_omega, HBAR};

/// Minimum number of power points per axis for a scaling fit.
pub const MIN_POWER_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Relative standard deviation of the multiplicative Gaussian noise.
    pub relative_sigma: f64,
    /// Additive floor added to every sample.
    pub dark: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            relative_sigma: 0.0,
            dark: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetParams {
    /// Arbitrary fixed gain `C`.
    pub gain: f64,
    /// Average pump power, W.
    pub pump_power_w: f64,
    /// Fraction of the CW seed power overlapping the pump pulses.
    pub duty_cycle: f64,
    /// Integration time per slice, s.
    pub integration_s: f64,
    pub noise: NoiseModel,
}

impl Default for SetParams {
    fn default() -> Self {
        Self {
            gain: 1.0,
            pump_power_w: 1.0,
            duty_cycle: 1.0,
            integration_s: 1.0,
            noise: NoiseModel::default(),
        }
    }
}

impl SetParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, key: &str| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(key, "must be positive"))
            }
        };
        positive(self.gain, "set.gain")?;
        positive(self.pump_power_w, "set.pump_power_W")?;
        positive(self.duty_cycle, "set.duty_cycle")?;
        positive(self.integration_s, "set.integration_s")?;
        if !(self.noise.relative_sigma >= 0.0 && self.noise.relative_sigma.is_finite()) {
            return Err(Error::validation("set.noise_sigma", "must be >= 0"));
        }
        if !(self.noise.dark >= 0.0 && self.noise.dark.is_finite()) {
            return Err(Error::validation("set.dark", "must be >= 0"));
        }
        Ok(())
    }
}

/// Seed photon number for a monitored seed power.
pub fn seed_photon_number(seed_power_w: f64, omega_i: f64, params: &SetParams) -> f64 {
    params.duty_cycle * seed_power_w * params.integration_s / (HBAR * omega_i)
}

/// A recorded seed sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetScan {
    /// Common signal axis of every slice, rad/s.
    pub signal_omega: Vec<f64>,
    /// Seed frequencies, rad/s, in sweep order.
    pub seed_omega: Vec<f64>,
    /// Monitored seed power per step, W.
    pub seed_power_w: Vec<f64>,
    pub params: SetParams,
    /// One recorded spectrum per seed step, on `signal_omega`.
    pub slices: Vec<Vec<f64>>,
}

impl SetScan {
    /// Long-format CSV `seed_lambda_nm,signal_lambda_nm,counts,seed_power_W`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed_lambda_nm,signal_lambda_nm,counts,seed_power_W\n");
        for (step, slice) in self.slices.iter().enumerate() {
            let seed_nm = nm_from_omega(self.seed_omega[step]);
            for (&ws, &c) in self.signal_omega.iter().zip(slice) {
                let _ = writeln!(
                    out,
                    "{:.6},{:.6},{:.9e},{:.6e}",
                    seed_nm,
                    nm_from_omega(ws),
                    c,
                    self.seed_power_w[step]
                );
            }
        }
        out
    }
}

/// Column of the JSI at `omega_i`, linearly interpolated between nodes.
fn jsi_column(truth: &JsiGrid, omega_i: f64) -> Result<Vec<f64>> {
    let axis = &truth.omega_i;
    let n = axis.len();
    let h = (axis[n - 1] - axis[0]) / (n - 1) as f64;
    let tol = 1e-9 * h;
    if omega_i < axis[0] - tol || omega_i > axis[n - 1] + tol {
        return Err(Error::validation(
            "set.seed_lambda_nm",
            format!(
                "seed at {:.3} nm is outside the JSI idler axis [{:.3}, {:.3}] nm",
                nm_from_omega(omega_i),
                nm_from_omega(axis[n - 1]),
                nm_from_omega(axis[0])
            ),
        ));
    }
    let p = axis.partition_point(|&w| w < omega_i);
    let column = |k: usize| (0..truth.n_s()).map(|j| truth.get(j, k)).collect::<Vec<_>>();
    if p < n && (axis[p] - omega_i).abs() <= tol {
        return Ok(column(p));
    }
    if p > 0 && (omega_i - axis[p - 1]).abs() <= tol {
        return Ok(column(p - 1));
    }
    let (k0, k1) = (p - 1, p);
    let t = (omega_i - axis[k0]) / (axis[k1] - axis[k0]);
    Ok((0..truth.n_s())
        .map(|j| (1.0 - t) * truth.get(j, k0) + t * truth.get(j, k1))
        .collect())
}

fn noisy_slice(
    column: &[f64],
    scale: f64,
    noise: &NoiseModel,
    stream: u64,
) -> Vec<f64> {
    if noise.relative_sigma == 0.0 {
        return column.iter().map(|&v| scale * v + noise.dark).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    rng.set_stream(stream);
    column
        .iter()
        .map(|&v| {
            let xi: f64 = StandardNormal.sample(&mut rng);
            scale * v * (1.0 + noise.relative_sigma * xi) + noise.dark
        })
        .collect()
}

fn check_sweep(seed_omega: &[f64], seed_power_w: &[f64]) -> Result<()> {
    if seed_omega.is_empty() {
        return Err(Error::validation("set.steps", "seed sweep is empty"));
    }
    if seed_omega.len() != seed_power_w.len() {
        return Err(Error::validation(
            "set.seed_power_W",
            "one monitored power per seed step is required",
        ));
    }
    if seed_power_w.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(Error::validation("set.seed_power_W", "seed powers must be positive"));
    }
    let inc = seed_omega.windows(2).all(|w| w[1] > w[0]);
    let dec = seed_omega.windows(2).all(|w| w[1] < w[0]);
    if !(inc || dec) {
        return Err(Error::validation("set.seed_lambda_nm", "seed sweep must be monotone"));
    }
    Ok(())
}

fn simulate_with_streams(
    truth: &JsiGrid,
    seed_omega: &[f64],
    seed_power_w: &[f64],
    params: &SetParams,
    stream_offset: u64,
) -> Result<SetScan> {
    params.validate()?;
    check_sweep(seed_omega, seed_power_w)?;
    let slices = seed_omega
        .par_iter()
        .zip(seed_power_w)
        .enumerate()
        .map(|(step, (&wi, &p))| {
            let column = jsi_column(truth, wi)?;
            let scale = params.gain
                * params.pump_power_w.powi(2)
                * seed_photon_number(p, wi, params);
            Ok(noisy_slice(&column, scale, &params.noise, stream_offset + step as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SetScan {
        signal_omega: truth.omega_s.clone(),
        seed_omega: seed_omega.to_vec(),
        seed_power_w: seed_power_w.to_vec(),
        params: params.clone(),
        slices,
    })
}

/// Simulate a seed sweep over `seed_omega` with monitored powers
/// `seed_power_w` against a ground-truth JSI.
pub fn simulate_set_scan(
    truth: &JsiGrid,
    seed_omega: &[f64],
    seed_power_w: &[f64],
    params: &SetParams,
) -> Result<SetScan> {
    simulate_with_streams(truth, seed_omega, seed_power_w, params, 0)
}

/// Divide each slice by its seed photon number, stack on the common axes and
/// normalise to unit sum. The known dark floor is subtracted first.
pub fn reconstruct_jsi(scan: &SetScan) -> Result<JsiGrid> {
    if scan.slices.len() < 2 {
        return Err(Error::validation("set.steps", "at least two slices are required"));
    }
    if scan.seed_power_w.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::validation(
            "set.seed_power_W",
            "monitored seed power must be positive",
        ));
    }
    let mut order: Vec<usize> = (0..scan.seed_omega.len()).collect();
    order.sort_by(|&a, &b| scan.seed_omega[a].total_cmp(&scan.seed_omega[b]));
    let ns = scan.signal_omega.len();
    let ni = order.len();
    let mut values = vec![0.0; ns * ni];
    for (k, &step) in order.iter().enumerate() {
        let n_seed = seed_photon_number(scan.seed_power_w[step], scan.seed_omega[step], &scan.params);
        for (j, &c) in scan.slices[step].iter().enumerate() {
            values[j * ni + k] = (c - scan.params.noise.dark) / n_seed;
        }
    }
    let omega_i = order.iter().map(|&s| scan.seed_omega[s]).collect();
    JsiGrid::new(scan.signal_omega.clone(), omega_i, values)?.normalized_unit_sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerScaling {
    pub seed_exponent: f64,
    pub pump_exponent: f64,
    pub seed_fit: LinearFit,
    pub pump_fit: LinearFit,
}

fn check_powers(powers: &[f64], key: &str) -> Result<()> {
    if powers.len() < MIN_POWER_POINTS {
        return Err(Error::validation(
            key,
            format!("at least {MIN_POWER_POINTS} power points are required"),
        ));
    }
    if powers.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(Error::validation(key, "powers must be positive"));
    }
    Ok(())
}

/// Log-log fits of the recorded signal power against seed power (pump fixed
/// at `params.pump_power_w`) and against pump power (seed fixed at
/// `seed_powers_w[0]`), seeding at the idler of the JSI maximum.
pub fn power_scaling_check(
    truth: &JsiGrid,
    seed_powers_w: &[f64],
    pump_powers_w: &[f64],
    params: &SetParams,
) -> Result<PowerScaling> {
    check_powers(seed_powers_w, "set.seed_powers_W")?;
    check_powers(pump_powers_w, "set.pump_powers_W")?;
    params.validate()?;
    let peak = truth
        .values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i % truth.n_i())
        .ok_or_else(|| Error::Degenerate("empty JSI".into()))?;
    let wi = truth.omega_i[peak];
    let total = |scan: SetScan| -> f64 {
        scan.slices[0].iter().map(|c| c - scan.params.noise.dark).sum()
    };
    let seed_signal = seed_powers_w
        .iter()
        .enumerate()
        .map(|(n, &p)| Ok(total(simulate_with_streams(truth, &[wi], &[p], params, 1 + n as u64)?)))
        .collect::<Result<Vec<f64>>>()?;
    let base = seed_powers_w.len() as u64 + 1;
    let pump_signal = pump_powers_w
        .iter()
        .enumerate()
        .map(|(n, &pp)| {
            let p = SetParams {
                pump_power_w: pp,
                ..params.clone()
            };
            Ok(total(simulate_with_streams(truth, &[wi], &[seed_powers_w[0]], &p, base + n as u64)?))
        })
        .collect::<Result<Vec<f64>>>()?;
    if seed_signal.iter().chain(&pump_signal).any(|&s| !(s > 0.0)) {
        return Err(Error::Degenerate("non-positive signal power in scaling fit".into()));
    }
    let ln = |v: &[f64]| v.iter().map(|x| x.ln()).collect::<Vec<_>>();
    let seed_fit = linear_fit(&ln(seed_powers_w), &ln(&seed_signal))?;
    let pump_fit = linear_fit(&ln(pump_powers_w), &ln(&pump_signal))?;
    Ok(PowerScaling {
        seed_exponent: seed_fit.slope,
        pump_exponent: pump_fit.slope,
        seed_fit,
        pump_fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(n: usize) -> JsiGrid {
        let ws: Vec<f64> = (0..n).map(|i| 2.43e15 + 1e12 * i as f64).collect();
        let wi: Vec<f64> = (0..n).map(|i| 1.22e15 + 1e12 * i as f64).collect();
        let (cs, ci) = (ws[n / 2], wi[n / 2]);
        let vals = ws
            .iter()
            .flat_map(|&a| {
                wi.iter().map(move |&b| {
                    let (x, y) = ((a - cs) / 8e12, (b - ci) / 8e12);
                    (-(x * x + y * y) + 0.8 * x * y).exp()
                })
            })
            .collect();
        JsiGrid::new(ws, wi, vals).unwrap()
    }

    fn rel_l2(a: &JsiGrid, b: &JsiGrid) -> f64 {
        let num: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.values.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn noiseless_round_trip_is_exact() {
        let t = truth(48);
        let powers: Vec<f64> = (0..48).map(|k| 1e-9 * (1.0 + 9.0 * k as f64 / 47.0)).collect();
        let scan = simulate_set_scan(&t, &t.omega_i, &powers, &SetParams::default()).unwrap();
        let rec = reconstruct_jsi(&scan).unwrap();
        let expect = t.normalized_unit_sum().unwrap();
        let dev = rec
            .values
            .iter()
            .zip(&expect.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-12, "{dev}");
    }

    #[test]
    fn slices_scale_with_seed_and_pump() {
        let t = truth(16);
        let p1 = vec![1e-9; 16];
        let mut p2 = p1.clone();
        p2[3] *= 2.0;
        let a = simulate_set_scan(&t, &t.omega_i, &p1, &SetParams::default()).unwrap();
        let b = simulate_set_scan(&t, &t.omega_i, &p2, &SetParams::default()).unwrap();
        for (x, y) in a.slices[3].iter().zip(&b.slices[3]) {
            assert!((y - 2.0 * x).abs() <= 1e-12 * y.abs());
        }
        assert_eq!(a.slices[4], b.slices[4]);
        let pumped = SetParams {
            pump_power_w: 2.0,
            ..SetParams::default()
        };
        let c = simulate_set_scan(&t, &t.omega_i, &p1, &pumped).unwrap();
        for (x, y) in a.slices.iter().flatten().zip(c.slices.iter().flatten()) {
            assert!((y - 4.0 * x).abs() <= 1e-12 * y.abs());
        }
    }

    #[test]
    fn validation_errors() {
        let t = truth(8);
        assert!(simulate_set_scan(&t, &t.omega_i, &[0.0; 8], &SetParams::default()).is_err());
        let outside = [t.omega_i[0] - 1e13, t.omega_i[1]];
        assert!(simulate_set_scan(&t, &outside, &[1e-9; 2], &SetParams::default()).is_err());
        let mut scan = simulate_set_scan(&t, &t.omega_i, &[1e-9; 8], &SetParams::default()).unwrap();
        scan.seed_power_w[2] = 0.0;
        assert!(reconstruct_jsi(&scan).is_err());
        let one = simulate_set_scan(&t, &t.omega_i[..1], &[1e-9], &SetParams::default()).unwrap();
        assert!(reconstruct_jsi(&one).is_err());
        assert!(power_scaling_check(&t, &[1e-9], &[1.0; 5], &SetParams::default()).is_err());
        assert!(power_scaling_check(&t, &[1e-9, 2e-9, 3e-9, 4e-9, -1.0], &[1.0, 2.0, 3.0, 4.0, 5.0], &SetParams::default()).is_err());
    }

    #[test]
    fn noiseless_exponents_exact() {
        let t = truth(16);
        let seeds: Vec<f64> = (1..=6).map(|k| 1e-9 * k as f64).collect();
        let pumps: Vec<f64> = (1..=6).map(|k| 0.05 * k as f64).collect();
        let r = power_scaling_check(&t, &seeds, &pumps, &SetParams::default()).unwrap();
        assert!((r.seed_exponent - 1.0).abs() < 1e-9);
        assert!((r.pump_exponent - 2.0).abs() < 1e-9);
        assert!((r.seed_fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_percent_noise_monte_carlo() {
        let t = truth(32);
        let expect = t.normalized_unit_sum().unwrap();
        let powers = vec![1e-9; 32];
        let mut errs = Vec::new();
        for seed in 0..100 {
            let params = SetParams {
                noise: NoiseModel {
                    relative_sigma: 0.01,
                    dark: 0.0,
                    seed,
                },
                ..SetParams::default()
            };
            let scan = simulate_set_scan(&t, &t.omega_i, &powers, &params).unwrap();
            errs.push(rel_l2(&reconstruct_jsi(&scan).unwrap(), &expect));
        }
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        assert!(mean > 0.005 && mean < 0.02, "{mean}");
    }

    #[test]
    fn deterministic_for_any_thread_count() {
        let t = truth(24);
        let params = SetParams {
            noise: NoiseModel {
                relative_sigma: 0.05,
                dark: 1.0,
                seed: 7,
            },
            ..SetParams::default()
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| simulate_set_scan(&t, &t.omega_i, &[1e-9; 24], &params).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn csv_long_format() {
        let t = truth(4);
        let scan = simulate_set_scan(&t, &t.omega_i, &[1e-9; 4], &SetParams::default()).unwrap();
        let csv = scan.to_csv();
        assert!(csv.starts_with("seed_lambda_nm,signal_lambda_nm,counts,seed_power_W\n"));
        assert_eq!(csv.lines().count(), 1 + 16);
    }
}
