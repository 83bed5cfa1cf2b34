//! Small numerical kernels shared across the models: bisection, linear
//! least squares, Bessel function zeros and cubic interpolation.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Bisection on a bracket `[a, b]` with `f(a)` and `f(b)` of opposite sign.
///
/// Stops when `|f(mid)| <= f_tol`, when the bracket is narrower than
/// `x_rel_tol * |mid|`, or when the bracket cannot be split further in f64.
pub fn bisect<F>(mut f: F, mut a: f64, mut b: f64, x_rel_tol: f64, f_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut fa = f(a)?;
    let fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::validation(
            "bracket",
            format!("no sign change on [{a:e}, {b:e}] (f = {fa:e}, {fb:e})"),
        ));
    }
    const MAX_ITER: usize = 400;
    let mut mid = 0.5 * (a + b);
    let mut fm = f(mid)?;
    for _ in 0..MAX_ITER {
        if fm.abs() <= f_tol || (b - a).abs() <= x_rel_tol * mid.abs() {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
        let next = 0.5 * (a + b);
        if next == a || next == b {
            // Bracket exhausted at f64 resolution.
            return Ok(mid);
        }
        mid = next;
        fm = f(mid)?;
    }
    Err(Error::NonConvergence {
        what: "bisection".into(),
        iterations: MAX_ITER,
        last: mid,
        delta: (b - a).abs(),
    })
}

/// Ordinary least-squares line `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::validation("fit", "x and y lengths differ"));
    }
    if x.len() < 2 {
        return Err(Error::validation("fit", "need at least two points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let syy: f64 = y.iter().map(|yi| (yi - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::validation("fit", "all abscissae identical"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (yi - slope * xi - intercept).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Bessel function of the first kind, integer order, from the integral
/// representation `J_n(x) = (1/pi) int_0^pi cos(n t - x sin t) dt`.
///
/// The integrand is smooth, even and 2pi-periodic, so the trapezoid rule
/// converges geometrically; 256 panels are exact to rounding for |x| < 60.
pub fn bessel_j(order: u32, x: f64) -> f64 {
    const PANELS: usize = 256;
    let n = order as f64;
    let h = PI / PANELS as f64;
    let mut sum = 0.5 * (1.0 + (n * PI).cos());
    for k in 1..PANELS {
        let t = k as f64 * h;
        sum += (n * t - x * t.sin()).cos();
    }
    sum * h / PI
}

/// The `index`-th positive zero (1-based) of `J_order`.
pub fn bessel_j_zero(order: u32, index: u32) -> Result<f64> {
    if index == 0 {
        return Err(Error::validation("mode_n", "zero index must be >= 1"));
    }
    // Zeros are spaced by roughly pi; a 0.05 scan cannot skip one.
    let step = 0.05;
    let mut x = 1e-3;
    let mut fx = bessel_j(order, x);
    let mut found = 0;
    while x < 200.0 {
        let xn = x + step;
        let fxn = bessel_j(order, xn);
        if fx != 0.0 && fx.signum() != fxn.signum() {
            found += 1;
            if found == index {
                return bisect(|z| Ok(bessel_j(order, z)), x, xn, 1e-15, 0.0);
            }
        }
        x = xn;
        fx = fxn;
    }
    Err(Error::NonConvergence {
        what: format!("search for zero {index} of J_{order}"),
        iterations: (200.0 / step) as usize,
        last: x,
        delta: step,
    })
}

/// Natural cubic spline through `(x_k, y_k)` with strictly increasing `x`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n != y.len() || n < 3 {
            return Err(Error::validation(
                "spline",
                "need at least three points and matching lengths",
            ));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("spline", "abscissae not strictly increasing"));
        }
        // Tridiagonal system for the second derivatives, natural end conditions.
        let mut m = vec![0.0; n];
        let mut c_prime = vec![0.0; n];
        let mut d_prime = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            let a = h0;
            let b = 2.0 * (h0 + h1);
            let c = h1;
            let d = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            let denom = b - a * c_prime[i - 1];
            c_prime[i] = c / denom;
            d_prime[i] = (d - a * d_prime[i - 1]) / denom;
        }
        for i in (1..n - 1).rev() {
            m[i] = d_prime[i] - c_prime[i] * m[i + 1];
        }
        Ok(Self { x, y, m })
    }

    /// Spline value; zero outside the sampled support.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t < self.x[0] || t > self.x[n - 1] {
            return 0.0;
        }
        let i = match self.x.partition_point(|&xi| xi <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| Ok(x * x - 2.0), 0.0, 2.0, 1e-14, 0.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn bisect_rejects_missing_sign_change() {
        assert!(bisect(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-12, 0.0).is_err());
    }

    #[test]
    fn bessel_values_match_tables() {
        // Abramowitz & Stegun table 9.1.
        assert!((bessel_j(0, 1.0) - 0.765_197_686_557_966_6).abs() < 1e-14);
        assert!((bessel_j(1, 2.0) - 0.576_724_807_756_873_4).abs() < 1e-14);
        assert!((bessel_j(2, 5.0) - 0.046_565_116_277_752_2).abs() < 1e-14);
    }

    #[test]
    fn bessel_zeros_match_tables() {
        assert!((bessel_j_zero(0, 1).unwrap() - 2.404_825_557_695_773).abs() < 1e-12);
        assert!((bessel_j_zero(0, 2).unwrap() - 5.520_078_110_286_311).abs() < 1e-12);
        assert!((bessel_j_zero(1, 1).unwrap() - 3.831_705_970_207_512).abs() < 1e-12);
        assert!((bessel_j_zero(2, 1).unwrap() - 5.135_622_301_840_683).abs() < 1e-12);
        assert!(bessel_j_zero(0, 0).is_err());
    }

    #[test]
    fn linear_fit_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let fit = linear_fit(&x, &y).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-14);
        assert!((fit.intercept + 1.0).abs() < 1e-13);
        assert!((fit.r_squared - 1.0).abs() < 1e-14);
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn spline_reproduces_smooth_function() {
        let x: Vec<f64> = (0..200).map(|i| -5.0 + 10.0 * i as f64 / 199.0).collect();
        let y: Vec<f64> = x.iter().map(|v| (-v * v / 2.0).exp()).collect();
        let s = CubicSpline::new(x, y).unwrap();
        for &t in &[-1.234, 0.0, 0.5, 2.71] {
            assert!((s.eval(t) - (-t * t / 2.0f64).exp()).abs() < 1e-6);
        }
        assert_eq!(s.eval(6.0), 0.0);
    }
}
