//! Least-squares fits used by the decay-exponent experiments.

use crate::error::{CoreError, Result};

/// Ordinary least squares `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope estimate.
    pub stderr_slope: f64,
    pub n_samples: usize,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(CoreError::InvalidParameter(format!(
            "linear fit needs >= 2 paired samples, got {} / {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(CoreError::InvalidParameter(
            "linear fit abscissae are degenerate".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let stderr_slope = if xs.len() > 2 {
        (ss_res / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit {
        slope,
        intercept,
        stderr_slope,
        n_samples: xs.len(),
    })
}

/// Power-law fit `y = C * x^slope` via log-log least squares.
/// All samples must be strictly positive.
pub fn loglog_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(CoreError::InvalidParameter(
            "log-log fit requires strictly positive samples".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

/// One decay-exponent experiment: a fitted log-log slope compared against a
/// predicted exponent with a tolerance band.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub name: String,
    pub predicted_exponent: f64,
    pub fitted_exponent: f64,
    pub stderr: f64,
    /// Multiplicative constant `C` in `y = C * t^slope`.
    pub constant: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub n_samples: usize,
    pub tolerance: f64,
    pub pass: bool,
}

impl FitReport {
    /// Fit `vals ~ C * ts^e` and gate `|e - predicted| <= tolerance`.
    /// Requires >= 8 samples spanning >= 1.5 decades of `ts`.
    pub fn check(
        name: &str,
        predicted: f64,
        ts: &[f64],
        vals: &[f64],
        tolerance: f64,
    ) -> Result<Self> {
        if ts.len() < 8 {
            return Err(CoreError::InvalidParameter(format!(
                "{name}: exponent fit needs >= 8 samples, got {}",
                ts.len()
            )));
        }
        let lo = ts.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ts.iter().cloned().fold(0.0f64, f64::max);
        if !(hi / lo >= 10f64.powf(1.5)) {
            return Err(CoreError::InvalidParameter(format!(
                "{name}: exponent fit needs >= 1.5 decades, got [{lo:.3e}, {hi:.3e}]"
            )));
        }
        let fit = loglog_fit(ts, vals)?;
        Ok(Self {
            name: name.to_string(),
            predicted_exponent: predicted,
            fitted_exponent: fit.slope,
            stderr: fit.stderr_slope,
            constant: fit.intercept.exp(),
            t_lo: lo,
            t_hi: hi,
            n_samples: fit.n_samples,
            tolerance,
            pass: (fit.slope - predicted).abs() <= tolerance,
        })
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: fitted {:.4} (predicted {:.4} +- {:.2}, stderr {:.2e}, C = {:.3e}, t in [{:.2e}, {:.2e}], {} samples) -> {}",
            self.name,
            self.fitted_exponent,
            self.predicted_exponent,
            self.tolerance,
            self.stderr,
            self.constant,
            self.t_lo,
            self.t_hi,
            self.n_samples,
            if self.pass { "pass" } else { "FAIL" }
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let f = linear_fit(&xs, &ys).unwrap();
        assert!((f.slope - 2.5).abs() < 1e-12);
        assert!((f.intercept + 1.0).abs() < 1e-12);
        assert!(f.stderr_slope < 1e-12);
    }

    #[test]
    fn recovers_power_law() {
        let xs: Vec<f64> = (1..=10).map(|k| 0.01 * 2f64.powi(k)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-1.5)).collect();
        let f = loglog_fit(&xs, &ys).unwrap();
        assert!((f.slope + 1.5).abs() < 1e-10);
        assert!((f.intercept.exp() - 3.0).abs() < 1e-10);
    }

    #[test]
    fn report_gates_span_and_count() {
        let ts: Vec<f64> = (1..=8).map(|k| k as f64).collect(); // < 1.5 decades
        let vals = vec![1.0; 8];
        assert!(FitReport::check("x", 0.0, &ts, &vals, 0.15).is_err());
        let ts: Vec<f64> = (0..6).map(|k| 10f64.powi(k)).collect(); // < 8 samples
        let vals = vec![1.0; 6];
        assert!(FitReport::check("x", 0.0, &ts, &vals, 0.15).is_err());
    }

    #[test]
    fn report_pass_flag() {
        let ts: Vec<f64> = (0..10).map(|k| 1e-3 * 2f64.powi(k)).collect();
        let vals: Vec<f64> = ts.iter().map(|t| 2.0 / t).collect();
        let r = FitReport::check("decay", -1.0, &ts, &vals, 0.15).unwrap();
        assert!(r.pass);
        let r2 = FitReport::check("decay", -0.5, &ts, &vals, 0.15).unwrap();
        assert!(!r2.pass);
    }

    #[test]
    fn rejects_nonpositive_loglog() {
        assert!(loglog_fit(&[1.0, 2.0], &[1.0, -2.0]).is_err());
    }
}
