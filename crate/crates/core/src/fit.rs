//! Least-squares decay fits with AIC model comparison and runs-test windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values below this are treated as exact zeros and masked.
pub const ZERO_FLOOR: f64 = 1e-15;
pub const MIN_POINTS: usize = 8;
pub const MIN_DECADES: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayModel {
    /// `|rho(N)| ~ C N^p`; `slope` is `p`.
    Power,
    /// `|rho(N)| ~ C e^{-r N}`; `slope` is `-r`.
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    /// First and last time of the fitted window.
    pub window: (f64, f64),
    pub points: usize,
    pub rss: f64,
    pub aic: f64,
    /// Residual signs pass a Wald-Wolfowitz runs test at the 5% level.
    pub runs_pass: bool,
}

impl DecayFit {
    /// Power exponent or exponential rate, whichever the model has.
    pub fn exponent_or_rate(&self) -> f64 {
        match self.model {
            DecayModel::Power => self.slope,
            DecayModel::Exponential => -self.slope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub power: DecayFit,
    pub exponential: DecayFit,
    pub preferred: DecayModel,
}

struct Line {
    slope: f64,
    intercept: f64,
    stderr: f64,
    residuals: Vec<f64>,
}

fn least_squares(x: &[f64], y: &[f64]) -> Line {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let stderr = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    Line { slope, intercept, stderr, residuals }
}

/// Two-sided Wald-Wolfowitz runs test on residual signs, `|Z| < 1.96`.
pub fn runs_test(residuals: &[f64]) -> bool {
    let signs: Vec<bool> = residuals.iter().filter(|r| **r != 0.0).map(|r| *r > 0.0).collect();
    let n1 = signs.iter().filter(|s| **s).count() as f64;
    let n2 = signs.len() as f64 - n1;
    if n1 == 0.0 || n2 == 0.0 {
        // all residuals on one side (or exact fit): only an exact fit passes
        return residuals.iter().all(|r| r.abs() < 1e-9);
    }
    let runs = 1 + signs.windows(2).filter(|w| w[0] != w[1]).count();
    let n = n1 + n2;
    let mean = 2.0 * n1 * n2 / n + 1.0;
    let var = 2.0 * n1 * n2 * (2.0 * n1 * n2 - n) / (n * n * (n - 1.0));
    if var <= 0.0 {
        return true;
    }
    ((runs as f64 - mean) / var.sqrt()).abs() < 1.96
}

fn usable(times: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
    times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t > 0.0 && v.abs() >= ZERO_FLOOR && v.is_finite())
        .map(|(t, v)| (*t, v.abs()))
        .collect()
}

fn admissible(pts: &[(f64, f64)]) -> bool {
    pts.len() >= MIN_POINTS && (pts[pts.len() - 1].0 / pts[0].0).log10() >= MIN_DECADES - 1e-12
}

fn fit_points(pts: &[(f64, f64)], model: DecayModel) -> DecayFit {
    let x: Vec<f64> = pts
        .iter()
        .map(|(t, _)| match model {
            DecayModel::Power => t.ln(),
            DecayModel::Exponential => *t,
        })
        .collect();
    let y: Vec<f64> = pts.iter().map(|(_, v)| v.ln()).collect();
    let line = least_squares(&x, &y);
    let n = pts.len() as f64;
    let rss: f64 = line.residuals.iter().map(|r| r * r).sum();
    let aic = n * (rss.max(1e-300) / n).ln() + 4.0;
    DecayFit {
        model,
        slope: line.slope,
        stderr: line.stderr,
        intercept: line.intercept,
        window: (pts[0].0, pts[pts.len() - 1].0),
        points: pts.len(),
        rss,
        aic,
        runs_pass: runs_test(&line.residuals),
    }
}

/// Fits `model` to `|values|` against `times` (increasing).
///
/// With an explicit `window` the points inside it are used. Otherwise the
/// window is the longest suffix whose residuals pass the runs test; if none
/// does, the full range is used and `runs_pass` is false.
pub fn decay_fit(times: &[f64], values: &[f64], model: DecayModel, window: Option<(f64, f64)>) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::Invalid("times and values differ in length".into()));
    }
    let mut pts = usable(times, values);
    if let Some((lo, hi)) = window {
        pts.retain(|(t, _)| *t >= lo && *t <= hi);
    }
    if !admissible(&pts) {
        return Err(Error::TooFewPoints(format!(
            "{} usable points; need at least {MIN_POINTS} spanning {MIN_DECADES} decades",
            pts.len()
        )));
    }
    if window.is_some() {
        return Ok(fit_points(&pts, model));
    }
    for start in 0..pts.len() {
        let suffix = &pts[start..];
        if !admissible(suffix) {
            break;
        }
        let fit = fit_points(suffix, model);
        if fit.runs_pass {
            return Ok(fit);
        }
    }
    Ok(fit_points(&pts, model))
}

/// Fits both models on a common window and prefers the lower AIC.
pub fn compare_models(times: &[f64], values: &[f64], window: Option<(f64, f64)>) -> Result<ModelComparison> {
    let window = match window {
        Some(w) => Some(w),
        None => {
            // common window: the tighter of the two automatic windows
            let p = decay_fit(times, values, DecayModel::Power, None)?;
            let e = decay_fit(times, values, DecayModel::Exponential, None)?;
            Some((p.window.0.max(e.window.0), p.window.1.min(e.window.1)))
        }
    };
    let power = decay_fit(times, values, DecayModel::Power, window)
        .or_else(|_| decay_fit(times, values, DecayModel::Power, None))?;
    let exponential = decay_fit(times, values, DecayModel::Exponential, Some(power.window))?;
    let preferred = if exponential.aic < power.aic { DecayModel::Exponential } else { DecayModel::Power };
    Ok(ModelComparison { power, exponential, preferred })
}

/// Ordinary least-squares slope of `log y` on `log x` with its standard error.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    if pts.len() < 3 {
        return Err(Error::TooFewPoints(format!("{} positive points for a log-log fit", pts.len())));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let line = least_squares(&lx, &ly);
    Ok((line.slope, line.stderr))
}

/// Ordinary least-squares fit `y = a + b x`, returning `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let line = least_squares(x, y);
    (line.intercept, line.slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn synthetic_power_law() {
        let t: Vec<f64> = (0..40).map(|i| 10f64.powf(1.0 + i as f64 * 0.075)).collect();
        let v: Vec<f64> = t.iter().map(|x| 1.0 / x).collect();
        let f = decay_fit(&t, &v, DecayModel::Power, None).unwrap();
        assert_abs_diff_eq!(f.slope, -1.0, epsilon = 1e-10);
        assert!(f.runs_pass);
    }

    #[test]
    fn synthetic_exponential() {
        let t: Vec<f64> = (1..=48).map(f64::from).collect();
        let v: Vec<f64> = t.iter().map(|x| 2f64.powf(-x)).collect();
        let f = decay_fit(&t, &v, DecayModel::Exponential, None).unwrap();
        assert_abs_diff_eq!(f.exponent_or_rate(), 2f64.ln(), epsilon = 1e-10);
        let c = compare_models(&t, &v, None).unwrap();
        assert_eq!(c.preferred, DecayModel::Exponential);
    }

    #[test]
    fn rejects_short_series() {
        let t = [1.0, 2.0, 3.0];
        assert!(matches!(decay_fit(&t, &t, DecayModel::Power, None), Err(Error::TooFewPoints(_))));
        let t: Vec<f64> = (1..=20).map(f64::from).collect();
        // 20 points but only 1.3 decades
        assert!(decay_fit(&t, &t, DecayModel::Power, None).is_err());
    }

    #[test]
    fn zeros_are_masked() {
        let t: Vec<f64> = (1..=100).map(f64::from).collect();
        let v: Vec<f64> = t.iter().map(|x| if *x as i64 % 2 == 0 { 0.0 } else { x.powf(-0.5) }).collect();
        let f = decay_fit(&t, &v, DecayModel::Power, None).unwrap();
        assert_eq!(f.points, 50);
        assert_abs_diff_eq!(f.slope, -0.5, epsilon = 1e-10);
    }

    #[test]
    fn runs_test_detects_curvature() {
        let r: Vec<f64> = (0..30).map(|i| ((i as f64 - 15.0) / 5.0).powi(2) - 3.0).collect();
        assert!(!runs_test(&r));
        let mixed = [1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0];
        assert!(runs_test(&mixed));
    }
}
