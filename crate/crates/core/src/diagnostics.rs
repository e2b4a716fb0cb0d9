//! Monte Carlo error norms, the stochastic Spijker norm, residuals of grid
//! functions and empirical orders of convergence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SdeProblem;
use crate::noise::StepNoise;
use crate::scheme::{check_grid, SchemeKind, Stepper, Trajectory};

/// Monte Carlo estimate of an `L^p` norm with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpEstimate {
    pub value: f64,
    pub standard_error: f64,
}

fn check_exponent(p: f64) -> Result<()> {
    if p >= 2.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}

pub(crate) fn euclidean(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `(mean |Z_i|^p)^{1/p}` over per-path magnitudes `Z_i >= 0`.
///
/// The standard error propagates the standard error of the sample mean of
/// `|Z|^p` through `m -> m^{1/p}` (delta method). Summation runs in index
/// order, so the result does not depend on how the samples were produced.
pub fn lp_norm_estimate(magnitudes: &[f64], p: f64) -> Result<LpEstimate> {
    check_exponent(p)?;
    if magnitudes.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = magnitudes.len() as f64;
    let powers: Vec<f64> = magnitudes.iter().map(|z| z.abs().powf(p)).collect();
    let mean = powers.iter().sum::<f64>() / n;
    let value = mean.powf(1.0 / p);
    if mean == 0.0 || magnitudes.len() < 2 {
        return Ok(LpEstimate {
            value,
            standard_error: 0.0,
        });
    }
    let var = powers.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se_mean = (var / n).sqrt();
    let standard_error = mean.powf(1.0 / p - 1.0) / p * se_mean;
    Ok(LpEstimate {
        value,
        standard_error,
    })
}

/// `|| max_n |diff^n| ||_{L^p}` over paths, each path a sequence of
/// difference vectors on a common grid.
pub fn lp_max_error(diff_samples: &[Vec<Vec<f64>>], p: f64) -> Result<LpEstimate> {
    check_exponent(p)?;
    let first = diff_samples.first().ok_or(Error::EmptySamples)?;
    let mut maxima = Vec::with_capacity(diff_samples.len());
    for sample in diff_samples {
        if sample.len() != first.len() {
            return Err(Error::LengthMismatch {
                expected: first.len(),
                actual: sample.len(),
            });
        }
        maxima.push(sample.iter().map(|d| euclidean(d)).fold(0.0, f64::max));
    }
    lp_norm_estimate(&maxima, p)
}

/// `|| diff(T) ||_{L^p}` from per-path terminal differences.
pub fn terminal_lp_error(diff_at_t: &[Vec<f64>], p: f64) -> Result<LpEstimate> {
    let magnitudes: Vec<f64> = diff_at_t.iter().map(|d| euclidean(d)).collect();
    lp_norm_estimate(&magnitudes, p)
}

/// Residual of the grid function `y` with respect to the randomized
/// Milstein scheme: `R^0 = Y^0 - X_0` and
/// `R^j = Y^j - Y^{j-1} - Phi^j(Y^{j-1}, tau_j)` for the given step noises.
///
/// `R^j` is evaluated as `Y^j - (Y^{j-1} + Phi^j)`, the same floating-point
/// association the integrator uses, so the scheme's own trajectory has a
/// residual of exactly zero.
pub fn residual(
    problem: &SdeProblem,
    y: &Trajectory,
    noises: &[StepNoise],
) -> Result<Vec<Vec<f64>>> {
    check_grid(problem, &y.grid)?;
    let steps = y.grid.num_steps();
    if noises.len() != steps {
        return Err(Error::LengthMismatch {
            expected: steps,
            actual: noises.len(),
        });
    }
    if y.dim() != problem.dim() {
        return Err(Error::LengthMismatch {
            expected: problem.dim(),
            actual: y.dim(),
        });
    }
    if problem.noise_dim() > 1 && !problem.is_commutative() {
        return Err(Error::NonCommutative(problem.noise_dim()));
    }
    let d = problem.dim();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(
        y.state(0)
            .iter()
            .zip(problem.initial_state())
            .map(|(a, b)| a - b)
            .collect(),
    );
    let mut stepper = Stepper::new(d);
    let mut predicted = vec![0.0; d];
    let times = y.grid.times();
    for j in 1..=steps {
        let prev = y.state(j - 1);
        let t_prev = times[j - 1];
        stepper.step(
            SchemeKind::RandomizedMilstein,
            problem,
            t_prev,
            prev,
            times[j] - t_prev,
            &noises[j - 1],
            &mut predicted,
        );
        out.push(
            y.state(j)
                .iter()
                .zip(&predicted)
                .map(|(a, b)| a - b)
                .collect(),
        );
    }
    Ok(out)
}

/// Per-path ingredients of the Spijker norm: `|Z^0|` and
/// `max_{n >= 1} |sum_{j=1}^n Z^j|`.
pub fn spijker_components(residuals: &[Vec<f64>]) -> (f64, f64) {
    let Some((first, rest)) = residuals.split_first() else {
        return (0.0, 0.0);
    };
    let mut partial = vec![0.0; first.len()];
    let mut max = 0.0f64;
    for z in rest {
        for (s, v) in partial.iter_mut().zip(z) {
            *s += v;
        }
        max = max.max(euclidean(&partial));
    }
    (euclidean(first), max)
}

/// Stochastic Spijker norm `||Z^0||_{L^p} + || max_n |sum_{j<=n} Z^j| ||_{L^p}`.
/// The standard error is the sum of both terms' standard errors.
pub fn spijker_norm(residual_samples: &[Vec<Vec<f64>>], p: f64) -> Result<LpEstimate> {
    check_exponent(p)?;
    let first = residual_samples.first().ok_or(Error::EmptySamples)?;
    let mut initial = Vec::with_capacity(residual_samples.len());
    let mut partial = Vec::with_capacity(residual_samples.len());
    for sample in residual_samples {
        if sample.len() != first.len() {
            return Err(Error::LengthMismatch {
                expected: first.len(),
                actual: sample.len(),
            });
        }
        let (z0, zmax) = spijker_components(sample);
        initial.push(z0);
        partial.push(zmax);
    }
    spijker_from_components(&initial, &partial, p)
}

pub(crate) fn spijker_from_components(
    initial: &[f64],
    partial: &[f64],
    p: f64,
) -> Result<LpEstimate> {
    let a = lp_norm_estimate(initial, p)?;
    let b = lp_norm_estimate(partial, p)?;
    Ok(LpEstimate {
        value: a.value + b.value,
        standard_error: a.standard_error + b.standard_error,
    })
}

/// Least-squares fit of `log(error)` against `log(h)`; returns
/// `(slope, intercept)` where the slope is the empirical order.
pub fn eoc_regression(hs: &[f64], errors: &[f64]) -> Result<(f64, f64)> {
    if hs.len() != errors.len() {
        return Err(Error::LengthMismatch {
            expected: hs.len(),
            actual: errors.len(),
        });
    }
    if hs.len() < 2 {
        return Err(Error::InvalidParameter(
            "regression needs at least two points".into(),
        ));
    }
    if hs
        .iter()
        .chain(errors)
        .any(|v| !(*v > 0.0) || !v.is_finite())
    {
        return Err(Error::InvalidParameter(
            "step sizes and errors must be positive".into(),
        ));
    }
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "step sizes must not all coincide".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// One measured point of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub scheme: String,
    /// Dyadic exponent: `h = 2^-n T`.
    pub n: i32,
    pub h: f64,
    pub samples: usize,
    pub p: f64,
    pub error: f64,
    pub standard_error: f64,
    pub cpu_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeFit {
    pub scheme: String,
    pub slope: f64,
    pub intercept: f64,
}

/// Result of a study: entries plus a log-log fit per scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub entries: Vec<ErrorEntry>,
    pub fits: Vec<SchemeFit>,
    /// How reference values were obtained.
    pub reference: String,
}

impl ErrorReport {
    /// Fits every scheme with at least two positive errors; schemes that
    /// cannot be fitted get a NaN slope. Points enter the fit in order of
    /// descending `h`, so the fit does not depend on the entry order.
    pub fn new(entries: Vec<ErrorEntry>, reference: impl Into<String>) -> Self {
        let mut fits = Vec::new();
        for scheme in unique_schemes(&entries) {
            let mut points: Vec<(f64, f64)> = entries
                .iter()
                .filter(|e| e.scheme == scheme)
                .map(|e| (e.h, e.error))
                .collect();
            points.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
            let (hs, errs): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
            let (slope, intercept) = eoc_regression(&hs, &errs).unwrap_or((f64::NAN, f64::NAN));
            fits.push(SchemeFit {
                scheme,
                slope,
                intercept,
            });
        }
        Self {
            entries,
            fits,
            reference: reference.into(),
        }
    }

    pub fn schemes(&self) -> Vec<String> {
        unique_schemes(&self.entries)
    }

    pub fn slope(&self, scheme: &str) -> Option<f64> {
        self.fits
            .iter()
            .find(|f| f.scheme == scheme)
            .map(|f| f.slope)
    }

    pub fn fit(&self, scheme: &str) -> Option<&SchemeFit> {
        self.fits.iter().find(|f| f.scheme == scheme)
    }

    pub fn entries_for<'a>(&'a self, scheme: &'a str) -> impl Iterator<Item = &'a ErrorEntry> + 'a {
        self.entries.iter().filter(move |e| e.scheme == scheme)
    }

    pub fn entry(&self, scheme: &str, n: i32) -> Option<&ErrorEntry> {
        self.entries.iter().find(|e| e.scheme == scheme && e.n == n)
    }

    /// Refits using only entries with `n` in `range`.
    pub fn restricted(&self, range: std::ops::RangeInclusive<i32>) -> Self {
        let entries = self
            .entries
            .iter()
            .filter(|e| range.contains(&e.n))
            .cloned()
            .collect();
        Self::new(entries, self.reference.clone())
    }
}

fn unique_schemes(entries: &[ErrorEntry]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for e in entries {
        if !out.contains(&e.scheme) {
            out.push(e.scheme.clone());
        }
    }
    out
}
