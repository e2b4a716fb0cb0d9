//! Randomized Riemann sums `Q^n = sum_{j<=n} h_j Y(t_{j-1} + tau_j h_j)`
//! and the rate study measuring their `L^p` error.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{lp_norm_estimate, ErrorEntry, ErrorReport};
use crate::error::{Error, Result};
use crate::grid::TemporalGrid;
use crate::model::holder_power_antiderivative;
use crate::noise::{sample_tau, Purpose, RngStream};
use crate::parallel::run_indexed;

/// All partial sums `Q^1, ..., Q^N` of the randomized Riemann sum.
pub fn randomized_riemann(
    y: impl Fn(f64) -> Vec<f64>,
    grid: &TemporalGrid,
    taus: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_taus(grid, taus)?;
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(taus.len());
    for ((t_prev, h), tau) in grid.steps().zip(taus) {
        let v = y(t_prev + tau * h);
        let next = match out.last() {
            Some(prev) => prev.iter().zip(&v).map(|(q, yv)| q + h * yv).collect(),
            None => v.iter().map(|yv| h * yv).collect(),
        };
        out.push(next);
    }
    Ok(out)
}

/// Scalar version of [`randomized_riemann`].
pub fn randomized_riemann_scalar(
    y: impl Fn(f64) -> f64,
    grid: &TemporalGrid,
    taus: &[f64],
) -> Result<Vec<f64>> {
    check_taus(grid, taus)?;
    Ok(partial_sums(
        grid.steps()
            .zip(taus)
            .map(|((t_prev, h), tau)| h * y(t_prev + tau * h)),
    ))
}

fn check_taus(grid: &TemporalGrid, taus: &[f64]) -> Result<()> {
    if taus.len() != grid.num_steps() {
        return Err(Error::LengthMismatch {
            expected: grid.num_steps(),
            actual: taus.len(),
        });
    }
    Ok(())
}

fn partial_sums(terms: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out = Vec::new();
    for (j, term) in terms.enumerate() {
        acc = if j == 0 { term } else { acc + term };
        out.push(acc);
    }
    out
}

/// Left-endpoint partial sums `sum_{j<=n} h_j Y(t_{j-1})`.
pub fn left_riemann(y: impl Fn(f64) -> Vec<f64>, grid: &TemporalGrid) -> Vec<Vec<f64>> {
    let zeros = vec![0.0; grid.num_steps()];
    randomized_riemann(y, grid, &zeros).expect("lengths match by construction")
}

pub fn left_riemann_scalar(y: impl Fn(f64) -> f64, grid: &TemporalGrid) -> Vec<f64> {
    partial_sums(grid.steps().map(|(t_prev, h)| h * y(t_prev)))
}

/// Scalar test integrands with closed-form integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Integrand {
    /// `|t - center|^gamma`, Hölder continuous with exponent `gamma`.
    HolderPower { gamma: f64, center: f64 },
    /// `slope * t + intercept`.
    Linear { slope: f64, intercept: f64 },
}

impl Integrand {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Integrand::HolderPower { gamma, center } => (t - center).abs().powf(gamma),
            Integrand::Linear { slope, intercept } => slope * t + intercept,
        }
    }

    /// `int_0^t Y(s) ds`.
    pub fn integral(&self, t: f64) -> f64 {
        match *self {
            Integrand::HolderPower { gamma, center } => {
                holder_power_antiderivative(gamma, center, t)
            }
            Integrand::Linear { slope, intercept } => 0.5 * slope * t * t + intercept * t,
        }
    }

    /// Hölder exponent of the integrand.
    pub fn gamma(&self) -> f64 {
        match *self {
            Integrand::HolderPower { gamma, .. } => gamma,
            Integrand::Linear { .. } => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Integrand::HolderPower { gamma, center } => {
                if !(gamma > 0.0 && gamma <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "gamma must lie in (0, 1], got {gamma}"
                    )));
                }
                if !(center >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "center must be nonnegative, got {center}"
                    )));
                }
                Ok(())
            }
            Integrand::Linear { .. } => Ok(()),
        }
    }
}

pub const RANDOMIZED_RIEMANN: &str = "randomized-riemann";
pub const LEFT_RIEMANN: &str = "left-riemann";

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureStudy {
    pub integrand: Integrand,
    pub t_end: f64,
    pub n_min: u32,
    pub n_max: u32,
    pub reps: usize,
    pub p: f64,
    pub seed: u64,
    pub workers: usize,
}

fn max_error(partial: &[f64], exact: &[f64]) -> f64 {
    partial
        .iter()
        .zip(exact)
        .map(|(q, e)| (q - e).abs())
        .fold(0.0, f64::max)
}

/// Measures `|| max_n |Q^n - int_0^{t_n} Y| ||_{L^p}` over `reps`
/// independent tau-ensembles on each dyadic grid `2^-n T`, next to the
/// deterministic left-endpoint rule. Reference integrals are closed-form.
pub fn quadrature_rate_study(study: &QuadratureStudy) -> Result<ErrorReport> {
    study.integrand.validate()?;
    if !(study.p >= 2.0) {
        return Err(Error::InvalidExponent(study.p));
    }
    if study.reps < 100 {
        return Err(Error::InvalidParameter(format!(
            "rate studies need at least 100 reps, got {}",
            study.reps
        )));
    }
    if study.n_min > study.n_max || study.n_max > 30 {
        return Err(Error::InvalidParameter(format!(
            "invalid level range {}..={}",
            study.n_min, study.n_max
        )));
    }
    let y = study.integrand;
    let mut entries = Vec::new();
    for n in study.n_min..=study.n_max {
        let grid = TemporalGrid::dyadic(study.t_end, n)?;
        let exact: Vec<f64> = grid.times()[1..].iter().map(|&t| y.integral(t)).collect();
        let maxima = run_indexed(study.workers, study.reps, |rep| {
            let mut rng = RngStream::new(study.seed, rep as u64, Purpose::Quadrature { level: n })
                .generator();
            let taus: Vec<f64> = (0..grid.num_steps())
                .map(|_| sample_tau(&mut rng))
                .collect();
            let q = randomized_riemann_scalar(|t| y.value(t), &grid, &taus)?;
            Ok(max_error(&q, &exact))
        })?;
        let est = lp_norm_estimate(&maxima, study.p)?;
        let h = grid.max_step();
        entries.push(ErrorEntry {
            scheme: RANDOMIZED_RIEMANN.into(),
            n: n as i32,
            h,
            samples: study.reps,
            p: study.p,
            error: est.value,
            standard_error: est.standard_error,
            cpu_seconds: 0.0,
        });
        let left = left_riemann_scalar(|t| y.value(t), &grid);
        entries.push(ErrorEntry {
            scheme: LEFT_RIEMANN.into(),
            n: n as i32,
            h,
            samples: 1,
            p: study.p,
            error: max_error(&left, &exact),
            standard_error: 0.0,
            cpu_seconds: 0.0,
        });
    }
    Ok(ErrorReport::new(entries, "closed-form antiderivative"))
}
