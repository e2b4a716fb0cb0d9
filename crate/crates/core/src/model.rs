//! SDE problem definitions
//!
//! `dX(t) = f(t, X(t)) dt + sum_r g^r(t, X(t)) dW^r(t)` on `[0, T]` with a
//! deterministic initial state. Coefficients write into caller-provided
//! buffers so the integrators never allocate per step.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Drift, diffusion and Lévy coefficients of an SDE.
///
/// `levy(t, x, r1, r2, out)` must return `g^{r1,r2} = (dg^{r1}/dx) g^{r2}`.
/// Implementations must be pure.
pub trait Coefficients: Send + Sync {
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn diffusion(&self, t: f64, x: &[f64], r: usize, out: &mut [f64]);
    fn levy(&self, t: f64, x: &[f64], r1: usize, r2: usize, out: &mut [f64]);
}

/// Closed-form pathwise solution `X(t)` given the Brownian value `W(t)`.
pub trait ExactSolution: Send + Sync {
    fn value(&self, t: f64, w_t: &[f64], out: &mut [f64]);
}

#[derive(Clone)]
pub struct SdeProblem {
    name: String,
    dim: usize,
    noise_dim: usize,
    coefficients: Arc<dyn Coefficients>,
    exact: Option<Arc<dyn ExactSolution>>,
    initial_state: Vec<f64>,
    t_end: f64,
    gamma: f64,
    commutative: bool,
}

impl fmt::Debug for SdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("initial_state", &self.initial_state)
            .field("t_end", &self.t_end)
            .field("gamma", &self.gamma)
            .field("commutative", &self.commutative)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

impl SdeProblem {
    pub fn new(
        name: impl Into<String>,
        noise_dim: usize,
        coefficients: Arc<dyn Coefficients>,
        initial_state: Vec<f64>,
        t_end: f64,
    ) -> Result<Self> {
        if initial_state.is_empty() {
            return Err(Error::InvalidParameter(
                "state dimension must be positive".into(),
            ));
        }
        if noise_dim == 0 {
            return Err(Error::InvalidParameter(
                "noise dimension must be positive".into(),
            ));
        }
        check_terminal_time(t_end)?;
        Ok(Self {
            name: name.into(),
            dim: initial_state.len(),
            noise_dim,
            coefficients,
            exact: None,
            initial_state,
            t_end,
            gamma: 1.0,
            commutative: noise_dim == 1,
        })
    }

    /// Declared temporal Hölder exponent of the drift.
    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in (0, 1], got {gamma}"
            )));
        }
        self.gamma = gamma;
        Ok(self)
    }

    /// Asserts `g^{r1,r2} = g^{r2,r1}` for all pairs.
    pub fn with_commutative(mut self, commutative: bool) -> Self {
        self.commutative = commutative || self.noise_dim == 1;
        self
    }

    pub fn with_exact(mut self, exact: Arc<dyn ExactSolution>) -> Self {
        self.exact = Some(exact);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }
    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }
    pub fn terminal_time(&self) -> f64 {
        self.t_end
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn is_commutative(&self) -> bool {
        self.commutative
    }
    pub fn exact(&self) -> Option<&dyn ExactSolution> {
        self.exact.as_deref()
    }
    pub fn coefficients(&self) -> &dyn Coefficients {
        &*self.coefficients
    }

    pub fn drift(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.coefficients.drift(t, x, &mut out);
        out
    }

    pub fn diffusion(&self, t: f64, x: &[f64], r: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.coefficients.diffusion(t, x, r, &mut out);
        out
    }

    pub fn levy(&self, t: f64, x: &[f64], r1: usize, r2: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.coefficients.levy(t, x, r1, r2, &mut out);
        out
    }
}

fn check_terminal_time(t_end: f64) -> Result<()> {
    if t_end > 0.0 && t_end.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "terminal time must be positive, got {t_end}"
        )))
    }
}

type DriftFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
type DiffusionFn = dyn Fn(f64, &[f64], usize, &mut [f64]) + Send + Sync;
type LevyFn = dyn Fn(f64, &[f64], usize, usize, &mut [f64]) + Send + Sync;

/// Coefficients from closures. Without an explicit Lévy closure the Lévy
/// coefficient falls back to a centered finite-difference Jacobian of the
/// diffusion with per-coordinate step `1e-5 * max(1, |x_k|)`.
pub struct ClosureCoefficients {
    drift: Box<DriftFn>,
    diffusion: Box<DiffusionFn>,
    levy: Option<Box<LevyFn>>,
}

impl ClosureCoefficients {
    pub fn new(
        drift: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(f64, &[f64], usize, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            drift: Box::new(drift),
            diffusion: Box::new(diffusion),
            levy: None,
        }
    }

    pub fn with_levy(
        mut self,
        levy: impl Fn(f64, &[f64], usize, usize, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.levy = Some(Box::new(levy));
        self
    }
}

impl Coefficients for ClosureCoefficients {
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(t, x, out)
    }

    fn diffusion(&self, t: f64, x: &[f64], r: usize, out: &mut [f64]) {
        (self.diffusion)(t, x, r, out)
    }

    fn levy(&self, t: f64, x: &[f64], r1: usize, r2: usize, out: &mut [f64]) {
        match &self.levy {
            Some(levy) => levy(t, x, r1, r2, out),
            None => finite_difference_levy(&*self.diffusion, t, x, r1, r2, out),
        }
    }
}

/// `(dg^{r1}/dx)(t, x) g^{r2}(t, x)` by centered differences.
#[allow(clippy::type_complexity)]
pub fn finite_difference_levy(
    diffusion: &dyn Fn(f64, &[f64], usize, &mut [f64]),
    t: f64,
    x: &[f64],
    r1: usize,
    r2: usize,
    out: &mut [f64],
) {
    let d = x.len();
    let mut direction = vec![0.0; d];
    diffusion(t, x, r2, &mut direction);
    let mut shifted = x.to_vec();
    let mut plus = vec![0.0; d];
    let mut minus = vec![0.0; d];
    out.iter_mut().for_each(|o| *o = 0.0);
    for k in 0..d {
        let step = 1e-5 * x[k].abs().max(1.0);
        shifted[k] = x[k] + step;
        diffusion(t, &shifted, r1, &mut plus);
        shifted[k] = x[k] - step;
        diffusion(t, &shifted, r1, &mut minus);
        shifted[k] = x[k];
        for i in 0..d {
            out[i] += (plus[i] - minus[i]) / (2.0 * step) * direction[k];
        }
    }
}

/// `dX = (mu |X| + |sin(w1 t)|) dt + |cos(w2 t)| X dW`.
#[derive(Debug, Clone, Copy)]
pub struct PaperExample {
    pub mu: f64,
    pub w1: f64,
    pub w2: f64,
}

impl Default for PaperExample {
    fn default() -> Self {
        Self {
            mu: -0.01,
            w1: 64.0 * PI,
            w2: 1.0,
        }
    }
}

impl Coefficients for PaperExample {
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.mu * x[0].abs() + (self.w1 * t).sin().abs();
    }

    fn diffusion(&self, t: f64, x: &[f64], _r: usize, out: &mut [f64]) {
        out[0] = (self.w2 * t).cos().abs() * x[0];
    }

    fn levy(&self, t: f64, x: &[f64], _r1: usize, _r2: usize, out: &mut [f64]) {
        let c = (self.w2 * t).cos();
        out[0] = c * c * x[0];
    }
}

pub fn paper_example_problem(mu: f64, w1: f64, w2: f64, x0: f64, t_end: f64) -> Result<SdeProblem> {
    SdeProblem::new(
        "paper-example",
        1,
        Arc::new(PaperExample { mu, w1, w2 }),
        vec![x0],
        t_end,
    )?
    .with_gamma(1.0)
}

/// Geometric Brownian motion `dX = a X dt + b X dW`.
#[derive(Debug, Clone, Copy)]
pub struct Gbm {
    pub a: f64,
    pub b: f64,
    pub x0: f64,
}

impl Coefficients for Gbm {
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.a * x[0];
    }

    fn diffusion(&self, _t: f64, x: &[f64], _r: usize, out: &mut [f64]) {
        out[0] = self.b * x[0];
    }

    fn levy(&self, _t: f64, x: &[f64], _r1: usize, _r2: usize, out: &mut [f64]) {
        out[0] = self.b * self.b * x[0];
    }
}

impl ExactSolution for Gbm {
    fn value(&self, t: f64, w_t: &[f64], out: &mut [f64]) {
        out[0] = gbm_exact(self.x0, self.a, self.b, t, w_t[0]);
    }
}

pub fn gbm_problem(a: f64, b: f64, x0: f64, t_end: f64) -> Result<SdeProblem> {
    let gbm = Arc::new(Gbm { a, b, x0 });
    Ok(SdeProblem::new("gbm", 1, gbm.clone(), vec![x0], t_end)?.with_exact(gbm))
}

/// `x0 * exp((a - b^2/2) t + b w_t)`.
pub fn gbm_exact(x0: f64, a: f64, b: f64, t: f64, w_t: f64) -> f64 {
    x0 * ((a - 0.5 * b * b) * t + b * w_t).exp()
}

/// Deterministic ODE `dX = |t - c|^gamma dt` with vanishing diffusion.
#[derive(Debug, Clone, Copy)]
pub struct HolderOde {
    pub gamma: f64,
    pub c: f64,
    pub x0: f64,
}

impl HolderOde {
    /// `x0 + int_0^t |s - c|^gamma ds`.
    pub fn solution(&self, t: f64) -> f64 {
        self.x0 + holder_power_antiderivative(self.gamma, self.c, t)
    }
}

/// `int_0^t |s - c|^gamma ds` for `c >= 0`.
pub fn holder_power_antiderivative(gamma: f64, c: f64, t: f64) -> f64 {
    let g1 = gamma + 1.0;
    let u = t - c;
    (c.powf(g1) + u.signum() * u.abs().powf(g1)) / g1
}

impl Coefficients for HolderOde {
    fn drift(&self, t: f64, _x: &[f64], out: &mut [f64]) {
        out[0] = (t - self.c).abs().powf(self.gamma);
    }

    fn diffusion(&self, _t: f64, _x: &[f64], _r: usize, out: &mut [f64]) {
        out[0] = 0.0;
    }

    fn levy(&self, _t: f64, _x: &[f64], _r1: usize, _r2: usize, out: &mut [f64]) {
        out[0] = 0.0;
    }
}

impl ExactSolution for HolderOde {
    fn value(&self, t: f64, _w_t: &[f64], out: &mut [f64]) {
        out[0] = self.solution(t);
    }
}

pub fn holder_ode_problem(gamma: f64, c: f64, x0: f64, t_end: f64) -> Result<SdeProblem> {
    check_terminal_time(t_end)?;
    if !(c > 0.0 && c < t_end) {
        return Err(Error::InvalidParameter(format!(
            "kink location must lie in (0, {t_end}), got {c}"
        )));
    }
    let ode = Arc::new(HolderOde { gamma, c, x0 });
    SdeProblem::new("holder-ode", 1, ode.clone(), vec![x0], t_end)?
        .with_gamma(gamma)
        .map(|p| p.with_exact(ode))
}
