//! One-step maps and trajectory integration for Euler–Maruyama, the
//! classical Milstein scheme and the drift-randomized Milstein scheme.
//!
//! The randomized scheme is the split-step recursion
//!
//! ```text
//! X^{j,tau} = X^{j-1} + tau h f(t_{j-1}, X^{j-1}) + sum_r g^r(t_{j-1}, X^{j-1}) I_(r)[t_{j-1}, theta]
//! X^j       = X^{j-1} + h f(theta, X^{j,tau}) + sum_r g^r(t_{j-1}, X^{j-1}) I_(r)[t_{j-1}, t_j]
//!                     + sum_{r1,r2} g^{r1,r2}(t_{j-1}, X^{j-1}) I_(r2,r1)[t_{j-1}, t_j]
//! ```
//!
//! with `theta = t_{j-1} + tau h`. Note the transposed index pair in the
//! last sum: `g^{r1,r2}` is contracted with `I_(r2,r1)`, i.e. with
//! `noise.i2_full[r2 * m + r1]`. The diffusion is always evaluated at the
//! left point; only the drift sees the randomized time.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TemporalGrid;
use crate::model::SdeProblem;
use crate::noise::{RngStream, StepNoise, WienerPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    EulerMaruyama,
    ClassicalMilstein,
    RandomizedMilstein,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [
        SchemeKind::EulerMaruyama,
        SchemeKind::ClassicalMilstein,
        SchemeKind::RandomizedMilstein,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::EulerMaruyama => "euler-maruyama",
            SchemeKind::ClassicalMilstein => "classical-milstein",
            SchemeKind::RandomizedMilstein => "randomized-milstein",
        }
    }

    /// Substream tag for the scheme's intermediate points.
    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn uses_tau(self) -> bool {
        self == SchemeKind::RandomizedMilstein
    }

    fn needs_levy(self) -> bool {
        self != SchemeKind::EulerMaruyama
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "euler-maruyama" | "em" | "euler" => Ok(SchemeKind::EulerMaruyama),
            "classical-milstein" | "milstein" => Ok(SchemeKind::ClassicalMilstein),
            "randomized-milstein" | "randomised-milstein" => Ok(SchemeKind::RandomizedMilstein),
            other => Err(Error::InvalidParameter(format!("unknown scheme `{other}`"))),
        }
    }
}

/// Numerical solution on a grid, one state per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TemporalGrid,
    dim: usize,
    states: Vec<f64>,
    /// Intermediate fractions used per step (empty unless randomized).
    pub taus: Vec<f64>,
}

impl Trajectory {
    pub fn from_states(grid: TemporalGrid, states: Vec<Vec<f64>>) -> Result<Self> {
        if states.len() != grid.times().len() {
            return Err(Error::LengthMismatch {
                expected: grid.times().len(),
                actual: states.len(),
            });
        }
        let dim = states[0].len();
        if let Some(bad) = states.iter().find(|s| s.len() != dim) {
            return Err(Error::LengthMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Ok(Self {
            grid,
            dim,
            states: states.concat(),
            taus: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, n: usize) -> &[f64] {
        &self.states[n * self.dim..(n + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }
}

fn check_noise_structure(problem: &SdeProblem, kind: SchemeKind) -> Result<()> {
    if kind.needs_levy() && problem.noise_dim() > 1 && !problem.is_commutative() {
        return Err(Error::NonCommutative(problem.noise_dim()));
    }
    Ok(())
}

/// Scratch buffers for allocation-free stepping.
pub struct Stepper {
    drift: Vec<f64>,
    stage: Vec<f64>,
    g: Vec<f64>,
    levy: Vec<f64>,
}

impl Stepper {
    pub fn new(dim: usize) -> Self {
        Self {
            drift: vec![0.0; dim],
            stage: vec![0.0; dim],
            g: vec![0.0; dim],
            levy: vec![0.0; dim],
        }
    }

    /// Writes the increment `X^j - X^{j-1}` of `kind` into `out`.
    pub fn increment(
        &mut self,
        kind: SchemeKind,
        problem: &SdeProblem,
        t_prev: f64,
        y: &[f64],
        h: f64,
        noise: &StepNoise,
        out: &mut [f64],
    ) {
        let c = problem.coefficients();
        let m = noise.noise_dim();
        let d = y.len();

        c.drift(t_prev, y, &mut self.drift);
        match kind {
            SchemeKind::RandomizedMilstein => {
                let tau_h = noise.tau * h;
                for i in 0..d {
                    self.stage[i] = y[i] + tau_h * self.drift[i];
                }
                for r in 0..m {
                    c.diffusion(t_prev, y, r, &mut self.g);
                    for i in 0..d {
                        self.stage[i] += self.g[i] * noise.dw_left[r];
                    }
                }
                c.drift(t_prev + tau_h, &self.stage, &mut self.drift);
            }
            SchemeKind::ClassicalMilstein | SchemeKind::EulerMaruyama => {}
        }
        for i in 0..d {
            out[i] = h * self.drift[i];
        }
        for r in 0..m {
            c.diffusion(t_prev, y, r, &mut self.g);
            for i in 0..d {
                out[i] += self.g[i] * noise.dw_full[r];
            }
        }
        if kind.needs_levy() {
            for r1 in 0..m {
                for r2 in 0..m {
                    c.levy(t_prev, y, r1, r2, &mut self.levy);
                    let i2 = noise.i2_full[r2 * m + r1];
                    for i in 0..d {
                        out[i] += self.levy[i] * i2;
                    }
                }
            }
        }
    }

    /// Writes `X^j` of `kind` into `out`.
    pub fn step(
        &mut self,
        kind: SchemeKind,
        problem: &SdeProblem,
        t_prev: f64,
        y: &[f64],
        h: f64,
        noise: &StepNoise,
        out: &mut [f64],
    ) {
        self.increment(kind, problem, t_prev, y, h, noise, out);
        for (o, yi) in out.iter_mut().zip(y) {
            *o += yi;
        }
    }
}

fn one_step(
    kind: SchemeKind,
    problem: &SdeProblem,
    t_prev: f64,
    y: &[f64],
    h: f64,
    noise: &StepNoise,
) -> Result<Vec<f64>> {
    check_noise_structure(problem, kind)?;
    let mut out = vec![0.0; y.len()];
    Stepper::new(y.len()).step(kind, problem, t_prev, y, h, noise, &mut out);
    Ok(out)
}

/// Internal stage `y + tau h f(t_prev, y) + sum_r g^r(t_prev, y) dw_left_r`.
pub fn psi_stage(
    problem: &SdeProblem,
    t_prev: f64,
    y: &[f64],
    h: f64,
    noise: &StepNoise,
) -> Vec<f64> {
    let d = y.len();
    let f = problem.drift(t_prev, y);
    let mut stage: Vec<f64> = (0..d).map(|i| y[i] + noise.tau * h * f[i]).collect();
    for r in 0..noise.noise_dim() {
        let g = problem.diffusion(t_prev, y, r);
        for i in 0..d {
            stage[i] += g[i] * noise.dw_left[r];
        }
    }
    stage
}

/// Increment function of the randomized scheme: `randomized_milstein_step - y`.
pub fn phi_increment(
    problem: &SdeProblem,
    t_prev: f64,
    y: &[f64],
    h: f64,
    noise: &StepNoise,
) -> Result<Vec<f64>> {
    check_noise_structure(problem, SchemeKind::RandomizedMilstein)?;
    let mut out = vec![0.0; y.len()];
    Stepper::new(y.len()).increment(
        SchemeKind::RandomizedMilstein,
        problem,
        t_prev,
        y,
        h,
        noise,
        &mut out,
    );
    Ok(out)
}

pub fn randomized_milstein_step(
    problem: &SdeProblem,
    t_prev: f64,
    y: &[f64],
    h: f64,
    noise: &StepNoise,
) -> Result<Vec<f64>> {
    one_step(SchemeKind::RandomizedMilstein, problem, t_prev, y, h, noise)
}

pub fn classical_milstein_step(
    problem: &SdeProblem,
    t_prev: f64,
    y: &[f64],
    h: f64,
    noise: &StepNoise,
) -> Result<Vec<f64>> {
    one_step(SchemeKind::ClassicalMilstein, problem, t_prev, y, h, noise)
}

pub fn euler_step(
    problem: &SdeProblem,
    t_prev: f64,
    y: &[f64],
    h: f64,
    noise: &StepNoise,
) -> Result<Vec<f64>> {
    one_step(SchemeKind::EulerMaruyama, problem, t_prev, y, h, noise)
}

pub(crate) fn check_grid(problem: &SdeProblem, grid: &TemporalGrid) -> Result<()> {
    let (t_grid, t_end) = (grid.terminal_time(), problem.terminal_time());
    if (t_grid - t_end).abs() > 4.0 * f64::EPSILON * t_end {
        return Err(Error::InvalidGrid(format!(
            "grid ends at {t_grid}, problem at {t_end}"
        )));
    }
    Ok(())
}

/// Integrates `problem` over `grid` with one fresh [`StepNoise`] per step
/// drawn from the shared `path`. Intermediate points come from the `taus`
/// substream, one per step in order; schemes without an intermediate point
/// ignore it and only query the path at grid points.
pub fn integrate(
    problem: &SdeProblem,
    grid: &TemporalGrid,
    kind: SchemeKind,
    path: &mut WienerPath,
    taus: RngStream,
) -> Result<Trajectory> {
    check_grid(problem, grid)?;
    check_noise_structure(problem, kind)?;
    if path.noise_dim() != problem.noise_dim() {
        return Err(Error::LengthMismatch {
            expected: problem.noise_dim(),
            actual: path.noise_dim(),
        });
    }
    let d = problem.dim();
    let times = grid.times();
    let mut states = Vec::with_capacity(times.len() * d);
    states.extend_from_slice(problem.initial_state());
    let mut recorded = Vec::new();
    let mut tau_rng = taus.generator();
    let mut noise = StepNoise::zeroed(problem.noise_dim());
    let mut stepper = Stepper::new(d);
    let mut next = vec![0.0; d];

    for (j, w) in times.windows(2).enumerate() {
        let (t_prev, t_next) = (w[0], w[1]);
        if kind.uses_tau() {
            noise.resample(path, &mut tau_rng, t_prev, t_next)?;
            recorded.push(noise.tau);
        } else {
            noise.resample_full_step(path, t_prev, t_next)?;
        }
        let y = &states[j * d..(j + 1) * d];
        stepper.step(kind, problem, t_prev, y, t_next - t_prev, &noise, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                step: j + 1,
                t: t_next,
            });
        }
        states.extend_from_slice(&next);
    }
    Ok(Trajectory {
        grid: grid.clone(),
        dim: d,
        states,
        taus: recorded,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::{gbm_exact, gbm_problem, ClosureCoefficients};
    use crate::noise::{sample_grid_noises, scalar_iterated_integral, Purpose};
    use crate::quadrature::randomized_riemann_scalar;
    use approx::assert_relative_eq;

    fn scalar_problem(
        drift: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        levy: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> SdeProblem {
        scalar_problem_from(0.0, drift, diffusion, levy)
    }

    fn scalar_problem_from(
        x0: f64,
        drift: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        levy: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> SdeProblem {
        let c = ClosureCoefficients::new(
            move |t, x, out| out[0] = drift(t, x[0]),
            move |t, x, _r, out| out[0] = diffusion(t, x[0]),
        )
        .with_levy(move |t, x, _r1, _r2, out| out[0] = levy(t, x[0]));
        SdeProblem::new("test", 1, Arc::new(c), vec![x0], 1.0).unwrap()
    }

    fn noise(tau: f64, h: f64, dw_left: f64, dw_right: f64) -> StepNoise {
        StepNoise::from_increments(0.0, h, tau, &[dw_left], &[dw_right])
    }

    #[test]
    fn psi_stage_examples() {
        let p = scalar_problem(|_, _| 1.0, |_, _| 0.0, |_, _| 0.0);
        assert_eq!(
            psi_stage(&p, 0.0, &[0.0], 1.0, &noise(0.5, 1.0, 0.3, 0.1)),
            vec![0.5]
        );
        let p = scalar_problem(|_, _| 0.0, |_, _| 1.0, |_, _| 0.0);
        assert_relative_eq!(
            psi_stage(&p, 0.0, &[1.3], 1.0, &noise(0.4, 1.0, 0.2, -0.5))[0],
            1.5
        );
        let p = scalar_problem(|_, x| x * x + 1.0, |_, x| x, |_, x| x);
        assert_eq!(
            psi_stage(&p, 0.0, &[0.7], 1.0, &noise(0.0, 1.0, 0.0, 0.4)),
            vec![0.7]
        );
    }

    #[test]
    fn randomized_milstein_examples() {
        let p = scalar_problem(|t, _| t, |_, _| 0.0, |_, _| 0.0);
        assert_eq!(
            randomized_milstein_step(&p, 0.0, &[0.0], 1.0, &noise(0.5, 1.0, 0.2, 0.1)).unwrap(),
            vec![0.5]
        );

        let p = scalar_problem(|_, _| 0.0, |_, x| x, |_, x| x);
        let (y, h, dl, dr) = (1.7, 0.1, 0.12, -0.3);
        let dw: f64 = dl + dr;
        let got = randomized_milstein_step(&p, 0.0, &[y], h, &noise(0.3, h, dl, dr)).unwrap()[0];
        assert_relative_eq!(
            got,
            y * (1.0 + dw + 0.5 * (dw * dw - h)),
            max_relative = 1e-14
        );

        // zero noise: i2 = -h/2, so X = y (1 - h/2)
        let n0 = noise(0.3, h, 0.0, 0.0);
        assert_eq!(n0.i2_full[0], -h / 2.0);
        let got = randomized_milstein_step(&p, 0.0, &[y], h, &n0).unwrap()[0];
        let direct = y + h * 0.0 + y * 0.0 + y * (-h / 2.0);
        assert_relative_eq!(got, y * (1.0 - h / 2.0), max_relative = 1e-15);
        assert_relative_eq!(got, direct, max_relative = 1e-15);
    }

    #[test]
    fn classical_milstein_examples() {
        let p = scalar_problem(|t, _| t, |_, _| 0.0, |_, _| 0.0);
        assert_eq!(
            classical_milstein_step(&p, 0.0, &[0.0], 1.0, &noise(0.5, 1.0, 0.2, 0.1)).unwrap(),
            vec![0.0]
        );

        let p = scalar_problem(|_, _| 0.8, |_, x| 0.3 * x, |_, x| 0.09 * x);
        let n = noise(0.6, 0.2, 0.15, -0.05);
        assert_eq!(
            classical_milstein_step(&p, 0.1, &[1.2], 0.2, &n).unwrap(),
            randomized_milstein_step(&p, 0.1, &[1.2], 0.2, &n).unwrap()
        );

        let gbm = gbm_problem(0.0, 1.0, 1.0, 1.0).unwrap();
        let n = noise(0.5, 0.25, 0.2, 0.3);
        assert_relative_eq!(
            classical_milstein_step(&gbm, 0.0, &[1.0], 0.25, &n).unwrap()[0],
            1.5,
            max_relative = 1e-15
        );
    }

    #[test]
    fn euler_examples() {
        let zero = scalar_problem(|_, _| 0.0, |_, _| 0.0, |_, _| 0.0);
        assert_eq!(
            euler_step(&zero, 0.0, &[0.9], 0.5, &noise(0.5, 0.5, 0.3, 0.2)).unwrap(),
            vec![0.9]
        );
        let p = scalar_problem(|_, x| 2.0 * x, |_, _| 0.0, |_, _| 0.0);
        assert_eq!(
            euler_step(&p, 0.0, &[1.0], 0.5, &noise(0.5, 0.5, 0.3, 0.2)).unwrap(),
            vec![2.0]
        );
        let p = scalar_problem(|_, _| 0.0, |_, _| 1.0, |_, _| 0.0);
        assert_relative_eq!(
            euler_step(&p, 0.0, &[0.4], 0.5, &noise(0.5, 0.5, 0.04, 0.06)).unwrap()[0],
            0.5
        );
    }

    #[test]
    fn phi_increment_is_the_step_minus_y() {
        let p = scalar_problem(
            |t, x| (3.0 * t).sin() - 0.4 * x.abs(),
            |t, x| (t + 1.0) * x,
            |t, x| (t + 1.0).powi(2) * x,
        );
        let mut rng = RngStream::new(1, 0, Purpose::Custom(0)).generator();
        for _ in 0..1000 {
            let y = 4.0 * rng.uniform_open() - 2.0;
            let t = rng.uniform_open() * 0.5;
            let h = rng.uniform_open() * 0.5;
            let tau = rng.uniform_open();
            let n = StepNoise::from_increments(
                t,
                h,
                tau,
                &[rng.standard_normal() * (tau * h).sqrt()],
                &[rng.standard_normal() * ((1.0 - tau) * h).sqrt()],
            );
            let phi = phi_increment(&p, t, &[y], h, &n).unwrap()[0];
            assert_eq!(
                y + phi,
                randomized_milstein_step(&p, t, &[y], h, &n).unwrap()[0]
            );
        }

        let zero = scalar_problem(|_, _| 0.0, |_, _| 0.0, |_, _| 0.0);
        assert_eq!(
            phi_increment(&zero, 0.2, &[1.0], 0.1, &noise(0.4, 0.1, 0.3, -0.2)).unwrap(),
            vec![0.0]
        );

        let f = |t: f64, x: f64| t * t + x.sin();
        let p = scalar_problem(f, |_, _| 0.0, |_, _| 0.0);
        let (t, y, h, tau) = (0.3, 0.8, 0.25, 0.37);
        let n = StepNoise::from_increments(t, h, tau, &[0.1], &[0.2]);
        let expected = h * f(t + tau * h, y + tau * h * f(t, y));
        assert_relative_eq!(
            phi_increment(&p, t, &[y], h, &n).unwrap()[0],
            expected,
            max_relative = 1e-15
        );
    }

    #[test]
    fn levy_coefficients_pair_with_transposed_iterated_integrals() {
        // Commutative two-factor noise: g^r = s_r x, g^{r1,r2} = s_r1 s_r2 x.
        let s = [0.3, -0.8];
        let c = ClosureCoefficients::new(
            |_, _, out| out[0] = 0.0,
            move |_, x, r, out| out[0] = s[r] * x[0],
        )
        .with_levy(move |_, x, r1, r2, out| out[0] = s[r1] * s[r2] * x[0]);
        let p = SdeProblem::new("two-factor", 2, Arc::new(c), vec![1.0], 1.0)
            .unwrap()
            .with_commutative(true);
        assert_ne!(p.levy(0.0, &[1.0], 0, 1), p.levy(0.0, &[1.0], 0, 0));

        let n = StepNoise::from_increments(0.0, 0.1, 0.4, &[0.11, -0.07], &[0.05, 0.2]);
        let y = 1.4;
        let mut expected = y + s[0] * y * n.dw_full[0] + s[1] * y * n.dw_full[1];
        expected += s[0] * s[0] * y * n.i2(0, 0)
            + s[0] * s[1] * y * n.i2(1, 0)
            + s[1] * s[0] * y * n.i2(0, 1)
            + s[1] * s[1] * y * n.i2(1, 1);
        let got = classical_milstein_step(&p, 0.0, &[y], 0.1, &n).unwrap()[0];
        assert_relative_eq!(got, expected, max_relative = 1e-14);

        // A test double with deliberately asymmetric Lévy values exposes the
        // index pairing: coefficient (r1, r2) must meet I_(r2, r1).
        let levy = [[1.0, 10.0], [100.0, 1000.0]];
        let c = ClosureCoefficients::new(|_, _, out| out[0] = 0.0, |_, _, _, out| out[0] = 0.0)
            .with_levy(move |_, _, r1, r2, out| out[0] = levy[r1][r2]);
        let p = SdeProblem::new("pairing", 2, Arc::new(c), vec![0.0], 1.0)
            .unwrap()
            .with_commutative(true);
        let got = classical_milstein_step(&p, 0.0, &[0.0], 0.1, &n).unwrap()[0];
        let expected = levy[0][0] * n.i2(0, 0)
            + levy[0][1] * n.i2(1, 0)
            + levy[1][0] * n.i2(0, 1)
            + levy[1][1] * n.i2(1, 1);
        assert_relative_eq!(got, expected, max_relative = 1e-14);
        assert_ne!(n.i2(0, 1), n.i2(1, 0));
    }

    #[test]
    fn non_commutative_noise_is_rejected_by_milstein_schemes() {
        let c = ClosureCoefficients::new(
            |_, _, out| out[0] = 0.0,
            |_, x, r, out| out[0] = (r as f64 + 1.0) * x[0],
        );
        let p = SdeProblem::new("nc", 2, Arc::new(c), vec![1.0], 1.0).unwrap();
        let grid = TemporalGrid::uniform(1.0, 4).unwrap();
        let mut path = WienerPath::new(2, 1.0, RngStream::new(0, 0, Purpose::Wiener));
        let taus = RngStream::new(0, 0, Purpose::Custom(0));
        for kind in [
            SchemeKind::ClassicalMilstein,
            SchemeKind::RandomizedMilstein,
        ] {
            assert!(matches!(
                integrate(&p, &grid, kind, &mut path, taus),
                Err(Error::NonCommutative(2))
            ));
        }
        assert!(integrate(&p, &grid, SchemeKind::EulerMaruyama, &mut path, taus).is_ok());
    }

    #[test]
    fn integrate_zero_problem_is_constant() {
        let p = scalar_problem_from(2.5, |_, _| 0.0, |_, _| 0.0, |_, _| 0.0);
        let grid = TemporalGrid::uniform(1.0, 16).unwrap();
        for kind in SchemeKind::ALL {
            let mut path = WienerPath::new(1, 1.0, RngStream::new(0, 0, Purpose::Wiener));
            let traj = integrate(
                &p,
                &grid,
                kind,
                &mut path,
                RngStream::new(0, 0, Purpose::Custom(1)),
            )
            .unwrap();
            assert!(traj.states().all(|s| s == [2.5]));
        }
    }

    #[test]
    fn one_step_grid_reproduces_single_step() {
        let p = gbm_problem(0.3, 0.6, 1.2, 0.5).unwrap();
        let grid = TemporalGrid::uniform(0.5, 1).unwrap();
        let taus = RngStream::new(3, 0, Purpose::Custom(5));
        for kind in SchemeKind::ALL {
            let mut path = WienerPath::new(1, 0.5, RngStream::new(3, 0, Purpose::Wiener));
            let traj = integrate(&p, &grid, kind, &mut path, taus).unwrap();
            let mut noise = StepNoise::zeroed(1);
            if kind.uses_tau() {
                noise
                    .resample(&mut path, &mut taus.generator(), 0.0, 0.5)
                    .unwrap();
            } else {
                noise.resample_full_step(&mut path, 0.0, 0.5).unwrap();
            }
            let expected = one_step(kind, &p, 0.0, &[1.2], 0.5, &noise).unwrap();
            assert_eq!(traj.terminal(), expected.as_slice(), "{kind}");
        }
    }

    #[test]
    fn randomized_milstein_tracks_exact_gbm() {
        let (a, b) = (0.05, 0.2);
        let p = gbm_problem(a, b, 1.0, 1.0).unwrap();
        let grid = TemporalGrid::dyadic(1.0, 10).unwrap();
        let mut within = 0;
        for i in 0..1000u64 {
            let mut path = WienerPath::new(1, 1.0, RngStream::new(17, i, Purpose::Wiener));
            let traj = integrate(
                &p,
                &grid,
                SchemeKind::RandomizedMilstein,
                &mut path,
                RngStream::new(
                    17,
                    i,
                    Purpose::Tau {
                        scheme: 2,
                        level: 10,
                    },
                ),
            )
            .unwrap();
            let w_t = path.query(1.0).unwrap()[0];
            if (traj.terminal()[0] - gbm_exact(1.0, a, b, 1.0, w_t)).abs() < 1e-2 {
                within += 1;
            }
        }
        assert!(within >= 950, "{within} of 1000 paths within tolerance");
    }

    #[test]
    fn integration_is_deterministic() {
        let p = gbm_problem(0.1, 0.4, 1.0, 1.0).unwrap();
        let grid = TemporalGrid::dyadic(1.0, 6).unwrap();
        let run = || {
            let mut path = WienerPath::new(1, 1.0, RngStream::new(9, 4, Purpose::Wiener));
            integrate(
                &p,
                &grid,
                SchemeKind::RandomizedMilstein,
                &mut path,
                RngStream::new(9, 4, Purpose::Custom(2)),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert_eq!(a.taus.len(), 64);
    }

    #[test]
    fn nested_grids_share_brownian_values() {
        let p = gbm_problem(0.1, 0.4, 1.0, 1.0).unwrap();
        let mut path = WienerPath::new(1, 1.0, RngStream::new(9, 0, Purpose::Wiener));
        let fine = TemporalGrid::dyadic(1.0, 6).unwrap();
        let coarse = TemporalGrid::dyadic(1.0, 3).unwrap();
        integrate(
            &p,
            &fine,
            SchemeKind::RandomizedMilstein,
            &mut path,
            RngStream::new(9, 0, Purpose::Custom(1)),
        )
        .unwrap();
        let snapshot: Vec<f64> = fine
            .times()
            .iter()
            .map(|&t| path.query(t).unwrap()[0])
            .collect();
        let stored = path.len();
        integrate(
            &p,
            &coarse,
            SchemeKind::ClassicalMilstein,
            &mut path,
            RngStream::new(9, 0, Purpose::Custom(2)),
        )
        .unwrap();
        assert_eq!(path.len(), stored);
        for (t, w) in fine.times().iter().zip(&snapshot) {
            assert_eq!(path.query(*t).unwrap()[0], *w);
        }
    }

    #[test]
    fn deterministic_drift_reduces_to_randomized_riemann_sum() {
        let y = |t: f64| (7.0 * t).sin().abs() + t.sqrt();
        let c =
            ClosureCoefficients::new(move |t, _, out| out[0] = y(t), |_, _, _, out| out[0] = 0.0)
                .with_levy(|_, _, _, _, out| out[0] = 0.0);
        let p = SdeProblem::new("quadrature", 1, Arc::new(c), vec![0.0], 1.0).unwrap();
        let grid = TemporalGrid::from_times(vec![0.0, 0.1, 0.15, 0.4, 0.8, 1.0])
            .unwrap()
            .dyadic_refine(3);
        let mut path = WienerPath::new(1, 1.0, RngStream::new(2, 0, Purpose::Wiener));
        let traj = integrate(
            &p,
            &grid,
            SchemeKind::RandomizedMilstein,
            &mut path,
            RngStream::new(2, 0, Purpose::Custom(8)),
        )
        .unwrap();
        let q = randomized_riemann_scalar(y, &grid, &traj.taus).unwrap();
        for (n, qn) in q.iter().enumerate() {
            assert_eq!(traj.state(n + 1)[0], *qn);
        }
    }

    #[test]
    fn non_finite_states_report_the_step() {
        let p = scalar_problem_from(1.0, |_, x| x * x * 1e200, |_, _| 0.0, |_, _| 0.0);
        let grid = TemporalGrid::uniform(1.0, 10).unwrap();
        let mut path = WienerPath::new(1, 1.0, RngStream::new(0, 0, Purpose::Wiener));
        let err = integrate(
            &p,
            &grid,
            SchemeKind::EulerMaruyama,
            &mut path,
            RngStream::new(0, 0, Purpose::Custom(0)),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 2, .. }), "{err:?}");
    }

    #[test]
    fn grid_must_match_problem_horizon() {
        let p = gbm_problem(0.1, 0.2, 1.0, 2.0).unwrap();
        let grid = TemporalGrid::uniform(1.0, 4).unwrap();
        let mut path = WienerPath::new(1, 2.0, RngStream::new(0, 0, Purpose::Wiener));
        assert!(integrate(
            &p,
            &grid,
            SchemeKind::EulerMaruyama,
            &mut path,
            RngStream::new(0, 0, Purpose::Custom(0))
        )
        .is_err());
    }

    #[test]
    fn regenerated_noises_match_the_integration() {
        let p = gbm_problem(0.1, 0.5, 1.0, 1.0).unwrap();
        let grid = TemporalGrid::dyadic(1.0, 5).unwrap();
        let taus = RngStream::new(4, 1, Purpose::Custom(6));
        let mut path = WienerPath::new(1, 1.0, RngStream::new(4, 1, Purpose::Wiener));
        let traj = integrate(&p, &grid, SchemeKind::RandomizedMilstein, &mut path, taus).unwrap();
        let stored = path.len();
        let noises = sample_grid_noises(&mut path, &mut taus.generator(), grid.times()).unwrap();
        assert_eq!(path.len(), stored);
        assert_eq!(noises.iter().map(|n| n.tau).collect::<Vec<_>>(), traj.taus);
        for n in &noises {
            let scale = n.dw_full[0].powi(2) + n.h;
            assert!(
                (n.i2_full[0] - scalar_iterated_integral(n.dw_full[0], n.h)).abs() <= 1e-12 * scale
            );
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for kind in SchemeKind::ALL {
            assert_eq!(kind.name().parse::<SchemeKind>().unwrap(), kind);
        }
        assert!("runge-kutta".parse::<SchemeKind>().is_err());
    }
}
