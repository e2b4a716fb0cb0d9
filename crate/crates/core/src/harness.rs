//! Coupled multi-grid Monte Carlo studies.
//!
//! Every sample owns one [`WienerPath`]. The reference solution and every
//! `(scheme, grid)` pair are driven by that path through bridge queries, so
//! all of them see the same Brownian motion; intermediate points come from
//! a separate substream per `(path, scheme, grid)`. Samples are distributed
//! over a worker pool and reduced in path order, which makes every reported
//! error independent of the worker count.

use cpu_time::ThreadTime;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    euclidean, lp_norm_estimate, residual, spijker_components, spijker_from_components, ErrorEntry,
    ErrorReport,
};
use crate::error::{Error, Result};
use crate::grid::TemporalGrid;
use crate::model::{gbm_problem, holder_ode_problem, paper_example_problem, SdeProblem};
use crate::noise::{sample_grid_noises, Purpose, RngStream, WienerPath};
use crate::parallel::run_indexed;
use crate::quadrature::{quadrature_rate_study, Integrand, QuadratureStudy};
use crate::scheme::{integrate, SchemeKind, Trajectory};

/// Substream tag of the numerical reference solution.
const REFERENCE_TAG: u8 = 0xff;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSpec {
    Gbm {
        a: f64,
        b: f64,
        #[serde(default = "one")]
        x0: f64,
        #[serde(default = "one")]
        t_end: f64,
    },
    PaperExample {
        #[serde(default = "default_mu")]
        mu: f64,
        #[serde(default = "default_w1")]
        w1: f64,
        #[serde(default = "one")]
        w2: f64,
        #[serde(default = "default_x0")]
        x0: f64,
        #[serde(default = "one")]
        t_end: f64,
    },
    HolderOde {
        gamma: f64,
        c: f64,
        #[serde(default)]
        x0: f64,
        #[serde(default = "one")]
        t_end: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn default_mu() -> f64 {
    -0.01
}
fn default_w1() -> f64 {
    64.0 * PI
}
fn default_x0() -> f64 {
    1.1
}

impl ProblemSpec {
    pub fn paper_example() -> Self {
        ProblemSpec::PaperExample {
            mu: default_mu(),
            w1: default_w1(),
            w2: 1.0,
            x0: default_x0(),
            t_end: 1.0,
        }
    }

    pub fn build(&self) -> Result<SdeProblem> {
        match *self {
            ProblemSpec::Gbm { a, b, x0, t_end } => gbm_problem(a, b, x0, t_end),
            ProblemSpec::PaperExample {
                mu,
                w1,
                w2,
                x0,
                t_end,
            } => paper_example_problem(mu, w1, w2, x0, t_end),
            ProblemSpec::HolderOde {
                gamma,
                c,
                x0,
                t_end,
            } => holder_ode_problem(gamma, c, x0, t_end),
        }
    }

    pub fn terminal_time(&self) -> f64 {
        match *self {
            ProblemSpec::Gbm { t_end, .. }
            | ProblemSpec::PaperExample { t_end, .. }
            | ProblemSpec::HolderOde { t_end, .. } => t_end,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// Closed-form solution evaluated on the sample's Wiener path.
    Exact,
    /// Randomized Milstein on the grid `2^-n_ref T`.
    RandomizedMilstein,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMetric {
    /// Error at the terminal time only.
    Terminal,
    /// Maximum error over the grid points.
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_schemes")]
    pub schemes: Vec<SchemeKind>,
    pub n_min: u32,
    pub n_max: u32,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reference")]
    pub reference: ReferenceKind,
    #[serde(default = "default_n_ref")]
    pub n_ref: u32,
    /// Worker threads; 0 lets the pool decide.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_metric")]
    pub metric: ErrorMetric,
    pub problem: ProblemSpec,
    /// Only used by the quadrature study.
    #[serde(default)]
    pub integrand: Option<Integrand>,
}

fn default_schemes() -> Vec<SchemeKind> {
    SchemeKind::ALL.to_vec()
}
fn default_samples() -> usize {
    1000
}
fn default_p() -> f64 {
    2.0
}
fn default_reference() -> ReferenceKind {
    ReferenceKind::Exact
}
fn default_n_ref() -> u32 {
    15
}
fn default_metric() -> ErrorMetric {
    ErrorMetric::Terminal
}

impl ExperimentConfig {
    pub fn new(problem: ProblemSpec, n_min: u32, n_max: u32) -> Self {
        Self {
            schemes: default_schemes(),
            n_min,
            n_max,
            samples: default_samples(),
            p: default_p(),
            seed: 0,
            reference: default_reference(),
            n_ref: default_n_ref(),
            workers: 0,
            metric: default_metric(),
            problem,
            integrand: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one scheme is required".into(),
            ));
        }
        if self.n_min > self.n_max || self.n_max > 30 {
            return Err(Error::InvalidParameter(format!(
                "invalid level range {}..={}",
                self.n_min, self.n_max
            )));
        }
        if self.samples == 0 {
            return Err(Error::InvalidParameter(
                "sample count must be positive".into(),
            ));
        }
        if !(self.p >= 2.0) || !self.p.is_finite() {
            return Err(Error::InvalidExponent(self.p));
        }
        if self.reference == ReferenceKind::RandomizedMilstein
            && (self.n_ref <= self.n_max || self.n_ref > 30)
        {
            return Err(Error::InvalidParameter(format!(
                "reference level {} must exceed the finest level {}",
                self.n_ref, self.n_max
            )));
        }
        self.problem.build().map(|_| ())
    }

    fn levels(&self) -> impl Iterator<Item = u32> {
        self.n_min..=self.n_max
    }
}

/// Per-sample outcome: one error magnitude and elapsed time per
/// `(scheme, level)` in config order.
struct SampleOutcome {
    errors: Vec<f64>,
    seconds: Vec<f64>,
}

enum Reference {
    Exact,
    Numerical(Trajectory),
}

fn simulate_sample(
    config: &ExperimentConfig,
    problem: &SdeProblem,
    grids: &[TemporalGrid],
    index: usize,
) -> Result<SampleOutcome> {
    let t_end = problem.terminal_time();
    let path_id = index as u64;
    let mut path = WienerPath::new(
        problem.noise_dim(),
        t_end,
        RngStream::new(config.seed, path_id, Purpose::Wiener),
    );

    // Coarse-to-fine construction: W on the study grids is the same for
    // either kind of reference, and every scheme finds its grid points
    // already stored.
    let depth = match config.reference {
        ReferenceKind::Exact => config.n_max,
        ReferenceKind::RandomizedMilstein => config.n_ref,
    };
    path.fill_dyadic(depth)?;

    let reference = match config.reference {
        ReferenceKind::Exact => {
            if problem.exact().is_none() {
                return Err(Error::NoExactSolution(problem.name().into()));
            }
            Reference::Exact
        }
        ReferenceKind::RandomizedMilstein => {
            let fine = TemporalGrid::dyadic(t_end, config.n_ref)?;
            let taus = RngStream::new(
                config.seed,
                path_id,
                Purpose::Tau {
                    scheme: REFERENCE_TAG,
                    level: config.n_ref,
                },
            );
            Reference::Numerical(integrate(
                problem,
                &fine,
                SchemeKind::RandomizedMilstein,
                &mut path,
                taus,
            )?)
        }
    };
    let d = problem.dim();
    let mut exact = vec![0.0; d];
    let mut diff = vec![0.0; d];
    let mut errors = Vec::with_capacity(config.schemes.len() * grids.len());
    let mut seconds = Vec::with_capacity(errors.capacity());
    for &kind in &config.schemes {
        for (grid, n) in grids.iter().zip(config.levels()) {
            let taus = RngStream::new(
                config.seed,
                path_id,
                Purpose::Tau {
                    scheme: kind.tag(),
                    level: n,
                },
            );
            let start = ThreadTime::now();
            let traj = integrate(problem, grid, kind, &mut path, taus)?;
            seconds.push(start.elapsed().as_secs_f64());

            let points: Vec<usize> = match config.metric {
                ErrorMetric::Terminal => vec![grid.num_steps()],
                ErrorMetric::Max => (0..=grid.num_steps()).collect(),
            };
            let mut worst = 0.0f64;
            for j in points {
                let t = grid.times()[j];
                match &reference {
                    Reference::Exact => {
                        let w = path.query(t)?.to_vec();
                        problem
                            .exact()
                            .expect("checked above")
                            .value(t, &w, &mut exact);
                    }
                    Reference::Numerical(fine) => {
                        exact.copy_from_slice(fine.state(j << (config.n_ref - n)));
                    }
                }
                for i in 0..d {
                    diff[i] = traj.state(j)[i] - exact[i];
                }
                worst = worst.max(euclidean(&diff));
            }
            errors.push(worst);
        }
    }
    Ok(SampleOutcome { errors, seconds })
}

fn reference_label(config: &ExperimentConfig) -> String {
    match config.reference {
        ReferenceKind::Exact => "exact-oracle".into(),
        ReferenceKind::RandomizedMilstein => format!("randomized-milstein 2^-{}", config.n_ref),
    }
}

fn run_study(config: &ExperimentConfig, timed: bool) -> Result<ErrorReport> {
    config.validate()?;
    let problem = config.problem.build()?;
    let t_end = problem.terminal_time();
    let grids: Vec<TemporalGrid> = config
        .levels()
        .map(|n| TemporalGrid::dyadic(t_end, n))
        .collect::<Result<_>>()?;
    let outcomes = run_indexed(config.workers, config.samples, |i| {
        simulate_sample(config, &problem, &grids, i)
    })?;

    let mut entries = Vec::new();
    let mut slot = 0;
    for &kind in &config.schemes {
        for (grid, n) in grids.iter().zip(config.levels()) {
            let magnitudes: Vec<f64> = outcomes.iter().map(|o| o.errors[slot]).collect();
            let est = lp_norm_estimate(&magnitudes, config.p)?;
            let cpu_seconds = if timed {
                outcomes.iter().map(|o| o.seconds[slot]).sum()
            } else {
                0.0
            };
            entries.push(ErrorEntry {
                scheme: kind.name().into(),
                n: n as i32,
                h: grid.max_step(),
                samples: config.samples,
                p: config.p,
                error: est.value,
                standard_error: est.standard_error,
                cpu_seconds,
            });
            slot += 1;
        }
    }
    Ok(ErrorReport::new(entries, reference_label(config)))
}

/// Strong `L^p` errors against the reference for every `(scheme, grid)`.
/// CPU time is not measured (reported as 0), which keeps the report a pure
/// function of the config.
pub fn strong_convergence_study(config: &ExperimentConfig) -> Result<ErrorReport> {
    run_study(config, false)
}

/// As [`strong_convergence_study`], plus the total thread CPU time spent in the
/// integration loops of each `(scheme, grid)` over all samples.
pub fn work_precision_study(config: &ExperimentConfig) -> Result<ErrorReport> {
    run_study(config, true)
}

pub const RESIDUAL_SCHEME: &str = "randomized-milstein";

/// Spijker norm of the randomized Milstein residual of the exact solution
/// restricted to each grid.
pub fn residual_decay_study(config: &ExperimentConfig) -> Result<ErrorReport> {
    config.validate()?;
    let problem = config.problem.build()?;
    let oracle = problem
        .exact()
        .ok_or_else(|| Error::NoExactSolution(problem.name().into()))?;
    let t_end = problem.terminal_time();
    let grids: Vec<TemporalGrid> = config
        .levels()
        .map(|n| TemporalGrid::dyadic(t_end, n))
        .collect::<Result<_>>()?;

    let outcomes = run_indexed(config.workers, config.samples, |i| {
        let path_id = i as u64;
        let mut path = WienerPath::new(
            problem.noise_dim(),
            t_end,
            RngStream::new(config.seed, path_id, Purpose::Wiener),
        );
        let mut components = Vec::with_capacity(grids.len());
        for (grid, n) in grids.iter().zip(config.levels()) {
            let mut states = Vec::with_capacity(grid.times().len());
            for &t in grid.times() {
                let w = path.query(t)?.to_vec();
                let mut x = vec![0.0; problem.dim()];
                oracle.value(t, &w, &mut x);
                states.push(x);
            }
            let y = Trajectory::from_states(grid.clone(), states)?;
            let mut taus =
                RngStream::new(config.seed, path_id, Purpose::Residual { level: n }).generator();
            let noises = sample_grid_noises(&mut path, &mut taus, grid.times())?;
            components.push(spijker_components(&residual(&problem, &y, &noises)?));
        }
        Ok(components)
    })?;

    let mut entries = Vec::new();
    for (k, (grid, n)) in grids.iter().zip(config.levels()).enumerate() {
        let initial: Vec<f64> = outcomes.iter().map(|c| c[k].0).collect();
        let partial: Vec<f64> = outcomes.iter().map(|c| c[k].1).collect();
        let est = spijker_from_components(&initial, &partial, config.p)?;
        entries.push(ErrorEntry {
            scheme: RESIDUAL_SCHEME.into(),
            n: n as i32,
            h: grid.max_step(),
            samples: config.samples,
            p: config.p,
            error: est.value,
            standard_error: est.standard_error,
            cpu_seconds: 0.0,
        });
    }
    Ok(ErrorReport::new(entries, "exact-oracle"))
}

/// Quadrature rate study driven by the config's integrand, level range,
/// sample count (as reps), `p`, seed and worker count.
pub fn quadrature_study(config: &ExperimentConfig) -> Result<ErrorReport> {
    let integrand = config.integrand.ok_or_else(|| {
        Error::InvalidParameter("quadrature study needs an [integrand] section".into())
    })?;
    quadrature_rate_study(&QuadratureStudy {
        integrand,
        t_end: config.problem.terminal_time(),
        n_min: config.n_min,
        n_max: config.n_max,
        reps: config.samples,
        p: config.p,
        seed: config.seed,
        workers: config.workers,
    })
}
