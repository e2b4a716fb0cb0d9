//! Temporal grids on `[0, T]`.
//!
//! A grid keeps the knots it was constructed from together with a dyadic
//! refinement level. Every materialized time is computed directly from the
//! knots as `knot[j] + i * (h_j / 2^level)`, so refining in one go or in
//! several passes produces bit-identical points.

use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TemporalGrid {
    knots: Arc<[f64]>,
    level: u32,
    times: Arc<[f64]>,
}

impl TemporalGrid {
    /// Builds a grid from explicit, strictly increasing times starting at 0.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidGrid(
                "a grid needs at least two points".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidGrid(format!(
                "first time must be 0, got {}",
                times[0]
            )));
        }
        for (j, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "times must be finite and strictly increasing (index {})",
                    j + 1
                )));
            }
        }
        let knots: Arc<[f64]> = times.into();
        Ok(Self {
            times: knots.clone(),
            knots,
            level: 0,
        })
    }

    /// `n` equal steps of size `t_end / n`.
    pub fn uniform(t_end: f64, n: usize) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "terminal time must be positive, got {t_end}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidGrid(
                "number of steps must be positive".into(),
            ));
        }
        let nf = n as f64;
        let mut times: Vec<f64> = (0..n).map(|i| t_end * (i as f64 / nf)).collect();
        times.push(t_end);
        Self::from_times(times)
    }

    /// Uniform grid with `2^n` steps.
    pub fn dyadic(t_end: f64, n: u32) -> Result<Self> {
        Self::uniform(t_end, 1usize << n)
    }

    /// Splits every step into `2^k` equal substeps.
    pub fn dyadic_refine(&self, k: u32) -> Self {
        if k == 0 {
            return self.clone();
        }
        let level = self.level + k;
        let parts = 1usize << level;
        let scale = (parts as f64).recip();
        let mut times = Vec::with_capacity((self.knots.len() - 1) * parts + 1);
        for w in self.knots.windows(2) {
            let sub = (w[1] - w[0]) * scale;
            times.push(w[0]);
            for i in 1..parts {
                times.push(w[0] + i as f64 * sub);
            }
        }
        times.push(*self.knots.last().unwrap());
        Self {
            knots: self.knots.clone(),
            level,
            times: times.into(),
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn num_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn terminal_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Size of step `j`, 1-based as in `h_j = t_j - t_{j-1}`.
    pub fn step(&self, j: usize) -> f64 {
        self.times[j] - self.times[j - 1]
    }

    /// Iterator over `(t_{j-1}, h_j)` for `j = 1..=N`.
    pub fn steps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.windows(2).map(|w| (w[0], w[1] - w[0]))
    }

    pub fn max_step(&self) -> f64 {
        self.steps().map(|(_, h)| h).fold(0.0, f64::max)
    }
}

impl PartialEq for TemporalGrid {
    fn eq(&self, other: &Self) -> bool {
        self.times == other.times
    }
}
