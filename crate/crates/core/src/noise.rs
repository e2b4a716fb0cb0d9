//! Random inputs of the integrators: reproducible substreams, the Wiener
//! path store with exact Brownian-bridge insertion, and the per-step noise
//! (uniform intermediate point, sub-interval increments, iterated integrals).

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// What a substream is used for. Distinct purposes never share random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Gaussian draws of the Wiener path store.
    Wiener,
    /// Intermediate points of one scheme on one grid.
    Tau {
        scheme: u8,
        level: u32,
    },
    /// Intermediate points of the randomized quadrature rule on one grid.
    Quadrature {
        level: u32,
    },
    /// Intermediate points used when evaluating residuals on one grid.
    Residual {
        level: u32,
    },
    Custom(u64),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Wiener => 1,
            Purpose::Tau { scheme, level } => (2 << 56) | ((scheme as u64) << 32) | level as u64,
            Purpose::Quadrature { level } => (3 << 56) | level as u64,
            Purpose::Residual { level } => (4 << 56) | level as u64,
            Purpose::Custom(tag) => (5 << 56) ^ tag,
        }
    }
}

/// Address of a substream: `(master seed, path index, purpose)`.
///
/// The ChaCha key is derived from `(master_seed, purpose)` through the
/// SplitMix64 finalizer (a bijection on `u64`), and the path index is the
/// ChaCha stream id, so distinct triples never alias.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub path: u64,
    pub purpose: Purpose,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, path: u64, purpose: Purpose) -> Self {
        Self {
            master_seed,
            path,
            purpose,
        }
    }

    pub fn generator(&self) -> StreamRng {
        let tag = self.purpose.tag();
        let words = [
            splitmix64(self.master_seed),
            splitmix64(self.master_seed ^ 0x5851_f42d_4c95_7f2d),
            splitmix64(tag),
            splitmix64(tag ^ 0x1405_7b7e_f767_814f),
        ];
        let mut key = [0u8; 32];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.path);
        StreamRng { rng, spare: None }
    }
}

/// Sequential generator of one substream.
///
/// Uniforms use the top 53 bits shifted by half an ulp so they lie strictly
/// inside `(0, 1)`; normals use the Box–Muller transform, caching the sine
/// branch for the next call.
#[derive(Debug, Clone)]
pub struct StreamRng {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl StreamRng {
    pub fn uniform_open(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform_open();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare = Some(radius * s);
        radius * c
    }
}

/// Uniform intermediate fraction of a step, strictly inside `(0, 1)`.
pub fn sample_tau(rng: &mut StreamRng) -> f64 {
    rng.uniform_open()
}

/// Sampled values of an `m`-dimensional Wiener process on `[0, T]`.
///
/// New times are drawn from the exact conditional law given the nearest
/// stored neighbours (a Brownian bridge), or as a forward increment past the
/// last stored time. Stored values are never changed, so every scheme and
/// grid driven by one path sees the same Brownian motion.
#[derive(Debug, Clone)]
pub struct WienerPath {
    noise_dim: usize,
    t_end: f64,
    // keyed by the IEEE bits of t >= 0, which order like the reals
    index: BTreeMap<u64, usize>,
    values: Vec<f64>,
    rng: StreamRng,
}

impl WienerPath {
    pub fn new(noise_dim: usize, t_end: f64, stream: RngStream) -> Self {
        let mut index = BTreeMap::new();
        index.insert(0f64.to_bits(), 0);
        Self {
            noise_dim,
            t_end,
            index,
            values: vec![0.0; noise_dim],
            rng: stream.generator(),
        }
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn terminal_time(&self) -> f64 {
        self.t_end
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_stored(&self, t: f64) -> bool {
        self.index.contains_key(&t.to_bits())
    }

    fn slot(&self, i: usize) -> &[f64] {
        &self.values[i * self.noise_dim..(i + 1) * self.noise_dim]
    }

    /// `W(t)`, sampling and storing it first if `t` is new.
    pub fn query(&mut self, t: f64) -> Result<&[f64]> {
        if !(t >= 0.0 && t <= self.t_end) {
            return Err(Error::OutOfDomain {
                t,
                t_end: self.t_end,
            });
        }
        // -0.0 would otherwise sort after every positive time
        let key = (t + 0.0).to_bits();
        let next = self.index.range(key..).next().map(|(&k, &i)| (k, i));
        if let Some((k, i)) = next {
            if k == key {
                return Ok(self.slot(i));
            }
        }
        let (&prev_key, &prev) = self
            .index
            .range(..key)
            .next_back()
            .expect("W(0) is always stored");
        let s = f64::from_bits(prev_key);
        let m = self.noise_dim;
        let slot = self.values.len() / m;
        match next {
            None => {
                let sd = (t - s).sqrt();
                for r in 0..m {
                    let z = self.rng.standard_normal();
                    let w = self.values[prev * m + r] + sd * z;
                    self.values.push(w);
                }
            }
            Some((next_key, next)) => {
                let u = f64::from_bits(next_key);
                let weight = (t - s) / (u - s);
                let sd = ((u - t) * (t - s) / (u - s)).sqrt();
                for r in 0..m {
                    let z = self.rng.standard_normal();
                    let ws = self.values[prev * m + r];
                    let wu = self.values[next * m + r];
                    self.values.push(ws + weight * (wu - ws) + sd * z);
                }
            }
        }
        self.index.insert(key, slot);
        Ok(self.slot(slot))
    }

    /// Stores a prescribed value `W(t) = w` beyond the last stored time.
    pub fn pin(&mut self, t: f64, w: &[f64]) -> Result<()> {
        if !(t >= 0.0 && t <= self.t_end) {
            return Err(Error::OutOfDomain {
                t,
                t_end: self.t_end,
            });
        }
        if w.len() != self.noise_dim {
            return Err(Error::LengthMismatch {
                expected: self.noise_dim,
                actual: w.len(),
            });
        }
        let last = *self
            .index
            .keys()
            .next_back()
            .expect("W(0) is always stored");
        if t.to_bits() <= last {
            return Err(Error::InvalidParameter(format!(
                "can only pin beyond the last stored time, got {t}"
            )));
        }
        let slot = self.values.len() / self.noise_dim;
        self.values.extend_from_slice(w);
        self.index.insert(t.to_bits(), slot);
        Ok(())
    }

    /// Samples `W` on the dyadic grids `T·i/2^k` for `k = 0..=level`, one
    /// level at a time from coarse to fine.
    ///
    /// On a fresh path the values on levels `0..=k` use the same random
    /// numbers whatever `level >= k` is requested, so paths filled to
    /// different depths agree exactly on their common points.
    pub fn fill_dyadic(&mut self, level: u32) -> Result<()> {
        self.query(self.t_end)?;
        for k in 1..=level {
            let n = (1u64 << k) as f64;
            for i in (1..1u64 << k).step_by(2) {
                self.query(self.t_end * (i as f64 / n))?;
            }
        }
        Ok(())
    }

    /// Copies `W(t)` into `out`.
    pub fn query_into(&mut self, t: f64, out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(self.query(t)?);
        Ok(())
    }
}

/// `I_(1,1)` over an interval of length `dt` with increment `dw`.
pub fn scalar_iterated_integral(dw: f64, dt: f64) -> f64 {
    0.5 * (dw * dw - dt)
}

/// Iterated integrals for commutative noise, row-major `m x m`.
///
/// The diagonal is exact. Off-diagonal entries are the symmetric split
/// `dw_r1 dw_r2 / 2` of `I_(r1,r2) + I_(r2,r1) = dw_r1 dw_r2`; they are only
/// meaningful when contracted against `g^{r1,r2} = g^{r2,r1}`.
pub fn commutative_iterated(dw: &[f64], dt: f64) -> Vec<f64> {
    let mut out = vec![0.0; dw.len() * dw.len()];
    commutative_iterated_into(dw, dt, &mut out);
    out
}

fn commutative_iterated_into(dw: &[f64], dt: f64, out: &mut [f64]) {
    let m = dw.len();
    if m == 1 {
        out[0] = scalar_iterated_integral(dw[0], dt);
        return;
    }
    for r1 in 0..m {
        for r2 in 0..m {
            out[r1 * m + r2] = if r1 == r2 {
                scalar_iterated_integral(dw[r1], dt)
            } else {
                0.5 * dw[r1] * dw[r2]
            };
        }
    }
}

/// Chen's relation for adjacent intervals `[s, u]` and `[u, t]`.
pub fn chen_combine(
    dw_left: &[f64],
    i2_left: &[f64],
    dw_right: &[f64],
    i2_right: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let m = dw_left.len();
    let mut dw = vec![0.0; m];
    let mut i2 = vec![0.0; m * m];
    chen_combine_into(dw_left, i2_left, dw_right, i2_right, &mut dw, &mut i2);
    (dw, i2)
}

fn chen_combine_into(
    dw_left: &[f64],
    i2_left: &[f64],
    dw_right: &[f64],
    i2_right: &[f64],
    dw: &mut [f64],
    i2: &mut [f64],
) {
    let m = dw_left.len();
    for r in 0..m {
        dw[r] = dw_left[r] + dw_right[r];
    }
    for r1 in 0..m {
        for r2 in 0..m {
            let k = r1 * m + r2;
            i2[k] = i2_left[k] + i2_right[k] + dw_left[r1] * dw_right[r2];
        }
    }
}

/// Noise of one step `[t_prev, t_next]` split at `theta = t_prev + tau * h`.
///
/// Iterated integral arrays are row-major: `i2_full[r1 * m + r2]` is
/// `I_(r1,r2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepNoise {
    pub tau: f64,
    pub theta: f64,
    pub h: f64,
    pub dw_left: Vec<f64>,
    pub dw_right: Vec<f64>,
    pub dw_full: Vec<f64>,
    pub i2_left: Vec<f64>,
    pub i2_right: Vec<f64>,
    pub i2_full: Vec<f64>,
}

impl StepNoise {
    pub fn zeroed(noise_dim: usize) -> Self {
        let m = noise_dim;
        Self {
            tau: 0.5,
            theta: 0.0,
            h: 0.0,
            dw_left: vec![0.0; m],
            dw_right: vec![0.0; m],
            dw_full: vec![0.0; m],
            i2_left: vec![0.0; m * m],
            i2_right: vec![0.0; m * m],
            i2_full: vec![0.0; m * m],
        }
    }

    /// Builds the noise from prescribed sub-interval increments, filling the
    /// iterated integrals with the closed forms and Chen's relation.
    pub fn from_increments(
        t_prev: f64,
        h: f64,
        tau: f64,
        dw_left: &[f64],
        dw_right: &[f64],
    ) -> Self {
        let mut noise = Self::zeroed(dw_left.len());
        noise.tau = tau;
        noise.theta = t_prev + tau * h;
        noise.h = h;
        noise.dw_left.copy_from_slice(dw_left);
        noise.dw_right.copy_from_slice(dw_right);
        noise.assemble(tau * h, h - tau * h);
        noise
    }

    pub fn noise_dim(&self) -> usize {
        self.dw_full.len()
    }

    pub fn i2(&self, r1: usize, r2: usize) -> f64 {
        self.i2_full[r1 * self.noise_dim() + r2]
    }

    fn assemble(&mut self, h_left: f64, h_right: f64) {
        commutative_iterated_into(&self.dw_left, h_left, &mut self.i2_left);
        commutative_iterated_into(&self.dw_right, h_right, &mut self.i2_right);
        chen_combine_into(
            &self.dw_left,
            &self.i2_left,
            &self.dw_right,
            &self.i2_right,
            &mut self.dw_full,
            &mut self.i2_full,
        );
    }

    /// Fills `self` with fresh noise for `[t_prev, t_next]` with a random
    /// intermediate point.
    pub fn resample(
        &mut self,
        path: &mut WienerPath,
        taus: &mut StreamRng,
        t_prev: f64,
        t_next: f64,
    ) -> Result<()> {
        let h = t_next - t_prev;
        let tau = sample_tau(taus);
        let theta = t_prev + tau * h;
        self.tau = tau;
        self.theta = theta;
        self.h = h;
        // dw_right / dw_left / dw_full temporarily hold W(t_prev), W(theta), W(t_next)
        path.query_into(t_prev, &mut self.dw_right)?;
        path.query_into(theta, &mut self.dw_left)?;
        path.query_into(t_next, &mut self.dw_full)?;
        for r in 0..self.noise_dim() {
            let (w0, wt, w1) = (self.dw_right[r], self.dw_left[r], self.dw_full[r]);
            self.dw_left[r] = wt - w0;
            self.dw_right[r] = w1 - wt;
        }
        self.assemble(theta - t_prev, t_next - theta);
        Ok(())
    }

    /// Fills `self` with the noise of `[t_prev, t_next]` without an
    /// intermediate point: `tau = 1`, the right sub-interval is empty and the
    /// full-step values come straight from the path. Used by the schemes
    /// that never evaluate at `theta`.
    pub fn resample_full_step(
        &mut self,
        path: &mut WienerPath,
        t_prev: f64,
        t_next: f64,
    ) -> Result<()> {
        let h = t_next - t_prev;
        self.tau = 1.0;
        self.theta = t_next;
        self.h = h;
        path.query_into(t_prev, &mut self.dw_right)?;
        path.query_into(t_next, &mut self.dw_left)?;
        for r in 0..self.noise_dim() {
            self.dw_left[r] -= self.dw_right[r];
            self.dw_right[r] = 0.0;
        }
        self.assemble(h, 0.0);
        Ok(())
    }
}

/// Draws `tau`, queries `W` at `theta` and `t_next` on the shared path and
/// assembles increments and iterated integrals for the step.
pub fn sample_step_noise(
    path: &mut WienerPath,
    taus: &mut StreamRng,
    t_prev: f64,
    t_next: f64,
) -> Result<StepNoise> {
    let mut noise = StepNoise::zeroed(path.noise_dim());
    noise.resample(path, taus, t_prev, t_next)?;
    Ok(noise)
}

/// One randomized [`StepNoise`] per step of `times`, drawn in order.
pub fn sample_grid_noises(
    path: &mut WienerPath,
    taus: &mut StreamRng,
    times: &[f64],
) -> Result<Vec<StepNoise>> {
    times
        .windows(2)
        .map(|w| sample_step_noise(path, taus, w[0], w[1]))
        .collect()
}
