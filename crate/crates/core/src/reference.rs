//! Reference distributions for the limit checks: a Brownian meander path
//! sampler (last-zero construction with exact bridge refinement) and the
//! Rayleigh distribution functions.

use crate::numeric::normal_cdf;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MeanderError {
    #[error("need at least 2 steps (got {0})")]
    TooFewSteps(usize),
    #[error("could not resolve the last zero after {0} attempts")]
    Degenerate(usize),
}

/// A sampled meander path on the uniform grid t_j = j / steps.
#[derive(Debug, Clone)]
pub struct MeanderPath {
    values: Vec<f64>,
}

impl MeanderPath {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    /// Value at time t by linear interpolation on the output grid.
    pub fn at(&self, t: f64) -> f64 {
        let steps = self.steps() as f64;
        let x = (t.clamp(0.0, 1.0)) * steps;
        let i = (x.floor() as usize).min(self.steps() - 1);
        let frac = x - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    pub fn endpoint(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

/// Rayleigh CDF 1 - exp(-x^2 / 2), clamped to 0 for x <= 0.
pub fn rayleigh_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-x * x / 2.0).exp_m1()
    }
}

const RETRY_LIMIT: usize = 1000;
// Paths whose last zero lands this close to 1 are redrawn: the rescaling
// 1/sqrt(1 - zeta) loses all resolution there.
const MIN_TAIL: f64 = 1e-9;

/// Sample a meander path: simulate a Brownian grid path, locate its last
/// zero (grid scan plus exact bridge refinement within the bracketing step,
/// including Bernoulli detection of zeros hidden in same-sign steps), then
/// rescale the post-zero segment onto [0, 1].
pub fn sample_meander(steps: usize, rng: &mut impl Rng) -> Result<MeanderPath, MeanderError> {
    if steps < 2 {
        return Err(MeanderError::TooFewSteps(steps));
    }
    let h = 1.0 / steps as f64;
    let sqrt_h = h.sqrt();
    let mut path = vec![0.0f64; steps + 1];
    for attempt in 0..RETRY_LIMIT {
        let _ = attempt;
        for i in 1..=steps {
            let z: f64 = StandardNormal.sample(rng);
            path[i] = path[i - 1] + sqrt_h * z;
        }
        if let Some(zeta) = locate_last_zero(&path, h, rng) {
            if 1.0 - zeta >= MIN_TAIL {
                return Ok(build_meander(&path, zeta, steps));
            }
        }
    }
    Err(MeanderError::Degenerate(RETRY_LIMIT))
}

// Scan steps from the right. A step with a sign change surely contains a
// zero; a same-sign step hides one with probability exp(-2ab/h) (the bridge
// minimum law), decided by a Bernoulli draw. Within the first step found to
// contain a zero, the last zero is placed by inverting the exact first-zero
// CDF of the time-reversed bridge.
fn locate_last_zero(path: &[f64], h: f64, rng: &mut impl Rng) -> Option<f64> {
    let steps = path.len() - 1;
    for i in (1..=steps).rev() {
        let a = path[i - 1];
        let b = path[i];
        let t_right = i as f64 * h;
        if b == 0.0 {
            return Some(t_right);
        }
        let crossing = a == 0.0 || a.signum() != b.signum();
        if crossing {
            let t_hat = sample_first_zero_reversed(b, a, h, 1.0, rng);
            return Some(t_right - t_hat);
        }
        let p_zero = (-2.0 * a * b / h).exp();
        if rng.random::<f64>() < p_zero {
            let t_hat = sample_first_zero_reversed(b, a, h, p_zero, rng);
            return Some(t_right - t_hat);
        }
    }
    // W_0 = 0 makes step 1 a crossing bracket; unreachable
    None
}

// First zero of a Brownian bridge from b to a over [0, h], conditioned to
// exist (total mass `total`: 1 for opposite signs, exp(-2ab/h) otherwise).
// CDF: F(t) = Phi(-mu_t/s_t) + exp(-2ab/h) Phi((a t/h - b (h-t)/h)/s_t),
// mu_t = b + (a-b) t/h, s_t^2 = t (h-t)/h. Inverted by bisection.
fn sample_first_zero_reversed(b: f64, a: f64, h: f64, total: f64, rng: &mut impl Rng) -> f64 {
    // flip so the reversed bridge starts positive
    let (b, a) = if b < 0.0 { (-b, -a) } else { (b, a) };
    if b == 0.0 {
        return 0.0;
    }
    let carry = (-2.0 * a * b / h).exp();
    let cdf = |t: f64| -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= h {
            return total;
        }
        let mu = b + (a - b) * t / h;
        let s = (t * (h - t) / h).sqrt();
        normal_cdf(-mu / s) + carry * normal_cdf((a * t / h - b * (h - t) / h) / s)
    };
    let u = rng.random::<f64>() * total;
    let (mut lo, mut hi) = (0.0f64, h);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn build_meander(path: &[f64], zeta: f64, steps: usize) -> MeanderPath {
    let h = 1.0 / steps as f64;
    let scale = 1.0 / (1.0 - zeta).sqrt();
    let mut values = Vec::with_capacity(steps + 1);
    values.push(0.0);
    for j in 1..=steps {
        let t = j as f64 / steps as f64;
        let u = zeta + t * (1.0 - zeta);
        // linear interpolation of the underlying grid path at u
        let x = (u / h).min(steps as f64);
        let i = (x.floor() as usize).min(steps - 1);
        let frac = x - i as f64;
        let w = path[i] * (1.0 - frac) + path[i + 1] * frac;
        values.push(w.abs() * scale);
    }
    MeanderPath { values }
}

/// Marginal samples of the meander at each requested time.
#[derive(Debug, Clone)]
pub struct MeanderMarginals {
    pub t_grid: Vec<f64>,
    /// samples[i][r] is the r-th draw of B_+(t_grid[i]).
    pub samples: Vec<Vec<f64>>,
}

/// Sample `count` meander paths in parallel and record their marginals.
pub fn meander_marginals(
    steps: usize,
    count: u64,
    t_grid: &[f64],
    seeder: &crate::rng::Seeder,
    tag: &str,
) -> Result<MeanderMarginals, MeanderError> {
    use rayon::prelude::*;
    let rows: Result<Vec<Vec<f64>>, MeanderError> = (0..count)
        .into_par_iter()
        .map(|r| {
            let mut rng = seeder.stream(tag, r, crate::rng::StreamRole::Path);
            let path = sample_meander(steps, &mut rng)?;
            Ok(t_grid.iter().map(|&t| path.at(t)).collect())
        })
        .collect();
    let rows = rows?;
    let mut samples = vec![Vec::with_capacity(count as usize); t_grid.len()];
    for row in rows {
        for (i, v) in row.into_iter().enumerate() {
            samples[i].push(v);
        }
    }
    Ok(MeanderMarginals {
        t_grid: t_grid.to_vec(),
        samples,
    })
}
