//! Offspring distributions on the nonnegative integers: generating functions,
//! moment functionals, and exact sampling of sums of iid copies.

use crate::numeric::{biguint_to_f64, compensated_sum};
use num_bigint::BigUint;
use num_traits::{FromPrimitive, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use thiserror::Error;

/// Relative tolerance on the total mass of an explicit pmf.
pub const PMF_MASS_TOL: f64 = 1e-12;

/// Default parent cap below which explicit-pmf sums are sampled one
/// individual at a time; above it the sum switches to a Gaussian
/// approximation (mean n*A, variance n*Var) rounded and clamped at zero.
pub const DEFAULT_PMF_EXACT_CAP: u64 = 1 << 16;

/// Above this expected total, parametric sums switch from their closed-form
/// samplers to the Gaussian approximation as well.
const CLOSED_FORM_MEAN_MAX: f64 = 1e9;

#[derive(Debug, Error, PartialEq)]
pub enum LawError {
    #[error("pmf weights must be nonnegative and sum to 1 (sum = {sum})")]
    InvalidPmf { sum: f64 },
    #[error("mean must be positive and finite (got {0})")]
    InvalidMean(f64),
    #[error("pgf argument outside [0, 1]: {0}")]
    OutOfDomain(f64),
    #[error("operation requires a finite-support law")]
    UnsupportedVariant,
}

/// An offspring law.
///
/// `Geometric { mean }` is the linear-fractional law with pmf
/// p(k) = (1-s0) s0^k, s0 = mean/(1+mean); sums of iid copies are negative
/// binomial, which keeps generation transitions O(1) at any population size.
#[derive(Debug, Clone, PartialEq)]
pub enum OffspringLaw {
    Pmf { weights: Vec<f64> },
    Geometric { mean: f64 },
    Poisson { mean: f64 },
}

impl OffspringLaw {
    pub fn pmf(weights: Vec<f64>) -> Result<Self, LawError> {
        let sum = compensated_sum(weights.iter().copied());
        if weights.is_empty() || weights.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > PMF_MASS_TOL
        {
            return Err(LawError::InvalidPmf { sum });
        }
        let mut weights = weights;
        while weights.len() > 1 && weights.last() == Some(&0.0) {
            weights.pop();
        }
        Ok(OffspringLaw::Pmf { weights })
    }

    /// Point mass at k.
    pub fn delta(k: usize) -> Self {
        let mut weights = vec![0.0; k + 1];
        weights[k] = 1.0;
        OffspringLaw::Pmf { weights }
    }

    pub fn geometric(mean: f64) -> Result<Self, LawError> {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(LawError::InvalidMean(mean));
        }
        Ok(OffspringLaw::Geometric { mean })
    }

    pub fn poisson(mean: f64) -> Result<Self, LawError> {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(LawError::InvalidMean(mean));
        }
        Ok(OffspringLaw::Poisson { mean })
    }

    /// Probability generating function at s in [0, 1].
    pub fn pgf(&self, s: f64) -> Result<f64, LawError> {
        if !(0.0..=1.0).contains(&s) {
            return Err(LawError::OutOfDomain(s));
        }
        Ok(self.pgf_unchecked(s))
    }

    pub(crate) fn pgf_unchecked(&self, s: f64) -> f64 {
        match self {
            OffspringLaw::Pmf { weights } => {
                let mut power = 1.0;
                compensated_sum(weights.iter().map(|&w| {
                    let term = w * power;
                    power *= s;
                    term
                }))
            }
            OffspringLaw::Geometric { mean } => {
                let s0 = mean / (1.0 + mean);
                (1.0 - s0) / (1.0 - s0 * s)
            }
            OffspringLaw::Poisson { mean } => (mean * (s - 1.0)).exp(),
        }
    }

    /// First moment A = f'(1), in closed form per variant.
    pub fn mean(&self) -> f64 {
        match self {
            OffspringLaw::Pmf { weights } => {
                compensated_sum(weights.iter().enumerate().map(|(j, &w)| j as f64 * w))
            }
            OffspringLaw::Geometric { mean } | OffspringLaw::Poisson { mean } => *mean,
        }
    }

    /// Second factorial moment f''(1).
    pub fn second_factorial_moment(&self) -> f64 {
        match self {
            OffspringLaw::Pmf { weights } => compensated_sum(
                weights
                    .iter()
                    .enumerate()
                    .map(|(j, &w)| (j * j.saturating_sub(1)) as f64 * w),
            ),
            OffspringLaw::Geometric { mean } => 2.0 * mean * mean,
            OffspringLaw::Poisson { mean } => mean * mean,
        }
    }

    pub fn variance(&self) -> f64 {
        let a = self.mean();
        self.second_factorial_moment() + a - a * a
    }

    /// Normalized second factorial moment f''(1) / f'(1)^2.
    pub fn sigma(&self) -> f64 {
        let a = self.mean();
        self.second_factorial_moment() / (a * a)
    }

    /// Standardized truncated second moment: A^{-2} sum_{j >= a} j^2 p_j.
    ///
    /// Exact for explicit pmfs; series summation for the parametric variants,
    /// stopping once the term falls below 1e-16 of the running sum in the
    /// decreasing regime (absolute truncation error below 1e-14).
    pub fn kappa(&self, a: u64) -> f64 {
        let mean = self.mean();
        let tail = match self {
            OffspringLaw::Pmf { weights } => compensated_sum(
                weights
                    .iter()
                    .enumerate()
                    .skip(a as usize)
                    .map(|(j, &w)| (j * j) as f64 * w),
            ),
            OffspringLaw::Geometric { mean } => {
                let s0 = mean / (1.0 + mean);
                let mut pj = (1.0 - s0) * s0.powi(a as i32);
                series_tail(a, *mean, &mut |_j, p| *p *= s0, &mut pj)
            }
            OffspringLaw::Poisson { mean } => {
                let lam = *mean;
                let mut pj = (a as f64 * lam.ln() - lam - libm::lgamma(a as f64 + 1.0)).exp();
                series_tail(a, lam, &mut |j, p| *p *= lam / (j as f64 + 1.0), &mut pj)
            }
        };
        tail / (mean * mean)
    }

    /// One draw from the law.
    pub fn sample(&self, rng: &mut impl Rng) -> u64 {
        match self {
            OffspringLaw::Pmf { weights } => {
                let mut u: f64 = rng.random();
                for (j, &w) in weights.iter().enumerate() {
                    if u < w {
                        return j as u64;
                    }
                    u -= w;
                }
                (weights.len() - 1) as u64
            }
            OffspringLaw::Geometric { mean } => {
                // inverse transform for p(k) = (1-s0) s0^k
                let s0 = mean / (1.0 + mean);
                let u: f64 = rng.random();
                let k = ((1.0 - u).ln() / s0.ln()).floor();
                if k < 0.0 {
                    0
                } else {
                    k as u64
                }
            }
            OffspringLaw::Poisson { mean } => {
                let d = Poisson::new(*mean).expect("positive mean");
                d.sample(rng) as u64
            }
        }
    }

    /// Total offspring of `parents` iid individuals.
    ///
    /// Closed forms: a Poisson sum is Poisson(n*mean); a geometric sum is
    /// negative binomial, drawn through its gamma-Poisson mixture; an
    /// explicit-pmf sum is drawn per individual while `parents` is within
    /// `exact_cap` (None = no cap) and by the rounded Gaussian surrogate
    /// above it.
    pub fn sample_total(
        &self,
        parents: &BigUint,
        exact_cap: Option<u64>,
        rng: &mut impl Rng,
    ) -> BigUint {
        if parents.is_zero() {
            return BigUint::zero();
        }
        match self {
            OffspringLaw::Pmf { weights } => {
                if weights.iter().filter(|&&w| w > 0.0).count() == 1 {
                    // deterministic law: exact at any size
                    let k = weights.iter().position(|&w| w > 0.0).unwrap();
                    return parents * BigUint::from(k);
                }
                let cap = exact_cap.unwrap_or(u64::MAX);
                match parents.to_u64() {
                    Some(n) if n <= cap => {
                        let mut total = 0u64;
                        for _ in 0..n {
                            total += self.sample(rng);
                        }
                        BigUint::from(total)
                    }
                    _ => {
                        let nf = biguint_to_f64(parents);
                        gaussian_count(nf * self.mean(), nf * self.variance(), rng)
                    }
                }
            }
            OffspringLaw::Poisson { mean } => {
                let nf = biguint_to_f64(parents);
                let lam = nf * mean;
                if lam <= CLOSED_FORM_MEAN_MAX {
                    let d = Poisson::new(lam).expect("positive mean");
                    BigUint::from(d.sample(rng) as u64)
                } else {
                    gaussian_count(lam, lam, rng)
                }
            }
            OffspringLaw::Geometric { mean } => {
                let nf = biguint_to_f64(parents);
                let total_mean = nf * mean;
                if total_mean <= CLOSED_FORM_MEAN_MAX && nf < 9e15 {
                    // NegBin(n, p) with p = 1/(1+mean): lambda ~ Gamma(n, mean), X ~ Poisson(lambda)
                    let lam = Gamma::new(nf, *mean).expect("valid gamma").sample(rng);
                    if lam < 1e-300 {
                        BigUint::zero()
                    } else {
                        let d = Poisson::new(lam).expect("positive mean");
                        BigUint::from(d.sample(rng) as u64)
                    }
                } else {
                    gaussian_count(total_mean, total_mean * (1.0 + mean), rng)
                }
            }
        }
    }
}

// Sum j^2 pj from j = a, advancing pj with the caller-provided recurrence.
// Stops when the term is below 1e-16 of the running sum past the mode.
fn series_tail(a: u64, mode: f64, advance: &mut impl FnMut(u64, &mut f64), pj: &mut f64) -> f64 {
    let mut sum = 0.0;
    let mut j = a;
    loop {
        let term = (j as f64) * (j as f64) * *pj;
        sum += term;
        if j as f64 > mode && term < 1e-16 * sum.max(f64::MIN_POSITIVE) {
            return sum;
        }
        if j > 10_000_000 {
            return sum;
        }
        advance(j, pj);
        j += 1;
    }
}

fn gaussian_count(mean: f64, var: f64, rng: &mut impl Rng) -> BigUint {
    let z: f64 = StandardNormal.sample(rng);
    let v = (mean + var.max(0.0).sqrt() * z).round();
    if v <= 0.0 {
        BigUint::zero()
    } else {
        BigUint::from_f64(v).expect("finite nonnegative")
    }
}
