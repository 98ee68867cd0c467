//! Scalar abstraction for generating-function arithmetic.
//!
//! The polynomial kernels below are generic over the scalar: `f64` runs the
//! fast paths, while `BigRational` gives exact arithmetic on the small golden
//! cases whose pmf entries are dyadic rationals (every finite f64 converts
//! exactly). The concrete aliases used by the simulation and statistics
//! layers live at the crate root.

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{Num, ToPrimitive};

pub type BigRational = Ratio<BigInt>;

/// Scalar admissible in pgf evaluation and pmf convolution.
pub trait PgfScalar: Num + Clone + PartialOrd {
    fn from_weight(w: f64) -> Self;
    fn to_f64_lossy(&self) -> f64;
}

impl PgfScalar for f64 {
    fn from_weight(w: f64) -> Self {
        w
    }
    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

impl PgfScalar for BigRational {
    fn from_weight(w: f64) -> Self {
        BigRational::from_float(w).expect("pmf weight is finite")
    }
    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

/// Horner evaluation of sum_j coeffs[j] x^j.
pub fn poly_eval<T: PgfScalar>(coeffs: &[T], x: &T) -> T {
    let mut acc = T::zero();
    for c in coeffs.iter().rev() {
        acc = acc * x.clone() + c.clone();
    }
    acc
}

/// Convolution of two pmfs truncated to indices < cutoff.
pub fn convolve<T: PgfScalar>(a: &[T], b: &[T], cutoff: usize) -> Vec<T> {
    let len = (a.len() + b.len()).saturating_sub(1).min(cutoff);
    let mut out = vec![T::zero(); len];
    for (i, ai) in a.iter().enumerate() {
        if ai.is_zero() || i >= cutoff {
            continue;
        }
        for (j, bj) in b.iter().enumerate() {
            let k = i + j;
            if k >= cutoff {
                break;
            }
            out[k] = out[k].clone() + ai.clone() * bj.clone();
        }
    }
    out
}

/// One compound step: given the pmf of the parent count and a per-individual
/// offspring pmf, return the truncated pmf of the total offspring.
///
/// new[j] = sum_z parents[z] * offspring^{*z}[j], computed with incremental
/// convolution powers.
pub fn compound_step<T: PgfScalar>(parents: &[T], offspring: &[T], cutoff: usize) -> Vec<T> {
    let mut out = vec![T::zero(); cutoff];
    let mut power = vec![T::one()]; // offspring^{*0} = delta_0
    for (z, pz) in parents.iter().enumerate() {
        if !pz.is_zero() {
            for (j, q) in power.iter().enumerate() {
                if j >= cutoff {
                    break;
                }
                out[j] = out[j].clone() + pz.clone() * q.clone();
            }
        }
        if z + 1 < parents.len() {
            power = convolve(&power, offspring, cutoff);
        }
    }
    while out.len() > 1 && out.last().map(|t| t.is_zero()) == Some(true) {
        out.pop();
    }
    out
}
