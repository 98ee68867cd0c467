//! Shared numeric kernels: compensated summation, one-sided derivatives at the
//! right edge of [0, 1], the Riemann zeta function, and big-integer logarithms.

use num_bigint::BigUint;
use num_traits::ToPrimitive;

/// Neumaier-compensated sum. Repeated pgf composition amplifies rounding, so
/// the explicit-pmf evaluation path routes through this.
pub fn compensated_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
    }
    sum + comp
}

/// Backward-difference derivative at s = 1 with Richardson extrapolation.
///
/// Probability generating functions are only defined on [0, 1], so the
/// one-sided stencil is the natural choice; the Richardson table removes the
/// low-order truncation error.
pub fn derivative_at_one(f: impl Fn(f64) -> f64, h0: f64, levels: usize) -> f64 {
    assert!(levels >= 1 && h0 > 0.0);
    let f1 = f(1.0);
    let mut table: Vec<f64> = (0..levels)
        .map(|k| {
            let h = h0 / (1u64 << k) as f64;
            (f1 - f(1.0 - h)) / h
        })
        .collect();
    richardson(&mut table);
    table[levels - 1]
}

/// One-sided second derivative at s = 1 (3-point stencil plus Richardson).
pub fn second_derivative_at_one(f: impl Fn(f64) -> f64, h0: f64, levels: usize) -> f64 {
    assert!(levels >= 1 && h0 > 0.0);
    let f1 = f(1.0);
    let mut table: Vec<f64> = (0..levels)
        .map(|k| {
            let h = h0 / (1u64 << k) as f64;
            (f1 - 2.0 * f(1.0 - h) + f(1.0 - 2.0 * h)) / (h * h)
        })
        .collect();
    richardson(&mut table);
    table[levels - 1]
}

// In-place Neville scheme for a sequence whose error expands in powers of h,
// sampled at h0, h0/2, h0/4, ...
fn richardson(table: &mut [f64]) {
    let levels = table.len();
    for j in 1..levels {
        let pow = (1u64 << j) as f64;
        for i in (j..levels).rev() {
            table[i] = (pow * table[i] - table[i - 1]) / (pow - 1.0);
        }
    }
}

/// Riemann zeta for real s > 1 via Euler-Maclaurin with a 1000-term head.
pub fn riemann_zeta(s: f64) -> f64 {
    assert!(s > 1.0, "zeta requires s > 1");
    let n = 1000usize;
    let head = compensated_sum((1..n).map(|k| (k as f64).powf(-s)));
    let nf = n as f64;
    // sum_{k >= N} k^{-s} = integral + f(N)/2 - f'(N)/12 + ...
    let tail = nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s) + s / 12.0 * nf.powf(-s - 1.0);
    head + tail
}

/// Natural log of a positive big integer, robust beyond the f64 range.
pub fn ln_biguint(x: &BigUint) -> f64 {
    debug_assert!(x.bits() > 0, "ln of zero");
    let bits = x.bits();
    if bits <= 900 {
        return x.to_f64().expect("fits in f64 range").ln();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().expect("64-bit head");
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// BigUint -> f64 with saturation instead of infinity for astronomically
/// large populations.
pub fn biguint_to_f64(x: &BigUint) -> f64 {
    match x.to_f64() {
        Some(v) if v.is_finite() => v,
        _ => f64::MAX,
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Asymptotic Kolmogorov critical coefficient c(alpha); the one-sample
/// critical value at level alpha is c(alpha)/sqrt(n).
pub fn kolmogorov_critical(alpha: f64) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0);
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}
