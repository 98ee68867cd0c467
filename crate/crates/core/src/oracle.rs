//! Exact brute-force computations on small instances, used as ground truth
//! for the simulators and for the auxiliary inequality checks. Deliberately
//! slow and quarantined from the hot simulation paths.

use crate::environment::GapLaw;
use crate::numeric::compensated_sum;
use crate::offspring::OffspringLaw;
use crate::process::SimOptions;
use crate::scalar::{compound_step, poly_eval, BigRational, PgfScalar};
use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

/// Oracle scale bound on the number of generations.
pub const MAX_ORACLE_GENERATIONS: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("quenched spec limited to {MAX_ORACLE_GENERATIONS} generations (got {0})")]
    TooLong(usize),
    #[error("generation {index} is not a valid pmf (sum = {sum})")]
    InvalidPmf { index: usize, sum: f64 },
    #[error("x must lie strictly between 0 and p (x = {x}, p = {p})")]
    TailDomain { x: f64, p: f64 },
}

/// Explicit per-generation offspring laws g_0..g_{n-1}.
#[derive(Debug, Clone)]
pub struct QuenchedSpec {
    pmfs: Vec<Vec<f64>>,
}

impl QuenchedSpec {
    pub fn new(pmfs: Vec<Vec<f64>>) -> Result<Self, OracleError> {
        if pmfs.len() > MAX_ORACLE_GENERATIONS {
            return Err(OracleError::TooLong(pmfs.len()));
        }
        for (index, pmf) in pmfs.iter().enumerate() {
            let sum = compensated_sum(pmf.iter().copied());
            if pmf.is_empty() || pmf.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                return Err(OracleError::InvalidPmf { index, sum });
            }
        }
        Ok(QuenchedSpec { pmfs })
    }

    pub fn len(&self) -> usize {
        self.pmfs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmfs.is_empty()
    }

    pub fn pmfs(&self) -> &[Vec<f64>] {
        &self.pmfs
    }

    /// The same generations as sampling laws, for Monte Carlo cross-checks.
    pub fn offspring_laws(&self) -> Vec<OffspringLaw> {
        self.pmfs
            .iter()
            .map(|w| OffspringLaw::pmf(w.clone()).expect("validated pmf"))
            .collect()
    }
}

fn survival_backward<T: PgfScalar>(spec: &QuenchedSpec, n: usize) -> T {
    assert!(n <= spec.len(), "spec covers only {} generations", spec.len());
    let mut x = T::zero();
    for pmf in spec.pmfs[..n].iter().rev() {
        let coeffs: Vec<T> = pmf.iter().map(|&w| T::from_weight(w)).collect();
        x = poly_eval(&coeffs, &x);
    }
    T::one() - x
}

/// P{Z_n > 0 | spec} = 1 - g_0(g_1(... g_{n-1}(0) ...)) by backward pgf
/// iteration.
pub fn exact_survival_quenched(spec: &QuenchedSpec, n: usize) -> f64 {
    survival_backward::<f64>(spec, n)
}

/// Exact-rational variant. Every f64 weight converts exactly, so on dyadic
/// golden cases this removes tolerance questions entirely. Denominators
/// square each generation: intended for small n only.
pub fn exact_survival_quenched_rational(spec: &QuenchedSpec, n: usize) -> BigRational {
    survival_backward::<BigRational>(spec, n)
}

/// Residual threshold above which the population-pmf cutoff is flagged.
pub const PMF_RESIDUAL_FLAG: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct PopulationPmf {
    pub pmf: Vec<f64>,
    pub residual: f64,
    pub cutoff_ok: bool,
}

/// Exact distribution of Z_n under the quenched spec, truncated at `cutoff`
/// with the lost mass reported.
pub fn exact_population_pmf(spec: &QuenchedSpec, n: usize, cutoff: usize) -> PopulationPmf {
    assert!(n <= spec.len());
    let mut pmf = vec![0.0f64; 2];
    pmf[1] = 1.0;
    for gen in &spec.pmfs[..n] {
        pmf = compound_step(&pmf, gen, cutoff);
    }
    let kept: f64 = pmf.iter().sum();
    let residual = (1.0 - kept).max(0.0);
    PopulationPmf {
        pmf,
        residual,
        cutoff_ok: residual <= PMF_RESIDUAL_FLAG,
    }
}

/// Exact-rational variant of the population pmf.
pub fn exact_population_pmf_rational(
    spec: &QuenchedSpec,
    n: usize,
    cutoff: usize,
) -> Vec<BigRational> {
    assert!(n <= spec.len());
    let mut pmf: Vec<BigRational> = vec![BigRational::zero(), BigRational::one()];
    for gen in &spec.pmfs[..n] {
        let coeffs: Vec<BigRational> = gen.iter().map(|&w| BigRational::from_weight(w)).collect();
        pmf = compound_step(&pmf, &coeffs, cutoff);
    }
    pmf
}

#[derive(Debug, Clone, Serialize)]
pub struct BinomialTailCheck {
    pub exact: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Exact P{0 < Bin(N, p) <= N x} against the bound p (1-p) x / (p - x)^2.
pub fn check_binomial_tail_lemma(
    n: u64,
    p: f64,
    x: f64,
) -> Result<BinomialTailCheck, OracleError> {
    if !(x > 0.0 && x < p && p < 1.0) {
        return Err(OracleError::TailDomain { x, p });
    }
    let k_max = (n as f64 * x + 1e-12).floor() as u64;
    let mut exact = 0.0f64;
    // pmf recurrence from k = 0
    let mut pmf = (1.0 - p).powi(n as i32);
    for k in 0..=k_max.min(n) {
        if k >= 1 {
            exact += pmf;
        }
        pmf *= (n - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
    }
    let bound = p * (1.0 - p) * x / ((p - x) * (p - x));
    Ok(BinomialTailCheck {
        exact,
        bound,
        holds: exact <= bound * (1.0 + 1e-12) + 1e-300,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxLemmaCheck {
    pub estimate: f64,
    pub se: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Monte Carlo check that E max_{0 <= k <= d} Z~_k <= 1 + E d for a critical
/// plain law and an independent gap. `holds` allows 3 standard errors of
/// slack in the Monte Carlo direction.
pub fn check_max_lemma(
    mu: &OffspringLaw,
    gaps: &GapLaw,
    reps: u64,
    rng: &mut impl Rng,
) -> MaxLemmaCheck {
    debug_assert!((mu.mean() - 1.0).abs() < 1e-9);
    let opts = SimOptions::default();
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for _ in 0..reps {
        let d = gaps.sample(rng);
        let mut z = BigUint::one();
        let mut max = 1.0f64;
        for _ in 0..d {
            if z.is_zero() {
                break;
            }
            z = mu.sample_total(&z, opts.pmf_exact_cap, rng);
            max = max.max(crate::numeric::biguint_to_f64(&z));
        }
        sum += max;
        sum_sq += max * max;
    }
    let n = reps as f64;
    let estimate = sum / n;
    let var = (sum_sq / n - estimate * estimate).max(0.0);
    let se = (var / n).sqrt();
    let bound = 1.0 + gaps.mean();
    MaxLemmaCheck {
        estimate,
        se,
        bound,
        holds: estimate <= bound + 3.0 * se,
    }
}

/// Exact enumeration of E max(1, Z~_1, ..., Z~_d) for a fixed gap and a
/// finite-support law; feasible only for tiny cases.
pub fn exact_max_expectation(mu: &OffspringLaw, d: u64) -> Option<f64> {
    let weights = match mu {
        OffspringLaw::Pmf { weights } => weights.clone(),
        _ => return None,
    };
    // state: (population, probability, running max)
    let mut states: Vec<(u64, f64, u64)> = vec![(1, 1.0, 1)];
    for _ in 0..d {
        if states.len() > 200_000 {
            return None;
        }
        let mut next: std::collections::BTreeMap<(u64, u64), f64> = Default::default();
        for &(z, prob, max) in &states {
            if z == 0 {
                *next.entry((0, max)).or_default() += prob;
                continue;
            }
            // distribution of the total offspring of z individuals
            let mut totals: Vec<(u64, f64)> = vec![(0, 1.0)];
            for _ in 0..z {
                let mut conv: std::collections::BTreeMap<u64, f64> = Default::default();
                for &(t, q) in &totals {
                    for (j, &w) in weights.iter().enumerate() {
                        if w > 0.0 {
                            *conv.entry(t + j as u64).or_default() += q * w;
                        }
                    }
                }
                totals = conv.into_iter().collect();
            }
            for (t, q) in totals {
                *next.entry((t, max.max(t))).or_default() += prob * q;
            }
        }
        states = next.into_iter().map(|((z, m), p)| (z, p, m)).collect();
    }
    Some(states.iter().map(|&(_, p, m)| p * m as f64).sum())
}
