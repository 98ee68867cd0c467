//! The joint law of (d, nu): gap distributions, random offspring-law
//! generators, realized sparse environments with lazy extension, the marked
//! random walk S_k, and the first-passage time.

use crate::numeric::{compensated_sum, riemann_zeta};
use crate::offspring::{LawError, OffspringLaw};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("gap law invalid: {0}")]
    InvalidGapLaw(String),
    #[error("plain offspring law must have mean 1 within 1e-12 (got {0})")]
    PlainLawNotCritical(f64),
    #[error(transparent)]
    Law(#[from] LawError),
}

/// Distribution of the positive integer gap d between consecutive marks.
#[derive(Debug, Clone, PartialEq)]
pub enum GapLaw {
    /// weights[i] = P{d = i + 1}.
    Pmf { weights: Vec<f64> },
    /// Geometric on {1, 2, ...} with the given mean (>= 1).
    Geometric { mean: f64 },
    /// P{d = k} proportional to k^{-exponent}. E d^{3/2} is finite only for
    /// exponent > 5/2; smaller exponents are allowed deliberately so that
    /// assumption-violating experiments can be run.
    Zeta { exponent: f64 },
    Fixed { value: u64 },
}

impl GapLaw {
    pub fn pmf(weights: Vec<f64>) -> Result<Self, ModelError> {
        let sum = compensated_sum(weights.iter().copied());
        if weights.is_empty() || weights.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(ModelError::InvalidGapLaw(format!(
                "weights must be nonnegative and sum to 1 (sum = {sum})"
            )));
        }
        Ok(GapLaw::Pmf { weights })
    }

    pub fn geometric(mean: f64) -> Result<Self, ModelError> {
        if !(mean >= 1.0) || !mean.is_finite() {
            return Err(ModelError::InvalidGapLaw(format!(
                "geometric gap mean must be >= 1 (got {mean})"
            )));
        }
        Ok(GapLaw::Geometric { mean })
    }

    pub fn zeta(exponent: f64) -> Result<Self, ModelError> {
        if !(exponent > 1.0) || !exponent.is_finite() {
            return Err(ModelError::InvalidGapLaw(format!(
                "zeta exponent must be > 1 (got {exponent})"
            )));
        }
        Ok(GapLaw::Zeta { exponent })
    }

    pub fn fixed(value: u64) -> Result<Self, ModelError> {
        if value == 0 {
            return Err(ModelError::InvalidGapLaw("gap must be >= 1".into()));
        }
        Ok(GapLaw::Fixed { value })
    }

    /// m = E d; infinite for zeta exponents <= 2.
    pub fn mean(&self) -> f64 {
        match self {
            GapLaw::Pmf { weights } => compensated_sum(
                weights
                    .iter()
                    .enumerate()
                    .map(|(i, &w)| (i + 1) as f64 * w),
            ),
            GapLaw::Geometric { mean } => *mean,
            GapLaw::Zeta { exponent } => {
                if *exponent > 2.0 {
                    riemann_zeta(exponent - 1.0) / riemann_zeta(*exponent)
                } else {
                    f64::INFINITY
                }
            }
            GapLaw::Fixed { value } => *value as f64,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u64 {
        match self {
            GapLaw::Pmf { weights } => {
                let mut u: f64 = rng.random();
                for (i, &w) in weights.iter().enumerate() {
                    if u < w {
                        return (i + 1) as u64;
                    }
                    u -= w;
                }
                weights.len() as u64
            }
            GapLaw::Geometric { mean } => {
                if *mean <= 1.0 {
                    return 1;
                }
                // d = 1 + failures before first success at rate p = 1/mean
                let s0 = 1.0 - 1.0 / mean;
                let u: f64 = rng.random();
                let k = ((1.0 - u).ln() / s0.ln()).floor();
                1 + if k < 0.0 { 0 } else { k as u64 }
            }
            GapLaw::Zeta { exponent } => sample_zipf(*exponent, rng),
            GapLaw::Fixed { value } => *value,
        }
    }

    /// Smallest D with P{d > D} <= tail, together with the achieved tail
    /// mass. The zeta case caps D at 2^20 and reports the honest residual.
    pub fn truncation_point(&self, tail: f64) -> (u64, f64) {
        match self {
            GapLaw::Pmf { weights } => (weights.len() as u64, 0.0),
            GapLaw::Fixed { value } => (*value, 0.0),
            GapLaw::Geometric { mean } => {
                if *mean <= 1.0 {
                    return (1, 0.0);
                }
                let s0 = 1.0 - 1.0 / mean;
                let d = (tail.ln() / s0.ln()).ceil().max(1.0) as u64;
                (d, s0.powf(d as f64))
            }
            GapLaw::Zeta { exponent } => {
                let s = *exponent;
                let z = riemann_zeta(s);
                // tail(D) ~ D^{1-s} / ((s-1) zeta(s))
                let d_req = (tail * (s - 1.0) * z).powf(1.0 / (1.0 - s));
                let d = d_req.ceil().min((1u64 << 20) as f64).max(1.0) as u64;
                let residual = d.max(1) as f64;
                let residual = residual.powf(1.0 - s) / ((s - 1.0) * z);
                (d, residual)
            }
        }
    }

    /// P{d = k}; used by truncation-weighted mixtures.
    pub fn mass_at(&self, k: u64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match self {
            GapLaw::Pmf { weights } => weights.get((k - 1) as usize).copied().unwrap_or(0.0),
            GapLaw::Geometric { mean } => {
                if *mean <= 1.0 {
                    return if k == 1 { 1.0 } else { 0.0 };
                }
                let s0 = 1.0 - 1.0 / mean;
                (1.0 / mean) * s0.powf((k - 1) as f64)
            }
            GapLaw::Zeta { exponent } => (k as f64).powf(-exponent) / riemann_zeta(*exponent),
            GapLaw::Fixed { value } => {
                if k == *value {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

// Devroye's rejection sampler for the Zipf(s) law on {1, 2, ...}.
fn sample_zipf(s: f64, rng: &mut impl Rng) -> u64 {
    let b = 2f64.powf(s - 1.0);
    loop {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let x = u.powf(-1.0 / (s - 1.0)).floor();
        if !x.is_finite() {
            continue;
        }
        let t = (1.0 + 1.0 / x).powf(s - 1.0);
        if v * x * (t - 1.0) / (b - 1.0) <= t / b {
            return if x >= u64::MAX as f64 { u64::MAX } else { x as u64 };
        }
    }
}

/// Law of log A for the random-mean geometric generator. Both built-ins are
/// symmetric atom sets, so E log A = 0 holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum LogMeanLaw {
    /// log A = +c or -c with probability 1/2 each.
    TwoPoint { c: f64 },
    /// Symmetric discretization of a centered Gaussian: atoms at k*step for
    /// k in -half_points..=half_points with weights proportional to the
    /// Gaussian density, step = 4 sd / half_points.
    DiscreteGaussian { sd: f64, half_points: u32 },
}

impl LogMeanLaw {
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match self {
            LogMeanLaw::TwoPoint { c } => vec![(-c, 0.5), (*c, 0.5)],
            LogMeanLaw::DiscreteGaussian { sd, half_points } => {
                let k = *half_points as i64;
                let step = 4.0 * sd / *half_points as f64;
                let raw: Vec<(f64, f64)> = (-k..=k)
                    .map(|i| {
                        let x = i as f64 * step;
                        (x, (-x * x / (2.0 * sd * sd)).exp())
                    })
                    .collect();
                let total: f64 = raw.iter().map(|&(_, w)| w).sum();
                raw.into_iter().map(|(x, w)| (x, w / total)).collect()
            }
        }
    }

    /// Exact variance of the atom set; this is the v^2 the model declares.
    pub fn variance(&self) -> f64 {
        compensated_sum(self.atoms().into_iter().map(|(x, p)| x * x * p))
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let atoms = self.atoms();
        let mut u: f64 = rng.random();
        for &(x, p) in &atoms {
            if u < p {
                return x;
            }
            u -= p;
        }
        atoms.last().map(|&(x, _)| x).unwrap_or(0.0)
    }
}

/// Rule producing the random offspring law nu, independent of the gap.
#[derive(Debug, Clone, PartialEq)]
pub enum NuGenerator {
    /// Geometric (linear-fractional) law with random mean A = exp(L).
    GeometricRandomMean { log_mean: LogMeanLaw },
    /// Degenerate environment: nu is always the given law. Violates the
    /// criticality assumption unless its mean is 1; useful for reductions
    /// and deterministic tests.
    Fixed { law: OffspringLaw },
}

impl NuGenerator {
    pub fn draw(&self, rng: &mut impl Rng) -> OffspringLaw {
        match self {
            NuGenerator::GeometricRandomMean { log_mean } => OffspringLaw::Geometric {
                mean: log_mean.sample(rng).exp(),
            },
            NuGenerator::Fixed { law } => law.clone(),
        }
    }

    /// E log A when available in closed form.
    pub fn exact_e_log_mean(&self) -> Option<f64> {
        match self {
            // symmetric atoms
            NuGenerator::GeometricRandomMean { .. } => Some(0.0),
            NuGenerator::Fixed { law } => Some(law.mean().ln()),
        }
    }

    /// Var(log A), exact from the atom sets (0 for a fixed law).
    pub fn log_mean_variance(&self) -> f64 {
        match self {
            NuGenerator::GeometricRandomMean { log_mean } => log_mean.variance(),
            NuGenerator::Fixed { .. } => 0.0,
        }
    }
}

/// The model: joint law of (d, nu) plus the plain offspring law mu.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentModel {
    gaps: GapLaw,
    nu: NuGenerator,
    mu: OffspringLaw,
}

impl EnvironmentModel {
    /// Requires mean(mu) = 1 within 1e-12; criticality of nu is checked by
    /// `check_assumptions`, not enforced, so exploratory runs stay possible.
    pub fn new(gaps: GapLaw, nu: NuGenerator, mu: OffspringLaw) -> Result<Self, ModelError> {
        let a_mu = mu.mean();
        if (a_mu - 1.0).abs() > 1e-12 {
            return Err(ModelError::PlainLawNotCritical(a_mu));
        }
        Ok(EnvironmentModel { gaps, nu, mu })
    }

    pub fn gaps(&self) -> &GapLaw {
        &self.gaps
    }

    pub fn nu(&self) -> &NuGenerator {
        &self.nu
    }

    pub fn mu(&self) -> &OffspringLaw {
        &self.mu
    }

    /// m = E d.
    pub fn gap_mean(&self) -> f64 {
        self.gaps.mean()
    }

    /// v^2 = Var(log A).
    pub fn log_mean_variance(&self) -> f64 {
        self.nu.log_mean_variance()
    }

    pub fn draw_environment(
        &self,
        horizon: u64,
        gap_rng: ChaCha8Rng,
        law_rng: ChaCha8Rng,
    ) -> SparseEnvironment {
        let mut env = SparseEnvironment {
            gaps: Vec::new(),
            marks: vec![0],
            laws: Vec::new(),
            source: Some(EnvSource {
                gap_law: self.gaps.clone(),
                nu: self.nu.clone(),
                gap_rng,
                law_rng,
            }),
        };
        env.ensure_covers(horizon);
        env
    }

    pub fn check_assumptions(
        &self,
        sample_size: u64,
        kappa_cutoff: u64,
        rng: &mut impl Rng,
    ) -> AssumptionReport {
        check_assumptions_impl(self, sample_size, kappa_cutoff, rng)
    }
}

/// A realized environment: gaps d_1..d_K, marks S_0..S_K, laws nu_1..nu_K,
/// lazily extendable from its two dedicated random streams.
#[derive(Debug, Clone)]
pub struct SparseEnvironment {
    gaps: Vec<u64>,
    marks: Vec<u64>,
    laws: Vec<OffspringLaw>,
    source: Option<EnvSource>,
}

#[derive(Debug, Clone)]
struct EnvSource {
    gap_law: GapLaw,
    nu: NuGenerator,
    gap_rng: ChaCha8Rng,
    law_rng: ChaCha8Rng,
}

impl SparseEnvironment {
    /// Fixed environment for tests and quenched oracles; not extendable.
    pub fn from_parts(gaps: Vec<u64>, laws: Vec<OffspringLaw>) -> Self {
        assert_eq!(gaps.len(), laws.len());
        assert!(gaps.iter().all(|&d| d >= 1), "gaps must be positive");
        let mut marks = Vec::with_capacity(gaps.len() + 1);
        let mut s = 0u64;
        marks.push(0);
        for &d in &gaps {
            s += d;
            marks.push(s);
        }
        SparseEnvironment {
            gaps,
            laws,
            marks,
            source: None,
        }
    }

    pub fn gaps(&self) -> &[u64] {
        &self.gaps
    }

    /// Marks S_0 = 0, S_1, ..., S_K.
    pub fn marks(&self) -> &[u64] {
        &self.marks
    }

    /// nu_{k+1}, the law used by generation S_k.
    pub fn law_at_mark(&self, k: usize) -> &OffspringLaw {
        &self.laws[k]
    }

    /// Extend until S_K > n. Panics on a fixed environment that is too
    /// short (callers own the horizon there).
    pub fn ensure_covers(&mut self, n: u64) {
        while *self.marks.last().unwrap() <= n {
            self.extend_one();
        }
    }

    /// Extend until at least `count` (gap, law) pairs exist.
    pub fn ensure_pairs(&mut self, count: usize) {
        while self.gaps.len() < count {
            self.extend_one();
        }
    }

    fn extend_one(&mut self) {
        let source = self
            .source
            .as_mut()
            .expect("environment is fixed and too short for the requested horizon");
        let d = source.gap_law.sample(&mut source.gap_rng);
        let law = source.nu.draw(&mut source.law_rng);
        let last = *self.marks.last().unwrap();
        self.gaps.push(d);
        self.marks.push(last + d);
        self.laws.push(law);
    }

    /// First-passage time: the least k with S_k > n, extending on demand.
    pub fn first_passage(&mut self, n: u64) -> u64 {
        self.ensure_covers(n);
        // marks are strictly increasing; binary search for the first > n
        let idx = self.marks.partition_point(|&s| s <= n);
        idx as u64
    }
}

/// A point estimate with an optional Monte Carlo standard error.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: Option<f64>,
    pub exact: bool,
}

impl Estimate {
    fn exact(value: f64) -> Self {
        Estimate {
            value,
            se: None,
            exact: true,
        }
    }

    fn monte_carlo(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Estimate {
            value: mean,
            se: Some((var / n).sqrt()),
            exact: false,
        }
    }
}

/// Numerical check of the standing assumptions; violations are reported,
/// never fatal.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub e_log_a: Estimate,
    pub var_log_a: Estimate,
    pub declared_v_squared: f64,
    pub gap_mean: f64,
    pub gap_three_halves_moment: Estimate,
    pub kappa_log4_moment: Estimate,
    pub kappa_cutoff: u64,
    pub notes: Vec<String>,
    pub violations: Vec<String>,
}

impl AssumptionReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_assumptions_impl(
    model: &EnvironmentModel,
    sample_size: u64,
    kappa_cutoff: u64,
    rng: &mut impl Rng,
) -> AssumptionReport {
    let mut notes = Vec::new();
    let mut violations = Vec::new();

    let e_log_a = match model.nu.exact_e_log_mean() {
        Some(v) => {
            if v == 0.0 {
                notes.push("A1: exact".into());
            } else {
                violations.push(format!("A1 violated: E log A = {v} != 0"));
            }
            Estimate::exact(v)
        }
        None => {
            let samples: Vec<f64> = (0..sample_size)
                .map(|_| model.nu.draw(rng).mean().ln())
                .collect();
            let est = Estimate::monte_carlo(&samples);
            if est.value.abs() > 3.0 * est.se.unwrap_or(0.0) {
                violations.push(format!("A1 suspect: E log A estimate {}", est.value));
            }
            est
        }
    };

    let declared_v_squared = model.log_mean_variance();
    if declared_v_squared == 0.0 {
        violations.push("A1 violated: Var(log A) = 0".into());
    }
    let var_samples: Vec<f64> = (0..sample_size.min(200_000))
        .map(|_| {
            let l = model.nu.draw(rng).mean().ln();
            l * l
        })
        .collect();
    let var_log_a = Estimate::monte_carlo(&var_samples);

    let gap_mean = model.gap_mean();
    if let GapLaw::Zeta { exponent } = model.gaps {
        if exponent <= 2.5 {
            violations.push(format!("A3 violated: exponent <= 5/2 (got {exponent})"));
        }
    }
    if !gap_mean.is_finite() {
        violations.push("A3 violated: E d infinite".into());
    }
    let gap_samples: Vec<f64> = (0..sample_size)
        .map(|_| (model.gaps.sample(rng) as f64).powf(1.5))
        .collect();
    let gap_three_halves_moment = Estimate::monte_carlo(&gap_samples);

    let kappa_samples: Vec<f64> = (0..sample_size.min(100_000))
        .map(|_| {
            let nu = model.nu.draw(rng);
            let k = nu.kappa(kappa_cutoff);
            k.ln().max(0.0).powi(4)
        })
        .collect();
    let kappa_log4_moment = Estimate::monte_carlo(&kappa_samples);

    let a_mu = model.mu.mean();
    notes.push(format!("A2: |A_mu - 1| = {:.3e}", (a_mu - 1.0).abs()));

    AssumptionReport {
        e_log_a,
        var_log_a,
        declared_v_squared,
        gap_mean,
        gap_three_halves_moment,
        kappa_log4_moment,
        kappa_cutoff,
        notes,
        violations,
    }
}
