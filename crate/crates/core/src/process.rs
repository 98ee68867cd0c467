//! Forward simulation: the sparse-environment process, the plain
//! Galton-Watson process, the embedded process at marks, and extinction
//! times. Population counts are arbitrary-precision integers; conditioned on
//! survival the log-population grows on the sqrt(n) scale, which overflows
//! 64-bit counts at reachable horizons.

use crate::environment::{EnvironmentModel, SparseEnvironment};
use crate::offspring::{OffspringLaw, DEFAULT_PMF_EXACT_CAP};
use crate::rng::ReplicateStreams;
use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Simulation policy knobs.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Parent cap for exact per-individual explicit-pmf sums; None removes
    /// the cap entirely (tests that need the exact law set this).
    pub pmf_exact_cap: Option<u64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            pmf_exact_cap: Some(DEFAULT_PMF_EXACT_CAP),
        }
    }
}

impl SimOptions {
    pub fn exact() -> Self {
        SimOptions {
            pmf_exact_cap: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtinctionTime {
    At(u64),
    Censored { horizon: u64 },
}

/// A population path Z_0, Z_1, ..., absorbing at zero.
#[derive(Debug, Clone)]
pub struct Trajectory {
    values: Vec<BigUint>,
}

impl Trajectory {
    /// Build from raw values, enforcing Z_0 = 1 and absorption at zero.
    pub fn from_values(values: Vec<BigUint>) -> Self {
        assert!(!values.is_empty() && values[0].is_one(), "Z_0 must be 1");
        let mut dead = false;
        for v in &values {
            if dead {
                assert!(v.is_zero(), "zero is absorbing");
            }
            dead = dead || v.is_zero();
        }
        Trajectory { values }
    }

    pub fn values(&self) -> &[BigUint] {
        &self.values
    }

    /// First index with value zero, or censored at the recorded horizon.
    pub fn extinction(&self) -> ExtinctionTime {
        match self.values.iter().position(|v| v.is_zero()) {
            Some(i) => ExtinctionTime::At(i as u64),
            None => ExtinctionTime::Censored {
                horizon: (self.values.len() - 1) as u64,
            },
        }
    }
}

/// The population restricted to the marks S_0, S_1, ...
#[derive(Debug, Clone)]
pub struct EmbeddedTrajectory {
    values: Vec<BigUint>,
}

impl EmbeddedTrajectory {
    pub fn values(&self) -> &[BigUint] {
        &self.values
    }

    pub fn extinction(&self) -> ExtinctionTime {
        match self.values.iter().position(|v| v.is_zero()) {
            Some(i) => ExtinctionTime::At(i as u64),
            None => ExtinctionTime::Censored {
                horizon: (self.values.len() - 1) as u64,
            },
        }
    }
}

/// Stepper for the sparse-environment process. The environment is owned by
/// the stepper and extended lazily from its dedicated streams, so the
/// quenched environment never depends on the population draws.
pub struct BpsreProcess {
    env: SparseEnvironment,
    mu: OffspringLaw,
    offspring_rng: ChaCha8Rng,
    opts: SimOptions,
    z: BigUint,
    generation: u64,
    mark_cursor: usize,
}

impl BpsreProcess {
    pub fn new(model: &EnvironmentModel, streams: ReplicateStreams, opts: SimOptions) -> Self {
        let env = model.draw_environment(0, streams.env_gaps, streams.env_laws);
        BpsreProcess {
            env,
            mu: model.mu().clone(),
            offspring_rng: streams.offspring,
            opts,
            z: BigUint::one(),
            generation: 0,
            mark_cursor: 0,
        }
    }

    pub fn z(&self) -> &BigUint {
        &self.z
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn is_extinct(&self) -> bool {
        self.z.is_zero()
    }

    pub fn env(&self) -> &SparseEnvironment {
        &self.env
    }

    pub fn into_env(self) -> SparseEnvironment {
        self.env
    }

    /// Advance one generation. Generation S_k reproduces with nu_{k+1} for
    /// every k >= 0 (including S_0 = 0); all other generations use mu.
    pub fn step(&mut self) {
        if self.z.is_zero() {
            self.generation += 1;
            return;
        }
        self.env.ensure_covers(self.generation);
        let next = if self.env.marks()[self.mark_cursor] == self.generation {
            let law = self.env.law_at_mark(self.mark_cursor);
            self.mark_cursor += 1;
            law.sample_total(&self.z, self.opts.pmf_exact_cap, &mut self.offspring_rng)
        } else {
            self.mu
                .sample_total(&self.z, self.opts.pmf_exact_cap, &mut self.offspring_rng)
        };
        self.z = next;
        self.generation += 1;
    }

    /// Run until generation n (or extinction; the generation counter still
    /// advances so absorption is observable).
    pub fn run_to(&mut self, n: u64) {
        while self.generation < n {
            if self.z.is_zero() {
                self.generation = n;
                return;
            }
            self.step();
        }
    }
}

/// Simulate the full path to n_max; zeros are recorded through the horizon.
pub fn simulate_bpsre(
    model: &EnvironmentModel,
    n_max: u64,
    streams: ReplicateStreams,
    opts: SimOptions,
) -> (Trajectory, SparseEnvironment) {
    let mut proc = BpsreProcess::new(model, streams, opts);
    let mut values = Vec::with_capacity(n_max as usize + 1);
    values.push(proc.z().clone());
    for _ in 0..n_max {
        proc.step();
        values.push(proc.z().clone());
    }
    (Trajectory { values }, proc.into_env())
}

/// Extinction generation capped at n_max; u64::MAX means alive at n_max.
/// This is the shared-trajectory record the survival estimators consume.
pub fn bpsre_extinction_capped(
    model: &EnvironmentModel,
    n_max: u64,
    streams: ReplicateStreams,
    opts: SimOptions,
) -> u64 {
    let mut proc = BpsreProcess::new(model, streams, opts);
    while proc.generation() < n_max {
        if proc.is_extinct() {
            return proc.generation();
        }
        proc.step();
    }
    if proc.is_extinct() {
        proc.generation()
    } else {
        u64::MAX
    }
}

/// Log-population at the requested generations, or None if the path dies
/// before the last one. `gens` must be nondecreasing.
pub fn bpsre_log_population_at(
    model: &EnvironmentModel,
    gens: &[u64],
    streams: ReplicateStreams,
    opts: SimOptions,
) -> Option<Vec<f64>> {
    let mut proc = BpsreProcess::new(model, streams, opts);
    let mut out = Vec::with_capacity(gens.len());
    for &g in gens {
        proc.run_to(g);
        if proc.is_extinct() {
            return None;
        }
        out.push(crate::numeric::ln_biguint(proc.z()));
    }
    Some(out)
}

/// Plain Galton-Watson process with a single offspring law.
pub fn simulate_gw(
    mu: &OffspringLaw,
    n_max: u64,
    rng: &mut impl Rng,
    opts: SimOptions,
) -> Trajectory {
    let mut values = Vec::with_capacity(n_max as usize + 1);
    let mut z = BigUint::one();
    values.push(z.clone());
    for _ in 0..n_max {
        if !z.is_zero() {
            z = mu.sample_total(&z, opts.pmf_exact_cap, rng);
        }
        values.push(z.clone());
    }
    Trajectory { values }
}

/// Simulate a quenched spec: generation i reproduces with laws[i].
pub fn simulate_quenched(
    laws: &[OffspringLaw],
    rng: &mut impl Rng,
    opts: SimOptions,
) -> Trajectory {
    let mut values = Vec::with_capacity(laws.len() + 1);
    let mut z = BigUint::one();
    values.push(z.clone());
    for law in laws {
        if !z.is_zero() {
            z = law.sample_total(&z, opts.pmf_exact_cap, rng);
        }
        values.push(z.clone());
    }
    Trajectory { values }
}

/// Direct mark-to-mark simulator of the embedded process: one embedded step
/// is a nu_k reproduction followed by d_k - 1 plain generations.
pub fn simulate_embedded_direct(
    model: &EnvironmentModel,
    k_max: u64,
    streams: ReplicateStreams,
    opts: SimOptions,
) -> (EmbeddedTrajectory, SparseEnvironment) {
    let mut env = model.draw_environment(0, streams.env_gaps, streams.env_laws);
    env.ensure_pairs(k_max as usize);
    let mut rng = streams.offspring;
    let mu = model.mu();
    let mut z = BigUint::one();
    let mut values = Vec::with_capacity(k_max as usize + 1);
    values.push(z.clone());
    for k in 0..k_max as usize {
        if !z.is_zero() {
            z = env
                .law_at_mark(k)
                .sample_total(&z, opts.pmf_exact_cap, &mut rng);
            let d = env.gaps()[k];
            for _ in 1..d {
                if z.is_zero() {
                    break;
                }
                z = mu.sample_total(&z, opts.pmf_exact_cap, &mut rng);
            }
        }
        values.push(z.clone());
    }
    (EmbeddedTrajectory { values }, env)
}

/// Embedded process as the restriction of a full path to its marks. Must
/// agree in law with the direct variant.
pub fn simulate_embedded_restriction(
    model: &EnvironmentModel,
    k_max: u64,
    streams: ReplicateStreams,
    opts: SimOptions,
) -> (EmbeddedTrajectory, SparseEnvironment) {
    let mut proc = BpsreProcess::new(model, streams, opts);
    proc.env.ensure_pairs(k_max as usize);
    let marks: Vec<u64> = proc.env.marks()[..=k_max as usize].to_vec();
    let mut values = Vec::with_capacity(marks.len());
    for &s in &marks {
        proc.run_to(s);
        values.push(proc.z().clone());
    }
    (EmbeddedTrajectory { values }, proc.into_env())
}

/// Embedded extinction index capped at k_max; u64::MAX means alive.
pub fn embedded_extinction_capped(
    model: &EnvironmentModel,
    k_max: u64,
    streams: ReplicateStreams,
    opts: SimOptions,
) -> u64 {
    let mut env = model.draw_environment(0, streams.env_gaps, streams.env_laws);
    let mut rng = streams.offspring;
    let mu = model.mu();
    let mut z = BigUint::one();
    for k in 0..k_max as usize {
        if z.is_zero() {
            return k as u64;
        }
        env.ensure_pairs(k + 1);
        z = env
            .law_at_mark(k)
            .sample_total(&z, opts.pmf_exact_cap, &mut rng);
        let d = env.gaps()[k];
        for _ in 1..d {
            if z.is_zero() {
                break;
            }
            z = mu.sample_total(&z, opts.pmf_exact_cap, &mut rng);
        }
    }
    if z.is_zero() {
        k_max
    } else {
        u64::MAX
    }
}
