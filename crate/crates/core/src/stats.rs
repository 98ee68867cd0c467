//! Estimators and hypothesis tests confronting simulation output with the
//! limit behavior: survival curves with Wilson intervals, the constant-ratio
//! check between the direct and embedded curves, conditioned Yaglom samples,
//! and Kolmogorov-Smirnov machinery.

use crate::environment::EnvironmentModel;
use crate::numeric::kolmogorov_critical;
use crate::process::{
    bpsre_extinction_capped, bpsre_log_population_at, embedded_extinction_capped, SimOptions,
};
use crate::rng::Seeder;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("survivor quota {target} not reached within {budget} replicates ({found} found)")]
    BudgetExceeded {
        target: u64,
        budget: u64,
        found: u64,
        partial: Box<YaglomSample>,
    },
    #[error("normalization scale {0:.3} below the sanity floor 5")]
    ScaleTooSmall(f64),
}

/// z for the 95% Wilson score interval.
const WILSON_Z: f64 = 1.959963984540054;

/// Wilson 95% score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // the score interval contains p-hat by construction; absorb the last-ulp
    // rounding so callers can rely on it exactly
    (
        (center - half).clamp(0.0, 1.0).min(p),
        (center + half).clamp(0.0, 1.0).max(p),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalRow {
    pub n: u64,
    pub replicates: u64,
    pub survivors: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub sqrt_n_p_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalTable {
    pub rows: Vec<SurvivalRow>,
}

impl SurvivalTable {
    /// Build from per-replicate extinction records (u64::MAX = censored).
    /// Counting is commutative, so worker output order cannot matter.
    pub fn from_extinction_records(grid: &[u64], records: &[u64]) -> Self {
        let replicates = records.len() as u64;
        let rows = grid
            .iter()
            .map(|&n| {
                let survivors = records.iter().filter(|&&tau| tau > n).count() as u64;
                let p_hat = survivors as f64 / replicates as f64;
                let (ci_lo, ci_hi) = wilson_interval(survivors, replicates);
                SurvivalRow {
                    n,
                    replicates,
                    survivors,
                    p_hat,
                    ci_lo,
                    ci_hi,
                    sqrt_n_p_hat: (n as f64).sqrt() * p_hat,
                }
            })
            .collect();
        SurvivalTable { rows }
    }

    pub fn last(&self) -> &SurvivalRow {
        self.rows.last().expect("nonempty grid")
    }
}

/// Survival frequencies P{Z_n > 0} over an increasing grid, all rows served
/// by one shared set of trajectories simulated to the largest n.
pub fn estimate_survival_curve(
    model: &EnvironmentModel,
    n_grid: &[u64],
    replicates: u64,
    opts: SimOptions,
    seeder: &Seeder,
    tag: &str,
) -> SurvivalTable {
    assert!(!n_grid.is_empty() && n_grid.windows(2).all(|w| w[0] < w[1]));
    let n_max = *n_grid.last().unwrap();
    let records: Vec<u64> = (0..replicates)
        .into_par_iter()
        .map(|r| bpsre_extinction_capped(model, n_max, seeder.replicate(tag, r), opts))
        .collect();
    SurvivalTable::from_extinction_records(n_grid, &records)
}

/// Survival of the embedded process P{Z_{S_k} > 0} over a grid of mark
/// counts.
pub fn estimate_embedded_survival_curve(
    model: &EnvironmentModel,
    k_grid: &[u64],
    replicates: u64,
    opts: SimOptions,
    seeder: &Seeder,
    tag: &str,
) -> SurvivalTable {
    assert!(!k_grid.is_empty() && k_grid.windows(2).all(|w| w[0] < w[1]));
    let k_max = *k_grid.last().unwrap();
    let records: Vec<u64> = (0..replicates)
        .into_par_iter()
        .map(|r| embedded_extinction_capped(model, k_max, seeder.replicate(tag, r), opts))
        .collect();
    SurvivalTable::from_extinction_records(k_grid, &records)
}

/// Relative spread of the last two plateau values before the ratio check
/// reports the plateau as unreached.
pub const PLATEAU_BAND: f64 = 0.15;
/// Acceptance band around sqrt(m) for the constant ratio.
pub const RATIO_BAND: f64 = 0.10;

#[derive(Debug, Clone, Serialize)]
pub struct RatioReport {
    pub c_sparse: f64,
    pub c_embedded: f64,
    pub ratio: f64,
    pub ratio_ci: (f64, f64),
    pub target: f64,
    pub sparse_plateau_ok: bool,
    pub embedded_plateau_ok: bool,
    pub pass: bool,
}

/// Compare the plateau constants of the two curves against sqrt(m).
///
/// The pass flag holds when the propagated CI contains sqrt(m) or the point
/// ratio is within 10% of it; a plateau flag drops when the last two
/// sqrt(n) p-hat values of a curve differ by more than 15%.
pub fn constant_ratio_check(
    sparse: &SurvivalTable,
    embedded: &SurvivalTable,
    m: f64,
) -> RatioReport {
    let plateau_ok = |t: &SurvivalTable| -> bool {
        if t.rows.len() < 2 {
            return false;
        }
        let a = t.rows[t.rows.len() - 2].sqrt_n_p_hat;
        let b = t.rows[t.rows.len() - 1].sqrt_n_p_hat;
        b > 0.0 && ((a / b) - 1.0).abs() <= PLATEAU_BAND
    };
    let s = sparse.last();
    let e = embedded.last();
    let c_sparse = s.sqrt_n_p_hat;
    let c_embedded = e.sqrt_n_p_hat;
    let ratio = c_sparse / c_embedded;
    let sn = (s.n as f64).sqrt();
    let en = (e.n as f64).sqrt();
    let ratio_ci = (
        sn * s.ci_lo / (en * e.ci_hi),
        sn * s.ci_hi / (en * e.ci_lo),
    );
    let target = m.sqrt();
    let in_ci = ratio_ci.0 <= target && target <= ratio_ci.1;
    let within_band = (ratio / target - 1.0).abs() <= RATIO_BAND;
    RatioReport {
        c_sparse,
        c_embedded,
        ratio,
        ratio_ci,
        target,
        sparse_plateau_ok: plateau_ok(sparse),
        embedded_plateau_ok: plateau_ok(embedded),
        pass: in_ci || within_band,
    }
}

/// Conditioned, normalized log-population sample at one horizon.
#[derive(Debug, Clone, Serialize)]
pub struct YaglomSample {
    pub n: u64,
    pub t_grid: Vec<f64>,
    /// values[s][i] = log Z_{floor(n t_grid[i])} / scale for survivor s.
    pub values: Vec<Vec<f64>>,
    pub survivors: u64,
    pub total_replicates: u64,
    pub scale: f64,
}

impl YaglomSample {
    /// Sample of the normalized value at one grid time.
    pub fn at(&self, idx: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[idx]).collect()
    }
}

const YAGLOM_BATCH: u64 = 16_384;

/// Simulate until `target_survivors` paths survive to n, recording the
/// normalized log population on the time grid. The survivor quota (rather
/// than a fixed replicate count) pins the conditional sample size the KS
/// power depends on; totals are recorded so the implied survival rate stays
/// available.
pub fn yaglom_sample(
    model: &EnvironmentModel,
    n: u64,
    t_grid: &[f64],
    target_survivors: u64,
    max_replicates: u64,
    opts: SimOptions,
    seeder: &Seeder,
    tag: &str,
) -> Result<YaglomSample, StatsError> {
    let m = model.gap_mean();
    let v = model.log_mean_variance().sqrt();
    let scale = v * (n as f64 / m).sqrt();
    if scale < 5.0 {
        return Err(StatsError::ScaleTooSmall(scale));
    }
    yaglom_sample_with_scale(model, n, t_grid, target_survivors, max_replicates, scale, opts, seeder, tag)
}

/// As `yaglom_sample` but with the normalization scale supplied directly
/// (degenerate test models have v = 0).
#[allow(clippy::too_many_arguments)]
pub fn yaglom_sample_with_scale(
    model: &EnvironmentModel,
    n: u64,
    t_grid: &[f64],
    target_survivors: u64,
    max_replicates: u64,
    scale: f64,
    opts: SimOptions,
    seeder: &Seeder,
    tag: &str,
) -> Result<YaglomSample, StatsError> {
    assert!(target_survivors >= 1);
    assert!(!t_grid.is_empty() && t_grid.iter().all(|&t| (0.0..=1.0).contains(&t)));
    assert!(t_grid.windows(2).all(|w| w[0] <= w[1]), "t grid must be sorted");
    let mut gens: Vec<u64> = t_grid.iter().map(|&t| (n as f64 * t).floor() as u64).collect();
    // observation points must include n itself for the conditioning event
    if gens.last() != Some(&n) {
        gens.push(n);
    }
    let record_last = gens.len() == t_grid.len();

    let mut values: Vec<Vec<f64>> = Vec::with_capacity(target_survivors as usize);
    let mut processed = 0u64;
    let mut total_replicates = 0u64;
    'outer: while processed < max_replicates {
        let batch = YAGLOM_BATCH.min(max_replicates - processed);
        let rows: Vec<Option<Vec<f64>>> = (processed..processed + batch)
            .into_par_iter()
            .map(|r| bpsre_log_population_at(model, &gens, seeder.replicate(tag, r), opts))
            .collect();
        for (offset, row) in rows.into_iter().enumerate() {
            if let Some(mut logs) = row {
                if !record_last {
                    logs.pop();
                }
                values.push(logs.iter().map(|&l| l / scale).collect());
                if values.len() as u64 == target_survivors {
                    total_replicates = processed + offset as u64 + 1;
                    break 'outer;
                }
            }
        }
        processed += batch;
    }
    if (values.len() as u64) < target_survivors {
        return Err(StatsError::BudgetExceeded {
            target: target_survivors,
            budget: max_replicates,
            found: values.len() as u64,
            partial: Box::new(YaglomSample {
                n,
                t_grid: t_grid.to_vec(),
                values,
                survivors: 0,
                total_replicates: processed,
                scale,
            }),
        });
    }
    let survivors = values.len() as u64;
    Ok(YaglomSample {
        n,
        t_grid: t_grid.to_vec(),
        values,
        survivors,
        total_replicates,
        scale,
    })
}

/// One-sample Kolmogorov-Smirnov statistic with asymptotic critical values.
#[derive(Debug, Clone, Serialize)]
pub struct KsOneSample {
    pub d: f64,
    pub n: usize,
    /// (alpha, critical value) at 10%, 5%, 1%, 0.1%.
    pub critical: Vec<(f64, f64)>,
}

impl KsOneSample {
    pub fn critical_at(&self, alpha: f64) -> f64 {
        kolmogorov_critical(alpha) / (self.n as f64).sqrt()
    }
}

pub const KS_ALPHAS: [f64; 4] = [0.10, 0.05, 0.01, 0.001];

/// D = sup_x |F_hat(x) - F(x)|, evaluated with both one-sided gaps at the
/// sorted sample points.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsOneSample, StatsError> {
    if sample.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / nf);
        d = d.max((i + 1) as f64 / nf - f);
    }
    let critical = KS_ALPHAS
        .iter()
        .map(|&a| (a, kolmogorov_critical(a) / nf.sqrt()))
        .collect();
    Ok(KsOneSample { d, n, critical })
}

/// Two-sample KS statistic (symmetric; ties handled by advancing both
/// samples past each merged value before comparing).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// Asymptotic two-sample critical value at level alpha.
pub fn ks_two_sample_critical(alpha: f64, n: usize, m: usize) -> f64 {
    kolmogorov_critical(alpha) * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{GapLaw, LogMeanLaw, NuGenerator};
    use crate::offspring::OffspringLaw;
    use proptest::prelude::*;

    #[test]
    fn wilson_contains_p_hat() {
        for (s, t) in [(0u64, 10u64), (10, 10), (3, 17), (500, 100_000)] {
            let (lo, hi) = wilson_interval(s, t);
            let p = s as f64 / t as f64;
            assert!(lo <= p && p <= hi, "({s}, {t})");
            assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }
    }

    proptest! {
        #[test]
        fn wilson_interval_well_formed(s in 0u64..1000, extra in 0u64..1000) {
            let t = s + extra.max(1);
            let (lo, hi) = wilson_interval(s, t);
            let p = s as f64 / t as f64;
            prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
            prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }
    }

    #[test]
    fn survival_table_is_exactly_monotone() {
        let records = vec![3u64, 10, u64::MAX, 7, 2, u64::MAX, 40, 5];
        let grid = vec![2u64, 5, 10, 20, 40];
        let table = SurvivalTable::from_extinction_records(&grid, &records);
        for w in table.rows.windows(2) {
            assert!(w[0].survivors >= w[1].survivors);
        }
        assert_eq!(table.rows[0].survivors, 7); // tau > 2 fails only for tau = 2
    }

    #[test]
    fn survival_table_order_independent() {
        let grid = vec![1u64, 4, 9];
        let mut records = vec![3u64, 10, u64::MAX, 7, 2, 9, 1, 4];
        let a = SurvivalTable::from_extinction_records(&grid, &records);
        records.reverse();
        records.swap(0, 3);
        let b = SurvivalTable::from_extinction_records(&grid, &records);
        assert_eq!(a, b);
    }

    #[test]
    fn immortal_model_survival_is_one() {
        let model = EnvironmentModel::new(
            GapLaw::fixed(2).unwrap(),
            NuGenerator::Fixed {
                law: OffspringLaw::delta(1),
            },
            OffspringLaw::delta(1),
        )
        .unwrap();
        let seeder = Seeder::new(5);
        let table = estimate_survival_curve(
            &model,
            &[1, 4, 16],
            200,
            SimOptions::default(),
            &seeder,
            "immortal",
        );
        for row in &table.rows {
            assert_eq!(row.p_hat, 1.0);
        }
    }

    #[test]
    fn ratio_on_synthetic_exact_tables() {
        // p_hat = c / sqrt(n) exactly => ratio = c_sparse / c_embed exactly
        let synth = |c: f64| -> SurvivalTable {
            let grid = [1024u64, 4096];
            SurvivalTable {
                rows: grid
                    .iter()
                    .map(|&n| {
                        let p = c / (n as f64).sqrt();
                        SurvivalRow {
                            n,
                            replicates: 1,
                            survivors: 0,
                            p_hat: p,
                            ci_lo: p,
                            ci_hi: p,
                            sqrt_n_p_hat: (n as f64).sqrt() * p,
                        }
                    })
                    .collect(),
            }
        };
        let report = constant_ratio_check(&synth(1.3), &synth(0.65), 4.0);
        assert!((report.ratio - 2.0).abs() < 1e-12);
        assert!(report.sparse_plateau_ok && report.embedded_plateau_ok);
        assert!(report.pass);

        // plateau flag drops when the last two values differ by > 15%
        let mut bad = synth(1.0);
        bad.rows[0].sqrt_n_p_hat = 2.0;
        let report = constant_ratio_check(&bad, &synth(1.0), 1.0);
        assert!(!report.sparse_plateau_ok);
    }

    #[test]
    fn ks_one_sample_golden() {
        // single point at the median of F
        let r = ks_one_sample(&[0.0], |_| 0.5).unwrap();
        assert!((r.d - 0.5).abs() < 1e-15);

        // exact quantiles (i - 0.5) / n
        let n = 50;
        let sample: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let r = ks_one_sample(&sample, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!((r.d - 0.5 / n as f64).abs() < 1e-12);

        assert!(matches!(
            ks_one_sample(&[], |_| 0.0),
            Err(StatsError::EmptySample)
        ));
    }

    #[test]
    fn ks_two_sample_golden() {
        let a = vec![1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a).unwrap(), 0.0);
        assert_eq!(ks_two_sample(&[0.0], &[1.0]).unwrap(), 1.0);
        // symmetry
        let b = vec![0.5, 2.5, 2.5, 4.0];
        let d1 = ks_two_sample(&a, &b).unwrap();
        let d2 = ks_two_sample(&b, &a).unwrap();
        assert_eq!(d1, d2);
        assert!(matches!(
            ks_two_sample(&[], &[1.0]),
            Err(StatsError::EmptySample)
        ));
    }

    #[test]
    fn ks_two_sample_with_ties_matches_enumeration() {
        let a = vec![1.0, 1.0, 4.0, 4.0];
        let b = vec![1.0, 1.0, 1.0, 4.0];
        assert!((ks_two_sample(&a, &b).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn yaglom_rejects_degenerate_scale() {
        let model = EnvironmentModel::new(
            GapLaw::fixed(2).unwrap(),
            NuGenerator::Fixed {
                law: OffspringLaw::delta(2),
            },
            OffspringLaw::delta(1),
        )
        .unwrap();
        let seeder = Seeder::new(1);
        let err = yaglom_sample(
            &model,
            64,
            &[1.0],
            10,
            1000,
            SimOptions::default(),
            &seeder,
            "degenerate",
        );
        assert!(matches!(err, Err(StatsError::ScaleTooSmall(_))));
    }

    #[test]
    fn yaglom_budget_error_carries_partials() {
        // certain extinction by generation 1: the quota can never fill
        let model = EnvironmentModel::new(
            GapLaw::fixed(2).unwrap(),
            NuGenerator::Fixed {
                law: OffspringLaw::delta(0),
            },
            OffspringLaw::delta(1),
        )
        .unwrap();
        let seeder = Seeder::new(2);
        let err = yaglom_sample_with_scale(
            &model,
            16,
            &[1.0],
            5,
            200,
            10.0,
            SimOptions::default(),
            &seeder,
            "budget",
        )
        .unwrap_err();
        match err {
            StatsError::BudgetExceeded {
                target,
                budget,
                found,
                partial,
            } => {
                assert_eq!(target, 5);
                assert_eq!(budget, 200);
                assert_eq!(found, 0);
                assert_eq!(partial.total_replicates, 200);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn yaglom_deterministic_closed_form() {
        // mu = delta_1, nu = delta_2, gaps = delta_2: log Z_n = theta(n-1) log 2
        let model = EnvironmentModel::new(
            GapLaw::fixed(2).unwrap(),
            NuGenerator::Fixed {
                law: OffspringLaw::delta(2),
            },
            OffspringLaw::delta(1),
        )
        .unwrap();
        let n = 64u64;
        let seeder = Seeder::new(3);
        let sample = yaglom_sample_with_scale(
            &model,
            n,
            &[0.5, 1.0],
            20,
            100,
            10.0,
            SimOptions::default(),
            &seeder,
            "closed-form",
        )
        .unwrap();
        // theta(63) = #{k : 2k <= 63} = 32
        let expect_end = 32.0 * std::f64::consts::LN_2 / 10.0;
        let expect_mid = 16.0 * std::f64::consts::LN_2 / 10.0;
        for row in &sample.values {
            assert!((row[1] - expect_end).abs() < 1e-12);
            assert!((row[0] - expect_mid).abs() < 1e-12);
        }
        assert_eq!(sample.survivors, 20);
        assert_eq!(sample.total_replicates, 20);
    }

    #[test]
    fn yaglom_values_at_one_are_nonnegative() {
        let model = EnvironmentModel::new(
            GapLaw::geometric(2.0).unwrap(),
            NuGenerator::GeometricRandomMean {
                log_mean: LogMeanLaw::TwoPoint { c: 0.8 },
            },
            OffspringLaw::poisson(1.0).unwrap(),
        )
        .unwrap();
        let seeder = Seeder::new(7);
        let sample = yaglom_sample(
            &model,
            256,
            &[0.5, 1.0],
            50,
            200_000,
            SimOptions::default(),
            &seeder,
            "nonneg",
        )
        .unwrap();
        assert!(sample.at(1).iter().all(|&v| v >= 0.0));
        assert!(sample.total_replicates >= 50);
    }

    #[test]
    fn ks_calibration_one_and_two_sample() {
        // draws from F itself stay below the 1% critical value in >= 98/100
        // seeded repetitions
        use rand::Rng as _;
        use rand::SeedableRng as _;
        let mut ok1 = 0;
        let mut ok2 = 0;
        let reps = 100;
        let n = 100_000usize;
        for seed in 0..reps {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(900 + seed);
            let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let one = ks_one_sample(&a, |x| x.clamp(0.0, 1.0)).unwrap();
            if one.d < one.critical_at(0.01) {
                ok1 += 1;
            }
            if ks_two_sample(&a, &b).unwrap() < ks_two_sample_critical(0.01, n, n) {
                ok2 += 1;
            }
        }
        assert!(ok1 >= 98, "one-sample calibration: {ok1}/100");
        assert!(ok2 >= 98, "two-sample calibration: {ok2}/100");
    }
}
