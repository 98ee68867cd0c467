//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `--nocapture` to see them). Every tolerance is pinned here.

use bpsre_cli::{run, Config, ExperimentKind, OutputFormat, RunRequest};
use bpsre_core::embedding::EmbeddedLawView;
use bpsre_core::environment::{EnvironmentModel, GapLaw, LogMeanLaw, NuGenerator};
use bpsre_core::numeric::kolmogorov_critical;
use bpsre_core::offspring::OffspringLaw;
use bpsre_core::oracle::{check_binomial_tail_lemma, check_max_lemma, exact_survival_quenched, QuenchedSpec};
use bpsre_core::process::{bpsre_extinction_capped, simulate_quenched, SimOptions};
use bpsre_core::reference::meander_marginals;
use bpsre_core::rng::{Seeder, StreamRole};
use bpsre_core::stats::{
    constant_ratio_check, estimate_embedded_survival_curve, estimate_survival_curve,
    ks_one_sample, ks_two_sample, ks_two_sample_critical, wilson_interval, yaglom_sample,
};
use bpsre_core::{builtin_critical_models, rayleigh_cdf};
use num_traits::Zero;
use rand::Rng;
use rayon::prelude::*;

const MASTER_SEED: u64 = 20260809;

fn seeder() -> Seeder {
    Seeder::new(MASTER_SEED)
}

fn verdict(id: &str, name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {id} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
}

/// Plateau model for the tail criteria: geometric gaps with m = 3,
/// two-point log-mean with c = 0.7, Poisson plain law.
fn plateau_model() -> EnvironmentModel {
    EnvironmentModel::new(
        GapLaw::geometric(3.0).unwrap(),
        NuGenerator::GeometricRandomMean {
            log_mean: LogMeanLaw::TwoPoint { c: 0.7 },
        },
        OffspringLaw::poisson(1.0).unwrap(),
    )
    .unwrap()
}

/// Conditioned-limit model: geometric gaps with m = 2, two-point c = 0.8.
fn yaglom_model() -> EnvironmentModel {
    EnvironmentModel::new(
        GapLaw::geometric(2.0).unwrap(),
        NuGenerator::GeometricRandomMean {
            log_mean: LogMeanLaw::TwoPoint { c: 0.8 },
        },
        OffspringLaw::poisson(1.0).unwrap(),
    )
    .unwrap()
}

#[test]
fn c1_oracle_equivalence() {
    // 20 random finite-support quenched specs, n <= 16; Monte Carlo at 1e5
    // replicates within 3 Wilson standard errors of the exact value in at
    // least 19 of 20 cases.
    let seeder = seeder();
    let mut spec_rng = seeder.stream("acc-c1-specs", 0, StreamRole::Aux);
    let mut hits = 0u32;
    let mut details = Vec::new();
    for case in 0..20u64 {
        let n_gens = 4 + (spec_rng.random::<u64>() % 13) as usize;
        let mut pmfs = Vec::with_capacity(n_gens);
        for _ in 0..n_gens {
            loop {
                let raw: Vec<f64> = (0..4).map(|_| spec_rng.random::<f64>()).collect();
                let total: f64 = raw.iter().sum();
                let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
                let mean: f64 = weights.iter().enumerate().map(|(j, w)| j as f64 * w).sum();
                if (0.5..=1.2).contains(&mean) {
                    // renormalize exactly to absorb the division rounding
                    let sum: f64 = weights.iter().sum();
                    let mut weights = weights;
                    weights[0] += 1.0 - sum;
                    pmfs.push(weights);
                    break;
                }
            }
        }
        let spec = QuenchedSpec::new(pmfs).unwrap();
        let exact = exact_survival_quenched(&spec, n_gens);
        let laws = spec.offspring_laws();
        let reps = 100_000u64;
        let survivors: u64 = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = seeder.stream(&format!("acc-c1-mc-{case}"), r, StreamRole::Offspring);
                let traj = simulate_quenched(&laws, &mut rng, SimOptions::exact());
                u64::from(!traj.values()[n_gens].is_zero())
            })
            .sum();
        let p_hat = survivors as f64 / reps as f64;
        let (lo, hi) = wilson_interval(survivors, reps);
        let se = (hi - lo) / 2.0 / 1.96;
        if (p_hat - exact).abs() <= 3.0 * se.max(1e-9) {
            hits += 1;
        } else {
            details.push(format!("case {case}: {p_hat:.5} vs {exact:.5}"));
        }
    }
    let pass = hits >= 19;
    verdict(
        "1",
        "oracle equivalence",
        pass,
        &format!("{hits}/20 within 3 Wilson SE; misses: {details:?}"),
    );
    assert!(pass, "only {hits}/20 specs within tolerance: {details:?}");
}

#[test]
fn c2_embedded_law_identities() {
    // 10 parameter sets: |numeric mean - A_nu| <= 1e-6 and
    // |numeric sigma - (sigma_nu + sigma_mu (E d - 1)/A_nu)| <= 1e-4.
    let poisson = || OffspringLaw::poisson(1.0).unwrap();
    let binary = || OffspringLaw::pmf(vec![0.5, 0.0, 0.5]).unwrap();
    let skewed = || OffspringLaw::pmf(vec![0.4, 0.1, 0.3, 0.2]).unwrap();
    let cases: Vec<(OffspringLaw, GapLaw, OffspringLaw)> = vec![
        (OffspringLaw::geometric(2.0).unwrap(), GapLaw::fixed(1).unwrap(), binary()),
        (OffspringLaw::geometric(2.0).unwrap(), GapLaw::fixed(3).unwrap(), binary()),
        (OffspringLaw::geometric(0.8).unwrap(), GapLaw::geometric(2.0).unwrap(), poisson()),
        (OffspringLaw::geometric(1.0).unwrap(), GapLaw::geometric(3.0).unwrap(), poisson()),
        (binary(), GapLaw::geometric(2.5).unwrap(), poisson()),
        (skewed(), GapLaw::fixed(4).unwrap(), binary()),
        (OffspringLaw::poisson(1.5).unwrap(), GapLaw::geometric(2.0).unwrap(), OffspringLaw::geometric(1.0).unwrap()),
        (OffspringLaw::poisson(0.7).unwrap(), GapLaw::pmf(vec![0.5, 0.0, 0.0, 0.5]).unwrap(), binary()),
        (OffspringLaw::geometric(1.3).unwrap(), GapLaw::pmf(vec![0.25, 0.25, 0.25, 0.25]).unwrap(), poisson()),
        (skewed(), GapLaw::geometric(4.0).unwrap(), OffspringLaw::geometric(1.0).unwrap()),
    ];
    assert_eq!(cases.len(), 10);
    let mut worst_mean = 0.0f64;
    let mut worst_sigma = 0.0f64;
    for (nu, gaps, mu) in cases {
        let view = EmbeddedLawView::new(nu, gaps, mu);
        let mean_err = (view.mean_numeric() - view.mean()).abs();
        let sigma_err = (view.sigma_numeric() - view.sigma_formula()).abs();
        worst_mean = worst_mean.max(mean_err);
        worst_sigma = worst_sigma.max(sigma_err);
    }
    let pass = worst_mean <= 1e-6 && worst_sigma <= 1e-4;
    verdict(
        "2",
        "embedded-law identities",
        pass,
        &format!("max |A dev| = {worst_mean:.2e}, max |sigma dev| = {worst_sigma:.2e}"),
    );
    assert!(pass, "mean dev {worst_mean}, sigma dev {worst_sigma}");
}

#[test]
fn c3_survival_tail_plateau() {
    // sqrt(n) p_hat at n in {2^9..2^12} from 1e6 shared trajectories:
    // consecutive ratios within [0.85, 1.15] for the last two pairs.
    let model = plateau_model();
    let table = estimate_survival_curve(
        &model,
        &[512, 1024, 2048, 4096],
        1_000_000,
        SimOptions::default(),
        &seeder(),
        "acc-c3",
    );
    let v: Vec<f64> = table.rows.iter().map(|r| r.sqrt_n_p_hat).collect();
    let r1 = v[2] / v[1];
    let r2 = v[3] / v[2];
    let pass = (0.85..=1.15).contains(&r1) && (0.85..=1.15).contains(&r2);
    verdict(
        "3",
        "survival-tail plateau",
        pass,
        &format!("sqrt(n) p_hat = {v:?}, last ratios {r1:.4}, {r2:.4}"),
    );
    assert!(pass, "ratios {r1}, {r2} outside [0.85, 1.15]");
}

#[test]
fn c4_constant_ratio() {
    // C_sparse / C_embed within 10% of sqrt(m) for m in {1, 2, 3}; the
    // m = 1 ratio CI must contain 1.
    let grid = [512u64, 1024, 2048, 4096];
    let mut pass = true;
    let mut details = Vec::new();
    for m in [1u64, 2, 3] {
        let model = EnvironmentModel::new(
            GapLaw::geometric(m as f64).unwrap(),
            NuGenerator::GeometricRandomMean {
                log_mean: LogMeanLaw::TwoPoint { c: 0.7 },
            },
            OffspringLaw::poisson(1.0).unwrap(),
        )
        .unwrap();
        let sparse = estimate_survival_curve(
            &model,
            &grid,
            1_000_000,
            SimOptions::default(),
            &seeder(),
            &format!("acc-c4-sparse-m{m}"),
        );
        let embedded = estimate_embedded_survival_curve(
            &model,
            &grid,
            1_000_000,
            SimOptions::default(),
            &seeder(),
            &format!("acc-c4-embedded-m{m}"),
        );
        let report = constant_ratio_check(&sparse, &embedded, m as f64);
        let within = (report.ratio / report.target - 1.0).abs() <= 0.10;
        let mut ok = within;
        if m == 1 {
            ok = ok && report.ratio_ci.0 <= 1.0 && 1.0 <= report.ratio_ci.1;
        }
        details.push(format!(
            "m={m}: ratio {:.4} vs {:.4}, ci [{:.4}, {:.4}]",
            report.ratio, report.target, report.ratio_ci.0, report.ratio_ci.1
        ));
        pass = pass && ok;
    }
    verdict("4", "constant ratio", pass, &details.join("; "));
    assert!(pass, "{details:?}");
}

#[test]
fn c5_yaglom_rayleigh() {
    // conditioned normalized log Z_n at n = 4096 with 5e3 survivors:
    // one-sample KS distance to 1 - exp(-x^2/2) at most 0.05.
    let model = yaglom_model();
    let sample = yaglom_sample(
        &model,
        4096,
        &[1.0],
        5_000,
        50_000_000,
        SimOptions::default(),
        &seeder(),
        "acc-c5",
    )
    .expect("survivor quota reachable");
    let ks = ks_one_sample(&sample.at(0), rayleigh_cdf).unwrap();
    let pass = ks.d <= 0.05;
    verdict(
        "5",
        "Yaglom endpoint vs Rayleigh",
        pass,
        &format!(
            "KS = {:.4} (5e3 survivors from {} replicates)",
            ks.d, sample.total_replicates
        ),
    );
    assert!(pass, "KS {} > 0.05", ks.d);
}

#[test]
fn c6_meander_reference() {
    // endpoint sampler against the Rayleigh law, and the conditioned
    // log-population at t = 1/2 against the meander marginal.
    let seeder = seeder();
    let marginals = meander_marginals(10_000, 100_000, &[0.5, 1.0], &seeder, "acc-c6-meander")
        .expect("sampler does not degenerate at these resolutions");
    let endpoint_ks = ks_one_sample(&marginals.samples[1], rayleigh_cdf).unwrap();
    let endpoint_ok = endpoint_ks.d <= 0.01;

    let model = yaglom_model();
    let sample = yaglom_sample(
        &model,
        4096,
        &[0.5, 1.0],
        5_000,
        50_000_000,
        SimOptions::default(),
        &seeder,
        "acc-c6-yaglom",
    )
    .expect("survivor quota reachable");
    let mid = sample.at(0);
    let d = ks_two_sample(&mid, &marginals.samples[0]).unwrap();
    let allowance = 2.0 * ks_two_sample_critical(0.001, mid.len(), marginals.samples[0].len());
    let mid_ok = d < allowance;
    let pass = endpoint_ok && mid_ok;
    verdict(
        "6",
        "meander reference",
        pass,
        &format!(
            "endpoint KS = {:.5} (<= 0.01); t=1/2 two-sample KS = {:.5} (< {allowance:.5})",
            endpoint_ks.d, d
        ),
    );
    assert!(endpoint_ok, "endpoint KS {} > 0.01", endpoint_ks.d);
    assert!(mid_ok, "two-sample KS {d} >= {allowance}");
}

#[test]
fn c7_lemma_sweeps() {
    // binomial tail bound, exhaustively over the configured grid; then the
    // population-maximum bound with 3 SE slack on every built-in model.
    let mut binomial_failures = 0u64;
    for n in 1..=200u64 {
        for pi in 1..=9u32 {
            let p = pi as f64 / 10.0;
            for xi in 1..=9u32 {
                let x = p * xi as f64 / 10.0;
                if !check_binomial_tail_lemma(n, p, x).unwrap().holds {
                    binomial_failures += 1;
                }
            }
        }
    }
    let seeder = seeder();
    let mut max_rows = Vec::new();
    let mut max_ok = true;
    for (idx, (name, model)) in builtin_critical_models().iter().enumerate() {
        let mut rng = seeder.stream("acc-c7-max", idx as u64, StreamRole::Aux);
        let check = check_max_lemma(model.mu(), model.gaps(), 1_000_000, &mut rng);
        // holds with slack, and in fact bounded away from the limit
        let strict = check.estimate + 3.0 * check.se <= check.bound;
        max_ok = max_ok && check.holds && strict;
        max_rows.push(format!(
            "{name}: {:.4}+-{:.4} <= {:.1}",
            check.estimate, check.se, check.bound
        ));
    }
    let pass = binomial_failures == 0 && max_ok;
    verdict(
        "7",
        "lemma sweeps",
        pass,
        &format!(
            "binomial failures {binomial_failures}/16200; max bound: {}",
            max_rows.join("; ")
        ),
    );
    assert!(pass, "binomial failures {binomial_failures}, max rows {max_rows:?}");
}

#[test]
fn c8_almost_sure_extinction_proxy() {
    // >= 95% of 1e4 trajectories extinct by n = 1e4 for every built-in
    // critical model.
    let seeder = seeder();
    let mut pass = true;
    let mut details = Vec::new();
    for (name, model) in builtin_critical_models() {
        let reps = 10_000u64;
        let extinct: u64 = (0..reps)
            .into_par_iter()
            .map(|r| {
                let tau = bpsre_extinction_capped(
                    &model,
                    10_000,
                    seeder.replicate(&format!("acc-c8-{name}"), r),
                    SimOptions::default(),
                );
                u64::from(tau != u64::MAX)
            })
            .sum();
        let frac = extinct as f64 / reps as f64;
        details.push(format!("{name}: {frac:.4}"));
        pass = pass && frac >= 0.95;
    }
    verdict("8", "almost-sure extinction proxy", pass, &details.join("; "));
    assert!(pass, "{details:?}");
}

#[test]
fn c9_determinism_across_worker_counts() {
    // identical result bytes for a fixed seed at 1 and 8 workers, through
    // the full runner (survival table + metadata, and a yaglom sample).
    let dir = tempfile::tempdir().unwrap();
    let config_text = r#"{
        "model": {
            "gaps": {"type": "geometric", "mean": 3.0},
            "nu": {"type": "lf_random_mean", "log_mean_law": {"type": "two_point", "c": 0.7}},
            "mu": {"type": "poisson", "mean": 1.0}
        },
        "master_seed": 42,
        "survival": {"n_grid": [16, 64, 256], "replicates": 20000},
        "yaglom": {"n": 128, "t_grid": [0.5, 1.0], "target_survivors": 100, "max_replicates": 1000000},
        "assumptions_sample_size": 10000
    }"#;
    let mut outputs: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for workers in [1usize, 8] {
        let sub = dir.path().join(format!("w{workers}"));
        std::fs::create_dir_all(&sub).unwrap();
        for (kind, name) in [
            (ExperimentKind::Survival, "survival.csv"),
            (ExperimentKind::Yaglom, "yaglom.csv"),
        ] {
            let request = RunRequest {
                kind,
                config: Config::from_json(config_text).unwrap(),
                out: sub.join(name),
                format: OutputFormat::Csv,
                workers,
            };
            run(&request).unwrap();
        }
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&sub)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    std::fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    let names: Vec<&String> = outputs[0].iter().map(|(n, _)| n).collect();
    let pass = outputs[0] == outputs[1];
    verdict(
        "9",
        "determinism across worker counts",
        pass,
        &format!("{} files byte-compared: {names:?}", names.len()),
    );
    assert!(pass, "outputs differ between 1 and 8 workers");
}
