//! Simulation and verification laboratory for critical branching processes
//! in a sparse random environment: between randomly placed marks the
//! population reproduces with one fixed critical law, while each marked
//! generation draws a random offspring law. The crate provides the direct
//! and embedded simulators, analytic views of the embedded law, exact
//! small-case oracles, survival-curve and conditioned-limit estimators, and
//! a Brownian meander reference sampler.

pub mod embedding;
pub mod environment;
pub mod numeric;
pub mod offspring;
pub mod oracle;
pub mod process;
pub mod reference;
pub mod rng;
pub mod scalar;
pub mod stats;

/// Concrete scalar used by the simulation and statistics layers.
pub type Real = f64;
/// Arbitrary-precision population count.
pub type Count = num_bigint::BigUint;

pub use embedding::{EmbedCheckRow, EmbeddedLawView};
pub use environment::{
    AssumptionReport, EnvironmentModel, GapLaw, LogMeanLaw, NuGenerator, SparseEnvironment,
};
pub use offspring::OffspringLaw;
pub use oracle::QuenchedSpec;
pub use process::{
    simulate_bpsre, simulate_embedded_direct, simulate_embedded_restriction, simulate_gw,
    BpsreProcess, EmbeddedTrajectory, ExtinctionTime, SimOptions, Trajectory,
};
pub use reference::{rayleigh_cdf, sample_meander, MeanderPath};
pub use rng::{Seeder, StreamRole};
pub use stats::{
    constant_ratio_check, estimate_embedded_survival_curve, estimate_survival_curve,
    ks_one_sample, ks_two_sample, wilson_interval, yaglom_sample, RatioReport, SurvivalTable,
    YaglomSample,
};

/// The critical models exercised by default in the lemma and extinction
/// sweeps.
pub fn builtin_critical_models() -> Vec<(String, EnvironmentModel)> {
    let two_point = |c: f64| NuGenerator::GeometricRandomMean {
        log_mean: LogMeanLaw::TwoPoint { c },
    };
    vec![
        (
            "two-point c=0.7, geometric gaps m=3, poisson plain".into(),
            EnvironmentModel::new(
                GapLaw::geometric(3.0).unwrap(),
                two_point(0.7),
                OffspringLaw::poisson(1.0).unwrap(),
            )
            .unwrap(),
        ),
        (
            "two-point c=0.8, fixed gaps d=2, binary plain".into(),
            EnvironmentModel::new(
                GapLaw::fixed(2).unwrap(),
                two_point(0.8),
                OffspringLaw::pmf(vec![0.5, 0.0, 0.5]).unwrap(),
            )
            .unwrap(),
        ),
        (
            "discrete-gaussian sd=0.5, geometric gaps m=2, poisson plain".into(),
            EnvironmentModel::new(
                GapLaw::geometric(2.0).unwrap(),
                NuGenerator::GeometricRandomMean {
                    log_mean: LogMeanLaw::DiscreteGaussian {
                        sd: 0.5,
                        half_points: 8,
                    },
                },
                OffspringLaw::poisson(1.0).unwrap(),
            )
            .unwrap(),
        ),
        (
            "two-point c=0.6, unit gaps (dense reduction), geometric plain".into(),
            EnvironmentModel::new(
                GapLaw::fixed(1).unwrap(),
                two_point(0.6),
                OffspringLaw::geometric(1.0).unwrap(),
            )
            .unwrap(),
        ),
    ]
}
