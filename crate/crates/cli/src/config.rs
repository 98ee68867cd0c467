//! Experiment configuration: a single JSON file, schema-validated, with
//! every error naming the offending key.

use bpsre_core::environment::{EnvironmentModel, GapLaw, LogMeanLaw, NuGenerator};
use bpsre_core::offspring::OffspringLaw;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
#[error("config error at {key}: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: impl Into<String>, message: impl std::fmt::Display) -> Self {
        ConfigError {
            key: key.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LawConfig {
    Pmf { weights: Vec<f64> },
    Poisson { mean: f64 },
    Geometric { mean: f64 },
}

impl LawConfig {
    fn build(&self, key: &str) -> Result<OffspringLaw, ConfigError> {
        match self {
            LawConfig::Pmf { weights } => OffspringLaw::pmf(weights.clone()),
            LawConfig::Poisson { mean } => OffspringLaw::poisson(*mean),
            LawConfig::Geometric { mean } => OffspringLaw::geometric(*mean),
        }
        .map_err(|e| ConfigError::new(key, e))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GapConfig {
    Pmf { weights: Vec<f64> },
    Geometric { mean: f64 },
    Zeta { exponent: f64 },
    Fixed { value: u64 },
}

impl GapConfig {
    fn build(&self, key: &str) -> Result<GapLaw, ConfigError> {
        match self {
            GapConfig::Pmf { weights } => GapLaw::pmf(weights.clone()),
            GapConfig::Geometric { mean } => GapLaw::geometric(*mean),
            GapConfig::Zeta { exponent } => GapLaw::zeta(*exponent),
            GapConfig::Fixed { value } => GapLaw::fixed(*value),
        }
        .map_err(|e| ConfigError::new(key, e))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogMeanConfig {
    TwoPoint {
        c: f64,
    },
    DiscreteGaussian {
        sd: f64,
        #[serde(default = "default_half_points")]
        half_points: u32,
    },
}

fn default_half_points() -> u32 {
    8
}

impl LogMeanConfig {
    fn build(&self, key: &str) -> Result<LogMeanLaw, ConfigError> {
        match self {
            LogMeanConfig::TwoPoint { c } => {
                if !(c.is_finite() && *c > 0.0) {
                    return Err(ConfigError::new(key, "c must be positive and finite"));
                }
                Ok(LogMeanLaw::TwoPoint { c: *c })
            }
            LogMeanConfig::DiscreteGaussian { sd, half_points } => {
                if !(sd.is_finite() && *sd > 0.0) {
                    return Err(ConfigError::new(key, "sd must be positive and finite"));
                }
                if *half_points == 0 {
                    return Err(ConfigError::new(key, "half_points must be >= 1"));
                }
                Ok(LogMeanLaw::DiscreteGaussian {
                    sd: *sd,
                    half_points: *half_points,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NuConfig {
    LfRandomMean { log_mean_law: LogMeanConfig },
    Fixed { law: LawConfig },
}

impl NuConfig {
    fn build(&self, key: &str) -> Result<NuGenerator, ConfigError> {
        match self {
            NuConfig::LfRandomMean { log_mean_law } => Ok(NuGenerator::GeometricRandomMean {
                log_mean: log_mean_law.build(&format!("{key}.log_mean_law"))?,
            }),
            NuConfig::Fixed { law } => Ok(NuGenerator::Fixed {
                law: law.build(&format!("{key}.law"))?,
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub gaps: GapConfig,
    pub nu: NuConfig,
    pub mu: LawConfig,
}

impl ModelConfig {
    pub fn build(&self) -> Result<EnvironmentModel, ConfigError> {
        let gaps = self.gaps.build("model.gaps")?;
        let nu = self.nu.build("model.nu")?;
        let mu = self.mu.build("model.mu")?;
        EnvironmentModel::new(gaps, nu, mu).map_err(|e| ConfigError::new("model", e))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurvivalParams {
    pub n_grid: Vec<u64>,
    pub replicates: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddedSurvivalParams {
    pub k_grid: Vec<u64>,
    pub replicates: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioParams {
    pub n_grid: Vec<u64>,
    pub k_grid: Vec<u64>,
    pub replicates: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YaglomParams {
    pub n: u64,
    pub t_grid: Vec<f64>,
    pub target_survivors: u64,
    #[serde(default = "default_yaglom_budget")]
    pub max_replicates: u64,
}

fn default_yaglom_budget() -> u64 {
    50_000_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanderParams {
    pub steps: u64,
    pub samples: u64,
    #[serde(default = "default_meander_grid")]
    pub t_grid: Vec<f64>,
}

fn default_meander_grid() -> Vec<f64> {
    (1..=16).map(|i| i as f64 / 16.0).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub n_max: u64,
    #[serde(default = "default_one")]
    pub replicates: u64,
}

fn default_one() -> u64 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedCheckParams {
    #[serde(default = "default_embed_draws")]
    pub draws: u64,
}

fn default_embed_draws() -> u64 {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LemmaParams {
    #[serde(default = "default_lemma_n")]
    pub binomial_max_n: u64,
    #[serde(default = "default_lemma_reps")]
    pub max_lemma_replicates: u64,
}

fn default_lemma_n() -> u64 {
    200
}

fn default_lemma_reps() -> u64 {
    200_000
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survival: Option<SurvivalParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedded_survival: Option<EmbeddedSurvivalParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<RatioParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaglom: Option<YaglomParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flt_paths: Option<YaglomParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meander_ref: Option<MeanderParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_check: Option<EmbedCheckParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemmas: Option<LemmaParams>,
    #[serde(default = "default_assumption_samples")]
    pub assumptions_sample_size: u64,
    #[serde(default = "default_kappa_cutoff")]
    pub kappa_cutoff: u64,
}

fn default_seed() -> u64 {
    0
}

fn default_assumption_samples() -> u64 {
    100_000
}

fn default_kappa_cutoff() -> u64 {
    2
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let message = e.inner().to_string();
            // unknown tag values surface one level up; point at the tag key
            let key = if message.starts_with("unknown variant") && !path.ends_with(".type") {
                format!("{path}.type")
            } else {
                path
            };
            ConfigError { key, message }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        fn grid_ok(key: &str, grid: &[u64]) -> Result<(), ConfigError> {
            if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ConfigError::new(key, "must be nonempty and strictly increasing"));
            }
            Ok(())
        }
        fn positive(key: &str, v: u64) -> Result<(), ConfigError> {
            if v == 0 {
                return Err(ConfigError::new(key, "must be >= 1"));
            }
            Ok(())
        }
        if let Some(p) = &self.survival {
            grid_ok("survival.n_grid", &p.n_grid)?;
            positive("survival.replicates", p.replicates)?;
        }
        if let Some(p) = &self.embedded_survival {
            grid_ok("embedded_survival.k_grid", &p.k_grid)?;
            positive("embedded_survival.replicates", p.replicates)?;
        }
        if let Some(p) = &self.ratio {
            grid_ok("ratio.n_grid", &p.n_grid)?;
            grid_ok("ratio.k_grid", &p.k_grid)?;
            positive("ratio.replicates", p.replicates)?;
        }
        for (key, p) in [("yaglom", &self.yaglom), ("flt_paths", &self.flt_paths)] {
            if let Some(p) = p {
                positive(&format!("{key}.n"), p.n)?;
                positive(&format!("{key}.target_survivors"), p.target_survivors)?;
                positive(&format!("{key}.max_replicates"), p.max_replicates)?;
                if p.t_grid.is_empty()
                    || p.t_grid.windows(2).any(|w| w[0] > w[1])
                    || p.t_grid.iter().any(|&t| !(0.0..=1.0).contains(&t))
                {
                    return Err(ConfigError::new(
                        format!("{key}.t_grid"),
                        "must be nonempty, nondecreasing, within [0, 1]",
                    ));
                }
            }
        }
        if let Some(p) = &self.meander_ref {
            if p.steps < 2 {
                return Err(ConfigError::new("meander_ref.steps", "must be >= 2"));
            }
            positive("meander_ref.samples", p.samples)?;
        }
        if let Some(p) = &self.simulate {
            positive("simulate.replicates", p.replicates)?;
        }
        if let Some(w) = self.workers {
            if w == 0 {
                return Err(ConfigError::new("workers", "must be >= 1"));
            }
        }
        Ok(())
    }

    /// The model, required by most experiments.
    pub fn require_model(&self) -> Result<EnvironmentModel, ConfigError> {
        match &self.model {
            Some(m) => m.build(),
            None => Err(ConfigError::new("model", "required for this experiment")),
        }
    }
}
