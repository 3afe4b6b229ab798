//! Experiment configuration: one TOML document with a mandatory `seed` and
//! optional `env`, `sensing`, `policy`, `train`, `theory` and `eval` tables.

use std::path::Path;

use eqv2i::env::EnvConfig;
use eqv2i::policy::{PolicyConfig, PolicyKind};
use eqv2i::ppo::TrainConfig;
use eqv2i::sensing::SensingConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub kind: PolicyKind,
    pub net: PolicyConfig,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection { kind: PolicyKind::Equivariant, net: PolicyConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    /// (ε_R, ε_T, γ) targets.
    pub settings: Vec<[f64; 3]>,
    pub seeds: u64,
    /// Local states per agent in the tabular model.
    pub n_local: usize,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig { settings: vec![[0.0, 0.0, 0.9], [0.05, 0.0, 0.9], [0.0, 0.2, 0.8], [0.03, 0.15, 0.7]], seeds: 50, n_local: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_envs: usize,
    pub horizon: usize,
    /// Also run the policy on sensed rather than true vehicle positions.
    pub sensed: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { n_envs: 4, horizon: 50, sensed: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub sensing: SensingConfig,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub theory: TheoryConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn with_seed(seed: u64) -> Self {
        ExperimentConfig {
            seed,
            env: EnvConfig::default(),
            sensing: SensingConfig::default(),
            policy: PolicySection::default(),
            train: TrainConfig::default(),
            theory: TheoryConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = toml::de::Deserializer::parse(text).map_err(|e| CliError::validation(format!("config: {e}")))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let at = if path == "." { String::new() } else { format!(" at `{path}`") };
            CliError::validation(format!("config{at}: {}", e.inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let v = |section: &str, r: eqv2i::Result<()>| r.map_err(|e| CliError::validation(format!("config `{section}`: {e}")));
        v("env", self.env.validate())?;
        v("sensing", self.sensing.validate())?;
        v("train", self.train.validate())?;
        if self.theory.seeds == 0 || self.theory.n_local == 0 {
            return Err(CliError::validation("config `theory`: seeds and n_local must be positive"));
        }
        if self.eval.n_envs == 0 || self.eval.horizon == 0 {
            return Err(CliError::validation("config `eval`: n_envs and horizon must be positive"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}
