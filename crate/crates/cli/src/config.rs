//! Experiment configuration: a TOML file with one section per scenario plus
//! shared `online`, `perturbation` and `data` sections. Every field has a
//! default, so an empty file is a complete configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use wdgnn::online::OnlineMode;
use wdgnn::scenarios::bounds::StabilityConfig;
use wdgnn::scenarios::flocking::FlockingConfig;
use wdgnn::scenarios::movielens::RecommendationConfig;
use wdgnn::scenarios::quadratic::QuadraticConfig;
use wdgnn::scenarios::sourceloc::SourceLocConfig;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    pub online: OnlineSection,
    pub perturbation: PerturbationSection,
    pub data: DataSection,
    pub sourceloc: SourceLocConfig,
    pub flocking: FlockingConfig,
    pub movielens: RecommendationConfig,
    pub stability: StabilityConfig,
    pub quadratic: QuadraticConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seeds: vec![0],
            out_dir: None,
            online: OnlineSection::default(),
            perturbation: PerturbationSection::default(),
            data: DataSection::default(),
            sourceloc: SourceLocConfig::default(),
            flocking: FlockingConfig::default(),
            movielens: RecommendationConfig::default(),
            stability: StabilityConfig::default(),
            quadratic: QuadraticConfig::default(),
        }
    }
}

/// Overrides shared by every scenario. Unset fields keep each scenario's
/// own value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineSection {
    /// Restricts online runs to one mode; both run when unset.
    pub mode: Option<OnlineMode>,
    pub gamma: Option<f64>,
    /// Length of the online stream.
    pub steps: Option<usize>,
    /// Test-set evaluation period of online accuracy curves.
    pub eval_every: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationSection {
    /// Edge drop probability for online adaptation.
    pub drop_probability: Option<f64>,
    /// Drop probabilities of the stability sweep.
    pub sweep: Vec<f64>,
}

impl Default for PerturbationSection {
    fn default() -> Self {
        PerturbationSection { drop_probability: None, sweep: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5] }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// The tab-separated 100k ratings file (`u.data`).
    pub movielens: Option<PathBuf>,
}

pub const DEFAULT_EVAL_EVERY: usize = 50;

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 12 hex digits of the SHA-256 of the canonical JSON form, with
    /// the seeds and output directory left out.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.seeds.clear();
        canonical.out_dir = None;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn eval_every(&self) -> usize {
        self.online.eval_every.unwrap_or(DEFAULT_EVAL_EVERY)
    }

    /// Online modes to run, in a fixed order.
    pub fn online_modes(&self) -> Vec<OnlineMode> {
        match self.online.mode {
            Some(m) => vec![m],
            None => vec![OnlineMode::Centralized, OnlineMode::Distributed],
        }
    }

    /// The source-localization config with the shared overrides applied.
    pub fn effective_sourceloc(&self) -> SourceLocConfig {
        let mut c = self.sourceloc.clone();
        if let Some(g) = self.online.gamma {
            c.gamma = g;
        }
        if let Some(s) = self.online.steps {
            c.n_online = s;
        }
        if let Some(p) = self.perturbation.drop_probability {
            c.drop_probability = p;
        }
        c
    }

    pub fn effective_flocking(&self) -> FlockingConfig {
        let mut c = self.flocking.clone();
        if let Some(g) = self.online.gamma {
            c.gamma_centralized = g;
            c.gamma_distributed = g;
        }
        c
    }

    pub fn effective_movielens(&self) -> RecommendationConfig {
        let mut c = self.movielens.clone();
        if let Some(g) = self.online.gamma {
            c.gamma = g;
        }
        if let Some(s) = self.online.steps {
            c.online_users = s;
        }
        c
    }

    pub fn effective_quadratic(&self) -> QuadraticConfig {
        let mut c = self.quadratic.clone();
        if let Some(s) = self.online.steps {
            c.steps = s;
        }
        c
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Validation(msg));
        if self.seeds.is_empty() {
            return fail("seeds must not be empty".into());
        }
        if let Some(g) = self.online.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return fail(format!("online.gamma must be positive and finite, got {g}"));
            }
        }
        if self.online.steps == Some(0) || self.online.eval_every == Some(0) {
            return fail("online.steps and online.eval_every must be positive".into());
        }
        let prob = |p: f64| (0.0..1.0).contains(&p);
        if let Some(p) = self.perturbation.drop_probability {
            if !prob(p) {
                return fail(format!("perturbation.drop_probability {p} outside [0, 1)"));
            }
        }
        if self.perturbation.sweep.is_empty() || !self.perturbation.sweep.iter().all(|&p| prob(p)) {
            return fail("perturbation.sweep needs probabilities in [0, 1)".into());
        }

        let s = &self.sourceloc;
        if s.communities < 2 || s.nodes < 2 * s.communities {
            return fail("sourceloc needs ≥ 2 communities with ≥ 2 nodes each".into());
        }
        if !(prob(s.p_intra) || s.p_intra == 1.0) || !(prob(s.p_inter) || s.p_inter == 1.0) {
            return fail("sourceloc edge probabilities must lie in [0, 1]".into());
        }
        if !(s.noise_std >= 0.0) || !prob(s.drop_probability) {
            return fail("sourceloc noise must be nonnegative and drop probability in [0, 1)".into());
        }
        positive_counts(
            "sourceloc",
            &[s.n_train, s.n_valid, s.n_test, s.n_online, s.features, s.layers, s.epochs, s.batch_size],
        )?;
        positive_reals("sourceloc", &[s.learning_rate, s.gamma])?;

        let f = &self.flocking;
        f.swarm.validate().map_err(|e| CliError::Validation(format!("flocking.swarm: {e}")))?;
        positive_counts(
            "flocking",
            &[f.n_train, f.n_valid, f.n_test, f.sample_every, f.features, f.layers, f.epochs, f.batch_size],
        )?;
        positive_reals("flocking", &[f.learning_rate, f.gamma_centralized, f.gamma_distributed])?;

        let m = &self.movielens;
        positive_counts(
            "movielens",
            &[m.top_movies, m.top_k, m.features, m.layers, m.epochs, m.batch_size, m.online_users],
        )?;
        positive_reals("movielens", &[m.learning_rate, m.gamma])?;
        if !(m.test_fraction > 0.0 && m.test_fraction < 1.0)
            || !(m.validation_fraction > 0.0 && m.validation_fraction < 1.0)
        {
            return fail("movielens fractions must lie in (0, 1)".into());
        }

        self.stability.validate().map_err(|e| CliError::Validation(format!("stability: {e}")))?;
        let q = &self.quadratic;
        positive_counts("quadratic", &[q.nodes, q.steps, q.graphs])?;
        if q.nodes <= q.filter_order || !(q.drift >= 0.0) || !(q.edge_probability > 0.0 && q.edge_probability <= 1.0) {
            return fail(
                "quadratic needs more nodes than taps, nonnegative drift and edge probability in (0, 1]".into(),
            );
        }
        Ok(())
    }
}

fn positive_counts(section: &str, values: &[usize]) -> Result<(), CliError> {
    if values.contains(&0) {
        return Err(CliError::Validation(format!("{section}: sizes, counts and epochs must be positive")));
    }
    Ok(())
}

fn positive_reals(section: &str, values: &[f64]) -> Result<(), CliError> {
    if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(CliError::Validation(format!("{section}: learning rates and step sizes must be positive")));
    }
    Ok(())
}
