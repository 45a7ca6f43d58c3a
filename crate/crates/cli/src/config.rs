//! Scenario configuration: parsing, validation and canonical hashing.

use std::path::Path;

use gaslight_core::dp::DpOptions;
use gaslight_core::robustness::ZetaMode;
use gaslight_core::stackelberg::{EffortMenu, MenuEntry};
use gaslight_core::stealth::EssOptions;
use gaslight_core::{scenarios, ModelSpec, SystemModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Which DM policy drives simulations and the bound harnesses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolicyChoice {
    /// Best response to no effort, from the DM's dynamic program.
    #[default]
    BestResponse,
    Constant(f64),
    OpenLoop(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialCounts {
    pub simulate: usize,
    /// Nominal trajectories written to `trajectories.csv`.
    pub record_trajectories: usize,
    pub lemma: usize,
    pub theorem1: usize,
    pub theorem2: usize,
    pub objective: usize,
    /// Outer and inner trials of the nested `W` estimate; zero outer skips it.
    pub w_outer: usize,
    pub w_inner: usize,
}

impl Default for TrialCounts {
    fn default() -> Self {
        TrialCounts {
            simulate: 100_000,
            record_trajectories: 20,
            lemma: 1000,
            theorem1: 1000,
            theorem2: 10_000,
            objective: 4000,
            w_outer: 200,
            w_inner: 50,
        }
    }
}

/// Empirical stealthiness budget; its seed derives from the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EssSettings {
    pub n_sigma_samples: usize,
    pub n_obs_trials: usize,
    pub harvest_trials: usize,
}

impl Default for EssSettings {
    fn default() -> Self {
        let d = EssOptions::default();
        EssSettings {
            n_sigma_samples: d.n_sigma_samples,
            n_obs_trials: d.n_obs_trials,
            harvest_trials: d.harvest_trials,
        }
    }
}

impl EssSettings {
    pub fn options(&self, seed: u64) -> EssOptions {
        EssOptions {
            n_sigma_samples: self.n_sigma_samples,
            n_obs_trials: self.n_obs_trials,
            harvest_trials: self.harvest_trials,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSettings {
    pub stealth_filter: bool,
    pub candidate_budget: usize,
    pub coverage_points: usize,
    pub coverage_inner: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            stealth_filter: true,
            candidate_budget: 1000,
            coverage_points: 0,
            coverage_inner: 200,
        }
    }
}

/// Observation-quadrature node counts compared by `solve`.
fn default_convergence_nodes() -> Vec<usize> {
    vec![3, 5, 9]
}

fn default_epsilon() -> Vec<f64> {
    vec![0.01]
}

fn default_zeta() -> ZetaMode {
    ZetaMode::Analytic
}

/// A full experiment description. Exactly one of `preset` and `model` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub menu: Vec<MenuEntry>,
    /// Trust level.
    pub s: f64,
    /// Design-cost scale.
    pub t: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub policy: PolicyChoice,
    #[serde(default)]
    pub trials: TrialCounts,
    #[serde(default)]
    pub dp: DpOptions,
    #[serde(default = "default_convergence_nodes")]
    pub convergence_nodes: Vec<usize>,
    #[serde(default)]
    pub ess: EssSettings,
    #[serde(default = "default_zeta")]
    pub zeta: ZetaMode,
    #[serde(default)]
    pub search: SearchSettings,
}

/// A validated config with its model and menu built.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: SystemModel,
    pub menu: EffortMenu,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: ".".into(),
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_json(&text)
    }

    /// Compact JSON with object keys sorted.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    /// SHA-256 of [`Self::canonical_json`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn model_spec(&self) -> Result<ModelSpec, CliError> {
        match (&self.preset, &self.model) {
            (Some(name), None) => scenarios::by_name(name).ok_or_else(|| CliError::Config {
                path: "preset".into(),
                message: format!("unknown preset {name:?}; expected one of {:?}", scenarios::NAMES),
            }),
            (None, Some(spec)) => Ok(spec.clone()),
            _ => Err(CliError::Config {
                path: ".".into(),
                message: "exactly one of `preset` and `model` must be given".into(),
            }),
        }
    }

    pub fn validate(self) -> Result<Scenario, CliError> {
        let bad = |path: &str, message: String| CliError::Config {
            path: path.into(),
            message,
        };
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(bad("s", format!("trust level must be positive, got {}", self.s)));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(bad("t", format!("design-cost scale must be positive, got {}", self.t)));
        }
        if self.epsilon.is_empty() || self.epsilon.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(bad("epsilon", "expected one or more positive values".into()));
        }
        if self.dp.obs_nodes == 0 {
            return Err(bad("dp.obs_nodes", "must be at least 1".into()));
        }
        if self.convergence_nodes.contains(&0) {
            return Err(bad("convergence_nodes", "node counts must be at least 1".into()));
        }
        let tr = &self.trials;
        for (name, n) in [
            ("simulate", tr.simulate),
            ("theorem2", tr.theorem2),
            ("objective", tr.objective),
        ] {
            if n == 0 {
                return Err(bad(&format!("trials.{name}"), "must be at least 1".into()));
            }
        }
        if tr.w_outer == 1 || (tr.w_outer > 0 && tr.w_inner == 0) {
            return Err(bad("trials.w_outer", "need at least 2 outer and 1 inner trial, or 0 outer".into()));
        }
        if let ZetaMode::Empirical { n_trials: 0, .. } = self.zeta {
            return Err(bad("zeta.n_trials", "must be at least 1".into()));
        }
        let model = SystemModel::new(self.model_spec()?).map_err(|e| {
            let path = if self.preset.is_some() { "preset" } else { "model" };
            bad(path, e.to_string())
        })?;
        let k = model.horizon();
        if self.epsilon.len() != 1 && self.epsilon.len() != k {
            return Err(bad("epsilon", format!("expected 1 or {k} values, got {}", self.epsilon.len())));
        }
        if let PolicyChoice::OpenLoop(us) = &self.policy {
            if us.len() != k {
                return Err(bad("policy.open_loop", format!("expected {k} controls, got {}", us.len())));
            }
        }
        for (i, e) in self.menu.iter().enumerate() {
            let ok = !e.id.is_empty() && e.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ok {
                return Err(bad(&format!("menu[{i}].id"), format!("{:?}: use letters, digits, `_` or `-`", e.id)));
            }
        }
        let menu = EffortMenu::new(&model, self.menu.clone()).map_err(|e| bad("menu", e.to_string()))?;
        Ok(Scenario {
            config: self,
            model,
            menu,
        })
    }
}
