//! Experiment files: a TOML document with the keys of `ExperimentConfig`,
//! an optional model preset, and an optional `[matrix]` that expands one
//! file into several runs.
//!
//! ```toml
//! method = "dc-ccl"
//! rounds = 15
//!
//! [model]
//! preset = "desk"
//! split = { alpha_cl = "7/8", alpha_co = "1/8" }
//!
//! [matrix]
//! seeds = [0, 1, 2]
//! methods = ["dc-ccl", "cloud-b"]
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use dccl_core::model::{alpha_serde, Alpha, ModelSpec, SplitConfig};
use dccl_core::simnet::{DataConfig, ExperimentConfig, FinetuneSide, Method, ModelConfig, PhaseSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: unknown key: {message}")]
    UnknownKey { path: String, message: String },
    #[error("{path}: {message}")]
    Syntax { path: String, message: String },
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("unknown model preset `{0}` (expected desk, desk-hetero or table3)")]
    UnknownPreset(String),
    #[error("unknown study `{0}` (expected methods or feasibility)")]
    UnknownStudy(String),
    #[error("empty matrix axis `{0}`")]
    EmptyAxis(&'static str),
    #[error(transparent)]
    Invalid(#[from] dccl_core::Error),
}

/// What a file asks for: a list of method runs, or the two-stage
/// decoupling study repeated over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    #[default]
    Methods,
    Feasibility,
}

impl FromStr for Study {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "methods" => Ok(Study::Methods),
            "feasibility" => Ok(Study::Feasibility),
            _ => Err(ConfigError::UnknownStudy(s.to_string())),
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Study::Methods => "methods",
            Study::Feasibility => "feasibility",
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    name: Option<String>,
    study: Option<String>,
    method: Option<String>,
    seed: Option<u64>,
    rounds: Option<usize>,
    cloud_epochs_per_round: Option<usize>,
    device_epochs_per_round: Option<usize>,
    finetune_on: Option<FinetuneSide>,
    data: Option<DataConfig>,
    model: Option<ModelSection>,
    phases: Option<PhaseSet>,
    matrix: Option<Matrix>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    preset: Option<String>,
    base: Option<ModelSpec>,
    co: Option<ModelSpec>,
    split: Option<SplitConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Matrix {
    seeds: Option<Vec<u64>>,
    methods: Option<Vec<String>>,
    alpha_co: Option<Vec<AlphaValue>>,
}

#[derive(Debug, Deserialize)]
struct AlphaValue(#[serde(with = "alpha_serde")] Alpha);

/// Heterogeneous co backbone of the `desk-hetero` preset: narrower and
/// shallower than the cloud model, with its own first layer.
pub fn desk_hetero_co() -> ModelSpec {
    use dccl_core::model::LayerSpec;
    ModelSpec {
        input_shape: [1, 8, 8],
        num_classes: 10,
        layers: vec![
            LayerSpec::conv(8, 3, 1),
            LayerSpec::Relu,
            LayerSpec::maxpool(2),
            LayerSpec::conv(8, 3, 1),
            LayerSpec::Relu,
            LayerSpec::maxpool(2),
            LayerSpec::Flatten,
            LayerSpec::fc(10),
        ],
    }
}

/// Model section of a named preset.
pub fn model_preset(name: &str) -> Result<ModelConfig, ConfigError> {
    match name {
        "desk" => Ok(ModelConfig::default()),
        "desk-hetero" => Ok(ModelConfig {
            co: Some(desk_hetero_co()),
            split: SplitConfig {
                shared_prefix_len: 0,
                heterogeneous: true,
                ..SplitConfig::default()
            },
            ..ModelConfig::default()
        }),
        "table3" => Ok(ModelConfig {
            base: ModelSpec::feasibility_base(),
            co: None,
            split: SplitConfig::default(),
        }),
        other => Err(ConfigError::UnknownPreset(other.to_string())),
    }
}

/// One fully resolved run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannedRun {
    pub id: String,
    pub config: ExperimentConfig,
}

/// Everything a config file expands to, in execution order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Plan {
    pub name: String,
    pub study: Study,
    pub runs: Vec<PlannedRun>,
}

impl Plan {
    /// Replace every run's seed (and drop duplicates created by it).
    pub fn with_seed(mut self, seed: u64) -> Self {
        let mut seen = std::collections::BTreeSet::new();
        self.runs.retain_mut(|r| {
            r.config.seed = seed;
            r.id = run_id(&r.config, r.id.contains("-aco"));
            seen.insert(r.id.clone())
        });
        self
    }

    pub fn configs(&self) -> impl Iterator<Item = &ExperimentConfig> {
        self.runs.iter().map(|r| &r.config)
    }
}

fn alpha_tag(a: Alpha) -> String {
    format!("{}_{}", a.numer(), a.denom())
}

fn run_id(cfg: &ExperimentConfig, with_alpha: bool) -> String {
    let mut id = format!("{}-s{}", cfg.method, cfg.seed);
    if with_alpha {
        id.push_str(&format!("-aco{}", alpha_tag(cfg.model.split.alpha_co)));
    }
    id
}

fn syntax_error(path: &str, e: toml::de::Error) -> ConfigError {
    let message = e.message().to_string();
    if message.starts_with("unknown field") {
        ConfigError::UnknownKey {
            path: path.to_string(),
            message,
        }
    } else {
        ConfigError::Syntax {
            path: path.to_string(),
            message: e.to_string(),
        }
    }
}

/// Parse and validate a config document. `origin` names it in errors.
pub fn parse_config_str(text: &str, origin: &str) -> Result<Plan, ConfigError> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| syntax_error(origin, e))?;
    let study = file.study.as_deref().map(Study::from_str).transpose()?.unwrap_or_default();

    let mut base = ExperimentConfig::default();
    if let Some(m) = file.model {
        let mut model = match m.preset.as_deref() {
            Some(p) => model_preset(p)?,
            None => ModelConfig::default(),
        };
        if let Some(b) = m.base {
            model.base = b;
        }
        if let Some(c) = m.co {
            model.co = Some(c);
        }
        if let Some(s) = m.split {
            model.split = s;
        }
        base.model = model;
    }
    if let Some(d) = file.data {
        base.data = d;
    }
    if let Some(p) = file.phases {
        base.phases = p;
    }
    if let Some(v) = file.seed {
        base.seed = v;
    }
    if let Some(v) = file.rounds {
        base.rounds = v;
    }
    if let Some(v) = file.cloud_epochs_per_round {
        base.cloud_epochs_per_round = v;
    }
    if let Some(v) = file.device_epochs_per_round {
        base.device_epochs_per_round = v;
    }
    if let Some(v) = file.finetune_on {
        base.finetune_on = v;
    }

    let matrix = file.matrix.unwrap_or(Matrix {
        seeds: None,
        methods: None,
        alpha_co: None,
    });
    let methods: Vec<Method> = match (&matrix.methods, &file.method) {
        (Some(ms), _) if ms.is_empty() => return Err(ConfigError::EmptyAxis("methods")),
        (Some(ms), _) => ms.iter().map(|m| m.parse()).collect::<Result<_, _>>()?,
        (None, Some(m)) => vec![m.parse()?],
        // The feasibility study fixes its own methods.
        (None, None) if study == Study::Feasibility => vec![Method::CentralB],
        (None, None) => return Err(ConfigError::MissingField("method")),
    };
    let seeds = match matrix.seeds {
        Some(s) if s.is_empty() => return Err(ConfigError::EmptyAxis("seeds")),
        Some(s) => s,
        None => vec![base.seed],
    };
    let alphas: Option<Vec<Alpha>> = match matrix.alpha_co {
        Some(a) if a.is_empty() => return Err(ConfigError::EmptyAxis("alpha_co")),
        Some(a) => Some(a.into_iter().map(|v| v.0).collect()),
        None => None,
    };

    let mut runs = Vec::new();
    let alpha_axis: Vec<Option<Alpha>> = match &alphas {
        Some(a) => a.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    for alpha in &alpha_axis {
        for &seed in &seeds {
            for &method in &methods {
                let mut cfg = base.clone();
                cfg.method = method;
                cfg.seed = seed;
                if let Some(a) = alpha {
                    cfg.model.split.alpha_co = *a;
                }
                cfg.validate()?;
                runs.push(PlannedRun {
                    id: run_id(&cfg, alpha.is_some()),
                    config: cfg,
                });
            }
        }
    }
    Ok(Plan {
        name: file.name.unwrap_or_else(|| "experiment".to_string()),
        study,
        runs,
    })
}

/// Bundled presets, usable in place of a config path.
pub const PRESETS: [(&str, &str); 3] = [
    ("feasibility", include_str!("../presets/feasibility.toml")),
    ("main", include_str!("../presets/main.toml")),
    ("hetero", include_str!("../presets/hetero.toml")),
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Parse a config file, or a bundled preset when `path` names one and no
/// such file exists.
pub fn parse_config(path: &Path) -> Result<Plan, ConfigError> {
    let shown = path.display().to_string();
    if !path.exists() {
        if let Some(text) = path.to_str().and_then(preset_text) {
            return parse_config_str(text, &shown);
        }
    }
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: shown.clone(),
        source,
    })?;
    parse_config_str(&text, &shown)
}
