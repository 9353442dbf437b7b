//! Configuration loading: a single strict TOML document with per-backend
//! validation and a content digest over the canonicalized result.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use shape_core::augment::AugmentationSpec;
use shape_core::backend::RemoteConfig;
use shape_core::dpo::TrainConfig;
use shape_core::forge::{FailurePolicy, ForgeConfig, ForgeMode, DEFAULT_SUMMARY_PROMPT};
use shape_core::hash::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Toy,
    Remote,
    Mock,
}

/// Backend selection plus the remote-only connection fields; which fields
/// are required (or forbidden) depends on `kind`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_retries: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_in_flight: Option<usize>,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            kind: BackendKind::Mock,
            base_url: None,
            model: None,
            timeout_ms: None,
            max_retries: None,
            max_in_flight: None,
        }
    }
}

impl BackendSection {
    fn validate(&self) -> Result<()> {
        match self.kind {
            BackendKind::Remote => {
                if self.base_url.as_deref().unwrap_or("").is_empty() {
                    bail!("backend.base_url is required for the remote backend");
                }
                if self.model.as_deref().unwrap_or("").is_empty() {
                    bail!("backend.model is required for the remote backend");
                }
            }
            BackendKind::Toy | BackendKind::Mock => {
                for (name, present) in [
                    ("base_url", self.base_url.is_some()),
                    ("model", self.model.is_some()),
                    ("timeout_ms", self.timeout_ms.is_some()),
                    ("max_retries", self.max_retries.is_some()),
                    ("max_in_flight", self.max_in_flight.is_some()),
                ] {
                    if present {
                        bail!("backend.{name} is only valid when backend.kind = \"remote\"");
                    }
                }
            }
        }
        Ok(())
    }

    pub fn remote_config(&self) -> Result<RemoteConfig> {
        if self.kind != BackendKind::Remote {
            bail!("remote configuration requested for a non-remote backend");
        }
        Ok(RemoteConfig {
            base_url: self.base_url.clone().unwrap_or_default(),
            model: self.model.clone().unwrap_or_default(),
            timeout_ms: self.timeout_ms.unwrap_or(30_000),
            max_retries: self.max_retries.unwrap_or(3),
            max_in_flight: self.max_in_flight.unwrap_or(4),
        })
    }
}

/// Toy policy dimensions, shared by the toy backend and the trainer.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub vocab_size: usize,
    pub context_size: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            vocab_size: 16,
            context_size: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSection {
    pub max_tokens: usize,
    pub temperature: f64,
}

impl Default for GenerationSection {
    fn default() -> Self {
        GenerationSection {
            max_tokens: 8,
            temperature: 1.0,
        }
    }
}

/// One augmentation entry: a preset name or an explicit spec table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AugEntry {
    Preset(String),
    Spec(AugmentationSpec),
}

impl AugEntry {
    pub fn resolve(&self) -> Result<AugmentationSpec> {
        let spec = match self {
            AugEntry::Preset(name) => AugmentationSpec::preset(name)
                .with_context(|| format!("forge.augmentations entry {name:?}"))?,
            AugEntry::Spec(spec) => spec.clone(),
        };
        spec.validate()
            .with_context(|| format!("forge.augmentations entry {:?}", spec.name()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForgeSection {
    /// "shape" or "seva" ("sheva" is accepted as an alias).
    pub mode: String,
    pub augmentations: Vec<AugEntry>,
    pub prompt: String,
    /// Iteration tag used by single `forge build` runs.
    pub iteration: u32,
    /// Iteration count T used by `forge run`.
    pub iterations: usize,
    pub filter_degenerate: bool,
}

impl Default for ForgeSection {
    fn default() -> Self {
        ForgeSection {
            mode: "shape".to_string(),
            augmentations: vec![
                AugEntry::Preset("contrast".into()),
                AugEntry::Preset("diffusion-w".into()),
                AugEntry::Preset("gamma".into()),
            ],
            prompt: DEFAULT_SUMMARY_PROMPT.to_string(),
            iteration: 1,
            iterations: 1,
            filter_degenerate: false,
        }
    }
}

impl ForgeSection {
    pub fn mode(&self) -> Result<ForgeMode> {
        match self.mode.as_str() {
            "shape" => Ok(ForgeMode::Shape),
            "seva" | "sheva" => Ok(ForgeMode::Seva),
            other => bail!("forge.mode must be \"shape\" or \"seva\", got {other:?}"),
        }
    }

    pub fn forge_config(&self) -> Result<ForgeConfig> {
        let aug_specs = self
            .augmentations
            .iter()
            .map(AugEntry::resolve)
            .collect::<Result<Vec<_>>>()?;
        let cfg = ForgeConfig {
            mode: self.mode()?,
            aug_specs,
            prompt: self.prompt.clone(),
            iteration: self.iteration,
            filter_degenerate: self.filter_degenerate,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub beta: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    /// Informational only; recorded in run manifests.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lora_rank: Option<u64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            beta: shape_core::dpo::DEFAULT_BETA,
            learning_rate: 0.1,
            steps: 100,
            batch_size: 32,
            lora_rank: None,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            beta: self.beta,
            learning_rate: self.learning_rate,
            steps: self.steps,
            batch_size: self.batch_size,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub output_dir: Option<PathBuf>,
    pub samples_file: Option<PathBuf>,
    pub vocab_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AppConfig {
    pub seed: u64,
    pub max_in_flight: usize,
    pub failure_policy: FailurePolicy,
    pub backend: BackendSection,
    pub model: ModelSection,
    pub generation: GenerationSection,
    pub forge: ForgeSection,
    pub train: TrainSection,
    pub paths: PathsSection,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            seed: 0,
            max_in_flight: 1,
            failure_policy: FailurePolicy::FailFast,
            backend: BackendSection::default(),
            model: ModelSection::default(),
            generation: GenerationSection::default(),
            forge: ForgeSection::default(),
            train: TrainSection::default(),
            paths: PathsSection::default(),
        }
    }
}

impl AppConfig {
    pub fn validate(&self) -> Result<()> {
        self.backend.validate()?;
        if self.max_in_flight == 0 {
            bail!("max_in_flight must be >= 1");
        }
        if self.model.vocab_size == 0 || self.model.context_size == 0 {
            bail!("model.vocab_size and model.context_size must be >= 1");
        }
        if self.generation.max_tokens == 0 {
            bail!("generation.max_tokens must be >= 1");
        }
        if self.generation.temperature.is_nan() || self.generation.temperature < 0.0 {
            bail!("generation.temperature must be >= 0");
        }
        self.forge.forge_config()?;
        self.train.train_config(self.seed)?;
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.paths
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn samples_file(&self) -> Result<&Path> {
        self.paths
            .samples_file
            .as_deref()
            .context("paths.samples_file is required for this command")
    }

    /// Informational hyperparameters recorded into run manifests.
    pub fn manifest_hparams(&self) -> Vec<(String, serde_json::Value)> {
        let mut extras = Vec::new();
        if let Some(rank) = self.train.lora_rank {
            extras.push(("lora_rank".to_string(), serde_json::json!(rank)));
        }
        extras
    }
}

/// Parsed configuration plus the digest of its canonical form.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: AppConfig,
    pub digest: String,
}

/// Parses `path` strictly (unknown keys are errors), applies defaults,
/// validates, and digests the canonicalized document.
pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let config: AppConfig = toml::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    config.validate()?;
    let canonical = serde_json::to_string(&config).expect("config serializes");
    let digest = sha256_hex(canonical.as_bytes());
    Ok(LoadedConfig { config, digest })
}

/// Canonical JSON rendering of a config section map, used by reports.
pub fn to_sorted_map(value: &serde_json::Value) -> BTreeMap<String, serde_json::Value> {
    match value {
        serde_json::Value::Object(map) => map.clone().into_iter().collect(),
        _ => BTreeMap::new(),
    }
}
