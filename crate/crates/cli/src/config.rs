//! Run configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//! manifest = "data/manifest.json"   # default: <out>/data/manifest.json
//! fixations = "data/fixations.csv"  # default: next to the manifest
//! out = "run"
//! cache = "run/cache"               # default: <out>/cache
//!
//! [registry]
//! models = ["itti_koch", "gbvs", "spectral_residual", "local_covariance", "center_gaussian"]
//! [registry.params.gbvs]
//! working_width = 32
//!
//! [metrics]
//! enabled = ["auc_judd", "nss", "cc"]
//! n_splits = 100
//!
//! [learner]
//! kind = "svm"      # or "gbt"
//! c = 0.01
//!
//! [protocol]
//! id = "leave-one-subject-out"
//! folds = 10
//!
//! [ablate]
//! sizes = [1, 2, 3, 4, 5]
//! repeats = 10
//!
//! [synth]
//! n_images = 30
//! [[synth.classes]]
//! name = "follower"
//! behavior = "saliency-follower"
//! lambda = 0.9
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gazesal_core::learners::{LearnerConfig, ProtocolSpec};
use gazesal_core::metrics::MetricConfig;
use gazesal_core::saliency::{ModelConfig, ModelRegistry, ModelSpec};
use gazesal_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegistrySection {
    pub models: Vec<String>,
    /// Parameter overrides per model kind.
    pub params: BTreeMap<String, toml::Table>,
}

impl Default for RegistrySection {
    fn default() -> Self {
        RegistrySection {
            models: ModelRegistry::standard().ids().iter().map(|s| s.to_string()).collect(),
            params: BTreeMap::new(),
        }
    }
}

impl RegistrySection {
    pub fn build(&self) -> Result<ModelRegistry, CliError> {
        if let Some(unused) = self.params.keys().find(|k| !self.models.contains(k)) {
            return Err(CliError::Config(format!("parameters given for unlisted model `{unused}`")));
        }
        let specs = self
            .models
            .iter()
            .map(|kind| {
                let mut table = self.params.get(kind).cloned().unwrap_or_default();
                if ModelConfig::from_kind_name(kind).is_none() {
                    return Err(CliError::Config(format!("unknown saliency model `{kind}`")));
                }
                table.insert("kind".into(), toml::Value::String(kind.clone()));
                let config: ModelConfig = table
                    .try_into()
                    .map_err(|e| CliError::Config(format!("parameters of `{kind}`: {e}")))?;
                Ok(ModelSpec::new(config))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if specs.is_empty() {
            return Err(CliError::Config("registry lists no models".into()));
        }
        Ok(ModelRegistry::new(specs)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    /// Empty means every size from 1 to the registry length.
    pub sizes: Vec<usize>,
    pub repeats: usize,
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection {
            sizes: Vec::new(),
            repeats: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Mandatory: there is no wall-clock fallback.
    pub seed: Option<u64>,
    pub manifest: Option<PathBuf>,
    pub fixations: Option<PathBuf>,
    pub out: PathBuf,
    pub cache: Option<PathBuf>,
    /// Worker threads; `None` uses every core. Never affects results.
    pub jobs: Option<usize>,
    pub registry: RegistrySection,
    pub metrics: MetricConfig,
    pub learner: LearnerConfig,
    pub protocol: ProtocolSpec,
    pub ablate: AblateSection,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            manifest: None,
            fixations: None,
            out: PathBuf::from("out"),
            cache: None,
            jobs: None,
            registry: RegistrySection::default(),
            metrics: MetricConfig::default(),
            learner: LearnerConfig::default(),
            protocol: ProtocolSpec::default(),
            ablate: AblateSection::default(),
            synth: SynthConfig::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        rebase(base_dir, &mut cfg.manifest);
        rebase(base_dir, &mut cfg.fixations);
        rebase(base_dir, &mut cfg.cache);
        if cfg.out.is_relative() {
            cfg.out = base_dir.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("no seed: set `seed` in the config or pass --seed".into()))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| self.out.join("data").join("manifest.json"))
    }

    /// Explicit path, else the manifest's sibling with `manifest` in the file
    /// stem replaced by `fixations` (`manifest_task.json` pairs with
    /// `fixations_task.csv`).
    pub fn fixations_path(&self) -> PathBuf {
        if let Some(p) = &self.fixations {
            return p.clone();
        }
        let m = self.manifest_path();
        let stem = m.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let name = match stem.strip_prefix("manifest") {
            Some(rest) => format!("fixations{rest}.csv"),
            None => "fixations.csv".to_string(),
        };
        m.with_file_name(name)
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache.clone().unwrap_or_else(|| self.out.join("cache"))
    }

    pub fn ablation_sizes(&self, n_models: usize) -> Vec<usize> {
        if self.ablate.sizes.is_empty() {
            (1..=n_models).collect()
        } else {
            self.ablate.sizes.clone()
        }
    }

    /// Checks everything that does not need the filesystem.
    pub fn validate(&self) -> Result<(), CliError> {
        self.seed()?;
        if self.jobs == Some(0) {
            return Err(CliError::Config("jobs must be at least 1".into()));
        }
        self.registry.build()?;
        self.metrics.validate()?;
        self.learner.validate()?;
        if self.ablate.repeats == 0 {
            return Err(CliError::Config("ablate.repeats must be at least 1".into()));
        }
        Ok(())
    }

    /// Hash of every setting that can change an artifact. Paths and the
    /// worker count are excluded so relocated runs hash alike.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.manifest = None;
        c.fixations = None;
        c.out = PathBuf::new();
        c.cache = None;
        c.jobs = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}
