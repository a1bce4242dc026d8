//! Pipeline configuration: one TOML file, a handful of command-line
//! overrides, and a stable hash of the effective settings.
//!
//! A single `seed` drives the whole pipeline. It is copied into every
//! stage's own seed field after loading, so the training, augmentation, and
//! classifier streams all derive from the one recorded value; per-section
//! `seed` keys in the file are overwritten and should be left unset.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use omoprep_core::augment::AugmentConfig;
use omoprep_core::container::bytes_checksum;
use omoprep_core::eval::ClassifierConfig;
use omoprep_core::graph::TrainConfig;
use omoprep_core::trajectory::Task;
use omoprep_core::{Error, Result};

/// Task names as they appear in the config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskName {
    Mortality,
    LongStay,
    Readmission,
}

impl TaskName {
    pub fn task(self) -> Task {
        match self {
            TaskName::Mortality => Task::Mortality,
            TaskName::LongStay => Task::LongStay,
            TaskName::Readmission => Task::Readmission,
        }
    }
}

/// Input artifact locations. Stage outputs always land in `output_dir`
/// under fixed names; these are the upstream files the pipeline starts from.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub catalog: PathBuf,
    pub edges: PathBuf,
    pub embeddings: PathBuf,
    pub records: PathBuf,
    pub patients: PathBuf,
    pub visits: PathBuf,
    /// Records of the same patients under a different coding practice;
    /// enables the external-validation rows of the benchmark.
    #[serde(default)]
    pub external_records: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_neighbor_count")]
    pub neighbor_count: usize,
    #[serde(default)]
    pub same_domain_only: bool,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<TaskName>,
    #[serde(default = "default_factors")]
    pub factors: Vec<u32>,
    pub paths: PathsConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
}

fn default_max_len() -> usize {
    omoprep_core::trajectory::DEFAULT_MAX_LEN
}

fn default_neighbor_count() -> usize {
    omoprep_core::neighbors::DEFAULT_NEIGHBORS
}

fn default_tasks() -> Vec<TaskName> {
    vec![TaskName::Mortality, TaskName::LongStay, TaskName::Readmission]
}

fn default_factors() -> Vec<u32> {
    vec![1]
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| Error::BadConfig(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        cfg.propagate_seed();
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::BadConfig("task list is empty".into()));
        }
        if self.factors.is_empty() {
            return Err(Error::BadConfig("factor list is empty".into()));
        }
        Ok(())
    }

    /// Adopt a command-line seed, if given, as the pipeline seed.
    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.propagate_seed();
        self
    }

    /// Copy the pipeline seed into every stage config.
    fn propagate_seed(&mut self) {
        self.train.seed = self.seed;
        self.augment.seed = self.seed;
        self.classifier.seed = self.seed;
    }

    /// Checksum of the effective configuration, embedded in every output.
    /// Computed from a canonical rendering after all overrides are applied,
    /// so identical settings hash identically across runs.
    pub fn config_hash(&self) -> u64 {
        bytes_checksum(format!("{self:?}").as_bytes())
    }

    pub fn tasks(&self) -> Vec<Task> {
        self.tasks.iter().map(|t| t.task()).collect()
    }

    /// Path of a stage output inside the pipeline's output directory.
    pub fn artifact(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}
