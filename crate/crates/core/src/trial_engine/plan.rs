//! Experiment plans and their TOML configuration.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::{BackendConfig, DEFAULT_MAX_TOKENS};
use crate::compression::RatioSweep;
use crate::prompt_structure::{builtin, BenchmarkProfile, PromptError};

use super::record::CellKey;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("benchmark {benchmark}: requested {requested} prompts but dataset has {available}")]
    InsufficientPrompts {
        benchmark: String,
        requested: usize,
        available: usize,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl PlanError {
    pub fn kind(&self) -> &'static str {
        match self {
            PlanError::Config(_) => "config",
            PlanError::InsufficientPrompts { .. } => "insufficient_prompts",
            PlanError::Prompt(_) => "prompt",
            PlanError::Io { .. } => "io",
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        PlanError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

/// One line of a prompt dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetPrompt {
    pub prompt_id: String,
    pub text: String,
    #[serde(default)]
    pub pass1_baseline: Option<bool>,
}

/// One line of an external grader file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeEntry {
    pub model: String,
    pub benchmark: String,
    pub ratio: f64,
    pub prompt_id: String,
    pub pass1: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub backend: BackendConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Profile TOML path, or `builtin:<name>`.
    pub profile: String,
    /// Prompt dataset (JSONL).
    pub prompts: PathBuf,
}

fn default_prompts_per_cell() -> usize {
    50
}

fn default_replicates() -> u32 {
    3
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

/// Serialised form of an experiment plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_prompts_per_cell")]
    pub prompts_per_cell: usize,
    #[serde(default = "default_replicates")]
    pub replicates: u32,
    #[serde(default)]
    pub ratios: RatioSweep,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub system_prompt: Option<String>,
    #[serde(default)]
    pub grader: Option<PathBuf>,
    pub models: Vec<ModelConfig>,
    pub benchmarks: Vec<BenchmarkConfig>,
}

impl PlanConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PlanError> {
        toml::from_str(text).map_err(|e| PlanError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkData {
    pub profile: BenchmarkProfile,
    /// Sampled prompts, in dataset order.
    pub prompts: Vec<DatasetPrompt>,
}

impl BenchmarkData {
    pub fn name(&self) -> &str {
        &self.profile.name
    }
}

/// A fully resolved plan: datasets loaded and prompts sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub models: Vec<ModelConfig>,
    pub benchmarks: Vec<BenchmarkData>,
    pub sweep: RatioSweep,
    pub prompts_per_cell: usize,
    pub replicates: u32,
    pub seed: u64,
    pub max_tokens: u32,
    pub temperature: f64,
    pub system_prompt: Option<String>,
    /// Directory relative paths in backend configs resolve against.
    pub base_dir: PathBuf,
    pub grades: BTreeMap<(CellKey, String), bool>,
}

impl ExperimentPlan {
    pub fn total_calls(&self) -> usize {
        self.models.len() * self.benchmarks.len() * self.sweep.len() * self.prompts_per_cell * self.replicates as usize
    }

    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for m in &self.models {
            for b in &self.benchmarks {
                for r in self.sweep.ratios() {
                    out.push(CellKey::new(&m.name, b.name(), r.value()));
                }
            }
        }
        out
    }

    pub fn grade(&self, cell: &CellKey, prompt_id: &str) -> Option<bool> {
        self.grades.get(&(cell.clone(), prompt_id.to_string())).copied()
    }
}

/// Reads a plan TOML; relative paths resolve against its directory.
pub fn build_plan(path: &Path) -> Result<ExperimentPlan, PlanError> {
    let text = std::fs::read_to_string(path).map_err(|e| PlanError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    build_plan_from_config(&PlanConfig::from_toml_str(&text)?, &base)
}

pub fn build_plan_from_config(config: &PlanConfig, base_dir: &Path) -> Result<ExperimentPlan, PlanError> {
    if config.prompts_per_cell < 1 {
        return Err(PlanError::Config("prompts_per_cell must be >= 1".into()));
    }
    if config.replicates < 1 {
        return Err(PlanError::Config("replicates must be >= 1".into()));
    }
    if config.max_tokens < 1 {
        return Err(PlanError::Config("max_tokens must be >= 1".into()));
    }
    if config.temperature.is_nan() || config.temperature < 0.0 {
        return Err(PlanError::Config("temperature must be >= 0".into()));
    }
    if config.models.is_empty() || config.benchmarks.is_empty() {
        return Err(PlanError::Config(
            "plan needs at least one model and one benchmark".into(),
        ));
    }
    unique(config.models.iter().map(|m| m.name.as_str()), "model")?;

    let mut benchmarks = Vec::with_capacity(config.benchmarks.len());
    for b in &config.benchmarks {
        let profile = load_profile(&b.profile, base_dir)?;
        let dataset = load_dataset(&base_dir.join(&b.prompts))?;
        let prompts = sample_prompts(&dataset, config.prompts_per_cell, config.seed, &profile.name)?;
        benchmarks.push(BenchmarkData { profile, prompts });
    }
    unique(benchmarks.iter().map(|b| b.name()), "benchmark")?;

    let grades = match &config.grader {
        Some(p) => load_grades(&base_dir.join(p))?,
        None => BTreeMap::new(),
    };

    Ok(ExperimentPlan {
        models: config.models.clone(),
        benchmarks,
        sweep: config.ratios.clone(),
        prompts_per_cell: config.prompts_per_cell,
        replicates: config.replicates,
        seed: config.seed,
        max_tokens: config.max_tokens,
        temperature: config.temperature,
        system_prompt: config.system_prompt.clone().filter(|s| !s.is_empty()),
        base_dir: base_dir.to_path_buf(),
        grades,
    })
}

fn unique<'a>(names: impl Iterator<Item = &'a str>, what: &str) -> Result<(), PlanError> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(PlanError::Config(format!("duplicate {what} name {n:?}")));
        }
    }
    Ok(())
}

fn load_profile(spec: &str, base_dir: &Path) -> Result<BenchmarkProfile, PlanError> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return builtin::get(name).ok_or_else(|| PlanError::Config(format!("unknown built-in profile {name:?}")));
    }
    let path = base_dir.join(spec);
    if !path.exists() {
        return Err(PlanError::Config(format!("profile file {} not found", path.display())));
    }
    Ok(BenchmarkProfile::load(&path)?)
}

/// Reads a JSONL prompt dataset.
pub fn load_dataset(path: &Path) -> Result<Vec<DatasetPrompt>, PlanError> {
    let file = File::open(path).map_err(|e| PlanError::Config(format!("prompt file {}: {e}", path.display())))?;
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PlanError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let p: DatasetPrompt = serde_json::from_str(&line)
            .map_err(|e| PlanError::Config(format!("{} line {}: {e}", path.display(), i + 1)))?;
        if p.text.split_whitespace().next().is_none() {
            return Err(PlanError::Config(format!(
                "{} line {}: empty prompt text",
                path.display(),
                i + 1
            )));
        }
        if !ids.insert(p.prompt_id.clone()) {
            return Err(PlanError::Config(format!(
                "{}: duplicate prompt_id {:?}",
                path.display(),
                p.prompt_id
            )));
        }
        out.push(p);
    }
    Ok(out)
}

fn load_grades(path: &Path) -> Result<BTreeMap<(CellKey, String), bool>, PlanError> {
    let file = File::open(path).map_err(|e| PlanError::Config(format!("grader file {}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| PlanError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let g: GradeEntry = serde_json::from_str(&line)
            .map_err(|e| PlanError::Config(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.insert((CellKey::new(g.model, g.benchmark, g.ratio), g.prompt_id), g.pass1);
    }
    Ok(out)
}

/// Draws `n` prompts without replacement. The stream depends only on the
/// seed and benchmark name, so adding benchmarks leaves others unchanged.
pub fn sample_prompts(
    dataset: &[DatasetPrompt],
    n: usize,
    seed: u64,
    benchmark: &str,
) -> Result<Vec<DatasetPrompt>, PlanError> {
    if n > dataset.len() {
        return Err(PlanError::InsufficientPrompts {
            benchmark: benchmark.to_string(),
            requested: n,
            available: dataset.len(),
        });
    }
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(benchmark.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(hasher.finalize().into());
    let mut idx = rand::seq::index::sample(&mut rng, dataset.len(), n).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| dataset[i].clone()).collect())
}
