//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use quantlearn::selection::c_values;
use quantlearn::synthetic::SyntheticSpec;
use quantlearn::{default_grid, LearnerConfig, LearnerKind, Method, ParamGrid, ProtocolPlan, SelectionLoss};
use serde::{Deserialize, Serialize};

/// Environment variable naming the directory where `prepare` caches
/// vocabularies and splits. Defaults to `<output_dir>/cache`.
pub const CACHE_ENV: &str = "QUANTLEARN_CACHE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticPair {
    pub train: SyntheticSpec,
    pub test: SyntheticSpec,
}

/// A dataset is either a pair of TSV files (labelled training set and test
/// set) or a pair of synthetic corpus specifications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Tsv,
}

/// Sampling plan shape; the master seed is derived per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    /// Prevalence grid; defaults to {0.00, 0.05, ..., 1.00}.
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    pub samples_per_point: usize,
    pub sample_size: usize,
}

impl PlanConfig {
    pub fn plan(&self, seed: u64) -> Result<ProtocolPlan> {
        Ok(ProtocolPlan::new(self.grid.clone(), self.samples_per_point, self.sample_size, seed)?)
    }
}

fn default_validation() -> PlanConfig {
    PlanConfig { grid: default_grid(), samples_per_point: 10, sample_size: 500 }
}

fn default_test() -> PlanConfig {
    PlanConfig { grid: default_grid(), samples_per_point: 100, sample_size: 500 }
}

fn default_format() -> DatasetFormat {
    DatasetFormat::Tsv
}

fn default_fraction() -> f64 {
    0.6
}

fn default_min_count() -> usize {
    5
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetConfig>,
    #[serde(default = "default_format")]
    pub format: DatasetFormat,
    pub methods: Vec<Method>,
    pub learners: Vec<LearnerKind>,
    pub losses: Vec<SelectionLoss>,
    #[serde(default = "default_validation")]
    pub validation: PlanConfig,
    #[serde(default = "default_test")]
    pub test: PlanConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Repetitions of methods that estimate their own parameters
    /// (ACC, PACC, HDy). Defaults to 10.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    /// Repetitions of every other method. Defaults to 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repetitions_other: Option<usize>,
    /// Outer training share of the labelled set.
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    /// Inner training share used by ACC, PACC and HDy.
    #[serde(default = "default_fraction")]
    pub inner_train_fraction: f64,
    /// Terms occurring fewer times in the training set are masked.
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    /// Overrides the C grid of LR and LSVM.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_grid: Option<Vec<f64>>,
    /// Overrides the alpha grid of MNB.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_grid: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: Self = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // dataset paths are relative to the config file
        let base = path.parent().unwrap_or(Path::new(""));
        for d in &mut config.datasets {
            for p in [&mut d.train, &mut d.test].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() || self.methods.is_empty() {
            bail!("config needs at least one dataset and one method");
        }
        if self.methods.iter().any(|m| m.needs_classifier()) && (self.learners.is_empty() || self.losses.is_empty()) {
            bail!("classifier-based methods need at least one learner and one loss");
        }
        if self.repetitions == Some(0) || self.repetitions_other == Some(0) {
            bail!("repetition counts must be at least 1");
        }
        for f in [self.train_fraction, self.inner_train_fraction] {
            if !(f > 0.0 && f < 1.0) {
                bail!("split fractions must lie in (0, 1), got {f}");
            }
        }
        self.validation.plan(0)?;
        self.test.plan(0)?;
        for d in &self.datasets {
            match (&d.train, &d.test, &d.synthetic) {
                (Some(train), Some(test), None) => {
                    for p in [train, test] {
                        if !p.exists() {
                            bail!("dataset {}: {} does not exist", d.name, p.display());
                        }
                    }
                }
                (None, None, Some(_)) => {}
                _ => bail!("dataset {} needs either train+test paths or a synthetic block", d.name),
            }
            if d.name.is_empty() || d.name.contains(['/', '\\']) {
                bail!("dataset name {:?} is not a valid file stem", d.name);
            }
        }
        for kind in &self.learners {
            self.grid(*kind)?;
        }
        Ok(())
    }

    pub fn repetitions_for(&self, method: Method) -> usize {
        if method.estimates_parameters() {
            self.repetitions.unwrap_or(10)
        } else {
            self.repetitions_other.unwrap_or(1)
        }
    }

    pub fn grid(&self, kind: LearnerKind) -> Result<ParamGrid> {
        let configs = match kind {
            LearnerKind::NaiveBayes => match &self.alpha_grid {
                Some(alphas) => alphas.iter().map(|&alpha| LearnerConfig::NaiveBayes { alpha }).collect(),
                None => return Ok(quantlearn::grid_for(kind)),
            },
            _ => {
                let cs = self.c_grid.clone().unwrap_or_else(c_values);
                cs.into_iter()
                    .flat_map(|c| {
                        [true, false].map(|balanced| match kind {
                            LearnerKind::Logistic => LearnerConfig::Logistic { c, balanced },
                            _ => LearnerConfig::LinearSvm { c, balanced },
                        })
                    })
                    .collect()
            }
        };
        let grid = ParamGrid::new(kind, configs)?;
        for c in &grid.configs {
            c.validate()?;
        }
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_protocol_defaults() {
        let json = r#"{
            "datasets": [{"name": "toy", "synthetic": {
                "train": {"n_docs": 100, "prevalence": 0.5, "vocabulary": 50, "indicative_words": 5,
                          "signal": 0.2, "min_length": 5, "max_length": 10, "seed": 1},
                "test":  {"n_docs": 100, "prevalence": 0.5, "vocabulary": 50, "indicative_words": 5,
                          "signal": 0.2, "min_length": 5, "max_length": 10, "seed": 2}}}],
            "methods": ["CC", "HDy", "MLPE"],
            "learners": ["LR", "MNB"],
            "losses": ["AE", "A"]
        }"#;
        let c: ExperimentConfig = serde_json::from_str(json).unwrap();
        c.validate().unwrap();
        assert_eq!(c.validation.samples_per_point, 10);
        assert_eq!(c.test.samples_per_point, 100);
        assert_eq!(c.test.grid.len(), 21);
        assert_eq!(c.repetitions_for(Method::Hdy), 10);
        assert_eq!(c.repetitions_for(Method::Cc), 1);
        assert_eq!(c.grid(LearnerKind::Logistic).unwrap().configs.len(), 20);
        assert_eq!(c.grid(LearnerKind::NaiveBayes).unwrap().configs.len(), 21);
    }

    #[test]
    fn rejects_unknown_fields_and_missing_paths() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"datasets": [], "methods": [], "learners": [], "losses": [], "bogus": 1}"#).is_err());
        let json = r#"{"datasets": [{"name": "x", "train": "/nonexistent/a.tsv", "test": "/nonexistent/b.tsv"}],
                       "methods": ["CC"], "learners": ["LR"], "losses": ["AE"]}"#;
        let c: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert!(c.validate().is_err());
    }
}
