//! Quantification-oriented model selection.
//!
//! Every configuration of a learner grid is fitted on the training part and
//! scored on one shared set of validation samples drawn with the
//! artificial-prevalence protocol, so comparisons between configurations are
//! paired. The winner optimizes the mean loss; ties go to the lowest grid
//! index.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QuantError, Result};
use crate::learners::{ClassifierOutputs, LearnerConfig, LearnerKind};
use crate::prevalence::{absolute_error, relative_absolute_error, Label, PrevalenceVector};
use crate::quantifiers::{fit, FitOptions, Method, QuantifierModel};
use crate::sampling::{protocol_samples, GridPoint, ProtocolPlan, SampleIndex};
use crate::text::FeatureSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub kind: LearnerKind,
    pub configs: Vec<LearnerConfig>,
}

impl ParamGrid {
    pub fn new(kind: LearnerKind, configs: Vec<LearnerConfig>) -> Result<Self> {
        if configs.is_empty() {
            return Err(QuantError::InvalidArgument("empty parameter grid".into()));
        }
        if let Some(bad) = configs.iter().find(|c| c.kind() != kind) {
            return Err(QuantError::InvalidArgument(format!("{bad} in a {kind} grid")));
        }
        Ok(Self { kind, configs })
    }
}

/// C in {1e-4, ..., 1e5}.
pub fn c_values() -> Vec<f64> {
    (-4..=5).map(|i| format!("1e{i}").parse().unwrap()).collect()
}

/// Full grid for a learner: C x {balanced, unbalanced} for LR and LSVM
/// (20 configurations), alpha in {0, 0.05, ..., 1} for MNB (21).
pub fn grid_for(kind: LearnerKind) -> ParamGrid {
    let configs = match kind {
        LearnerKind::NaiveBayes => (0..=20).map(|i| LearnerConfig::NaiveBayes { alpha: i as f64 / 20.0 }).collect(),
        LearnerKind::Logistic | LearnerKind::LinearSvm => c_values()
            .into_iter()
            .flat_map(|c| {
                [true, false].map(|balanced| match kind {
                    LearnerKind::Logistic => LearnerConfig::Logistic { c, balanced },
                    _ => LearnerConfig::LinearSvm { c, balanced },
                })
            })
            .collect(),
    };
    ParamGrid { kind, configs }
}

/// [`grid_for`] by learner code ("LR", "MNB", "LSVM").
pub fn grid_for_name(name: &str) -> Result<ParamGrid> {
    Ok(grid_for(name.parse()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SelectionLoss {
    #[serde(rename = "AE")]
    AbsoluteError,
    #[serde(rename = "RAE")]
    RelativeAbsoluteError,
    #[serde(rename = "A")]
    Accuracy,
    #[serde(rename = "F1")]
    F1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

impl SelectionLoss {
    pub fn code(self) -> &'static str {
        match self {
            SelectionLoss::AbsoluteError => "AE",
            SelectionLoss::RelativeAbsoluteError => "RAE",
            SelectionLoss::Accuracy => "A",
            SelectionLoss::F1 => "F1",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            SelectionLoss::AbsoluteError | SelectionLoss::RelativeAbsoluteError => Direction::Minimize,
            SelectionLoss::Accuracy | SelectionLoss::F1 => Direction::Maximize,
        }
    }

    pub fn is_quantification_loss(self) -> bool {
        self.direction() == Direction::Minimize
    }

    /// True when `candidate` strictly improves on `incumbent`.
    pub fn improves(self, candidate: f64, incumbent: f64) -> bool {
        match self.direction() {
            Direction::Minimize => candidate < incumbent,
            Direction::Maximize => candidate > incumbent,
        }
    }
}

impl fmt::Display for SelectionLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for SelectionLoss {
    type Err = QuantError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AE" => Ok(SelectionLoss::AbsoluteError),
            "RAE" => Ok(SelectionLoss::RelativeAbsoluteError),
            "A" | "ACC" | "ACCURACY" => Ok(SelectionLoss::Accuracy),
            "F1" => Ok(SelectionLoss::F1),
            other => Err(QuantError::Unsupported(format!("unknown selection loss {other:?}"))),
        }
    }
}

/// Anything that can estimate the prevalence of a sample drawn from a pool.
pub trait SampleQuantifier: Sync {
    /// Per-document outputs over the whole pool, computed once per pool.
    fn prepare(&self, _pool: &FeatureSet) -> Option<ClassifierOutputs> {
        None
    }

    fn estimate(&self, pool: &FeatureSet, prepared: Option<&ClassifierOutputs>, sample: &SampleIndex) -> Result<PrevalenceVector>;

    /// Hard predictions over the pool, for classification losses.
    fn hard_predictions(&self, _pool: &FeatureSet) -> Option<Vec<u8>> {
        None
    }
}

impl SampleQuantifier for QuantifierModel {
    fn prepare(&self, pool: &FeatureSet) -> Option<ClassifierOutputs> {
        self.pool_outputs(pool)
    }

    fn estimate(&self, pool: &FeatureSet, prepared: Option<&ClassifierOutputs>, sample: &SampleIndex) -> Result<PrevalenceVector> {
        match prepared {
            Some(outputs) => self.quantify_outputs(&outputs.select(&sample.indices)),
            None => self.quantify(pool, &sample.indices),
        }
    }

    fn hard_predictions(&self, pool: &FeatureSet) -> Option<Vec<u8>> {
        self.pool_outputs(pool).map(|o| o.hard)
    }
}

/// Mean loss plus the per-sample trace (empty for classification losses).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean: f64,
    pub per_sample: Vec<f64>,
}

fn accuracy(pred: &[u8], labels: &[Label]) -> f64 {
    let hits = pred.iter().zip(labels).filter(|(&p, l)| (p != 0) == l.is_positive()).count();
    hits as f64 / labels.len() as f64
}

/// F1 of the class with fewer documents in `labels` (negative on ties).
pub fn minority_f1(pred: &[u8], labels: &[Label]) -> f64 {
    let n_pos = labels.iter().filter(|l| l.is_positive()).count();
    let minority = if n_pos < labels.len() - n_pos { Label::Positive } else { Label::Negative };
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &l) in pred.iter().zip(labels) {
        let predicted = Label::from_bool(p != 0) == minority;
        match (predicted, l == minority) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 }
}

/// Scores a quantifier on protocol samples of `pool`.
///
/// AE and RAE are averaged over samples (RAE smooths with the sample size);
/// accuracy and minority-class F1 score the classifier once on the whole pool.
pub fn evaluate_on_samples<Q: SampleQuantifier + ?Sized>(
    model: &Q,
    pool: &FeatureSet,
    samples: &[GridPoint],
    loss: SelectionLoss,
) -> Result<Evaluation> {
    if !loss.is_quantification_loss() {
        let pred = model
            .hard_predictions(pool)
            .ok_or_else(|| QuantError::Unsupported(format!("{loss} needs a classifier")))?;
        let labels = pool.labels.as_slice();
        let mean = match loss {
            SelectionLoss::Accuracy => accuracy(&pred, labels),
            _ => minority_f1(&pred, labels),
        };
        return Ok(Evaluation { mean, per_sample: Vec::new() });
    }
    let prepared = model.prepare(pool);
    let mut per_sample = Vec::new();
    for sample in samples.iter().flat_map(|g| &g.samples) {
        let estimate = model.estimate(pool, prepared.as_ref(), sample)?;
        let truth = sample.prevalence();
        per_sample.push(match loss {
            SelectionLoss::AbsoluteError => absolute_error(&truth, &estimate),
            _ => relative_absolute_error(&truth, &estimate, sample.len()),
        });
    }
    if per_sample.is_empty() {
        return Err(QuantError::EmptySample);
    }
    let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(Evaluation { mean, per_sample })
}

/// Outcome of one grid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigOutcome {
    pub index: usize,
    pub config: LearnerConfig,
    pub mean_loss: Option<f64>,
    pub per_sample: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub method: Method,
    pub loss: SelectionLoss,
    pub outcomes: Vec<ConfigOutcome>,
    pub winner_index: usize,
    pub winner: LearnerConfig,
    pub winner_loss: f64,
    pub plan: ProtocolPlan,
    pub fit_options: FitOptions,
    /// FNV-1a digest of every validation sample index, in plan order.
    pub sample_fingerprint: u64,
    pub train_size: usize,
    pub validation_size: usize,
}

/// FNV-1a over the sample indices of a plan.
pub fn fingerprint(samples: &[GridPoint]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for idx in samples.iter().flat_map(|g| &g.samples).flat_map(|s| &s.indices) {
        for byte in (*idx as u64).to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Grid search of `method` over `grid`, scored on validation samples.
pub fn select(
    method: Method,
    grid: &ParamGrid,
    train: &FeatureSet,
    validation: &FeatureSet,
    plan: &ProtocolPlan,
    loss: SelectionLoss,
    fit_options: &FitOptions,
) -> Result<(QuantifierModel, SelectionReport)> {
    if grid.configs.is_empty() {
        return Err(QuantError::InvalidArgument("empty parameter grid".into()));
    }
    let samples = if loss.is_quantification_loss() {
        protocol_samples(&validation.labels, plan)?
    } else {
        Vec::new()
    };
    let results: Vec<Result<(QuantifierModel, Evaluation)>> = grid
        .configs
        .par_iter()
        .map(|config| {
            let model = fit(method, train, Some(config), fit_options)?;
            let eval = evaluate_on_samples(&model, validation, &samples, loss)?;
            Ok((model, eval))
        })
        .collect();

    let mut outcomes = Vec::with_capacity(results.len());
    let mut best: Option<(usize, f64)> = None;
    let mut models = Vec::with_capacity(results.len());
    for (index, (config, result)) in grid.configs.iter().zip(results).enumerate() {
        match result {
            Ok((model, eval)) if eval.mean.is_finite() => {
                if best.is_none_or(|(_, b)| loss.improves(eval.mean, b)) {
                    best = Some((index, eval.mean));
                }
                outcomes.push(ConfigOutcome {
                    index,
                    config: *config,
                    mean_loss: Some(eval.mean),
                    per_sample: eval.per_sample,
                    error: None,
                });
                models.push(Some(model));
            }
            Ok((_, eval)) => {
                outcomes.push(ConfigOutcome {
                    index,
                    config: *config,
                    mean_loss: None,
                    per_sample: eval.per_sample,
                    error: Some(format!("non-finite mean loss {}", eval.mean)),
                });
                models.push(None);
            }
            Err(e) => {
                outcomes.push(ConfigOutcome { index, config: *config, mean_loss: None, per_sample: Vec::new(), error: Some(e.to_string()) });
                models.push(None);
            }
        }
    }
    let Some((winner_index, winner_loss)) = best else {
        let causes = outcomes.into_iter().map(|o| (o.index, o.error.unwrap_or_default())).collect();
        return Err(QuantError::AllConfigsFailed(causes));
    };
    let model = models.swap_remove(winner_index).expect("winner has a fitted model");
    let report = SelectionReport {
        method,
        loss,
        winner_index,
        winner: grid.configs[winner_index],
        winner_loss,
        outcomes,
        plan: plan.clone(),
        fit_options: fit_options.clone(),
        sample_fingerprint: fingerprint(&samples),
        train_size: train.len(),
        validation_size: validation.len(),
    };
    Ok((model, report))
}
