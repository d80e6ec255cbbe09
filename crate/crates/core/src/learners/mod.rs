//! Binary classifiers trained from scratch, Platt calibration, class
//! rebalancing and held-out estimation of classifier rates.
//!
//! Linear learners (logistic regression and the linear SVM) read the tf-idf
//! view of a [`FeatureSet`]; multinomial naive Bayes reads the count view.

mod linear;
mod naive_bayes;
mod platt;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{QuantError, Result};
use crate::optim::LbfgsSettings;
use crate::prevalence::{prevalence_from_labels, BinaryLabelVector, ClassRates, Label, PrevalenceVector};
use crate::text::{FeatureSet, SparseDocMatrix};

pub use linear::{logistic_objective, squared_hinge_objective, train_linear_svm, train_logistic, LinearModel};
pub use naive_bayes::{train_mnb, NaiveBayesModel, LOG_FLOOR};
pub use platt::{platt_calibrate, platt_nll, CalibrationMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LearnerKind {
    #[serde(rename = "LR")]
    Logistic,
    #[serde(rename = "MNB")]
    NaiveBayes,
    #[serde(rename = "LSVM")]
    LinearSvm,
}

impl LearnerKind {
    pub fn code(self) -> &'static str {
        match self {
            LearnerKind::Logistic => "LR",
            LearnerKind::NaiveBayes => "MNB",
            LearnerKind::LinearSvm => "LSVM",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for LearnerKind {
    type Err = QuantError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LR" => Ok(LearnerKind::Logistic),
            "MNB" => Ok(LearnerKind::NaiveBayes),
            "LSVM" | "SVM" => Ok(LearnerKind::LinearSvm),
            other => Err(QuantError::Unsupported(format!("unknown learner kind {other:?}"))),
        }
    }
}

/// Hyperparameters of one learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LearnerConfig {
    #[serde(rename = "LR")]
    Logistic { c: f64, balanced: bool },
    #[serde(rename = "MNB")]
    NaiveBayes { alpha: f64 },
    #[serde(rename = "LSVM")]
    LinearSvm { c: f64, balanced: bool },
}

impl LearnerConfig {
    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerConfig::Logistic { .. } => LearnerKind::Logistic,
            LearnerConfig::NaiveBayes { .. } => LearnerKind::NaiveBayes,
            LearnerConfig::LinearSvm { .. } => LearnerKind::LinearSvm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LearnerConfig::Logistic { c, .. } | LearnerConfig::LinearSvm { c, .. } if !(c > 0.0 && c.is_finite()) => {
                Err(QuantError::InvalidArgument(format!("C must be positive, got {c}")))
            }
            LearnerConfig::NaiveBayes { alpha } if !(alpha >= 0.0 && alpha.is_finite()) => {
                Err(QuantError::InvalidArgument(format!("alpha must be non-negative, got {alpha}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for LearnerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerConfig::Logistic { c, balanced } => write!(f, "LR(C={c:e},balanced={balanced})"),
            LearnerConfig::NaiveBayes { alpha } => write!(f, "MNB(alpha={alpha})"),
            LearnerConfig::LinearSvm { c, balanced } => write!(f, "LSVM(C={c:e},balanced={balanced})"),
        }
    }
}

/// Misclassification costs `(J_pos, J_neg)`. Balanced mode sets
/// `J_pos = p_neg / p_pos` and `J_neg = 1`; otherwise both are 1.
pub fn class_weights(train_prevalence: &PrevalenceVector, balanced: bool) -> Result<(f64, f64)> {
    if train_prevalence.pos() <= 0.0 || train_prevalence.neg() <= 0.0 {
        return Err(QuantError::DegenerateClassWeights);
    }
    if balanced {
        Ok((train_prevalence.neg() / train_prevalence.pos(), 1.0))
    } else {
        Ok((1.0, 1.0))
    }
}

/// Diagnostics of a training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainInfo {
    pub n_train: usize,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClassifierModel {
    Logistic(LinearModel),
    /// Raw margins plus a Platt map fitted on cross-validated margins.
    LinearSvm { model: LinearModel, calibration: CalibrationMap },
    NaiveBayes(NaiveBayesModel),
}

/// A trained classifier exposing hard and soft predictions.
///
/// Hard predictions threshold the posterior at 0.5 for logistic regression
/// and naive Bayes, and the raw margin at 0 for the linear SVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub model: ClassifierModel,
    pub config: LearnerConfig,
    pub info: TrainInfo,
}

/// Per-document outputs of a classifier over a whole pool.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassifierOutputs {
    pub hard: Vec<u8>,
    pub soft: Vec<f64>,
}

impl ClassifierOutputs {
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            hard: indices.iter().map(|&i| self.hard[i]).collect(),
            soft: indices.iter().map(|&i| self.soft[i]).collect(),
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Classifier {
    fn matrix<'a>(&self, features: &'a FeatureSet) -> &'a SparseDocMatrix {
        match self.model {
            ClassifierModel::NaiveBayes(_) => &features.counts,
            _ => &features.tfidf,
        }
    }

    /// Raw decision value: logit for LR, margin for the SVM, log-odds for MNB.
    pub fn decision(&self, features: &FeatureSet, i: usize) -> f64 {
        let x = self.matrix(features);
        match &self.model {
            ClassifierModel::Logistic(m) | ClassifierModel::LinearSvm { model: m, .. } => m.score(x.row(i)),
            ClassifierModel::NaiveBayes(m) => m.log_odds(x.row(i)),
        }
    }

    fn posterior_from_decision(&self, d: f64) -> f64 {
        match &self.model {
            ClassifierModel::LinearSvm { calibration, .. } => calibration.posterior(d),
            _ => sigmoid(d),
        }
    }

    fn hard_from_decision(&self, d: f64) -> u8 {
        match &self.model {
            ClassifierModel::LinearSvm { .. } => u8::from(d > 0.0),
            _ => u8::from(sigmoid(d) > 0.5),
        }
    }

    pub fn predict(&self, features: &FeatureSet, i: usize) -> u8 {
        self.hard_from_decision(self.decision(features, i))
    }

    /// Posterior probability of the positive class.
    pub fn posterior(&self, features: &FeatureSet, i: usize) -> f64 {
        self.posterior_from_decision(self.decision(features, i))
    }

    pub fn outputs(&self, features: &FeatureSet) -> ClassifierOutputs {
        let (hard, soft) = (0..features.len())
            .map(|i| {
                let d = self.decision(features, i);
                (self.hard_from_decision(d), self.posterior_from_decision(d))
            })
            .unzip();
        ClassifierOutputs { hard, soft }
    }
}

const CALIBRATION_FOLDS: usize = 3;

/// Trains the learner named by `config` on `data`.
pub fn train(config: &LearnerConfig, data: &FeatureSet) -> Result<Classifier> {
    config.validate()?;
    let settings = LbfgsSettings::default();
    match *config {
        LearnerConfig::Logistic { c, balanced } => {
            let weights = weights_for(&data.labels, balanced)?;
            let (model, info) = train_logistic(&data.tfidf, &data.labels, c, weights, &settings)?;
            Ok(Classifier { model: ClassifierModel::Logistic(model), config: *config, info })
        }
        LearnerConfig::NaiveBayes { alpha } => {
            let model = train_mnb(&data.counts, &data.labels, alpha)?;
            let info = TrainInfo { n_train: data.len(), iterations: 0, converged: true, objective: 0.0 };
            Ok(Classifier { model: ClassifierModel::NaiveBayes(model), config: *config, info })
        }
        LearnerConfig::LinearSvm { c, balanced } => {
            let weights = weights_for(&data.labels, balanced)?;
            let (model, info) = train_linear_svm(&data.tfidf, &data.labels, c, weights, &settings)?;
            let margins = cross_validated_margins(data, c, balanced, &settings)?
                .unwrap_or_else(|| (0..data.len()).map(|i| model.score(data.tfidf.row(i))).collect());
            let calibration = platt_calibrate(&margins, &data.labels)?;
            Ok(Classifier { model: ClassifierModel::LinearSvm { model, calibration }, config: *config, info })
        }
    }
}

fn weights_for(labels: &BinaryLabelVector, balanced: bool) -> Result<(f64, f64)> {
    if balanced {
        class_weights(&prevalence_from_labels(labels.as_slice())?, true)
    } else {
        Ok((1.0, 1.0))
    }
}

/// Out-of-fold SVM margins for calibration. Folds are assigned round-robin
/// within each class in pool order. `None` when some class is too small to
/// appear in every fold.
fn cross_validated_margins(
    data: &FeatureSet,
    c: f64,
    balanced: bool,
    settings: &LbfgsSettings,
) -> Result<Option<Vec<f64>>> {
    let mut fold_of = vec![0usize; data.len()];
    for label in [Label::Positive, Label::Negative] {
        let members = data.labels.positions(label);
        if members.len() < CALIBRATION_FOLDS {
            return Ok(None);
        }
        for (k, &i) in members.iter().enumerate() {
            fold_of[i] = k % CALIBRATION_FOLDS;
        }
    }
    let mut margins = vec![0.0; data.len()];
    for fold in 0..CALIBRATION_FOLDS {
        let (held, kept): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| fold_of[i] == fold);
        let part = data.subset(&kept)?;
        let weights = weights_for(&part.labels, balanced)?;
        let (model, _) = train_linear_svm(&part.tfidf, &part.labels, c, weights, settings)?;
        for i in held {
            margins[i] = model.score(data.tfidf.row(i));
        }
    }
    Ok(Some(margins))
}

fn check_both_classes(labels: &[Label]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|l| l.is_positive()).count();
    let neg = labels.len() - pos;
    if pos == 0 {
        return Err(QuantError::RatesUndefined(Label::Positive));
    }
    if neg == 0 {
        return Err(QuantError::RatesUndefined(Label::Negative));
    }
    Ok((pos, neg))
}

/// Held-out TPR and FPR of hard 0/1 predictions.
pub fn estimate_rates_hard(predictions: &[u8], labels: &[Label]) -> Result<ClassRates> {
    if predictions.len() != labels.len() {
        return Err(QuantError::DimensionMismatch("predictions vs labels".into()));
    }
    let (pos, neg) = check_both_classes(labels)?;
    let (mut tp, mut fp) = (0usize, 0usize);
    for (&p, l) in predictions.iter().zip(labels) {
        if p != 0 {
            if l.is_positive() {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    ClassRates::new(tp as f64 / pos as f64, fp as f64 / neg as f64)
}

/// Soft rates: mean positive posterior over each true class.
pub fn estimate_rates_soft(posteriors: &[f64], labels: &[Label]) -> Result<ClassRates> {
    if posteriors.len() != labels.len() {
        return Err(QuantError::DimensionMismatch("posteriors vs labels".into()));
    }
    let (pos, neg) = check_both_classes(labels)?;
    let (mut sp, mut sn) = (0.0, 0.0);
    for (&p, l) in posteriors.iter().zip(labels) {
        if !(0.0..=1.0).contains(&p) {
            return Err(QuantError::PosteriorOutOfRange(p));
        }
        if l.is_positive() {
            sp += p;
        } else {
            sn += p;
        }
    }
    ClassRates::new(sp / pos as f64, sn / neg as f64)
}
