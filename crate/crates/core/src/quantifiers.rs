//! Quantification methods: CC, PCC, ACC, PACC, EMQ, HDy and MLPE.
//!
//! The `*_quantify` functions are the bare estimators over classifier
//! outputs. [`fit`] wires them to a trained classifier:
//!
//! * CC, PCC, EMQ and MLPE train on the whole training part.
//! * ACC, PACC and HDy split the training part (stratified, 60/40 by
//!   default), train the classifier on the inner training part only, and
//!   estimate their own parameters on the inner validation part. The
//!   classifier is not retrained on the union afterwards, since the
//!   parameters describe the classifier that produced them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{QuantError, Result};
use crate::learners::{self, estimate_rates_hard, estimate_rates_soft, Classifier, ClassifierOutputs, LearnerConfig};
use crate::prevalence::{clip_normalize, prevalence_from_labels, ClassRates, Label, PrevalenceVector};
use crate::sampling::stratified_split;
use crate::text::FeatureSet;

/// Minimum `|tpr - fpr|` for the ACC/PACC adjustment.
pub const MIN_RATE_GAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Cc,
    Pcc,
    Acc,
    Pacc,
    Emq,
    #[serde(rename = "HDy")]
    Hdy,
    Mlpe,
}

impl Method {
    pub const ALL: [Method; 7] = [Method::Cc, Method::Pcc, Method::Acc, Method::Pacc, Method::Emq, Method::Hdy, Method::Mlpe];

    pub fn code(self) -> &'static str {
        match self {
            Method::Cc => "CC",
            Method::Pcc => "PCC",
            Method::Acc => "ACC",
            Method::Pacc => "PACC",
            Method::Emq => "EMQ",
            Method::Hdy => "HDy",
            Method::Mlpe => "MLPE",
        }
    }

    /// Methods with parameters of their own, estimated on an inner split.
    pub fn estimates_parameters(self) -> bool {
        matches!(self, Method::Acc | Method::Pacc | Method::Hdy)
    }

    pub fn needs_classifier(self) -> bool {
        self != Method::Mlpe
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for Method {
    type Err = QuantError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| QuantError::Unsupported(format!("unknown method {s:?}")))
    }
}

/// Stopping rule of the EM prior re-estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmqSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for EmqSettings {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_iterations: 1000 }
    }
}

/// Histogram resolutions and mixture-weight grid of HDy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HdySettings {
    pub bin_counts: Vec<usize>,
    pub alpha_grid_step: f64,
}

impl Default for HdySettings {
    fn default() -> Self {
        Self { bin_counts: (1..=11).map(|k| 10 * k).collect(), alpha_grid_step: 0.01 }
    }
}

impl HdySettings {
    fn grid_points(&self) -> Result<usize> {
        let step = self.alpha_grid_step;
        if self.bin_counts.is_empty() || self.bin_counts.contains(&0) {
            return Err(QuantError::InvalidArgument("HDy needs positive bin counts".into()));
        }
        if !(step > 0.0 && step < 1.0) {
            return Err(QuantError::InvalidArgument(format!("HDy step {step} outside (0, 1)")));
        }
        let k = (1.0 / step).round();
        if (k * step - 1.0).abs() > 1e-9 {
            return Err(QuantError::InvalidArgument(format!("HDy step {step} does not divide 1")));
        }
        Ok(k as usize)
    }
}

/// Classify and count: the fraction of positive hard predictions.
pub fn cc_quantify(hard_predictions: &[u8]) -> Result<PrevalenceVector> {
    if hard_predictions.is_empty() {
        return Err(QuantError::EmptySample);
    }
    let ones = hard_predictions.iter().filter(|&&p| p != 0).count();
    PrevalenceVector::from_positive(ones as f64 / hard_predictions.len() as f64)
}

fn check_posteriors(posteriors: &[f64]) -> Result<()> {
    if posteriors.is_empty() {
        return Err(QuantError::EmptySample);
    }
    match posteriors.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(&bad) => Err(QuantError::PosteriorOutOfRange(bad)),
        None => Ok(()),
    }
}

/// Mean with Neumaier-compensated summation; the sum is correctly rounded, so
/// the mean of identical values lands within an ulp of that value.
fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp, mut n) = (0.0f64, 0.0f64, 0usize);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
        n += 1;
    }
    (sum + comp) / n as f64
}

/// Probabilistic classify and count: the mean positive posterior.
pub fn pcc_quantify(posteriors: &[f64]) -> Result<PrevalenceVector> {
    check_posteriors(posteriors)?;
    clip_normalize(mean(posteriors.iter().copied()))
}

fn adjust(estimate: &PrevalenceVector, rates: &ClassRates) -> Result<PrevalenceVector> {
    let gap = rates.tpr() - rates.fpr();
    if gap.abs() < MIN_RATE_GAP {
        return Err(QuantError::DegenerateRates { tpr: rates.tpr(), fpr: rates.fpr() });
    }
    clip_normalize((estimate.pos() - rates.fpr()) / gap)
}

/// Adjusted classify and count: inverts the bias of CC given TPR and FPR,
/// then clips into [0, 1].
pub fn acc_quantify(cc_estimate: &PrevalenceVector, rates: &ClassRates) -> Result<PrevalenceVector> {
    adjust(cc_estimate, rates)
}

/// Probabilistic ACC: the same inversion applied to PCC with soft rates.
pub fn pacc_quantify(pcc_estimate: &PrevalenceVector, soft_rates: &ClassRates) -> Result<PrevalenceVector> {
    adjust(pcc_estimate, soft_rates)
}

/// Result of an EM run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmqOutcome {
    pub prevalence: PrevalenceVector,
    pub iterations: usize,
    /// Max-norm change of the prior in the final iteration.
    pub last_step: f64,
    /// False when the iteration cap was hit before the tolerance.
    pub converged: bool,
}

/// EM re-estimation of the test prior from posteriors calibrated for the
/// training prior.
pub fn emq_run(test_posteriors: &[f64], train_prevalence: &PrevalenceVector, settings: &EmqSettings) -> Result<EmqOutcome> {
    check_posteriors(test_posteriors)?;
    let (p0_pos, p0_neg) = (train_prevalence.pos(), train_prevalence.neg());
    if p0_pos <= 0.0 || p0_neg <= 0.0 {
        return Err(QuantError::EmZeroPrior);
    }
    if settings.tolerance.is_nan() || settings.tolerance <= 0.0 || settings.max_iterations == 0 {
        return Err(QuantError::InvalidArgument("EMQ needs tolerance > 0 and at least one iteration".into()));
    }
    let mut prior = p0_pos;
    let mut last_step = f64::INFINITY;
    for iteration in 1..=settings.max_iterations {
        let (w_pos, w_neg) = (prior / p0_pos, (1.0 - prior) / p0_neg);
        let next = mean(test_posteriors.iter().map(|&s| {
            let (a, b) = (w_pos * s, w_neg * (1.0 - s));
            if a + b > 0.0 { a / (a + b) } else { s }
        }));
        last_step = (next - prior).abs();
        prior = next;
        if last_step < settings.tolerance {
            return Ok(EmqOutcome { prevalence: clip_normalize(prior)?, iterations: iteration, last_step, converged: true });
        }
    }
    Ok(EmqOutcome {
        prevalence: clip_normalize(prior)?,
        iterations: settings.max_iterations,
        last_step,
        converged: false,
    })
}

pub fn emq_quantify(test_posteriors: &[f64], train_prevalence: &PrevalenceVector, settings: &EmqSettings) -> Result<PrevalenceVector> {
    emq_run(test_posteriors, train_prevalence, settings).map(|o| o.prevalence)
}

/// Probability mass per equal-width bin on [0, 1].
pub fn histogram(values: &[f64], bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for &v in values {
        let b = ((v * bins as f64).floor() as usize).min(bins - 1);
        h[b] += 1.0;
    }
    let n = values.len() as f64;
    h.iter_mut().for_each(|c| *c /= n);
    h
}

/// `sqrt(sum_i (sqrt(p_i) - sqrt(q_i))^2)`.
pub fn hellinger_distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .sum::<f64>()
        .sqrt()
}

const TIE_TOLERANCE: f64 = 1e-12;

/// Mixture weight on the grid minimizing the Hellinger distance between
/// `alpha * pos + (1 - alpha) * neg` and `test`; ties go to the smallest alpha.
pub fn hdy_argmin(pos: &[f64], neg: &[f64], test: &[f64], grid_points: usize) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    let mut mixture = vec![0.0; pos.len()];
    for k in 0..=grid_points {
        let alpha = k as f64 / grid_points as f64;
        mixture
            .iter_mut()
            .zip(pos.iter().zip(neg))
            .for_each(|(m, (p, n))| *m = alpha * p + (1.0 - alpha) * n);
        let d = hellinger_distance(&mixture, test);
        if d < best.0 - TIE_TOLERANCE {
            best = (d, alpha);
        }
    }
    best.1
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// HDy: median over bin counts of the Hellinger-optimal mixture weight.
pub fn hdy_quantify(
    val_pos_posteriors: &[f64],
    val_neg_posteriors: &[f64],
    test_posteriors: &[f64],
    settings: &HdySettings,
) -> Result<PrevalenceVector> {
    if val_pos_posteriors.is_empty() {
        return Err(QuantError::EmptyPool("positive validation posteriors"));
    }
    if val_neg_posteriors.is_empty() {
        return Err(QuantError::EmptyPool("negative validation posteriors"));
    }
    for pool in [val_pos_posteriors, val_neg_posteriors] {
        check_posteriors(pool)?;
    }
    check_posteriors(test_posteriors)?;
    let grid_points = settings.grid_points()?;
    let argmins = settings
        .bin_counts
        .iter()
        .map(|&b| {
            hdy_argmin(
                &histogram(val_pos_posteriors, b),
                &histogram(val_neg_posteriors, b),
                &histogram(test_posteriors, b),
                grid_points,
            )
        })
        .collect();
    clip_normalize(median(argmins))
}

/// Maximum-likelihood prevalence estimator: always the training prevalence.
pub fn mlpe_quantify(train_prevalence: &PrevalenceVector) -> PrevalenceVector {
    *train_prevalence
}

/// Parameters a method estimated at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MethodParams {
    None,
    Rates(ClassRates),
    TrainPrevalence(PrevalenceVector),
    PosteriorPools { pos: Vec<f64>, neg: Vec<f64> },
}

/// Knobs of [`fit`] beyond the learner configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Share of the training part kept for the classifier in methods that
    /// estimate parameters; the rest estimates them.
    pub inner_train_fraction: f64,
    pub seed: u64,
    pub emq: EmqSettings,
    pub hdy: HdySettings,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { inner_train_fraction: 0.6, seed: 0, emq: EmqSettings::default(), hdy: HdySettings::default() }
    }
}

/// A fitted quantifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantifierModel {
    pub method: Method,
    pub classifier: Option<Classifier>,
    pub params: MethodParams,
    pub emq: EmqSettings,
    pub hdy: HdySettings,
}

/// Trains the classifier (when the method needs one) and estimates the
/// method's own parameters.
pub fn fit(method: Method, train: &FeatureSet, learner: Option<&LearnerConfig>, options: &FitOptions) -> Result<QuantifierModel> {
    if train.is_empty() {
        return Err(QuantError::EmptySample);
    }
    let train_prevalence = prevalence_from_labels(train.labels.as_slice())?;
    let model = |classifier, params| QuantifierModel {
        method,
        classifier,
        params,
        emq: options.emq,
        hdy: options.hdy.clone(),
    };
    if method == Method::Mlpe {
        return Ok(model(None, MethodParams::TrainPrevalence(train_prevalence)));
    }
    let config = learner.ok_or_else(|| QuantError::InvalidArgument(format!("{method} needs a learner")))?;
    for label in [Label::Positive, Label::Negative] {
        if train.labels.count(label) == 0 {
            return Err(QuantError::ClassUnavailable(label));
        }
    }

    if !method.estimates_parameters() {
        let classifier = learners::train(config, train)?;
        let params = match method {
            Method::Emq => {
                if train_prevalence.pos() <= 0.0 || train_prevalence.neg() <= 0.0 {
                    return Err(QuantError::EmZeroPrior);
                }
                MethodParams::TrainPrevalence(train_prevalence)
            }
            _ => MethodParams::None,
        };
        return Ok(model(Some(classifier), params));
    }

    let (inner_train, inner_val) = stratified_split(&train.labels, options.inner_train_fraction, options.seed)?;
    let classifier = learners::train(config, &train.subset(&inner_train.indices)?)?;
    let val = train.subset(&inner_val.indices)?;
    let outputs = classifier.outputs(&val);
    let labels = val.labels.as_slice();
    let params = match method {
        Method::Acc | Method::Pacc => {
            let rates = if method == Method::Acc {
                estimate_rates_hard(&outputs.hard, labels)?
            } else {
                estimate_rates_soft(&outputs.soft, labels)?
            };
            if (rates.tpr() - rates.fpr()).abs() < MIN_RATE_GAP {
                return Err(QuantError::DegenerateRates { tpr: rates.tpr(), fpr: rates.fpr() });
            }
            MethodParams::Rates(rates)
        }
        _ => {
            let (mut pos, mut neg) = (Vec::new(), Vec::new());
            for (&s, l) in outputs.soft.iter().zip(labels) {
                if l.is_positive() { pos.push(s) } else { neg.push(s) }
            }
            if pos.is_empty() {
                return Err(QuantError::EmptyPool("positive validation posteriors"));
            }
            if neg.is_empty() {
                return Err(QuantError::EmptyPool("negative validation posteriors"));
            }
            MethodParams::PosteriorPools { pos, neg }
        }
    };
    Ok(model(Some(classifier), params))
}

impl QuantifierModel {
    /// Classifier outputs over every document of `pool`; `None` for MLPE.
    pub fn pool_outputs(&self, pool: &FeatureSet) -> Option<ClassifierOutputs> {
        self.classifier.as_ref().map(|c| c.outputs(pool))
    }

    /// Estimates the prevalence of a sample from its classifier outputs.
    pub fn quantify_outputs(&self, outputs: &ClassifierOutputs) -> Result<PrevalenceVector> {
        match (&self.method, &self.params) {
            (Method::Mlpe, MethodParams::TrainPrevalence(p)) => Ok(mlpe_quantify(p)),
            (Method::Cc, _) => cc_quantify(&outputs.hard),
            (Method::Pcc, _) => pcc_quantify(&outputs.soft),
            (Method::Acc, MethodParams::Rates(r)) => acc_quantify(&cc_quantify(&outputs.hard)?, r),
            (Method::Pacc, MethodParams::Rates(r)) => pacc_quantify(&pcc_quantify(&outputs.soft)?, r),
            (Method::Emq, MethodParams::TrainPrevalence(p)) => emq_quantify(&outputs.soft, p, &self.emq),
            (Method::Hdy, MethodParams::PosteriorPools { pos, neg }) => hdy_quantify(pos, neg, &outputs.soft, &self.hdy),
            (m, _) => Err(QuantError::InvalidArgument(format!("{m} model is missing its parameters"))),
        }
    }

    /// Estimates the prevalence of the rows `indices` of `pool`.
    pub fn quantify(&self, pool: &FeatureSet, indices: &[usize]) -> Result<PrevalenceVector> {
        if indices.is_empty() {
            return Err(QuantError::EmptySample);
        }
        match &self.classifier {
            None => self.quantify_outputs(&ClassifierOutputs::default()),
            Some(c) => {
                let outputs = ClassifierOutputs {
                    hard: indices.iter().map(|&i| c.predict(pool, i)).collect(),
                    soft: indices.iter().map(|&i| c.posterior(pool, i)).collect(),
                };
                self.quantify_outputs(&outputs)
            }
        }
    }
}
