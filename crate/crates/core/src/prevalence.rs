//! Prevalence vectors, classifier rates and the quantification error measures.
//!
//! Everything here is binary: the class set is {positive, negative}.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{QuantError, Result};

/// Tolerance used when validating that a prevalence vector sums to one.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    /// +1 for positive, -1 for negative.
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn other(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Positive => f.write_str("positive"),
            Label::Negative => f.write_str("negative"),
        }
    }
}

/// A nonempty sequence of binary labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryLabelVector(Vec<Label>);

impl BinaryLabelVector {
    pub fn new(labels: Vec<Label>) -> Result<Self> {
        if labels.is_empty() {
            return Err(QuantError::EmptySample);
        }
        Ok(Self(labels))
    }

    /// Builds labels from 0/1 flags (1 = positive).
    pub fn from_flags(flags: &[u8]) -> Result<Self> {
        Self::new(flags.iter().map(|&f| Label::from_bool(f != 0)).collect())
    }

    pub fn as_slice(&self) -> &[Label] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.0.iter().filter(|&&l| l == label).count()
    }

    /// Positions of every document carrying `label`, in pool order.
    pub fn positions(&self, label: Label) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }

    /// Labels at the given positions. Fails on an empty selection.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.0[i]).collect())
    }

    pub fn into_inner(self) -> Vec<Label> {
        self.0
    }
}

impl std::ops::Index<usize> for BinaryLabelVector {
    type Output = Label;

    fn index(&self, i: usize) -> &Label {
        &self.0[i]
    }
}

/// A distribution over {positive, negative}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceVector {
    pos: f64,
    neg: f64,
}

impl PrevalenceVector {
    /// Validates and renormalizes a pair of class prevalences.
    pub fn new(pos: f64, neg: f64) -> Result<Self> {
        let in_unit = |v: f64| v.is_finite() && (-SUM_TOLERANCE..=1.0 + SUM_TOLERANCE).contains(&v);
        if !in_unit(pos) || !in_unit(neg) || ((pos + neg) - 1.0).abs() > SUM_TOLERANCE {
            return Err(QuantError::InvalidPrevalence { pos, neg });
        }
        let total = pos + neg;
        Ok(Self {
            pos: (pos / total).clamp(0.0, 1.0),
            neg: (neg / total).clamp(0.0, 1.0),
        })
    }

    /// Builds `(pos, 1 - pos)`; `pos` must lie in [0, 1].
    pub fn from_positive(pos: f64) -> Result<Self> {
        if !pos.is_finite() || !(0.0..=1.0).contains(&pos) {
            return Err(QuantError::InvalidPrevalence { pos, neg: 1.0 - pos });
        }
        Ok(Self { pos, neg: 1.0 - pos })
    }

    pub fn pos(&self) -> f64 {
        self.pos
    }

    pub fn neg(&self) -> f64 {
        self.neg
    }

    pub fn get(&self, label: Label) -> f64 {
        match label {
            Label::Positive => self.pos,
            Label::Negative => self.neg,
        }
    }
}

/// True and false positive rates of a classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassRates {
    tpr: f64,
    fpr: f64,
}

impl ClassRates {
    pub fn new(tpr: f64, fpr: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if !ok(tpr) || !ok(fpr) {
            return Err(QuantError::InvalidRates { tpr, fpr });
        }
        Ok(Self { tpr, fpr })
    }

    pub fn tpr(&self) -> f64 {
        self.tpr
    }

    pub fn fpr(&self) -> f64 {
        self.fpr
    }
}

/// Fraction of positives in a label vector.
pub fn prevalence_from_labels(labels: &[Label]) -> Result<PrevalenceVector> {
    if labels.is_empty() {
        return Err(QuantError::EmptySample);
    }
    let pos = labels.iter().filter(|l| l.is_positive()).count() as f64 / labels.len() as f64;
    PrevalenceVector::from_positive(pos)
}

/// Additive smoothing: `(eps + p(y)) / (2 eps + sum_y p(y))`.
pub fn smooth(p: &PrevalenceVector, eps: f64) -> PrevalenceVector {
    debug_assert!(eps > 0.0);
    let denom = 2.0 * eps + p.pos + p.neg;
    PrevalenceVector {
        pos: (eps + p.pos) / denom,
        neg: (eps + p.neg) / denom,
    }
}

/// Absolute error averaged over the two classes.
pub fn absolute_error(p_true: &PrevalenceVector, p_hat: &PrevalenceVector) -> f64 {
    ((p_hat.pos - p_true.pos).abs() + (p_hat.neg - p_true.neg).abs()) / 2.0
}

/// Relative absolute error averaged over the two classes. Both vectors are
/// always smoothed with `eps = 1 / (2 * test_size)`, so the result is finite
/// even when a true prevalence is zero.
pub fn relative_absolute_error(
    p_true: &PrevalenceVector,
    p_hat: &PrevalenceVector,
    test_size: usize,
) -> f64 {
    assert!(test_size >= 1, "test_size must be positive");
    let eps = 1.0 / (2.0 * test_size as f64);
    let p = smooth(p_true, eps);
    let q = smooth(p_hat, eps);
    ((q.pos - p.pos).abs() / p.pos + (q.neg - p.neg).abs() / p.neg) / 2.0
}

/// Clips a raw positive-class estimate into [0, 1].
pub fn clip_normalize(raw_pos: f64) -> Result<PrevalenceVector> {
    if !raw_pos.is_finite() {
        return Err(QuantError::NonFiniteEstimate);
    }
    let pos = raw_pos.clamp(0.0, 1.0);
    Ok(PrevalenceVector { pos, neg: 1.0 - pos })
}
