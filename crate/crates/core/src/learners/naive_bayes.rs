//! Multinomial naive Bayes with additive smoothing and empirical priors.

use serde::{Deserialize, Serialize};

use crate::error::{QuantError, Result};
use crate::prevalence::{BinaryLabelVector, Label};
use crate::text::SparseDocMatrix;

/// Floor for log-probabilities of zero-probability cells (alpha = 0).
pub const LOG_FLOOR: f64 = -745.0;

fn floored_ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln().max(LOG_FLOOR)
    } else {
        LOG_FLOOR
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    /// ln P(positive), ln P(negative)
    pub log_prior: [f64; 2],
    /// Per-feature ln P(f | positive) and ln P(f | negative).
    pub log_likelihood: [Vec<f64>; 2],
}

impl NaiveBayesModel {
    /// Log joint likelihood of a count row under each class.
    pub fn log_joint(&self, row: &[(u32, f64)]) -> [f64; 2] {
        let mut out = self.log_prior;
        for (k, o) in out.iter_mut().enumerate() {
            *o += row.iter().map(|&(f, c)| c * self.log_likelihood[k][f as usize]).sum::<f64>();
        }
        out
    }

    /// ln P(positive | x) - ln P(negative | x).
    pub fn log_odds(&self, row: &[(u32, f64)]) -> f64 {
        let [p, n] = self.log_joint(row);
        p - n
    }

    /// Posterior of the positive class, normalized in log space.
    pub fn posterior(&self, row: &[(u32, f64)]) -> f64 {
        let [p, n] = self.log_joint(row);
        let m = p.max(n);
        let (ep, en) = ((p - m).exp(), (n - m).exp());
        ep / (ep + en)
    }
}

/// Fits term likelihoods `(N_cf + alpha) / (N_c + alpha * |V|)` on a count
/// matrix, with class priors taken from the label frequencies.
pub fn train_mnb(x: &SparseDocMatrix, y: &BinaryLabelVector, alpha: f64) -> Result<NaiveBayesModel> {
    if x.n_rows() != y.len() {
        return Err(QuantError::DimensionMismatch(format!("{} rows but {} labels", x.n_rows(), y.len())));
    }
    if alpha.is_nan() || alpha < 0.0 {
        return Err(QuantError::InvalidArgument(format!("alpha must be non-negative, got {alpha}")));
    }
    let d = x.n_features();
    let mut counts = [vec![0.0; d], vec![0.0; d]];
    for (i, row) in x.rows().enumerate() {
        let k = usize::from(y[i] == Label::Negative);
        for &(f, c) in row {
            if c < 0.0 {
                return Err(QuantError::InvalidArgument("negative term count".into()));
            }
            counts[k][f as usize] += c;
        }
    }
    let n = y.len() as f64;
    let log_prior = [
        floored_ln(y.count(Label::Positive) as f64 / n),
        floored_ln(y.count(Label::Negative) as f64 / n),
    ];
    let log_likelihood = counts.map(|class_counts| {
        let total: f64 = class_counts.iter().sum::<f64>() + alpha * d as f64;
        class_counts
            .iter()
            .map(|&c| if total > 0.0 { floored_ln((c + alpha) / total) } else { LOG_FLOOR })
            .collect()
    });
    Ok(NaiveBayesModel { log_prior, log_likelihood })
}
