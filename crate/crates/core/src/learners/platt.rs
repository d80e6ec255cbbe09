//! Platt scaling: a sigmoid fitted on raw scores with smoothed targets.
//!
//! Newton's method with backtracking, following Lin, Lin and Weng's
//! numerically stable formulation.

use serde::{Deserialize, Serialize};

use crate::error::{QuantError, Result};
use crate::prevalence::{BinaryLabelVector, Label};

const GRAD_TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 100;
const MIN_STEP: f64 = 1e-10;
const RIDGE: f64 = 1e-12;

/// `posterior(score) = 1 / (1 + exp(a * score + b))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMap {
    pub a: f64,
    pub b: f64,
}

impl CalibrationMap {
    pub fn posterior(&self, score: f64) -> f64 {
        super::sigmoid(-(self.a * score + self.b))
    }
}

fn targets(labels: &[Label]) -> Vec<f64> {
    let n_pos = labels.iter().filter(|l| l.is_positive()).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    labels.iter().map(|l| if l.is_positive() { hi } else { lo }).collect()
}

fn nll(scores: &[f64], t: &[f64], a: f64, b: f64) -> f64 {
    scores
        .iter()
        .zip(t)
        .map(|(&f, &ti)| {
            let z = a * f + b;
            // log(1 + exp(z)) - (1 - t) z
            let softplus = if z >= 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            softplus - (1.0 - ti) * z
        })
        .sum()
}

/// Negative log-likelihood of `(a, b)` against Platt's smoothed targets.
pub fn platt_nll(scores: &[f64], labels: &BinaryLabelVector, map: &CalibrationMap) -> f64 {
    nll(scores, &targets(labels.as_slice()), map.a, map.b)
}

/// Fits the calibration sigmoid to raw scores.
pub fn platt_calibrate(scores: &[f64], labels: &BinaryLabelVector) -> Result<CalibrationMap> {
    if scores.len() != labels.len() {
        return Err(QuantError::DimensionMismatch("scores vs labels".into()));
    }
    let n_pos = labels.count(Label::Positive);
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(QuantError::CalibrationNeedsBothClasses);
    }
    let t = targets(labels.as_slice());
    let mut a = 0.0;
    let mut b = ((n_neg as f64 + 1.0) / (n_pos as f64 + 1.0)).ln();
    let mut value = nll(scores, &t, a, b);

    for _ in 0..MAX_ITERATIONS {
        let (mut ga, mut gb) = (0.0, 0.0);
        let (mut h11, mut h22, mut h21) = (RIDGE, RIDGE, 0.0);
        for (&f, &ti) in scores.iter().zip(&t) {
            let z = a * f + b;
            // p = 1 / (1 + exp(z)), q = 1 - p
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = ti - p;
            ga += f * d1;
            gb += d1;
        }
        if ga.hypot(gb) <= GRAD_TOLERANCE {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * ga - h21 * gb) / det;
        let db = -(-h21 * ga + h11 * gb) / det;
        let slope = ga * da + gb * db;
        let mut step = 1.0;
        let mut moved = false;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nv = nll(scores, &t, na, nb);
            if nv < value + 1e-4 * step * slope {
                a = na;
                b = nb;
                value = nv;
                moved = true;
                break;
            }
            step /= 2.0;
        }
        if !moved {
            break;
        }
    }
    Ok(CalibrationMap { a, b })
}
