//! L2-regularized linear models: logistic regression and the squared-hinge SVM.
//!
//! Both minimize `0.5 * ||w||^2 + C * sum_i J_{y_i} * loss(y_i * (w . x_i + b))`
//! with an unregularized bias, via full-batch L-BFGS.

use serde::{Deserialize, Serialize};

use super::TrainInfo;
use crate::error::{QuantError, Result};
use crate::optim::{minimize, LbfgsSettings};
use crate::prevalence::BinaryLabelVector;
use crate::text::SparseDocMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn zeros(n_features: usize) -> Self {
        Self { weights: vec![0.0; n_features], bias: 0.0 }
    }

    pub fn score(&self, row: &[(u32, f64)]) -> f64 {
        self.bias + row.iter().map(|&(f, v)| self.weights[f as usize] * v).sum::<f64>()
    }
}

#[derive(Clone, Copy)]
enum Loss {
    Logistic,
    SquaredHinge,
}

impl Loss {
    /// Loss and its derivative in the signed margin `m = y * score`.
    fn eval(self, m: f64) -> (f64, f64) {
        match self {
            Loss::Logistic => {
                // log(1 + exp(-m)), computed stably
                let value = if m > 0.0 { (-m).exp().ln_1p() } else { -m + m.exp().ln_1p() };
                (value, -super::sigmoid(-m))
            }
            Loss::SquaredHinge => {
                let slack = (1.0 - m).max(0.0);
                (slack * slack, -2.0 * slack)
            }
        }
    }
}

fn objective(
    loss: Loss,
    x: &SparseDocMatrix,
    y: &BinaryLabelVector,
    c: f64,
    (j_pos, j_neg): (f64, f64),
    params: &[f64],
    grad: &mut [f64],
) -> f64 {
    let d = x.n_features();
    let (w, b) = (&params[..d], params[d]);
    let mut value = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    grad[..d].copy_from_slice(w);
    grad[d] = 0.0;
    for (i, row) in x.rows().enumerate() {
        let (sign, cost) = if y[i].is_positive() { (1.0, j_pos) } else { (-1.0, j_neg) };
        let score = b + row.iter().map(|&(f, v)| w[f as usize] * v).sum::<f64>();
        let (l, dl) = loss.eval(sign * score);
        value += c * cost * l;
        let coef = c * cost * dl * sign;
        if coef != 0.0 {
            for &(f, v) in row {
                grad[f as usize] += coef * v;
            }
            grad[d] += coef;
        }
    }
    value
}

fn pack(model: &LinearModel) -> Vec<f64> {
    let mut p = model.weights.clone();
    p.push(model.bias);
    p
}

/// Logistic-regression objective at `model`.
pub fn logistic_objective(x: &SparseDocMatrix, y: &BinaryLabelVector, c: f64, weights: (f64, f64), model: &LinearModel) -> f64 {
    let p = pack(model);
    objective(Loss::Logistic, x, y, c, weights, &p, &mut vec![0.0; p.len()])
}

/// Squared-hinge SVM objective at `model`.
pub fn squared_hinge_objective(x: &SparseDocMatrix, y: &BinaryLabelVector, c: f64, weights: (f64, f64), model: &LinearModel) -> f64 {
    let p = pack(model);
    objective(Loss::SquaredHinge, x, y, c, weights, &p, &mut vec![0.0; p.len()])
}

fn train(
    loss: Loss,
    x: &SparseDocMatrix,
    y: &BinaryLabelVector,
    c: f64,
    weights: (f64, f64),
    settings: &LbfgsSettings,
) -> Result<(LinearModel, TrainInfo)> {
    if x.n_rows() != y.len() {
        return Err(QuantError::DimensionMismatch(format!("{} rows but {} labels", x.n_rows(), y.len())));
    }
    if c.is_nan() || c <= 0.0 {
        return Err(QuantError::InvalidArgument(format!("C must be positive, got {c}")));
    }
    let d = x.n_features();
    let out = minimize(|p, g| objective(loss, x, y, c, weights, p, g), vec![0.0; d + 1], settings);
    let bias = out.x[d];
    let mut w = out.x;
    w.truncate(d);
    let info = TrainInfo { n_train: y.len(), iterations: out.iterations, converged: out.converged, objective: out.value };
    Ok((LinearModel { weights: w, bias }, info))
}

/// L2-regularized logistic regression. Non-convergence within the
/// iteration cap is reported in [`TrainInfo::converged`], not as an error.
pub fn train_logistic(
    x: &SparseDocMatrix,
    y: &BinaryLabelVector,
    c: f64,
    weights: (f64, f64),
    settings: &LbfgsSettings,
) -> Result<(LinearModel, TrainInfo)> {
    train(Loss::Logistic, x, y, c, weights, settings)
}

/// Primal linear SVM with the squared hinge loss.
pub fn train_linear_svm(
    x: &SparseDocMatrix,
    y: &BinaryLabelVector,
    c: f64,
    weights: (f64, f64),
    settings: &LbfgsSettings,
) -> Result<(LinearModel, TrainInfo)> {
    train(Loss::SquaredHinge, x, y, c, weights, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prevalence::Label;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labels(flags: &[u8]) -> BinaryLabelVector {
        BinaryLabelVector::from_flags(flags).unwrap()
    }

    fn noisy_set(seed: u64, n: usize, d: usize) -> (SparseDocMatrix, BinaryLabelVector) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut flags = Vec::new();
        for _ in 0..n {
            let pos = rng.random_bool(0.4);
            let row: Vec<f64> = (0..d)
                .map(|j| {
                    let shift = if pos == (j % 2 == 0) { 0.5 } else { 0.0 };
                    (rng.random::<f64>() + shift).max(0.0)
                })
                .collect();
            rows.push(row);
            flags.push(u8::from(pos));
        }
        (SparseDocMatrix::from_dense(&rows), labels(&flags))
    }

    fn accuracy(m: &LinearModel, x: &SparseDocMatrix, y: &BinaryLabelVector) -> f64 {
        let hits = (0..y.len()).filter(|&i| (m.score(x.row(i)) > 0.0) == y[i].is_positive()).count();
        hits as f64 / y.len() as f64
    }

    #[test]
    fn separable_pair() {
        let x = SparseDocMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let y = labels(&[1, 0]);
        for trainer in [train_logistic, train_linear_svm] {
            let (m, _) = trainer(&x, &y, 10.0, (1.0, 1.0), &LbfgsSettings::default()).unwrap();
            assert_eq!(accuracy(&m, &x, &y), 1.0);
        }
        let (m, info) = train_linear_svm(&x, &y, 100.0, (1.0, 1.0), &LbfgsSettings::default()).unwrap();
        assert!(info.converged);
        // hinge slack vanishes once the margin constraint is met
        for i in 0..2 {
            assert!(y[i].sign() * m.score(x.row(i)) > 0.98);
        }
    }

    #[test]
    fn single_class_logistic() {
        let x = SparseDocMatrix::from_dense(&[vec![1.0, 0.2], vec![0.3, 1.0], vec![0.0, 0.0]]);
        let y = labels(&[1, 1, 1]);
        let (m, _) = train_logistic(&x, &y, 1.0, (1.0, 1.0), &LbfgsSettings::default()).unwrap();
        for i in 0..3 {
            assert!(super::super::sigmoid(m.score(x.row(i))) > 0.5);
        }
    }

    #[test]
    fn converges_on_moderate_problem() {
        let (x, y) = noisy_set(1, 200, 6);
        let (_, info) = train_logistic(&x, &y, 1.0, (1.0, 1.0), &LbfgsSettings::default()).unwrap();
        assert!(info.converged, "{info:?}");
        let (_, info) = train_linear_svm(&x, &y, 1.0, (1.0, 1.0), &LbfgsSettings::default()).unwrap();
        assert!(info.converged, "{info:?}");
    }

    #[test]
    fn objective_never_worse_than_origin() {
        let (x, y) = noisy_set(2, 80, 5);
        let origin = LinearModel::zeros(5);
        for c in [1e-4, 1.0, 1e3] {
            let (m, _) = train_logistic(&x, &y, c, (0.5, 1.0), &LbfgsSettings::default()).unwrap();
            assert!(logistic_objective(&x, &y, c, (0.5, 1.0), &m) <= logistic_objective(&x, &y, c, (0.5, 1.0), &origin));
            let (m, _) = train_linear_svm(&x, &y, c, (0.5, 1.0), &LbfgsSettings::default()).unwrap();
            assert!(
                squared_hinge_objective(&x, &y, c, (0.5, 1.0), &m) <= squared_hinge_objective(&x, &y, c, (0.5, 1.0), &origin)
            );
        }
    }

    #[test]
    fn weighting_shifts_the_bias() {
        let (x, y) = noisy_set(3, 150, 4);
        let s = LbfgsSettings::default();
        let (plain, _) = train_logistic(&x, &y, 1.0, (1.0, 1.0), &s).unwrap();
        let (down, _) = train_logistic(&x, &y, 1.0, (0.2, 1.0), &s).unwrap();
        assert!(down.bias < plain.bias);
        assert_eq!(y.count(Label::Positive) + y.count(Label::Negative), 150);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn returned_weights_beat_random_points(seed: u64, log_c in -2.0..2.0f64) {
            let c = 10f64.powf(log_c);
            let (x, y) = noisy_set(seed, 40, 4);
            let s = LbfgsSettings::default();
            let (lr, _) = train_logistic(&x, &y, c, (1.0, 1.0), &s).unwrap();
            let (svm, _) = train_linear_svm(&x, &y, c, (1.0, 1.0), &s).unwrap();
            let best_lr = logistic_objective(&x, &y, c, (1.0, 1.0), &lr);
            let best_svm = squared_hinge_objective(&x, &y, c, (1.0, 1.0), &svm);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            for _ in 0..10 {
                let m = LinearModel {
                    weights: (0..4).map(|_| rng.random_range(-3.0..3.0)).collect(),
                    bias: rng.random_range(-3.0..3.0),
                };
                prop_assert!(best_lr <= logistic_objective(&x, &y, c, (1.0, 1.0), &m) + 1e-9);
                prop_assert!(best_svm <= squared_hinge_objective(&x, &y, c, (1.0, 1.0), &m) + 1e-9);
            }
        }
    }
}
