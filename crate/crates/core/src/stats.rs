//! Paired two-sided Student t-test on related error scores.
//!
//! p-values come from the regularized incomplete beta function, evaluated
//! with a modified Lentz continued fraction.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{QuantError, Result};

/// Significance threshold for the strong symbols.
pub const ALPHA_STRONG: f64 = 0.001;
/// Significance threshold for the weak symbols.
pub const ALPHA_WEAK: f64 = 0.05;

#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Gamma(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let series = LANCZOS[1..]
        .iter()
        .enumerate()
        .fold(LANCZOS[0], |acc, (i, c)| acc + c / (x + i as f64 + 1.0));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + series.ln()
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const MAX_TERMS: usize = 10_000;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_TERMS {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta I_x(a, b).
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value of a Student t statistic with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Outcome symbol from the point of view of the first argument (lower error
/// is better).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    /// First is better at p < 0.001.
    MuchBetter,
    /// First is better at p < 0.05.
    Better,
    Tie,
    Worse,
    MuchWorse,
}

impl Verdict {
    pub fn symbol(self) -> &'static str {
        match self {
            Verdict::MuchBetter => "≫",
            Verdict::Better => ">",
            Verdict::Tie => "~",
            Verdict::Worse => "<",
            Verdict::MuchWorse => "≪",
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            Verdict::MuchBetter => Verdict::MuchWorse,
            Verdict::Better => Verdict::Worse,
            Verdict::Tie => Verdict::Tie,
            Verdict::Worse => Verdict::Better,
            Verdict::MuchWorse => Verdict::MuchBetter,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestVerdict {
    pub t: f64,
    pub df: usize,
    pub p_value: f64,
    pub mean_difference: f64,
    pub verdict: Verdict,
    /// Zero variance of the differences with a nonzero mean.
    pub degenerate: bool,
}

fn classify(p: f64, mean: f64) -> Verdict {
    let a_better = mean < 0.0;
    match (p < ALPHA_STRONG, p < ALPHA_WEAK, a_better) {
        (true, _, true) => Verdict::MuchBetter,
        (true, _, false) => Verdict::MuchWorse,
        (false, true, true) => Verdict::Better,
        (false, true, false) => Verdict::Worse,
        _ => Verdict::Tie,
    }
}

/// Paired two-sided t-test on `errors_a - errors_b`.
pub fn paired_ttest(errors_a: &[f64], errors_b: &[f64]) -> Result<TTestVerdict> {
    if errors_a.len() != errors_b.len() {
        return Err(QuantError::DimensionMismatch(format!(
            "paired samples of length {} and {}",
            errors_a.len(),
            errors_b.len()
        )));
    }
    let n = errors_a.len();
    if n < 2 {
        return Err(QuantError::InvalidArgument("paired t-test needs at least two pairs".into()));
    }
    let d: Vec<f64> = errors_a.iter().zip(errors_b).map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let df = n - 1;
    if sd == 0.0 {
        if mean == 0.0 {
            return Ok(TTestVerdict { t: 0.0, df, p_value: 1.0, mean_difference: 0.0, verdict: Verdict::Tie, degenerate: false });
        }
        let t = f64::INFINITY.copysign(mean);
        return Ok(TTestVerdict { t, df, p_value: 0.0, mean_difference: mean, verdict: classify(0.0, mean), degenerate: true });
    }
    let t = mean / (sd / (n as f64).sqrt());
    let p = student_t_two_sided_p(t, df as f64);
    Ok(TTestVerdict { t, df, p_value: p, mean_difference: mean, verdict: classify(p, mean), degenerate: false })
}
