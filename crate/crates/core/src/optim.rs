//! Deterministic full-batch L-BFGS with Armijo backtracking.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsSettings {
    pub max_iterations: usize,
    pub grad_tolerance: f64,
    pub memory: usize,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        Self { max_iterations: 1000, grad_tolerance: 1e-6, memory: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Gradient norm reached the tolerance before the iteration cap.
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimizes a smooth function given as `f(x, grad) -> value`, where the
/// closure writes the gradient into `grad`.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, settings: &LbfgsSettings) -> Outcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    const ARMIJO: f64 = 1e-4;
    const MAX_BACKTRACKS: usize = 60;
    const CURVATURE: f64 = 0.9;
    // relative slack on the value test once values stop resolving progress
    const NOISE: f64 = 1e-12;

    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut value = f(&x, &mut g);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(settings.memory);
    let mut d = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut alpha = vec![0.0; settings.memory];

    for iteration in 0..settings.max_iterations {
        let gnorm = norm(&g);
        if gnorm <= settings.grad_tolerance {
            return Outcome { x, value, grad_norm: gnorm, iterations: iteration, converged: true };
        }

        // two-loop recursion
        d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
        for (k, (s, y, rho)) in history.iter().enumerate().rev() {
            alpha[k] = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= alpha[k] * yi);
        }
        let mut step = 1.0;
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di *= gamma);
        } else {
            step = 1.0 / gnorm.max(1.0);
        }
        for (k, (s, y, rho)) in history.iter().enumerate() {
            let beta = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (alpha[k] - beta) * si);
        }

        let mut slope = dot(&g, &d);
        if slope >= 0.0 || !slope.is_finite() {
            history.clear();
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
            slope = -gnorm * gnorm;
            step = 1.0 / gnorm.max(1.0);
        }

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            x_new.iter_mut().zip(x.iter().zip(&d)).for_each(|(xn, (xi, di))| *xn = xi + step * di);
            let v = f(&x_new, &mut g_new);
            if v.is_finite() && v <= value + ARMIJO * step * slope {
                accepted = Some(v);
                break;
            }
            // approximate Wolfe test: near the optimum the value is dominated
            // by round-off but the directional derivative is still accurate
            let slope_new = dot(&g_new, &d);
            if v.is_finite()
                && v <= value + NOISE * value.abs()
                && slope_new <= (2.0 * ARMIJO - 1.0) * slope
                && slope_new >= CURVATURE * slope
            {
                accepted = Some(v);
                break;
            }
            step *= 0.5;
        }
        let Some(v_new) = accepted else {
            return Outcome { x, value, grad_norm: gnorm, iterations: iteration, converged: false };
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if history.len() == settings.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        value = v_new;
    }
    let gnorm = norm(&g);
    Outcome {
        x,
        value,
        grad_norm: gnorm,
        iterations: settings.max_iterations,
        converged: gnorm <= settings.grad_tolerance,
    }
}
