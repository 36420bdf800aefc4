//! Limited-memory BFGS with two-loop recursion and Armijo backtracking.

use std::collections::VecDeque;

use log::warn;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsConfig {
    pub memory: usize,
    /// Convergence when `‖∇F‖∞ < rel_tol · (1 + |F₀|)`.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            rel_tol: 1e-6,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub value: f64,
    pub grad_inf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub trace: Vec<TraceRow>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `f`, which returns the value and writes the gradient into its second argument.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, cfg: &LbfgsConfig) -> LbfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let f0 = fx;
    let tol = cfg.rel_tol * (1.0 + f0.abs());
    let mut trace = vec![TraceRow {
        iteration: 0,
        value: fx,
        grad_inf: inf_norm(&g),
    }];
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    if n == 0 || inf_norm(&g) < tol {
        return LbfgsResult {
            x,
            value: fx,
            initial_value: f0,
            iterations: 0,
            termination: Termination::Converged,
            trace,
        };
    }
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    for it in 1..=cfg.max_iter {
        iterations = it;
        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = hist
            .back()
            .map(|(s, y, _)| dot(s, y) / dot(y, y))
            .unwrap_or_else(|| 1.0 / inf_norm(&g).max(1.0));
        for di in d.iter_mut() {
            *di *= gamma;
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            // not a descent direction: reset memory, use steepest descent
            hist.clear();
            d = g.iter().map(|v| -v / inf_norm(&g).max(1.0)).collect();
            slope = dot(&g, &d);
        }

        // Armijo backtracking
        let mut step = 1.0;
        let mut accepted = false;
        let mut fxn = fx;
        for _ in 0..60 {
            for i in 0..n {
                xn[i] = x[i] + step * d[i];
            }
            fxn = f(&xn, &mut gn);
            if fxn.is_finite() && fxn <= fx + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            warn!("line search failed at iteration {it}; returning best iterate");
            termination = Termination::LineSearchFailed;
            break;
        }
        let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if hist.len() == cfg.memory.max(1) {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut g, &mut gn);
        fx = fxn;
        let gi = inf_norm(&g);
        trace.push(TraceRow {
            iteration: it,
            value: fx,
            grad_inf: gi,
        });
        if gi < tol {
            termination = Termination::Converged;
            break;
        }
    }
    LbfgsResult {
        x,
        value: fx,
        initial_value: f0,
        iterations,
        termination,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let res = minimize(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
            },
            vec![-1.2, 1.0],
            &LbfgsConfig {
                rel_tol: 1e-10,
                max_iter: 1000,
                ..Default::default()
            },
        );
        assert_eq!(res.termination, Termination::Converged);
        assert!((res.x[0] - 1.0).abs() < 1e-6 && (res.x[1] - 1.0).abs() < 1e-6);
        for w in res.trace.windows(2) {
            assert!(w[1].value <= w[0].value);
        }
    }

    #[test]
    fn quadratic_converges_quickly() {
        let res = minimize(
            |x, g| {
                let mut f = 0.0;
                for i in 0..x.len() {
                    let w = (i + 1) as f64;
                    g[i] = 2.0 * w * (x[i] - 1.0);
                    f += w * (x[i] - 1.0).powi(2);
                }
                f
            },
            vec![0.0; 8],
            &LbfgsConfig::default(),
        );
        assert_eq!(res.termination, Termination::Converged);
        assert!(res.iterations < 50);
    }
}
