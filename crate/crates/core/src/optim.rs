//! Quasi-Newton minimization with a strong Wolfe line search.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuasiNewton {
    /// Dense inverse-Hessian BFGS update.
    Full,
    /// Two-loop recursion over the last `history` curvature pairs.
    Limited { history: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub method: QuasiNewton,
    pub max_iterations: usize,
    /// Stop once `|g| <= gradient_tolerance * max(|g_0|, tiny)`.
    pub gradient_tolerance: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            method: QuasiNewton::Full,
            max_iterations: 10_000,
            gradient_tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    /// The objective reached exactly zero.
    ZeroCost,
    /// The line search could not decrease the objective any further.
    Stalled,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub cost: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Cost after every accepted iteration (the first entry is the start).
    pub trace: Vec<f64>,
}

impl Outcome {
    pub fn converged(&self) -> bool {
        matches!(
            self.termination,
            Termination::GradientTolerance | Termination::ZeroCost
        )
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimize `f`, where `f(x, grad)` returns the cost and writes the gradient.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, settings: &Settings) -> Outcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let dim = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; dim];
    let mut cost = f(&x, &mut g);
    let mut evaluations = 1;
    let mut trace = vec![cost];
    let g0 = norm(&g).max(f64::MIN_POSITIVE);
    let mut direction = vec![0.0; dim];
    let mut inverse = match settings.method {
        QuasiNewton::Full => Some(vec![0.0; dim * dim]),
        QuasiNewton::Limited { .. } => None,
    };
    let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    let capacity = match settings.method {
        QuasiNewton::Limited { history } => history.max(1),
        QuasiNewton::Full => 0,
    };
    let mut initial_scale = 1.0;
    let mut first_step = true;

    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        if cost == 0.0 {
            termination = Termination::ZeroCost;
            break;
        }
        if norm(&g) <= settings.gradient_tolerance * g0 {
            termination = Termination::GradientTolerance;
            break;
        }
        match (&inverse, settings.method) {
            (Some(h), _) if !first_step => {
                for i in 0..dim {
                    direction[i] = -dot(&h[i * dim..(i + 1) * dim], &g);
                }
            }
            (_, QuasiNewton::Limited { .. }) if !first_step => {
                two_loop(&history, initial_scale, &g, &mut direction);
            }
            _ => {
                // steepest descent scaled to a unit step
                let gn = norm(&g);
                for i in 0..dim {
                    direction[i] = -g[i] / gn;
                }
            }
        }
        let mut slope = dot(&g, &direction);
        if slope >= 0.0 {
            // lost descent: restart from the gradient
            let gn = norm(&g);
            for i in 0..dim {
                direction[i] = -g[i] / gn;
            }
            slope = dot(&g, &direction);
            if let Some(h) = inverse.as_mut() {
                h.iter_mut().for_each(|v| *v = 0.0);
            }
            history.clear();
            first_step = true;
        }

        let search = line_search(&mut f, &x, cost, &direction, slope);
        evaluations += search.evaluations;
        let Some((step, new_cost, new_g)) = search.accepted else {
            if !first_step {
                // retry once from steepest descent before giving up
                if let Some(h) = inverse.as_mut() {
                    h.iter_mut().for_each(|v| *v = 0.0);
                }
                history.clear();
                first_step = true;
                continue;
            }
            termination = Termination::Stalled;
            break;
        };

        let s: Vec<f64> = direction.iter().map(|d| d * step).collect();
        let y: Vec<f64> = new_g.iter().zip(&g).map(|(a, b)| a - b).collect();
        for i in 0..dim {
            x[i] += s[i];
        }
        let decreased = new_cost < cost;
        cost = new_cost;
        g = new_g;
        iterations += 1;
        trace.push(cost);

        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if sy > 1e-300 && sy > 1e-14 * norm(&s) * yy.sqrt() {
            let rho = 1.0 / sy;
            match inverse.as_mut() {
                Some(h) => {
                    if first_step {
                        let gamma = sy / yy;
                        h.iter_mut().for_each(|v| *v = 0.0);
                        for i in 0..dim {
                            h[i * dim + i] = gamma;
                        }
                    }
                    bfgs_update(h, dim, &s, &y, rho);
                }
                None => {
                    if history.len() == capacity {
                        history.remove(0);
                    }
                    initial_scale = sy / yy;
                    history.push((s, y, rho));
                }
            }
            first_step = false;
        } else if !decreased {
            termination = Termination::Stalled;
            break;
        }
    }

    let gradient_norm = norm(&g);
    Outcome {
        x,
        cost,
        gradient_norm,
        iterations,
        evaluations,
        termination,
        trace,
    }
}

/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`.
fn bfgs_update(h: &mut [f64], dim: usize, s: &[f64], y: &[f64], rho: f64) {
    let hy: Vec<f64> = (0..dim)
        .map(|i| dot(&h[i * dim..(i + 1) * dim], y))
        .collect();
    let yhy = dot(y, &hy);
    let coef = rho * rho * yhy + rho;
    for i in 0..dim {
        for j in 0..dim {
            h[i * dim + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

fn two_loop(history: &[(Vec<f64>, Vec<f64>, f64)], scale: f64, g: &[f64], out: &mut [f64]) {
    let mut q = g.to_vec();
    let mut alphas = vec![0.0; history.len()];
    for (i, (s, y, rho)) in history.iter().enumerate().rev() {
        let a = rho * dot(s, &q);
        alphas[i] = a;
        for (qj, yj) in q.iter_mut().zip(y) {
            *qj -= a * yj;
        }
    }
    for v in q.iter_mut() {
        *v *= scale;
    }
    for (i, (s, y, rho)) in history.iter().enumerate() {
        let b = rho * dot(y, &q);
        for (qj, sj) in q.iter_mut().zip(s) {
            *qj += (alphas[i] - b) * sj;
        }
    }
    for (o, v) in out.iter_mut().zip(q) {
        *o = -v;
    }
}

struct Search {
    accepted: Option<(f64, f64, Vec<f64>)>,
    evaluations: usize,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_SEARCH: usize = 60;

/// A point on the search line: step, value, directional derivative.
type LinePoint = (f64, f64, f64);

fn line_search<F>(f: &mut F, x: &[f64], f0: f64, d: &[f64], slope0: f64) -> Search
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let dim = x.len();
    let mut trial = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut evaluations = 0;
    let mut best: Option<(f64, f64, Vec<f64>)> = None;

    let mut probe = |alpha: f64, grad: &mut Vec<f64>, best: &mut Option<(f64, f64, Vec<f64>)>| {
        for i in 0..dim {
            trial[i] = x[i] + alpha * d[i];
        }
        let fa = f(&trial, grad);
        if fa.is_finite() && fa < f0 && best.as_ref().map_or(true, |b| fa < b.1) {
            *best = Some((alpha, fa, grad.clone()));
        }
        (fa, dot(grad, d))
    };

    // bracketing phase
    let mut prev: LinePoint = (0.0, f0, slope0);
    let mut alpha = 1.0;
    let mut bracket: Option<(LinePoint, LinePoint)> = None;
    for i in 0..MAX_SEARCH {
        let (fa, slope) = probe(alpha, &mut grad, &mut best);
        evaluations += 1;
        if !fa.is_finite() {
            alpha = 0.5 * (prev.0 + alpha);
            continue;
        }
        let here = (alpha, fa, slope);
        if fa > f0 + C1 * alpha * slope0 || (i > 0 && fa >= prev.1) {
            bracket = Some((prev, here));
            break;
        }
        if slope.abs() <= -C2 * slope0 {
            return Search {
                accepted: Some((alpha, fa, grad)),
                evaluations,
            };
        }
        if slope >= 0.0 {
            bracket = Some((here, prev));
            break;
        }
        prev = here;
        alpha *= 2.0;
    }

    // zoom phase: `lo` always satisfies sufficient decrease
    if let Some((mut lo, mut hi)) = bracket {
        for _ in 0..MAX_SEARCH {
            let width = (hi.0 - lo.0).abs();
            if width <= 1e-16 * lo.0.abs().max(hi.0.abs()) || width == 0.0 {
                break;
            }
            let alpha = cubic_min(lo, hi);
            let (fa, slope) = probe(alpha, &mut grad, &mut best);
            evaluations += 1;
            if !fa.is_finite() || fa > f0 + C1 * alpha * slope0 || fa >= lo.1 {
                hi = (alpha, if fa.is_finite() { fa } else { f64::MAX }, slope);
                continue;
            }
            if slope.abs() <= -C2 * slope0 {
                return Search {
                    accepted: Some((alpha, fa, grad)),
                    evaluations,
                };
            }
            if slope * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (alpha, fa, slope);
        }
    }
    Search {
        accepted: best,
        evaluations,
    }
}

fn cubic_min(a: (f64, f64, f64), b: (f64, f64, f64)) -> f64 {
    let (x0, f0, d0) = a;
    let (x1, f1, d1) = b;
    let lo = x0.min(x1);
    let hi = x0.max(x1);
    let d1c = d0 + d1 - 3.0 * (f0 - f1) / (x0 - x1);
    let disc = d1c * d1c - d0 * d1;
    let fallback = 0.5 * (x0 + x1);
    if disc < 0.0 || !disc.is_finite() {
        return fallback;
    }
    let d2 = (x1 - x0).signum() * disc.sqrt();
    let denom = d1 - d0 + 2.0 * d2;
    if denom == 0.0 {
        return fallback;
    }
    let x = x1 - (x1 - x0) * (d1 + d2 - d1c) / denom;
    let margin = 0.1 * (hi - lo);
    if !x.is_finite() || x < lo + margin || x > hi - margin {
        fallback
    } else {
        x
    }
}
