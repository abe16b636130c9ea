//! Limited-memory BFGS with a strong-Wolfe line search, working directly on
//! arrays of 3-vectors.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iters: usize,
    /// Sufficient-decrease constant of the Wolfe conditions.
    pub c1: f64,
    /// Curvature constant of the Wolfe conditions.
    pub c2: f64,
    /// Stop once `‖g‖ < grad_tol · (1 + |f|)`.
    pub grad_tol: f64,
    pub max_line_search_evals: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig { memory: 10, max_iters: 500, c1: 1e-4, c2: 0.9, grad_tol: 1e-10, max_line_search_evals: 40 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnerStatus {
    GradientTolerance,
    IterationCap,
    /// No step satisfying the Wolfe conditions was found; usually round-off.
    LineSearchStalled,
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerResult {
    pub iters: usize,
    pub value: f64,
    pub status: InnerStatus,
}

fn dot(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn axpy(alpha: f64, x: &[Vec3], y: &mut [Vec3]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi * alpha;
    }
}

struct Problem<'a, F> {
    f: &'a mut F,
    evals: usize,
}

impl<F: FnMut(&[Vec3], &mut [Vec3]) -> f64> Problem<'_, F> {
    fn eval(&mut self, x: &[Vec3], g: &mut Vec<Vec3>) -> f64 {
        g.clear();
        g.resize(x.len(), Vec3::zeros());
        self.evals += 1;
        (self.f)(x, g)
    }
}

struct Trial {
    alpha: f64,
    value: f64,
    slope: f64,
    x: Vec<Vec3>,
    g: Vec<Vec3>,
}

/// Minimizes `f` starting from `x`. The callback receives a zeroed gradient
/// buffer to accumulate into and returns the objective value.
pub fn minimize<F>(mut f: F, x: &mut Vec<Vec3>, cfg: &LbfgsConfig) -> InnerResult
where
    F: FnMut(&[Vec3], &mut [Vec3]) -> f64,
{
    let mut prob = Problem { f: &mut f, evals: 0 };
    let mut g = Vec::new();
    let mut fx = prob.eval(x, &mut g);
    if !fx.is_finite() {
        return InnerResult { iters: 0, value: fx, status: InnerStatus::NonFinite };
    }
    let mut history: VecDeque<(Vec<Vec3>, Vec<Vec3>, f64)> = VecDeque::with_capacity(cfg.memory);
    for iter in 0..cfg.max_iters {
        let gnorm = dot(&g, &g).sqrt();
        if !gnorm.is_finite() {
            return InnerResult { iters: iter, value: fx, status: InnerStatus::NonFinite };
        }
        if gnorm <= cfg.grad_tol * (1.0 + fx.abs()) {
            return InnerResult { iters: iter, value: fx, status: InnerStatus::GradientTolerance };
        }
        let mut d = direction(&g, &history);
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let alpha0 = if history.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };
        let trial = match line_search(&mut prob, x, fx, slope, &d, alpha0, cfg) {
            Some(t) => t,
            None if !history.is_empty() => {
                history.clear();
                let d: Vec<Vec3> = g.iter().map(|v| -v).collect();
                match line_search(&mut prob, x, fx, -gnorm * gnorm, &d, (1.0 / gnorm).min(1.0), cfg) {
                    Some(t) => t,
                    None => return InnerResult { iters: iter, value: fx, status: InnerStatus::LineSearchStalled },
                }
            }
            None => return InnerResult { iters: iter, value: fx, status: InnerStatus::LineSearchStalled },
        };
        let s: Vec<Vec3> = trial.x.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<Vec3> = trial.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 && sy > f64::EPSILON * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        *x = trial.x;
        g = trial.g;
        fx = trial.value;
        if !fx.is_finite() {
            return InnerResult { iters: iter + 1, value: fx, status: InnerStatus::NonFinite };
        }
    }
    InnerResult { iters: cfg.max_iters, value: fx, status: InnerStatus::IterationCap }
}

/// Two-loop recursion: returns `−H·g`.
fn direction(g: &[Vec3], history: &VecDeque<(Vec<Vec3>, Vec<Vec3>, f64)>) -> Vec<Vec3> {
    let mut q: Vec<Vec3> = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        axpy(-a, y, &mut q);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        axpy(a - b, s, &mut q);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

fn evaluate<F: FnMut(&[Vec3], &mut [Vec3]) -> f64>(
    prob: &mut Problem<'_, F>,
    x: &[Vec3],
    d: &[Vec3],
    alpha: f64,
) -> Trial {
    let xt: Vec<Vec3> = x.iter().zip(d).map(|(a, b)| a + b * alpha).collect();
    let mut gt = Vec::new();
    let value = prob.eval(&xt, &mut gt);
    let slope = dot(&gt, d);
    Trial { alpha, value, slope, x: xt, g: gt }
}

fn line_search<F: FnMut(&[Vec3], &mut [Vec3]) -> f64>(
    prob: &mut Problem<'_, F>,
    x: &[Vec3],
    f0: f64,
    slope0: f64,
    d: &[Vec3],
    alpha0: f64,
    cfg: &LbfgsConfig,
) -> Option<Trial> {
    let armijo = |t: &Trial| t.value <= f0 + cfg.c1 * t.alpha * slope0;
    let curvature = |t: &Trial| t.slope.abs() <= -cfg.c2 * slope0;
    let mut prev = Trial { alpha: 0.0, value: f0, slope: slope0, x: Vec::new(), g: Vec::new() };
    let mut alpha = alpha0;
    for i in 0..cfg.max_line_search_evals {
        let t = evaluate(prob, x, d, alpha);
        if !t.value.is_finite() {
            alpha = 0.5 * (prev.alpha + alpha);
            continue;
        }
        if !armijo(&t) || (i > 0 && t.value >= prev.value) {
            return zoom(prob, x, f0, slope0, d, prev, t, cfg);
        }
        if curvature(&t) {
            return Some(t);
        }
        if t.slope >= 0.0 {
            return zoom(prob, x, f0, slope0, d, t, prev, cfg);
        }
        alpha = (2.0 * t.alpha).min(1e10);
        prev = t;
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn zoom<F: FnMut(&[Vec3], &mut [Vec3]) -> f64>(
    prob: &mut Problem<'_, F>,
    x: &[Vec3],
    f0: f64,
    slope0: f64,
    d: &[Vec3],
    mut lo: Trial,
    mut hi: Trial,
    cfg: &LbfgsConfig,
) -> Option<Trial> {
    for _ in 0..cfg.max_line_search_evals {
        let width = (hi.alpha - lo.alpha).abs();
        if width <= 1e-16 * lo.alpha.abs().max(1e-300) {
            break;
        }
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let guard = 0.1 * (b - a);
        let alpha = match cubic_minimizer(&lo, &hi) {
            Some(c) if c > a + guard && c < b - guard => c,
            _ => 0.5 * (a + b),
        };
        let t = evaluate(prob, x, d, alpha);
        if !t.value.is_finite() || t.value > f0 + cfg.c1 * alpha * slope0 || t.value >= lo.value {
            hi = t;
        } else {
            if t.slope.abs() <= -cfg.c2 * slope0 {
                return Some(t);
            }
            if t.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = t;
        }
    }
    // settle for a point with sufficient decrease even if curvature failed
    (lo.alpha > 0.0 && lo.value < f0 && !lo.x.is_empty()).then_some(lo)
}

fn cubic_minimizer(p: &Trial, q: &Trial) -> Option<f64> {
    let d1 = p.slope + q.slope - 3.0 * (p.value - q.value) / (p.alpha - q.alpha);
    let disc = d1 * d1 - p.slope * q.slope;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (q.alpha - p.alpha).signum() * disc.sqrt();
    let denom = q.slope - p.slope + 2.0 * d2;
    let c = q.alpha - (q.alpha - p.alpha) * (q.slope + d2 - d1) / denom;
    c.is_finite().then_some(c)
}
