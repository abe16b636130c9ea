//! Quadratic-penalty solver: repeatedly minimizes `w·E(F) + Σ c_i(F)²` with
//! L-BFGS, halving `w` after each outer iteration until `Σ c_i² < ε`.

mod arap;
pub mod lbfgs;
mod polish;

use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

pub use arap::arap_initialize;
pub use lbfgs::{InnerStatus, LbfgsConfig};
pub use polish::{gauss_newton_polish, PolishReport};

use crate::constraints::ConstraintSet;
use crate::energies::{energy_gradient, EnergyConfig};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::net::QuadNet;
use polish::restore_feasibility;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub w0: f64,
    /// Feasibility threshold on `Σ c_i²`, measured in the solving scale.
    pub epsilon: f64,
    pub max_outer: usize,
    pub inner: LbfgsConfig,
    /// Rescale to mean edge length 1 while solving.
    pub prescale: bool,
    /// Start [`solve`] from the ARAP fit of the handles.
    #[serde(default = "yes")]
    pub arap_init: bool,
    /// Finish a nearly feasible late iterate with Gauss-Newton steps.
    #[serde(default = "yes")]
    pub restore: bool,
}

fn yes() -> bool {
    true
}

/// The restoration stage starts once `Σ c²` is below this and the penalty
/// weight has decayed to [`RESTORE_MAX_WEIGHT`].
const RESTORE_START: f64 = 1e-6;
const RESTORE_MAX_WEIGHT: f64 = 1e-6;
const RESTORE_ITERS: usize = 20;
/// Restoration aims below `ε` by this factor so rescaling keeps the result under `ε`.
const RESTORE_MARGIN: f64 = 1e-2;

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            w0: 1.0,
            epsilon: 1e-12,
            max_outer: 60,
            inner: LbfgsConfig::default(),
            prescale: true,
            arap_init: true,
            restore: true,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.w0 > 0.0 && self.w0.is_finite()) {
            return Err(Error::invalid("w0 must be positive"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if self.inner.memory == 0 {
            return Err(Error::invalid("L-BFGS memory must be at least 1"));
        }
        Ok(())
    }
}

/// One outer iteration of the penalty loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterStep {
    pub weight: f64,
    pub constraint_norm: f64,
    pub energy: f64,
    pub inner_iters: usize,
    pub inner_status: InnerStatus,
    /// Gauss-Newton restoration steps taken after the inner solve.
    #[serde(default)]
    pub restore_iters: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    /// `Σ c_i²` at the returned net, in the solving scale.
    pub final_constraint_norm: f64,
    pub final_energy: f64,
    pub converged: bool,
    /// Set when a cancellation request stopped the loop early.
    #[serde(default)]
    pub cancelled: bool,
    pub trace: Vec<OuterStep>,
}

/// Deforms `net` by the penalty method, starting from the ARAP fit of the
/// handles when `cfg.arap_init` is set and some handle is off its target. Returns the feasible net with
/// `converged = true`, or the last iterate with `converged = false`.
pub fn solve(
    net: &QuadNet,
    constraints: &ConstraintSet,
    energy: &EnergyConfig,
    cfg: &SolverConfig,
) -> Result<(QuadNet, SolverReport)> {
    solve_cancellable(net, constraints, energy, cfg, &AtomicBool::new(false))
}

/// [`solve`] that checks `cancel` before every outer iteration.
pub fn solve_cancellable(
    net: &QuadNet,
    constraints: &ConstraintSet,
    energy: &EnergyConfig,
    cfg: &SolverConfig,
    cancel: &AtomicBool,
) -> Result<(QuadNet, SolverReport)> {
    energy.validate(net)?;
    let scale = prepare(net, constraints, cfg)?;
    // handles already on their targets leave nothing for ARAP to fit
    let displaced = energy.handles.iter().any(|(&v, t)| net.position(v) != *t);
    let start = if cfg.arap_init && displaced { arap_initialize(net, &energy.handles)? } else { net.clone() };
    let energy = energy.scaled(scale);
    let objective = |pos: &[Vec3], grad: &mut [Vec3]| energy_gradient(net, pos, &energy, grad);
    penalty_loop(net, scaled_positions(start.positions(), scale), scale, constraints, objective, cfg, cancel)
}

/// Closest feasible net in the sense of `‖F − F_in‖²`.
pub fn project(net: &QuadNet, constraints: &ConstraintSet, cfg: &SolverConfig) -> Result<(QuadNet, SolverReport)> {
    project_from(net, net.positions(), constraints, cfg, &AtomicBool::new(false))
}

/// Projection of `anchor` started from the positions of `start`.
pub fn project_from(
    start: &QuadNet,
    anchor: &[Vec3],
    constraints: &ConstraintSet,
    cfg: &SolverConfig,
    cancel: &AtomicBool,
) -> Result<(QuadNet, SolverReport)> {
    if anchor.len() != start.vertex_count() {
        return Err(Error::invalid("projection anchor does not match the net"));
    }
    if anchor.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
        return Err(Error::invalid("projection anchor has non-finite coordinates"));
    }
    let scale = prepare(start, constraints, cfg)?;
    let anchor = scaled_positions(anchor, scale);
    let objective = |pos: &[Vec3], grad: &mut [Vec3]| {
        let mut e = 0.0;
        for ((p, a), g) in pos.iter().zip(&anchor).zip(grad.iter_mut()) {
            let d = p - a;
            e += d.norm_squared();
            *g += d * 2.0;
        }
        e
    };
    penalty_loop(start, scaled_positions(start.positions(), scale), scale, constraints, objective, cfg, cancel)
}

fn scaled_positions(pos: &[Vec3], s: f64) -> Vec<Vec3> {
    pos.iter().map(|p| p * s).collect()
}

/// Validates inputs and returns the solving scale factor.
fn prepare(net: &QuadNet, constraints: &ConstraintSet, cfg: &SolverConfig) -> Result<f64> {
    cfg.validate()?;
    if net.positions().iter().any(|p| !p.iter().all(|x| x.is_finite())) {
        return Err(Error::invalid("net has non-finite coordinates"));
    }
    if constraints.terms().iter().flat_map(|t| t.vertices()).any(|v| v >= net.vertex_count()) {
        return Err(Error::invalid("constraint set references vertices outside the net"));
    }
    if !cfg.prescale {
        return Ok(1.0);
    }
    let mean = net.mean_edge_length();
    if !(mean > 0.0) {
        return Err(Error::degenerate("net has zero mean edge length"));
    }
    Ok(1.0 / mean)
}

fn penalty_loop<E>(
    net: &QuadNet,
    mut x: Vec<Vec3>,
    scale: f64,
    constraints: &ConstraintSet,
    energy: E,
    cfg: &SolverConfig,
    cancel: &AtomicBool,
) -> Result<(QuadNet, SolverReport)>
where
    E: Fn(&[Vec3], &mut [Vec3]) -> f64,
{
    let constraints = constraints.scaled(scale);
    let mut report = SolverReport::default();
    for k in 0..cfg.max_outer {
        if cancel.load(Ordering::Relaxed) {
            report.cancelled = true;
            break;
        }
        let weight = cfg.w0 * 0.5f64.powi(k as i32);
        let objective = |pos: &[Vec3], grad: &mut [Vec3]| {
            let e = energy(pos, grad);
            for g in grad.iter_mut() {
                *g *= weight;
            }
            weight * e + constraints.sum_squares_gradient(pos, grad)
        };
        let inner = lbfgs::minimize(objective, &mut x, &cfg.inner);
        let mut c = constraints.sum_squares(&x);
        let mut restore_iters = 0;
        if cfg.restore && c >= cfg.epsilon && c < RESTORE_START && weight <= RESTORE_MAX_WEIGHT {
            let mut y = x.clone();
            // a failed factorization just leaves the iterate to the penalty loop
            if let Ok(iters) = restore_feasibility(&constraints, &mut y, |y| constraints.sum_squares(y) < RESTORE_MARGIN * cfg.epsilon, RESTORE_ITERS) {
                let cy = constraints.sum_squares(&y);
                if cy < c {
                    restore_iters = iters;
                    x = y;
                    c = cy;
                }
            }
        }
        let mut scratch = vec![Vec3::zeros(); x.len()];
        let e = energy(&x, &mut scratch);
        report.outer_iters = k + 1;
        report.inner_iters_total += inner.iters;
        report.final_constraint_norm = c;
        report.final_energy = e;
        report.trace.push(OuterStep {
            weight,
            constraint_norm: c,
            energy: e,
            inner_iters: inner.iters,
            inner_status: inner.status,
            restore_iters,
        });
        if !(c.is_finite() && e.is_finite()) || inner.status == InnerStatus::NonFinite {
            return Err(Error::SolverDiverged {
                outer_iters: k + 1,
                reason: format!("non-finite objective (Σc² = {c}, E = {e}); trace: {:?}", report.trace),
            });
        }
        if c < cfg.epsilon {
            report.converged = true;
            break;
        }
    }
    let positions = x.iter().map(|p| p / scale).collect();
    Ok((net.with_positions(positions)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{assemble, Mode, References};
    use crate::net::make_grid;

    fn plain(net: &QuadNet) -> ConstraintSet {
        assemble(net, Mode::Plain, &References::from_net(net, Mode::Plain).unwrap()).unwrap()
    }

    #[test]
    fn rest_handles_give_identity() {
        let net = make_grid(6, 6, 1.0).unwrap();
        let handles = [(0, net.position(0)), (35, net.position(35))].into_iter().collect();
        let energy = EnergyConfig::new(&net, &net).unwrap().with_handles(handles);
        let (out, report) = solve(&net, &plain(&net), &energy, &SolverConfig::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.outer_iters, 1);
        for (a, b) in out.positions().iter().zip(net.positions()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn weights_halve() {
        let net = make_grid(5, 5, 1.0).unwrap();
        let handles = [(0, net.position(0) + Vec3::new(0.3, 0.3, 0.5)), (24, net.position(24))].into_iter().collect();
        let energy = EnergyConfig::new(&net, &net).unwrap().with_handles(handles);
        let (_, report) = solve(&net, &plain(&net), &energy, &SolverConfig::default()).unwrap();
        assert!(report.converged, "{report:?}");
        for (k, step) in report.trace.iter().enumerate() {
            assert_eq!(step.weight, 0.5f64.powi(k as i32));
        }
    }

    #[test]
    fn projection_of_feasible_net_is_identity() {
        let net = make_grid(5, 7, 0.5).unwrap();
        let (out, report) = project(&net, &plain(&net), &SolverConfig::default()).unwrap();
        assert!(report.converged);
        assert_eq!(out.positions(), net.positions());
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let net = make_grid(3, 3, 1.0).unwrap();
        let mut p = net.positions().to_vec();
        p[4].z = f64::NAN;
        let bad = net.with_positions(p).unwrap();
        assert!(matches!(project(&bad, &plain(&net), &SolverConfig::default()), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn cancellation_stops_before_first_iteration() {
        let net = make_grid(4, 4, 1.0).unwrap();
        let cancel = AtomicBool::new(true);
        let energy = EnergyConfig::new(&net, &net).unwrap();
        let (_, report) = solve_cancellable(&net, &plain(&net), &energy, &SolverConfig::default(), &cancel).unwrap();
        assert!(report.cancelled && !report.converged && report.outer_iters == 0);
    }
}
