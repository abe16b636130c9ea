//! Minimum-norm Gauss-Newton refinement of a nearly feasible net.

use nalgebra::DMatrix;
use nalgebra_sparse::{factorization::CscCholesky, CooMatrix, CscMatrix};
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::net::QuadNet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolishReport {
    pub iterations: usize,
    /// Largest `|c_i|` at the returned net, in the net's own units.
    pub max_abs_residual: f64,
}

/// Drives the residuals of `constraints` below `tol` (relative to the mean
/// edge length) with steps `δ = −Jᵀ(JJᵀ + μI)⁻¹c`, which move the net as
/// little as possible. Returns the last iterate when `max_iters` runs out.
pub fn gauss_newton_polish(
    net: &QuadNet,
    constraints: &ConstraintSet,
    tol: f64,
    max_iters: usize,
) -> Result<(QuadNet, PolishReport)> {
    let mean = net.mean_edge_length();
    if !(mean > 0.0) {
        return Err(Error::degenerate("net has zero mean edge length"));
    }
    let scale = 1.0 / mean;
    let set = constraints.scaled(scale);
    let mut x: Vec<Vec3> = net.positions().iter().map(|p| p * scale).collect();
    let iterations = restore_feasibility(&set, &mut x, |x| set.max_abs_residual(x) <= tol, max_iters)?;
    let report = PolishReport { iterations, max_abs_residual: set.max_abs_residual(&x) * mean };
    Ok((net.with_positions(x.iter().map(|p| p * mean).collect())?, report))
}

/// Gauss-Newton iterations on `x` until `done` holds, a step fails to reduce
/// `Σ c²`, or `max_iters` runs out. Returns the number of steps taken.
pub(crate) fn restore_feasibility(
    set: &ConstraintSet,
    x: &mut Vec<Vec3>,
    done: impl Fn(&[Vec3]) -> bool,
    max_iters: usize,
) -> Result<usize> {
    let n = x.len();
    let mut iterations = 0;
    while !done(x) && iterations < max_iters {
        iterations += 1;
        let rows = set.jacobian(x);
        let m = rows.len();
        let mut coo = CooMatrix::new(m, 3 * n);
        for (i, row) in rows.iter().enumerate() {
            for (v, g) in &row.entries {
                for k in 0..3 {
                    if g[k] != 0.0 {
                        coo.push(i, 3 * v + k, g[k]);
                    }
                }
            }
        }
        let j = CscMatrix::from(&coo);
        let mut normal = &j * &j.transpose();
        let ridge = 1e-12 * normal.diagonal_as_csc().values().iter().fold(1e-300f64, |a, &b| a.max(b));
        normal = normal + CscMatrix::identity(m) * ridge;
        let factor = CscCholesky::factor(&normal).map_err(|e| Error::degenerate(format!("Gauss-Newton system: {e:?}")))?;
        let c = DMatrix::from_iterator(m, 1, rows.iter().map(|r| r.residual));
        let step = j.transpose() * factor.solve(&c);
        let before = set.sum_squares(x);
        let mut t = 1.0;
        loop {
            let trial: Vec<Vec3> = x
                .iter()
                .enumerate()
                .map(|(v, p)| p - Vec3::new(step[(3 * v, 0)], step[(3 * v + 1, 0)], step[(3 * v + 2, 0)]) * t)
                .collect();
            if set.sum_squares(&trial) < before {
                *x = trial;
                break;
            }
            t *= 0.5;
            if t < 1e-6 {
                return Ok(iterations);
            }
        }
    }
    Ok(iterations)
}
