//! Isometric interpolation between two 4Q nets with the same connectivity and
//! side lengths: each frame starts from a rigidly aligned linear blend and is
//! projected back onto the 4Q constraints.

use std::sync::atomic::AtomicBool;

use serde::{Deserialize, Serialize};

use crate::constraints::{assemble, fourq_length_residuals, fourq_patches, Mode, References};
use crate::error::{Error, Result};
use crate::geometry::{centroid, procrustes_rotation, Vec3};
use crate::net::QuadNet;
use crate::solver::{gauss_newton_polish, project_from, SolverConfig};

/// Side lengths of source and target may differ by at most this much.
pub const SIDE_MATCH_TOL: f64 = 1e-9;
/// Per-side length error every returned frame satisfies.
pub const SIDE_LENGTH_TOL: f64 = 1e-10;
/// Residual target of the Gauss-Newton polish, relative to the mean edge.
const POLISH_TOL: f64 = 1e-13;
const POLISH_ITERS: usize = 30;

#[derive(Clone, Debug)]
pub struct InterpolationJob {
    pub source: QuadNet,
    pub target: QuadNet,
    pub frame_count: usize,
    pub solver: SolverConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub index: usize,
    /// `Σ c_i²` at mean edge length 1.
    pub constraint_norm: f64,
    pub max_side_error: f64,
    pub outer_iters: usize,
    pub polish_iters: usize,
}

#[derive(Clone, Debug)]
pub struct Interpolation {
    /// All frames, or the frames before the first failed one.
    pub frames: Vec<QuadNet>,
    pub reports: Vec<FrameReport>,
    /// Index and reason of the frame whose projection failed.
    pub failure: Option<(usize, String)>,
}

impl Interpolation {
    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }
}

/// `(Σ c_i²` at mean edge 1, largest side-length error`)` of `net`.
fn telemetry(net: &QuadNet, refs: &References) -> Result<(f64, f64)> {
    let set = assemble(net, Mode::Fourq, refs)?;
    let s = 1.0 / net.mean_edge_length();
    let scaled: Vec<Vec3> = net.positions().iter().map(|p| p * s).collect();
    let norm = set.scaled(s).sum_squares(&scaled);
    let mut side = 0.0f64;
    for patch in &refs.patches {
        for r in fourq_length_residuals(net, patch)? {
            side = side.max(r.abs());
        }
    }
    Ok((norm, side))
}

/// Target positions rigidly moved onto the source.
fn aligned(source: &[Vec3], target: &[Vec3]) -> Vec<Vec3> {
    let (cs, ct) = (centroid(source), centroid(target));
    let a: Vec<Vec3> = target.iter().map(|p| p - ct).collect();
    let b: Vec<Vec3> = source.iter().map(|p| p - cs).collect();
    let r = procrustes_rotation(&a, &b);
    a.iter().map(|p| r * p + cs).collect()
}

pub fn interpolate(job: &InterpolationJob) -> Result<Interpolation> {
    let InterpolationJob { source, target, frame_count, solver } = job;
    if *frame_count < 2 {
        return Err(Error::invalid("an interpolation needs at least two frames"));
    }
    if !source.same_topology(target) {
        return Err(Error::invalid("source and target have different connectivity"));
    }
    let refs = References::from_net(source, Mode::Fourq)?;
    let target_patches = fourq_patches(target)?;
    for (a, b) in refs.patches.iter().zip(&target_patches) {
        if a.lengths.iter().zip(&b.lengths).any(|(x, y)| (x - y).abs() > SIDE_MATCH_TOL) {
            return Err(Error::invalid(format!("4Q side lengths differ at patch ({}, {})", a.row, a.col)));
        }
    }
    for (name, net) in [("source", source), ("target", target)] {
        let (norm, _) = telemetry(net, &refs)?;
        if !(norm < solver.epsilon) {
            return Err(Error::invalid(format!("{name} is not feasible: Σc² = {norm:e}")));
        }
    }
    let set = assemble(source, Mode::Fourq, &refs)?;
    let target_aligned = aligned(source.positions(), target.positions());
    let blend = |t: f64| -> Vec<Vec3> {
        source.positions().iter().zip(&target_aligned).map(|(a, b)| a * (1.0 - t) + b * t).collect()
    };

    let last = frame_count - 1;
    let (norm, side) = telemetry(source, &refs)?;
    let mut out = Interpolation {
        frames: vec![source.clone()],
        reports: vec![FrameReport { index: 0, constraint_norm: norm, max_side_error: side, outer_iters: 0, polish_iters: 0 }],
        failure: None,
    };
    let mut prev_blend = blend(0.0);
    let never = AtomicBool::new(false);
    for i in 1..last {
        let anchor = blend(i as f64 / last as f64);
        let prev = out.frames.last().expect("source frame");
        let guess: Vec<Vec3> =
            prev.positions().iter().zip(anchor.iter().zip(&prev_blend)).map(|(p, (a, b))| p + (a - b)).collect();
        let start = source.with_positions(guess)?;
        let step = project_from(&start, &anchor, &set, solver, &never)
            .and_then(|(projected, report)| {
                let (polished, polish) = gauss_newton_polish(&projected, &set, POLISH_TOL, POLISH_ITERS)?;
                Ok((polished, report, polish))
            });
        let (frame, report, polish) = match step {
            Ok(s) => s,
            Err(e) => {
                out.failure = Some((i, e.to_string()));
                return Ok(out);
            }
        };
        let (norm, side) = telemetry(&frame, &refs)?;
        if !(norm < solver.epsilon && side < SIDE_LENGTH_TOL) {
            out.failure = Some((i, format!("projection ended at Σc² = {norm:e}, side error {side:e}")));
            return Ok(out);
        }
        out.reports.push(FrameReport {
            index: i,
            constraint_norm: norm,
            max_side_error: side,
            outer_iters: report.outer_iters,
            polish_iters: polish.iterations,
        });
        out.frames.push(frame);
        prev_blend = anchor;
    }
    let (norm, side) = telemetry(target, &refs)?;
    out.reports.push(FrameReport { index: last, constraint_norm: norm, max_side_error: side, outer_iters: 0, polish_iters: 0 });
    out.frames.push(target.clone());
    Ok(out)
}
