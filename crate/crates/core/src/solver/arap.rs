//! As-rigid-as-possible initializer on the triangulated net.
//!
//! Each quad `(v00, v10, v11, v01)` is split along `v00–v11`. Edge weights are
//! uniform. Handles are hard constraints; connected components without any
//! handle stay where they are.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, Matrix3};
use nalgebra_sparse::{factorization::CscCholesky, CooMatrix, CscMatrix};

use crate::error::{Error, Result};
use crate::geometry::{rotation_from_covariance, Vec3};
use crate::net::{QuadNet, VertexId};

const MAX_ITERS: usize = 200;

/// Local/global ARAP solve with `handles` as fixed targets; the rest shape is `net`.
pub fn arap_initialize(net: &QuadNet, handles: &BTreeMap<VertexId, Vec3>) -> Result<QuadNet> {
    if handles.is_empty() {
        return Err(Error::invalid("ARAP needs at least one handle"));
    }
    let n = net.vertex_count();
    if let Some(v) = handles.keys().find(|&&v| v >= n) {
        return Err(Error::invalid(format!("handle {v} does not exist")));
    }
    let rest = net.positions();
    let mut adjacency: Vec<BTreeSet<VertexId>> = vec![BTreeSet::new(); n];
    for q in net.quads() {
        for (a, b) in [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)] {
            adjacency[q[a]].insert(q[b]);
            adjacency[q[b]].insert(q[a]);
        }
    }
    let neighbors: Vec<Vec<VertexId>> = adjacency.into_iter().map(|s| s.into_iter().collect()).collect();

    // handles plus every vertex of a handle-free component are fixed
    let mut fixed: Vec<Option<Vec3>> = vec![None; n];
    for (&v, t) in handles {
        fixed[v] = Some(*t);
    }
    let mut seen = vec![false; n];
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut comp = vec![s];
        seen[s] = true;
        let mut i = 0;
        while i < comp.len() {
            for &w in &neighbors[comp[i]] {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                }
            }
            i += 1;
        }
        if comp.iter().all(|v| fixed[*v].is_none()) {
            for v in comp {
                fixed[v] = Some(rest[v]);
            }
        }
    }

    let free: Vec<VertexId> = (0..n).filter(|v| fixed[*v].is_none()).collect();
    let mut x: Vec<Vec3> = (0..n).map(|v| fixed[v].unwrap_or(rest[v])).collect();
    if free.is_empty() {
        return net.with_positions(x);
    }
    let mut slot = vec![usize::MAX; n];
    for (i, &v) in free.iter().enumerate() {
        slot[v] = i;
    }
    let mut coo = CooMatrix::new(free.len(), free.len());
    for (i, &v) in free.iter().enumerate() {
        coo.push(i, i, neighbors[v].len() as f64);
        for &w in &neighbors[v] {
            if slot[w] != usize::MAX {
                coo.push(i, slot[w], -1.0);
            }
        }
    }
    let factor = CscCholesky::factor(&CscMatrix::from(&coo))
        .map_err(|e| Error::degenerate(format!("ARAP system is not positive definite: {e}")))?;

    // start every rotation at the best rigid fit of the handles to their rest spots
    let rest_c = handles.keys().map(|&v| rest[v]).sum::<Vec3>() / handles.len() as f64;
    let target_c = handles.values().sum::<Vec3>() / handles.len() as f64;
    let mut h = Matrix3::zeros();
    for (&v, t) in handles {
        h += (t - target_c) * (rest[v] - rest_c).transpose();
    }
    // collinear handles leave the spin about their line open; the identity
    // keeps the start independent of how the net sits in space
    let mut sv = h.singular_values();
    sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    let initial = if sv[1] > 1e-9 * sv[0] { rotation_from_covariance(&h) } else { Matrix3::identity() };
    let mut rotations = vec![initial; n];
    let scale = net.mean_edge_length().max(f64::MIN_POSITIVE);
    for _ in 0..MAX_ITERS {
        let mut rhs = DMatrix::zeros(free.len(), 3);
        for (i, &v) in free.iter().enumerate() {
            let mut b = Vec3::zeros();
            for &w in &neighbors[v] {
                b += (rotations[v] + rotations[w]) * (rest[v] - rest[w]) * 0.5;
                if slot[w] == usize::MAX {
                    b += x[w];
                }
            }
            rhs.set_row(i, &b.transpose());
        }
        let sol = factor.solve(&rhs);
        let mut change: f64 = 0.0;
        for (i, &v) in free.iter().enumerate() {
            let p = Vec3::new(sol[(i, 0)], sol[(i, 1)], sol[(i, 2)]);
            change = change.max((p - x[v]).norm());
            x[v] = p;
        }
        if change < 1e-13 * scale {
            break;
        }
        for v in 0..n {
            let mut h = Matrix3::zeros();
            for &w in &neighbors[v] {
                h += (x[v] - x[w]) * (rest[v] - rest[w]).transpose();
            }
            rotations[v] = rotation_from_covariance(&h);
        }
    }
    if x.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::degenerate("ARAP produced non-finite positions"));
    }
    net.with_positions(x)
}
