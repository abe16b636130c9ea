//! Scalar constraint residuals with analytic gradients.
//!
//! Four residual families exist: equal angles between consecutive star edges,
//! corner angle retention, equality of opposing angles (geodesic stars) and
//! 4Q side lengths. All angle residuals are written with unnormalized edge
//! vectors so they stay polynomial-like and cheap to differentiate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::net::{QuadNet, Star, StarKind, VertexId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Every vertex is an orthogonal geodesic star.
    #[default]
    Plain,
    /// 4Q net: checkerboard of orthogonal and geodesic stars plus side lengths.
    Fourq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermKind {
    EqualAngle,
    Corner,
    GeodesicEven,
    FourqLength,
}

/// One scalar residual and the vertices it reads.
#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    /// `⟨a,b⟩|c| − ⟨b,c⟩|a|` for three consecutive edges of a star.
    EqualAngle { center: VertexId, edges: [VertexId; 3] },
    /// `cos ∠(a,b) − cos_ref` at a corner.
    Corner { center: VertexId, edges: [VertexId; 2], cos_ref: f64 },
    /// `⟨a,b⟩|c||d| − ⟨c,d⟩|a||b|` for four consecutive edges.
    GeodesicEven { center: VertexId, edges: [VertexId; 4] },
    /// `|p1 − p0| + |p2 − p1| − reference` along one 4Q side.
    FourqLength { path: [VertexId; 3], reference: f64 },
}

/// A 2×2 block of cells; sides are listed bottom, top, left, right, each as a
/// three-vertex path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourQPatch {
    pub row: usize,
    pub col: usize,
    pub sides: [[VertexId; 3]; 4],
    pub lengths: [f64; 4],
}

/// Reference data the constraints are measured against.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct References {
    /// Corner vertex id to reference angle in radians.
    pub corner_angles: BTreeMap<VertexId, f64>,
    /// 4Q patches with reference side lengths; empty in plain mode.
    #[serde(default)]
    pub patches: Vec<FourQPatch>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JacobianRow {
    pub residual: f64,
    pub entries: Vec<(VertexId, Vec3)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    mode: Mode,
    terms: Vec<Term>,
}

fn equal_angle_value(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    a.dot(b) * c.norm() - b.dot(c) * a.norm()
}

fn geodesic_value(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> f64 {
    a.dot(b) * c.norm() * d.norm() - c.dot(d) * a.norm() * b.norm()
}

fn cosine(a: &Vec3, b: &Vec3) -> f64 {
    a.dot(b) / (a.norm() * b.norm())
}

/// Equal-angle residuals of a star: three for an inner star (the fourth cyclic
/// one is dependent), one for a boundary chain, `edges − 2` for an open fan.
pub fn equal_angle_residuals(star: &Star) -> Result<Vec<f64>> {
    let e = star.vectors();
    let count = match star.kind {
        StarKind::Inner => 3,
        StarKind::BoundaryChain | StarKind::Fan => e.len() - 2,
        StarKind::Corner => return Err(Error::invalid("corner stars use the corner residual")),
    };
    let n = e.len();
    Ok((0..count).map(|j| equal_angle_value(&e[j], &e[(j + 1) % n], &e[(j + 2) % n])).collect())
}

/// `cos(angle) − cos(ref_angle)` at a corner star.
pub fn corner_residual(star: &Star, ref_angle: f64) -> Result<f64> {
    if star.edges.len() != 2 {
        return Err(Error::invalid("corner residual needs a two-edge star"));
    }
    Ok(cosine(&star.edges[0].vector, &star.edges[1].vector) - ref_angle.cos())
}

/// Opposing-angle residuals of an inner star.
pub fn geodesic_even_residuals(star: &Star) -> Result<[f64; 2]> {
    if star.kind != StarKind::Inner {
        return Err(Error::invalid("geodesic residuals need an inner star"));
    }
    let e = star.vectors();
    Ok([geodesic_value(&e[0], &e[1], &e[2], &e[3]), geodesic_value(&e[1], &e[2], &e[3], &e[0])])
}

/// Side-length residuals of one patch, in side order bottom, top, left, right.
pub fn fourq_length_residuals(net: &QuadNet, patch: &FourQPatch) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for (i, side) in patch.sides.iter().enumerate() {
        if side.iter().any(|&v| v >= net.vertex_count()) {
            return Err(Error::topology(format!("patch ({}, {}) references a missing vertex", patch.row, patch.col)));
        }
        let p = side.map(|v| net.position(v));
        out[i] = (p[1] - p[0]).norm() + (p[2] - p[1]).norm() - patch.lengths[i];
    }
    Ok(out)
}

/// Whether a vertex carries the orthogonal condition in a 4Q net: patch
/// corners and patch centers, i.e. the even class of the grid checkerboard.
pub fn is_orthogonal_site(net: &QuadNet, v: VertexId) -> bool {
    let (r, c) = net.home(v);
    (r + c) % 2 == 0
}

/// Tiles the net into 2×2 patches measured on its current geometry.
pub fn fourq_patches(net: &QuadNet) -> Result<Vec<FourQPatch>> {
    let (rows, cols) = (net.rows(), net.cols());
    if (rows - 1) % 2 != 0 || (cols - 1) % 2 != 0 {
        return Err(Error::invalid(format!("a {rows}×{cols} grid cannot be tiled by 2×2 quad blocks")));
    }
    let mut patches = Vec::new();
    for p in 0..(rows - 1) / 2 {
        for q in 0..(cols - 1) / 2 {
            let (r, c) = (2 * p, 2 * q);
            let cells = [net.cell(r, c), net.cell(r, c + 1), net.cell(r + 1, c), net.cell(r + 1, c + 1)];
            let alive = cells.iter().filter(|x| x.is_some()).count();
            if alive == 0 {
                continue;
            }
            let [Some(bl), Some(br), Some(tl), Some(tr)] = cells else {
                return Err(Error::invalid(format!("patch ({p}, {q}) is only partially alive")));
            };
            let sides = [[bl[0], bl[1], br[1]], [tl[3], tl[2], tr[2]], [bl[0], bl[3], tl[3]], [br[1], br[2], tr[2]]];
            let lengths = sides.map(|s| {
                (net.position(s[1]) - net.position(s[0])).norm() + (net.position(s[2]) - net.position(s[1])).norm()
            });
            patches.push(FourQPatch { row: p, col: q, sides, lengths });
        }
    }
    Ok(patches)
}

impl References {
    /// References measured on `net`: every corner angle, plus 4Q patches in 4Q mode.
    pub fn from_net(net: &QuadNet, mode: Mode) -> Result<References> {
        let min_len = crate::net::ZERO_EDGE_REL * net.mean_edge_length();
        let mut corner_angles = BTreeMap::new();
        for v in 0..net.vertex_count() {
            if net.kind(v) == StarKind::Corner {
                let star = net.star_with_min_length(v, min_len)?;
                corner_angles.insert(v, star.angles()[0]);
            }
        }
        let patches = match mode {
            Mode::Plain => Vec::new(),
            Mode::Fourq => fourq_patches(net)?,
        };
        Ok(References { corner_angles, patches })
    }

    /// Uniformly scales all length references.
    pub fn scaled(&self, s: f64) -> References {
        let mut out = self.clone();
        for p in &mut out.patches {
            p.lengths = p.lengths.map(|l| l * s);
        }
        out
    }
}

/// Enumerates all residual terms of `net` for the given mode.
pub fn assemble(net: &QuadNet, mode: Mode, refs: &References) -> Result<ConstraintSet> {
    if mode == Mode::Fourq && ((net.rows() - 1) % 2 != 0 || (net.cols() - 1) % 2 != 0) {
        return Err(Error::invalid(format!(
            "a {}×{} grid cannot be tiled by 2×2 quad blocks",
            net.rows(),
            net.cols()
        )));
    }
    let mut terms = Vec::new();
    for v in 0..net.vertex_count() {
        let nb = net.neighbors(v);
        let orthogonal = mode == Mode::Plain || is_orthogonal_site(net, v);
        match net.kind(v) {
            StarKind::Corner => {
                let angle = refs
                    .corner_angles
                    .get(&v)
                    .ok_or_else(|| Error::invalid(format!("missing reference angle for corner {v}")))?;
                if !(*angle > 0.0 && *angle < std::f64::consts::PI) {
                    return Err(Error::invalid(format!("reference angle {angle} at corner {v} is outside (0, π)")));
                }
                terms.push(Term::Corner { center: v, edges: [nb[0], nb[1]], cos_ref: angle.cos() });
            }
            StarKind::Inner if orthogonal => {
                for j in 0..3 {
                    terms.push(Term::EqualAngle { center: v, edges: [nb[j], nb[(j + 1) % 4], nb[(j + 2) % 4]] });
                }
            }
            StarKind::Inner => {
                for j in 0..2 {
                    let edges = [nb[j], nb[j + 1], nb[j + 2], nb[(j + 3) % 4]];
                    terms.push(Term::GeodesicEven { center: v, edges });
                }
            }
            StarKind::BoundaryChain | StarKind::Fan if orthogonal => {
                for j in 0..nb.len() - 2 {
                    terms.push(Term::EqualAngle { center: v, edges: [nb[j], nb[j + 1], nb[j + 2]] });
                }
            }
            StarKind::BoundaryChain | StarKind::Fan => {}
        }
    }
    if mode == Mode::Fourq {
        for patch in &refs.patches {
            for (side, &reference) in patch.sides.iter().zip(&patch.lengths) {
                if side.iter().any(|&v| v >= net.vertex_count()) {
                    return Err(Error::topology(format!(
                        "patch ({}, {}) references a missing vertex",
                        patch.row, patch.col
                    )));
                }
                terms.push(Term::FourqLength { path: *side, reference });
            }
        }
    }
    Ok(ConstraintSet { mode, terms })
}

/// Gradient of `Σ c²` and the Jacobian rows of every term.
pub fn gradient(set: &ConstraintSet, net: &QuadNet) -> (Vec<Vec3>, Vec<JacobianRow>) {
    let mut grad = vec![Vec3::zeros(); net.vertex_count()];
    set.sum_squares_gradient(net.positions(), &mut grad);
    (grad, set.jacobian(net.positions()))
}

impl Term {
    pub fn kind(&self) -> TermKind {
        match self {
            Term::EqualAngle { .. } => TermKind::EqualAngle,
            Term::Corner { .. } => TermKind::Corner,
            Term::GeodesicEven { .. } => TermKind::GeodesicEven,
            Term::FourqLength { .. } => TermKind::FourqLength,
        }
    }

    /// Vertices whose coordinates the term depends on.
    pub fn vertices(&self) -> Vec<VertexId> {
        match self {
            Term::EqualAngle { center, edges } => vec![*center, edges[0], edges[1], edges[2]],
            Term::Corner { center, edges, .. } => vec![*center, edges[0], edges[1]],
            Term::GeodesicEven { center, edges } => vec![*center, edges[0], edges[1], edges[2], edges[3]],
            Term::FourqLength { path, .. } => path.to_vec(),
        }
    }

    pub fn residual(&self, pos: &[Vec3]) -> f64 {
        match self {
            Term::EqualAngle { center, edges } => {
                let o = pos[*center];
                equal_angle_value(&(pos[edges[0]] - o), &(pos[edges[1]] - o), &(pos[edges[2]] - o))
            }
            Term::Corner { center, edges, cos_ref } => {
                let o = pos[*center];
                cosine(&(pos[edges[0]] - o), &(pos[edges[1]] - o)) - cos_ref
            }
            Term::GeodesicEven { center, edges } => {
                let o = pos[*center];
                let e = edges.map(|w| pos[w] - o);
                geodesic_value(&e[0], &e[1], &e[2], &e[3])
            }
            Term::FourqLength { path, reference } => {
                let p = path.map(|w| pos[w]);
                (p[1] - p[0]).norm() + (p[2] - p[1]).norm() - reference
            }
        }
    }

    /// Residual and its gradient, written into `out` as `(vertex, ∂c/∂vertex)`.
    pub fn residual_with_gradient(&self, pos: &[Vec3], out: &mut Vec<(VertexId, Vec3)>) -> f64 {
        out.clear();
        match self {
            Term::EqualAngle { center, edges } => {
                let o = pos[*center];
                let [a, b, c] = edges.map(|w| pos[w] - o);
                let (la, lc) = (a.norm(), c.norm());
                let (ab, bc) = (a.dot(&b), b.dot(&c));
                let ga = b * lc - a * (bc / la);
                let gb = a * lc - c * la;
                let gc = c * (ab / lc) - b * la;
                out.extend([(*center, -(ga + gb + gc)), (edges[0], ga), (edges[1], gb), (edges[2], gc)]);
                ab * lc - bc * la
            }
            Term::Corner { center, edges, cos_ref } => {
                let o = pos[*center];
                let [a, b] = edges.map(|w| pos[w] - o);
                let (la, lb) = (a.norm(), b.norm());
                let ab = a.dot(&b);
                let inv = 1.0 / (la * lb);
                let ga = b * inv - a * (ab * inv / (la * la));
                let gb = a * inv - b * (ab * inv / (lb * lb));
                out.extend([(*center, -(ga + gb)), (edges[0], ga), (edges[1], gb)]);
                ab * inv - cos_ref
            }
            Term::GeodesicEven { center, edges } => {
                let o = pos[*center];
                let [a, b, c, d] = edges.map(|w| pos[w] - o);
                let (la, lb, lc, ld) = (a.norm(), b.norm(), c.norm(), d.norm());
                let (ab, cd) = (a.dot(&b), c.dot(&d));
                let ga = b * (lc * ld) - a * (cd * lb / la);
                let gb = a * (lc * ld) - b * (cd * la / lb);
                let gc = c * (ab * ld / lc) - d * (la * lb);
                let gd = d * (ab * lc / ld) - c * (la * lb);
                out.extend([
                    (*center, -(ga + gb + gc + gd)),
                    (edges[0], ga),
                    (edges[1], gb),
                    (edges[2], gc),
                    (edges[3], gd),
                ]);
                ab * lc * ld - cd * la * lb
            }
            Term::FourqLength { path, reference } => {
                let [p0, p1, p2] = path.map(|w| pos[w]);
                let (e0, e1) = (p1 - p0, p2 - p1);
                let (l0, l1) = (e0.norm(), e1.norm());
                let (u0, u1) = (e0 / l0, e1 / l1);
                out.extend([(path[0], -u0), (path[1], u0 - u1), (path[2], u1)]);
                l0 + l1 - reference
            }
        }
    }
}

impl ConstraintSet {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn count(&self, kind: TermKind) -> usize {
        self.terms.iter().filter(|t| t.kind() == kind).count()
    }

    /// Per-term list of influenced vertices (three coordinates each).
    pub fn sparsity(&self) -> Vec<Vec<VertexId>> {
        self.terms.iter().map(Term::vertices).collect()
    }

    pub fn residuals(&self, pos: &[Vec3]) -> Vec<f64> {
        self.terms.iter().map(|t| t.residual(pos)).collect()
    }

    pub fn sum_squares(&self, pos: &[Vec3]) -> f64 {
        self.terms.iter().map(|t| t.residual(pos).powi(2)).sum()
    }

    pub fn max_abs_residual(&self, pos: &[Vec3]) -> f64 {
        self.terms.iter().map(|t| t.residual(pos).abs()).fold(0.0, f64::max)
    }

    /// Adds `∇ Σ c²` into `grad` and returns `Σ c²`; terms are summed in order.
    pub fn sum_squares_gradient(&self, pos: &[Vec3], grad: &mut [Vec3]) -> f64 {
        let mut buf = Vec::with_capacity(5);
        let mut total = 0.0;
        for term in &self.terms {
            let c = term.residual_with_gradient(pos, &mut buf);
            total += c * c;
            for (v, g) in &buf {
                grad[*v] += g * (2.0 * c);
            }
        }
        total
    }

    pub fn jacobian(&self, pos: &[Vec3]) -> Vec<JacobianRow> {
        let mut buf = Vec::with_capacity(5);
        self.terms
            .iter()
            .map(|t| {
                let residual = t.residual_with_gradient(pos, &mut buf);
                JacobianRow { residual, entries: buf.clone() }
            })
            .collect()
    }

    /// Same terms with every length reference multiplied by `s`.
    pub fn scaled(&self, s: f64) -> ConstraintSet {
        let terms = self
            .terms
            .iter()
            .map(|t| match t {
                Term::FourqLength { path, reference } => Term::FourqLength { path: *path, reference: reference * s },
                other => other.clone(),
            })
            .collect();
        ConstraintSet { mode: self.mode, terms }
    }
}
