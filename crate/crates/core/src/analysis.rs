//! Derived geometry and checks of the smooth theory: discrete Gauss map,
//! vertex rulings, a one-dimensionality score for the Gauss image, ε-star
//! Taylor orders, the conical-vertex test and the boundary signature used to
//! compare disc-topology nets for isometry.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures::Chart;
use crate::geometry::{angle, unit, Vec3};
use crate::net::{frenet_frame, Axis, QuadNet, Star, StarKind, VertexId};

/// Below this norm the cross product of the two tangents counts as zero.
const TANGENT_CROSS_TOL: f64 = 1e-12;
/// `‖N_x + N_y‖` below which a ruling is flagged as low confidence.
const RULING_TOL: f64 = 1e-9;
/// Spreads below this are treated as exact zeros by the Taylor harness.
const EXACT_SPREAD: f64 = 1e-13;

/// Unit normal `T₁ × T₂` at every inner vertex; `None` elsewhere or where the
/// tangents are parallel.
pub fn gauss_map(net: &QuadNet) -> Result<Vec<Option<Vec3>>> {
    let min_len = crate::net::ZERO_EDGE_REL * net.mean_edge_length();
    (0..net.vertex_count())
        .map(|v| {
            if net.kind(v) != StarKind::Inner {
                return Ok(None);
            }
            let star = net.star_with_min_length(v, min_len)?;
            Ok(star_normal(&star))
        })
        .collect()
}

/// Normal of an inner star, or `None` when its tangents are parallel.
pub fn star_normal(star: &Star) -> Option<Vec3> {
    let t1 = frenet_frame(star, Axis::First).ok()?.tangent();
    let t2 = frenet_frame(star, Axis::Second).ok()?.tangent();
    unit(&t1.cross(&t2), TANGENT_CROSS_TOL)
}

/// One minus the share of the smallest eigenvalue in the uncentered second
/// moment of the normals. Normals on a great circle or at a single point
/// score 1; normals spread over the sphere score lower.
pub fn gauss_1d_score(net: &QuadNet) -> Result<f64> {
    let normals: Vec<Vec3> = gauss_map(net)?.into_iter().flatten().collect();
    score_normals(&normals)
}

/// [`gauss_1d_score`] on an explicit normal cloud.
pub fn score_normals(normals: &[Vec3]) -> Result<f64> {
    if normals.len() < 10 {
        return Err(Error::invalid(format!("need at least 10 normals, got {}", normals.len())));
    }
    let moment = normals.iter().fold(Matrix3::zeros(), |acc, n| acc + n * n.transpose()) / normals.len() as f64;
    let eig = SymmetricEigen::new(moment);
    let total: f64 = eig.eigenvalues.sum();
    let min = eig.eigenvalues.min().max(0.0);
    Ok(1.0 - min / total)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RulingSample {
    /// Not an inner vertex with inner neighbours and valid normals.
    Ineligible,
    /// Normal variation too small to define a direction (planar region).
    LowConfidence,
    Valid { direction: Vec3 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RulingField {
    pub samples: Vec<RulingSample>,
}

impl RulingField {
    pub fn valid(&self) -> impl Iterator<Item = (VertexId, Vec3)> + '_ {
        self.samples.iter().enumerate().filter_map(|(v, s)| match s {
            RulingSample::Valid { direction } => Some((v, *direction)),
            _ => None,
        })
    }
}

/// Vertex rulings `R = N × (N_x + N_y)`, where `N_x` and `N_y` are central
/// differences of the normal along the two coordinate curves and `N_y` is
/// flipped when `⟨N_x, N_y⟩ < 0`.
pub fn rulings(net: &QuadNet) -> Result<RulingField> {
    let normals = gauss_map(net)?;
    let samples = (0..net.vertex_count())
        .map(|v| {
            let Some(n) = normals[v] else { return RulingSample::Ineligible };
            let nb = net.neighbors(v);
            // neighbour normals oriented like the center one
            let mut around = [Vec3::zeros(); 4];
            for (slot, &w) in around.iter_mut().zip(nb) {
                let Some(m) = normals[w] else { return RulingSample::Ineligible };
                *slot = if m.dot(&n) < 0.0 { -m } else { m };
            }
            let nx = around[0] - around[2];
            let mut ny = around[1] - around[3];
            if nx.dot(&ny) < 0.0 {
                ny = -ny;
            }
            match unit(&n.cross(&(nx + ny)), RULING_TOL) {
                Some(direction) if (nx + ny).norm() >= RULING_TOL => RulingSample::Valid { direction },
                _ => RulingSample::LowConfidence,
            }
        })
        .collect();
    Ok(RulingField { samples })
}

/// Analytic nets available to the Taylor harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalyticNet {
    Plane,
    PlaneSkew,
    CylinderNongeodesic,
    CylinderGeodesic,
    ConeGeodesic,
}

impl AnalyticNet {
    pub const ALL: [AnalyticNet; 5] = [
        AnalyticNet::Plane,
        AnalyticNet::PlaneSkew,
        AnalyticNet::CylinderNongeodesic,
        AnalyticNet::CylinderGeodesic,
        AnalyticNet::ConeGeodesic,
    ];

    pub fn chart(self) -> Chart {
        match self {
            AnalyticNet::Plane => Chart::Plane,
            AnalyticNet::PlaneSkew => Chart::SkewPlane { shear: 0.5 },
            AnalyticNet::CylinderNongeodesic => Chart::ConformalCylinder { radius: 1.0, a_re: 0.0, a_im: 0.3 },
            AnalyticNet::CylinderGeodesic => Chart::Cylinder { radius: 1.0 },
            AnalyticNet::ConeGeodesic => Chart::Cone { half_angle: 0.5 },
        }
    }

    /// Default evaluation point. For the non-geodesic cylinder and the cone
    /// these are symmetric points where the generic leading error term
    /// vanishes (see the README discussion of the measured orders).
    pub fn default_point(self) -> (f64, f64) {
        match self {
            AnalyticNet::Plane | AnalyticNet::PlaneSkew => (0.3, 0.2),
            AnalyticNet::CylinderNongeodesic => (0.0, 0.0),
            AnalyticNet::CylinderGeodesic => (0.3, 0.2),
            AnalyticNet::ConeGeodesic => (1.0, 0.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AnalyticNet::Plane => "plane",
            AnalyticNet::PlaneSkew => "plane-skew",
            AnalyticNet::CylinderNongeodesic => "cylinder-nongeodesic",
            AnalyticNet::CylinderGeodesic => "cylinder-geodesic",
            AnalyticNet::ConeGeodesic => "cone-geodesic",
        }
    }

    pub fn from_name(name: &str) -> Option<AnalyticNet> {
        AnalyticNet::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaylorClass {
    NonOrthogonal,
    Orthogonal,
    OrthogonalGeodesic,
    /// Slope between the non-orthogonal and orthogonal thresholds.
    Unclassified,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsSample {
    pub eps: f64,
    /// Max over j of `|∠(δ_j, δ_{j+1}) − ∠(δ_{j+1}, δ_{j+2})|` in radians.
    pub angle_spread: f64,
    /// Max over j of `|⟨δ_j, δ_{j+1}⟩ − ⟨δ_{j+1}, δ_{j+2}⟩|` with unit δ.
    pub cosine_spread: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsStarReport {
    pub surface: AnalyticNet,
    pub point: (f64, f64),
    pub samples: Vec<EpsSample>,
    /// Least-squares log-log slope of the angle spread over the last four
    /// samples; `None` when every spread is at round-off (`exact`).
    pub slope: Option<f64>,
    pub exact: bool,
    pub class: TaylorClass,
}

/// Samples ε-stars of an analytic net around `point` and fits the order at
/// which their consecutive angles agree.
pub fn eps_star_orders(surface: AnalyticNet, point: (f64, f64), eps: &[f64]) -> Result<EpsStarReport> {
    if eps.len() < 4 {
        return Err(Error::invalid("need at least four ε values"));
    }
    if eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("ε values must be positive and strictly decreasing"));
    }
    let chart = surface.chart();
    let (x, y) = point;
    let samples = eps
        .iter()
        .map(|&e| {
            let nodes = [(x + e, y), (x, y + e), (x - e, y), (x, y - e)];
            if !chart.in_domain(x, y) || nodes.iter().any(|&(a, b)| !chart.in_domain(a, b)) {
                return Err(Error::invalid(format!("ε = {e} leaves the chart domain")));
            }
            let c = chart.eval(x, y);
            let d = nodes.map(|(a, b)| (chart.eval(a, b) - c).normalize());
            let angles: Vec<f64> = (0..4).map(|j| angle(&d[j], &d[(j + 1) % 4])).collect();
            let cosines: Vec<f64> = (0..4).map(|j| d[j].dot(&d[(j + 1) % 4])).collect();
            let spread = |v: &[f64]| (0..4).map(|j| (v[j] - v[(j + 1) % 4]).abs()).fold(0.0, f64::max);
            Ok(EpsSample { eps: e, angle_spread: spread(&angles), cosine_spread: spread(&cosines) })
        })
        .collect::<Result<Vec<_>>>()?;
    let exact = samples.iter().all(|s| s.angle_spread < EXACT_SPREAD);
    let slope = if exact { None } else { Some(fit_slope(&samples[samples.len() - 4..])) };
    let class = match slope {
        None => TaylorClass::OrthogonalGeodesic,
        Some(s) if s >= 2.9 => TaylorClass::OrthogonalGeodesic,
        Some(s) if s >= 1.9 => TaylorClass::Orthogonal,
        Some(s) if s.abs() < 0.2 => TaylorClass::NonOrthogonal,
        Some(_) => TaylorClass::Unclassified,
    };
    Ok(EpsStarReport { surface, point, samples, slope, exact, class })
}

fn fit_slope(samples: &[EpsSample]) -> f64 {
    let pts: Vec<(f64, f64)> =
        samples.iter().map(|s| (s.eps.ln(), s.angle_spread.max(f64::MIN_POSITIVE).ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conicality {
    Conical,
    NotConical,
    /// Not an inner vertex, or some incident quad is not planar.
    NotApplicable,
}

/// Checks the angle balance `α₁ + α₃ = α₂ + α₄` at an inner vertex whose four
/// incident quads are planar.
pub fn is_conical_vertex(net: &QuadNet, v: VertexId) -> Result<Conicality> {
    if net.kind(v) != StarKind::Inner {
        return Ok(Conicality::NotApplicable);
    }
    let scale = net.mean_edge_length();
    let incident = net.quads().filter(|q| q.contains(&v));
    for q in incident {
        let p = q.map(|i| net.position(i));
        let (d1, d2) = (p[2] - p[0], p[3] - p[1]);
        let cross = d1.cross(&d2);
        let cn = cross.norm();
        if cn < 1e-12 * scale * scale {
            return Ok(Conicality::NotApplicable);
        }
        // distance between the two diagonal lines
        if (p[1] - p[0]).dot(&cross).abs() / cn > 1e-9 * scale {
            return Ok(Conicality::NotApplicable);
        }
    }
    let a = net.star(v)?.angles();
    Ok(if ((a[0] + a[2]) - (a[1] + a[3])).abs() <= 1e-9 { Conicality::Conical } else { Conicality::NotConical })
}

/// Boundary of a disc-topology net split at its corners: `corners[i]` is the
/// interior angle at corner `i` and `pieces[i]` the length of the boundary
/// path from corner `i` to corner `i + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySignature {
    pub corners: Vec<f64>,
    pub pieces: Vec<f64>,
}

/// Interior angles deviating from π by more than this mark corners.
const CORNER_TOL: f64 = 1e-6;

pub fn boundary_signature(net: &QuadNet) -> Result<BoundarySignature> {
    let n = net.vertex_count();
    let mut adj: Vec<Vec<VertexId>> = vec![Vec::new(); n];
    for [a, b] in net.boundary_edges() {
        adj[*a].push(*b);
        adj[*b].push(*a);
    }
    let on_boundary: Vec<VertexId> = (0..n).filter(|&v| !adj[v].is_empty()).collect();
    if on_boundary.is_empty() {
        return Err(Error::invalid("net has no boundary"));
    }
    if let Some(v) = on_boundary.iter().find(|&&v| adj[v].len() != 2) {
        return Err(Error::invalid(format!("boundary is pinched at vertex {v}")));
    }
    let start = on_boundary[0];
    let mut walk = vec![start];
    let (mut prev, mut cur) = (start, adj[start][0]);
    while cur != start {
        walk.push(cur);
        let next = if adj[cur][0] == prev { adj[cur][1] } else { adj[cur][0] };
        prev = cur;
        cur = next;
    }
    if walk.len() != on_boundary.len() {
        return Err(Error::invalid("net has more than one boundary loop"));
    }
    let euler = n as i64 - net.edges().len() as i64 + net.quad_count() as i64;
    if euler != 1 {
        return Err(Error::invalid(format!("net is not a topological disc (Euler characteristic {euler})")));
    }
    let min_len = crate::net::ZERO_EDGE_REL * net.mean_edge_length();
    let interior = walk
        .iter()
        .map(|&v| Ok(net.star_with_min_length(v, min_len)?.angles().iter().sum::<f64>()))
        .collect::<Result<Vec<f64>>>()?;
    let is_corner: Vec<bool> = interior.iter().map(|a| (a - PI).abs() > CORNER_TOL).collect();
    let Some(first) = is_corner.iter().position(|&c| c) else {
        let total = (0..walk.len()).map(|i| edge_length(net, walk[i], walk[(i + 1) % walk.len()])).sum();
        return Ok(BoundarySignature { corners: Vec::new(), pieces: vec![total] });
    };
    let m = walk.len();
    let (mut corners, mut pieces) = (Vec::new(), Vec::new());
    let mut length = 0.0;
    for k in 0..m {
        let i = (first + k) % m;
        if is_corner[i] {
            if k > 0 {
                pieces.push(length);
            }
            corners.push(interior[i]);
            length = 0.0;
        }
        length += edge_length(net, walk[i], walk[(i + 1) % m]);
    }
    pieces.push(length);
    Ok(BoundarySignature { corners, pieces })
}

fn edge_length(net: &QuadNet, a: VertexId, b: VertexId) -> f64 {
    (net.position(a) - net.position(b)).norm()
}

/// Whether two signatures match up to a cyclic shift and reversal, with
/// lengths and angles equal within `tol`.
pub fn signatures_isometric(a: &BoundarySignature, b: &BoundarySignature, tol: f64) -> bool {
    if a.corners.len() != b.corners.len() || a.pieces.len() != b.pieces.len() {
        return false;
    }
    let k = a.corners.len();
    if k == 0 {
        return (a.pieces[0] - b.pieces[0]).abs() <= tol;
    }
    let close = |x: f64, y: f64| (x - y).abs() <= tol;
    // walking b backwards from corner s: corners s, s−1, …; pieces s−1, s−2, …
    (0..k).any(|s| {
        let forward = (0..k).all(|i| close(a.corners[i], b.corners[(s + i) % k]) && close(a.pieces[i], b.pieces[(s + i) % k]));
        let backward = (0..k).all(|i| {
            close(a.corners[i], b.corners[(s + k - i) % k]) && close(a.pieces[i], b.pieces[(s + 2 * k - i - 1) % k])
        });
        forward || backward
    })
}
