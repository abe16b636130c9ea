//! Analytic surfaces and sampled nets used by tests, the CLI and the
//! acceptance harness.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::net::{QuadNet, Star, StarKind};

/// A smooth parameterization `(x, y) ↦ f(x, y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Chart {
    /// `(x, y, 0)`.
    Plane,
    /// `(x + shear·y, y, 0)`: straight but non-orthogonal coordinate lines.
    SkewPlane { shear: f64 },
    /// The plane rolled onto a cylinder about an axis parallel to `y`:
    /// `x` runs along circles, `y` along rulings.
    Cylinder { radius: f64 },
    /// The conformal map `w ↦ w + a·w³` of the plane, rolled onto a cylinder.
    /// Coordinate curves stay orthogonal but are no longer geodesics.
    ConformalCylinder { radius: f64, a_re: f64, a_im: f64 },
    /// The plane around the origin wrapped isometrically onto a cone with
    /// apex at the origin, axis `z` and the given half-angle.
    Cone { half_angle: f64 },
}

impl Chart {
    pub fn eval(&self, x: f64, y: f64) -> Vec3 {
        match *self {
            Chart::Plane => Vec3::new(x, y, 0.0),
            Chart::SkewPlane { shear } => Vec3::new(x + shear * y, y, 0.0),
            Chart::Cylinder { radius } => roll(radius, x, y),
            Chart::ConformalCylinder { radius, a_re, a_im } => {
                let (u, v) = cubic(a_re, a_im, x, y);
                roll(radius, u, v)
            }
            Chart::Cone { half_angle } => {
                let (rho, phi) = (x.hypot(y), y.atan2(x));
                let s = half_angle.sin();
                let t = phi / s;
                Vec3::new(rho * s * t.cos(), rho * s * t.sin(), rho * half_angle.cos())
            }
        }
    }

    /// Partial derivatives `(f_x, f_y)`.
    pub fn tangents(&self, x: f64, y: f64) -> (Vec3, Vec3) {
        match *self {
            Chart::Plane => (Vec3::x(), Vec3::y()),
            Chart::SkewPlane { shear } => (Vec3::x(), Vec3::new(shear, 1.0, 0.0)),
            Chart::Cylinder { radius } => (roll_du(radius, x), Vec3::y()),
            Chart::ConformalCylinder { radius, a_re, a_im } => {
                let (u, _) = cubic(a_re, a_im, x, y);
                // derivative 1 + 3a·w² of the conformal map
                let (w2re, w2im) = (x * x - y * y, 2.0 * x * y);
                let dre = 1.0 + 3.0 * (a_re * w2re - a_im * w2im);
                let dim = 3.0 * (a_re * w2im + a_im * w2re);
                let du = roll_du(radius, u);
                (du * dre + Vec3::y() * dim, du * -dim + Vec3::y() * dre)
            }
            Chart::Cone { .. } => {
                let h = 1e-6 * (1.0 + x.hypot(y));
                let fx = (self.eval(x + h, y) - self.eval(x - h, y)) / (2.0 * h);
                let fy = (self.eval(x, y + h) - self.eval(x, y - h)) / (2.0 * h);
                (fx, fy)
            }
        }
    }

    /// Unit normal `f_x × f_y` normalized.
    pub fn normal(&self, x: f64, y: f64) -> Vec3 {
        let (fx, fy) = self.tangents(x, y);
        fx.cross(&fy).normalize()
    }

    /// Whether `(x, y)` lies inside the region where the chart is injective.
    pub fn in_domain(&self, x: f64, y: f64) -> bool {
        match *self {
            Chart::Plane | Chart::SkewPlane { .. } => x.is_finite() && y.is_finite(),
            Chart::Cylinder { radius } => x.abs() < PI * radius,
            Chart::ConformalCylinder { radius, a_re, a_im } => cubic(a_re, a_im, x, y).0.abs() < PI * radius,
            Chart::Cone { half_angle } => {
                x.hypot(y) > 0.0 && (y.atan2(x) / half_angle.sin()).abs() < PI
            }
        }
    }
}

fn roll(radius: f64, u: f64, v: f64) -> Vec3 {
    let t = u / radius;
    Vec3::new(radius * t.sin(), v, radius * (1.0 - t.cos()))
}

fn roll_du(radius: f64, u: f64) -> Vec3 {
    let t = u / radius;
    Vec3::new(t.cos(), 0.0, t.sin())
}

fn cubic(a_re: f64, a_im: f64, x: f64, y: f64) -> (f64, f64) {
    let (w3re, w3im) = (x * x * x - 3.0 * x * y * y, 3.0 * x * x * y - y * y * y);
    (x + a_re * w3re - a_im * w3im, y + a_re * w3im + a_im * w3re)
}

/// Samples `chart` on a full grid: node `(r, c)` maps to
/// `f(x0 + c·h, y0 + r·h)`.
pub fn sample(chart: &Chart, rows: usize, cols: usize, origin: (f64, f64), spacing: f64) -> Result<QuadNet> {
    if !(spacing > 0.0) {
        return Err(Error::invalid("sample spacing must be positive"));
    }
    let coord = |r: usize, c: usize| (origin.0 + c as f64 * spacing, origin.1 + r as f64 * spacing);
    for (r, c) in [(0, 0), (0, cols.saturating_sub(1)), (rows.saturating_sub(1), 0), (rows.saturating_sub(1), cols.saturating_sub(1))]
    {
        let (x, y) = coord(r, c);
        if !chart.in_domain(x, y) {
            return Err(Error::invalid(format!("grid node ({r}, {c}) leaves the chart domain")));
        }
    }
    QuadNet::from_fn(rows, cols, |r, c| {
        let (x, y) = coord(r, c);
        chart.eval(x, y)
    })
}

/// Flat `rows × cols` grid with the columns wrapped onto a polygonal cylinder
/// of unit-length chords scaled by `spacing`, turning `total_turn` radians
/// over the whole width. Rows run along the axis (`y`). Every edge keeps its
/// flat length, so the result is isometric to [`crate::net::make_grid`].
pub fn rolled_grid(rows: usize, cols: usize, spacing: f64, total_turn: f64) -> Result<QuadNet> {
    if cols < 2 {
        return Err(Error::invalid("rolled grid needs at least two columns"));
    }
    if !(total_turn > 0.0 && total_turn < 2.0 * PI) {
        return Err(Error::invalid("total turn must lie in (0, 2π)"));
    }
    let step = total_turn / (cols - 1) as f64;
    let radius = spacing / (2.0 * (step / 2.0).sin());
    QuadNet::from_fn(rows, cols, |r, c| {
        let t = c as f64 * step;
        Vec3::new(radius * t.sin(), r as f64 * spacing, radius * (1.0 - t.cos()))
    })
}

/// Cone sampled along rulings and circles: node `(r, c)` sits at slant
/// distance `s0 + r·ds` on the ruling at azimuth `c·dphi`. The quads are
/// planar isosceles trapezoids, so every inner vertex is conical.
pub fn cone_curvature_net(rows: usize, cols: usize, half_angle: f64, s0: f64, ds: f64, dphi: f64) -> Result<QuadNet> {
    if !(s0 > 0.0 && ds > 0.0 && dphi > 0.0) {
        return Err(Error::invalid("cone net parameters must be positive"));
    }
    let (sin, cos) = half_angle.sin_cos();
    QuadNet::from_fn(rows, cols, |r, c| {
        let s = s0 + r as f64 * ds;
        let phi = c as f64 * dphi;
        Vec3::new(s * sin * phi.cos(), s * sin * phi.sin(), s * cos)
    })
}

/// Inner star whose four faces are tangent to a cone of revolution with apex
/// at the center and whose opposite faces are related by a half-turn about the
/// cone axis, so the star is both conical and geodesic.
///
/// Face normals sit at azimuths `phi1, phi2, phi1 + π, phi2 + π` around
/// `axis`, each tilted by `half_angle` off the plane orthogonal to the axis.
/// Edges run along the intersections of consecutive faces, scaled by `lengths`.
pub fn conical_geodesic_star(axis: &Vec3, half_angle: f64, phi1: f64, phi2: f64, lengths: [f64; 4]) -> Result<Star> {
    let a = axis.try_normalize(1e-12).ok_or_else(|| Error::invalid("cone axis must be non-zero"))?;
    if !(phi1 < phi2 && phi2 < phi1 + PI) {
        return Err(Error::invalid("azimuths must satisfy phi1 < phi2 < phi1 + π"));
    }
    let helper = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = a.cross(&helper).normalize();
    let w = a.cross(&u);
    let (sin, cos) = half_angle.sin_cos();
    let normal = |phi: f64| a * sin + (u * phi.cos() + w * phi.sin()) * cos;
    let horizontal = |phi: f64| u * phi.cos() + w * phi.sin();
    let phis = [phi1, phi2, phi1 + PI, phi2 + PI];
    let mut vectors = [Vec3::zeros(); 4];
    for i in 0..4 {
        let (p, q) = (phis[i], if i == 3 { phis[0] + 2.0 * PI } else { phis[i + 1] });
        let mut e = normal(p).cross(&normal(q));
        let n = e.norm();
        if n < 1e-12 {
            return Err(Error::degenerate("consecutive faces are parallel"));
        }
        e /= n;
        // the edge leaves the center on the side of the azimuth between its faces
        if e.dot(&horizontal(0.5 * (p + q))) < 0.0 {
            e = -e;
        }
        vectors[i] = e * lengths[i];
    }
    Star::from_vectors(StarKind::Inner, &vectors)
}
