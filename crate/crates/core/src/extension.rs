//! Constructive extension of nets: direction propagation, cone-ray
//! intersection, row-by-row extension of orthogonal geodesic nets and the
//! row evolution of 4Q strips.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle, half_turn, reflect, unit, Vec3};
use crate::net::QuadNet;

/// Unit-vector sums below this norm count as collinear curves.
const COLLINEAR_TOL: f64 = 1e-8;
/// Ray-ray distance accepted as an intersection, relative to the edge scale.
const RAY_MEET_TOL: f64 = 1e-8;
const CIRCLE_SAMPLES: usize = 64;
const ANGLE_BISECTION_TOL: f64 = 1e-12;

/// Cone of revolution: points `P` with `∠(P − apex, axis) = half_angle`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub apex: Vec3,
    pub axis: Vec3,
    pub half_angle: f64,
}

impl ConeSpec {
    pub fn new(apex: Vec3, axis: Vec3, half_angle: f64) -> Result<ConeSpec> {
        let axis = unit(&axis, 1e-300).ok_or_else(|| Error::invalid("cone axis must be non-zero"))?;
        if !(half_angle > 1e-9 && half_angle < PI - 1e-9) {
            return Err(Error::invalid(format!("cone half-angle {half_angle} is outside (0, π)")));
        }
        Ok(ConeSpec { apex, axis, half_angle })
    }

    /// Signed deviation `⟨P − apex, axis⟩ − ‖P − apex‖·cos(half_angle)`.
    pub fn residual(&self, p: &Vec3) -> f64 {
        let d = p - self.apex;
        d.dot(&self.axis) - d.norm() * self.half_angle.cos()
    }
}

/// Result of completing a star by a fourth direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Propagated {
    Direction { direction: Vec3 },
    /// The curve through the center is straight along `axis`; every unit `v`
    /// with `⟨v, axis⟩ = cosine` completes the star.
    Family { axis: Vec3, cosine: f64 },
}

impl Propagated {
    /// The direction, or the family member coplanar with `axis` and `hint`.
    pub fn resolve(&self, hint: &Vec3) -> Result<Vec3> {
        match *self {
            Propagated::Direction { direction } => Ok(direction),
            Propagated::Family { axis, cosine } => family_member(&axis, cosine, hint),
        }
    }
}

fn family_member(axis: &Vec3, cosine: f64, hint: &Vec3) -> Result<Vec3> {
    let perp = unit(&(hint - axis * hint.dot(axis)), 1e-12)
        .ok_or_else(|| Error::degenerate("hint direction is parallel to the straight curve"))?;
    Ok(axis * cosine + perp * (1.0 - cosine * cosine).max(0.0).sqrt())
}

fn direction(from: &Vec3, to: &Vec3) -> Result<Vec3> {
    unit(&(to - from), 1e-300).ok_or_else(|| Error::degenerate("coincident points in direction propagation"))
}

/// Direction of the missing edge that makes `center` an orthogonal geodesic
/// star, given its neighbours `fwd` and `back` along one curve and `opposite`
/// on the other curve: the reflection of the `opposite` direction in the
/// plane of the first curve.
pub fn propagate_direction(center: &Vec3, fwd: &Vec3, back: &Vec3, opposite: &Vec3) -> Result<Propagated> {
    let (f, b, o) = (direction(center, fwd)?, direction(center, back)?, direction(center, opposite)?);
    match unit(&f.cross(&b), 1e-300).filter(|_| (f + b).norm() >= COLLINEAR_TOL) {
        Some(normal) => Ok(Propagated::Direction { direction: reflect(&o, &normal) }),
        None => Ok(Propagated::Family { axis: straight_axis(&f, &b)?, cosine: 0.0 }),
    }
}

/// Direction of the missing edge that makes `center` a geodesic star (equal
/// opposite angles): the half-turn of the `opposite` direction about the
/// bisector of the first curve.
pub fn propagate_geodesic_direction(center: &Vec3, fwd: &Vec3, back: &Vec3, opposite: &Vec3) -> Result<Propagated> {
    let (f, b, o) = (direction(center, fwd)?, direction(center, back)?, direction(center, opposite)?);
    match unit(&(f + b), COLLINEAR_TOL) {
        Some(bisector) => Ok(Propagated::Direction { direction: half_turn(&o, &bisector) }),
        None => {
            let axis = straight_axis(&f, &b)?;
            Ok(Propagated::Family { axis, cosine: -axis.dot(&o) })
        }
    }
}

fn straight_axis(f: &Vec3, b: &Vec3) -> Result<Vec3> {
    unit(&(f - b), 1e-12).ok_or_else(|| Error::degenerate("curve folds back onto itself"))
}

/// Direction of the new edge at the end of a boundary row: it makes the same
/// angle with the row as `down` does, and is chosen coplanar with the row
/// direction `along` and `hint`.
fn end_direction(down: &Vec3, along: &Vec3, hint: &Vec3) -> Result<Vec3> {
    family_member(along, down.dot(along), hint)
}

/// Intersections of the ray `origin + t·dir`, `t > 1e-12`, with the cone,
/// sorted by `t`.
pub fn intersect_cone_ray(cone: &ConeSpec, origin: &Vec3, dir: &Vec3) -> Vec<(f64, Vec3)> {
    let w = origin - cone.apex;
    let c = cone.half_angle.cos();
    let c2 = c * c;
    let (da, wa) = (dir.dot(&cone.axis), w.dot(&cone.axis));
    let a = da * da - c2 * dir.norm_squared();
    let b = 2.0 * (wa * da - c2 * w.dot(dir));
    let cc = wa * wa - c2 * w.norm_squared();
    let scale = 1.0 + w.norm();
    let mut roots = Vec::new();
    if a.abs() <= 1e-14 {
        if b.abs() > 1e-300 {
            roots.push(-cc / b);
        }
    } else {
        let mut disc = b * b - 4.0 * a * cc;
        // tangential hits lose the double root to rounding
        if disc < 0.0 && disc > -1e-12 * (b * b + (4.0 * a * cc).abs()) {
            disc = 0.0;
        }
        if disc >= 0.0 {
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            if q != 0.0 {
                roots.push(q / a);
                roots.push(cc / q);
            } else {
                roots.push(-b / (2.0 * a));
            }
        }
    }
    let mut hits: Vec<(f64, Vec3)> = roots
        .into_iter()
        .filter(|t| t.is_finite() && *t > 1e-12)
        .map(|t| (t, origin + dir * t))
        .filter(|(_, p)| {
            // keep the nappe the half-angle describes
            let d = p - cone.apex;
            (d.dot(&cone.axis) - d.norm() * c).abs() <= 1e-9 * scale.max(d.norm())
        })
        .collect();
    hits.sort_by(|x, y| x.0.total_cmp(&y.0));
    hits.dedup_by(|x, y| (x.0 - y.0).abs() <= 1e-14 * scale);
    hits
}

/// Picks the hit whose parameter is nearest to `preferred`.
fn nearest_hit(hits: &[(f64, Vec3)], preferred: f64) -> Option<Vec3> {
    hits.iter().min_by(|x, y| (x.0 - preferred).abs().total_cmp(&(y.0 - preferred).abs())).map(|h| h.1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// Beyond the last row.
    Top,
    /// Before the first row.
    Bottom,
    /// Before the first column.
    Left,
    /// Beyond the last column.
    Right,
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Side> {
        match s {
            "top" => Ok(Side::Top),
            "bottom" => Ok(Side::Bottom),
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            _ => Err(Error::invalid(format!("unknown side '{s}'"))),
        }
    }
}

/// Node positions of a net without identifications, as `grid[r][c]`.
fn full_grid(net: &QuadNet) -> Result<Vec<Vec<Vec3>>> {
    if net.vertex_count() != net.rows() * net.cols() || net.quad_count() != (net.rows() - 1) * (net.cols() - 1) {
        return Err(Error::invalid("extension needs a full grid without holes or identifications"));
    }
    Ok((0..net.rows())
        .map(|r| (0..net.cols()).map(|c| net.position(net.vertex_at(r, c).expect("full grid node"))).collect())
        .collect())
}

/// The boundary row on `side` and the row next to it, indexed along the side.
fn side_rows(grid: &[Vec<Vec3>], side: Side) -> (Vec<Vec3>, Vec<Vec3>) {
    let (rows, cols) = (grid.len(), grid[0].len());
    match side {
        Side::Top => (grid[rows - 1].clone(), grid[rows - 2].clone()),
        Side::Bottom => (grid[0].clone(), grid[1].clone()),
        Side::Left => ((0..rows).map(|r| grid[r][0]).collect(), (0..rows).map(|r| grid[r][1]).collect()),
        Side::Right => ((0..rows).map(|r| grid[r][cols - 1]).collect(), (0..rows).map(|r| grid[r][cols - 2]).collect()),
    }
}

fn with_new_row(grid: Vec<Vec<Vec3>>, side: Side, row: Vec<Vec3>) -> Result<QuadNet> {
    let mut grid = grid;
    match side {
        Side::Top => grid.push(row),
        Side::Bottom => grid.insert(0, row),
        Side::Left => {
            for (r, p) in grid.iter_mut().zip(row) {
                r.insert(0, p);
            }
        }
        Side::Right => {
            for (r, p) in grid.iter_mut().zip(row) {
                r.push(p);
            }
        }
    }
    let (rows, cols) = (grid.len(), grid[0].len());
    QuadNet::from_fn(rows, cols, |r, c| grid[r][c])
}

/// Appends one row on `side` of an orthogonal geodesic net. The first new
/// vertex (next to the first corner) sits at distance `length` along its
/// propagated direction and `alpha` is the half-angle of the first cone; all
/// other vertices follow from cone-ray intersections.
pub fn extend_row(net: &QuadNet, side: Side, length: f64, alpha: f64) -> Result<QuadNet> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::invalid("first edge length must be positive"));
    }
    let grid = full_grid(net)?;
    let (f, e) = side_rows(&grid, side);
    let n = f.len();
    if n < 3 {
        return Err(Error::invalid("the boundary row needs at least one interior vertex"));
    }
    let mut dirs = vec![Vec3::zeros(); n];
    for c in 1..n - 1 {
        let down = direction(&f[c], &e[c])?;
        let hint = if c > 1 { dirs[c - 1] } else { -down };
        dirs[c] = propagate_direction(&f[c], &f[c + 1], &f[c - 1], &e[c])?.resolve(&hint)?;
    }
    dirs[0] = end_direction(&direction(&f[0], &e[0])?, &direction(&f[0], &f[1])?, &dirs[1])?;
    dirs[n - 1] = end_direction(&direction(&f[n - 1], &e[n - 1])?, &direction(&f[n - 1], &f[n - 2])?, &dirs[n - 2])?;
    let mut g = vec![Vec3::zeros(); n];
    g[1] = f[1] + dirs[1] * length;
    for c in 2..n {
        let half = if c == 2 { alpha } else { angle(&(f[c - 1] - g[c - 1]), &(g[c - 2] - g[c - 1])) };
        let cone = ConeSpec::new(g[c - 1], f[c - 1] - g[c - 1], half)?;
        let hits = intersect_cone_ray(&cone, &f[c], &dirs[c]);
        g[c] = nearest_hit(&hits, (g[c - 1] - f[c - 1]).norm()).ok_or(Error::ExtensionInfeasible { column: c })?;
    }
    let half = angle(&(f[1] - g[1]), &(g[2] - g[1]));
    let cone = ConeSpec::new(g[1], f[1] - g[1], half)?;
    let hits = intersect_cone_ray(&cone, &f[0], &dirs[0]);
    g[0] = nearest_hit(&hits, length).ok_or(Error::ExtensionInfeasible { column: 0 })?;
    with_new_row(grid, side, g)
}

/// Closest points of the lines `o1 + s·d1` and `o2 + t·d2`: `(s, t, distance)`.
fn ray_ray(o1: &Vec3, d1: &Vec3, o2: &Vec3, d2: &Vec3) -> Option<(f64, f64, f64)> {
    let r = o1 - o2;
    let (a, b, c) = (d1.dot(d1), d1.dot(d2), d2.dot(d2));
    let (d, e) = (d1.dot(&r), d2.dot(&r));
    let den = a * c - b * b;
    if den.abs() <= 1e-14 * a * c {
        return None;
    }
    let s = (b * e - c * d) / den;
    let t = (a * e - b * d) / den;
    Some((s, t, ((o1 + d1 * s) - (o2 + d2 * t)).norm()))
}

/// Working state of a 4Q row evolution: `s` and `t` are the two top rows of
/// the strip, `u` and `w` the two new rows.
struct Evolution {
    s: Vec<Vec3>,
    t: Vec<Vec3>,
    u: Vec<Option<Vec3>>,
    w: Vec<Option<Vec3>>,
    /// Parity of the top strip row; `t[c]` is orthogonal iff `(top + c)` is even.
    top: usize,
    scale: f64,
}

impl Evolution {
    fn last(&self) -> usize {
        self.t.len() - 1
    }

    fn u(&self, c: usize) -> Vec3 {
        self.u[c].expect("evolved vertex")
    }

    fn w(&self, c: usize) -> Vec3 {
        self.w[c].expect("evolved vertex")
    }

    /// Direction of the new vertical edge at `t[c]`, which needs `u[c − 1]`.
    fn up_ray(&self, c: usize) -> Result<Vec3> {
        let down = direction(&self.t[c], &self.s[c])?;
        let hint = direction(&self.t[c - 1], &self.u(c - 1))?;
        if c == self.last() {
            return end_direction(&down, &direction(&self.t[c], &self.t[c - 1])?, &hint);
        }
        let p = if (self.top + c) % 2 == 0 {
            propagate_direction(&self.t[c], &self.t[c + 1], &self.t[c - 1], &self.s[c])?
        } else {
            propagate_geodesic_direction(&self.t[c], &self.t[c + 1], &self.t[c - 1], &self.s[c])?
        };
        p.resolve(&hint)
    }

    /// Direction of the horizontal edge leaving geodesic vertex `u[c]` to the
    /// right when its top neighbour is `up`.
    fn right_ray(&self, c: usize, up: &Vec3) -> Result<Vec3> {
        let hint = direction(&self.t[c], &self.t[c + 1])?;
        propagate_geodesic_direction(&self.u(c), up, &self.t[c], &self.u(c - 1))?.resolve(&hint)
    }

    /// Fills patch `q` given everything left of it.
    fn patch(&mut self, q: usize) -> Result<()> {
        let (k0, k1, k2) = (2 * q, 2 * q + 1, 2 * q + 2);
        let infeasible = || Error::InfeasibleDirection { patch: q };
        // horizontal ray of the shared column meets the vertical ray of the middle column
        let right = self.right_ray(k0, &self.w(k0))?;
        let up1 = self.up_ray(k1)?;
        let (_, t, dist) = ray_ray(&self.u(k0), &right, &self.t[k1], &up1).ok_or_else(infeasible)?;
        if dist > RAY_MEET_TOL * self.scale || t <= 0.0 {
            return Err(infeasible());
        }
        self.u[k1] = Some(self.t[k1] + up1 * t);

        // orthogonal middle vertex: right neighbour on its cone
        let (u0, u1) = (self.u(k0), self.u(k1));
        let cone = ConeSpec::new(u1, self.t[k1] - u1, angle(&(self.t[k1] - u1), &(u0 - u1)))?;
        let up2 = self.up_ray(k2)?;
        let hits = intersect_cone_ray(&cone, &self.t[k2], &up2);
        let u2 = nearest_hit(&hits, (u1 - self.t[k1]).norm()).ok_or_else(infeasible)?;
        self.u[k2] = Some(u2);

        // top middle vertex: reflected ray from u1 meets the cone at w[k0]
        let up_mid = propagate_direction(&u1, &u2, &u0, &self.t[k1])?.resolve(&direction(&u0, &self.w(k0))?)?;
        let w0 = self.w(k0);
        let cone = ConeSpec::new(w0, u0 - w0, angle(&(u0 - w0), &(self.w(k0 - 1) - w0)))?;
        let hits = intersect_cone_ray(&cone, &u1, &up_mid);
        let w1 = nearest_hit(&hits, (w0 - u0).norm()).ok_or_else(infeasible)?;
        self.w[k1] = Some(w1);

        // last corner: equal opposite sides put it on a circle
        let bottom = (self.t[k1] - self.t[k0]).norm() + (self.t[k2] - self.t[k1]).norm();
        let left = (u0 - self.t[k0]).norm() + (w0 - u0).norm();
        let (r1, r2) = (bottom - (w1 - w0).norm(), left - (u2 - self.t[k2]).norm());
        let predicted = u2 + (w1 - u1);
        let circle = Circle::from_spheres(&w1, r1, &u2, r2, &predicted, self.scale)
            .ok_or(Error::InfeasibleLengths { patch: q })?;
        let w2 = if k2 == self.last() { circle.point(0.0) } else { self.corner_on_circle(q, &circle, &predicted)? };
        self.w[k2] = Some(w2);
        Ok(())
    }

    /// Point of `circle` whose propagated horizontal ray at `u[2q + 2]` meets
    /// the vertical ray of the next column.
    fn corner_on_circle(&self, q: usize, circle: &Circle, predicted: &Vec3) -> Result<Vec3> {
        let k = 2 * q + 2;
        let u = self.u(k);
        let down = direction(&u, &self.t[k])?;
        let t_next = self.t[k + 1];
        // the vertical ray of the next column needs u[k]: compute it as up_ray does
        let p = if (self.top + k + 1) % 2 == 0 {
            propagate_direction(&t_next, &self.t[(k + 2).min(self.last())], &self.t[k], &self.s[k + 1])
        } else {
            propagate_geodesic_direction(&t_next, &self.t[(k + 2).min(self.last())], &self.t[k], &self.s[k + 1])
        };
        let hint = direction(&self.t[k], &u)?;
        let vertical = if k + 1 == self.last() {
            end_direction(&direction(&t_next, &self.s[k + 1])?, &direction(&t_next, &self.t[k])?, &hint)?
        } else {
            p?.resolve(&hint)?
        };
        let meets = |right: &Vec3| {
            ray_ray(&u, right, &t_next, &vertical)
                .filter(|&(s, t, dist)| s > 0.0 && t > 0.0 && dist <= RAY_MEET_TOL * self.scale)
                .is_some()
        };

        // a straight vertical curve through u[k] is a singular point of the
        // circle parameterization; test it directly
        let straight = u - down * circle.distance_to_second;
        if circle.contains(&straight, 1e-9 * self.scale) {
            if let Ok(right) = self.right_ray(k, &straight) {
                if meets(&right) {
                    return Ok(straight);
                }
            }
        }

        let g = |psi: f64| -> Option<f64> {
            let w = circle.point(psi);
            let up = unit(&(w - u), 1e-300)?;
            let bis = unit(&(up + down), COLLINEAR_TOL)?;
            let right = half_turn(&direction(&u, &self.u(k - 1)).ok()?, &bis);
            Some(right.cross(&vertical).dot(&(t_next - u)))
        };
        let samples: Vec<(f64, Option<f64>)> = (0..=CIRCLE_SAMPLES)
            .map(|i| {
                let psi = -PI + 2.0 * PI * i as f64 / CIRCLE_SAMPLES as f64;
                (psi, g(psi))
            })
            .collect();
        let mut candidates = Vec::new();
        for pair in samples.windows(2) {
            let ((mut lo, Some(mut glo)), (mut hi, Some(ghi))) = (pair[0], pair[1]) else { continue };
            if glo.signum() == ghi.signum() {
                continue;
            }
            while hi - lo > ANGLE_BISECTION_TOL {
                let mid = 0.5 * (lo + hi);
                let Some(gm) = g(mid) else { break };
                if gm.signum() == glo.signum() {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
            }
            candidates.push(0.5 * (lo + hi));
        }
        // roots where g only touches zero show up as minima of |g|
        for tri in samples.windows(3) {
            let (Some(a), Some(b), Some(c)) = (tri[0].1, tri[1].1, tri[2].1) else { continue };
            if b.abs() <= a.abs() && b.abs() <= c.abs() {
                let abs_g = |psi: f64| g(psi).map_or(f64::INFINITY, f64::abs);
                candidates.push(golden_min(abs_g, tri[0].0, tri[2].0));
            }
        }
        let mut best: Option<Vec3> = None;
        for psi in candidates {
            let w = circle.point(psi);
            let Ok(right) = self.right_ray(k, &w) else { continue };
            if meets(&right) && best.is_none_or(|b| (w - predicted).norm() < (b - predicted).norm()) {
                best = Some(w);
            }
        }
        best.ok_or(Error::InfeasibleDirection { patch: q })
    }
}

/// Minimizer of `f` on `[lo, hi]` by golden-section search.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > ANGLE_BISECTION_TOL {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Intersection circle of two spheres.
struct Circle {
    center: Vec3,
    radius: f64,
    e1: Vec3,
    e2: Vec3,
    second: Vec3,
    distance_to_second: f64,
    first: Vec3,
    distance_to_first: f64,
}

impl Circle {
    /// Circle of points at distance `r1` from `c1` and `r2` from `c2`, with
    /// angle zero at the point closest to `toward`.
    fn from_spheres(c1: &Vec3, r1: f64, c2: &Vec3, r2: f64, toward: &Vec3, scale: f64) -> Option<Circle> {
        if !(r1 > 0.0 && r2 > 0.0) {
            return None;
        }
        let axis = c2 - c1;
        let d = axis.norm();
        if d <= 1e-14 * scale {
            return None;
        }
        let e = axis / d;
        let a = (d * d + r1 * r1 - r2 * r2) / (2.0 * d);
        let h2 = r1 * r1 - a * a;
        if h2 < -1e-12 * scale * scale {
            return None;
        }
        let center = c1 + e * a;
        let helper = if e.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let off = toward - center;
        let e1 = unit(&(off - e * off.dot(&e)), 1e-12 * scale).unwrap_or_else(|| e.cross(&helper).normalize());
        let e2 = e.cross(&e1);
        Some(Circle {
            center,
            radius: h2.max(0.0).sqrt(),
            e1,
            e2,
            first: *c1,
            distance_to_first: r1,
            second: *c2,
            distance_to_second: r2,
        })
    }

    fn point(&self, psi: f64) -> Vec3 {
        self.center + (self.e1 * psi.cos() + self.e2 * psi.sin()) * self.radius
    }

    fn contains(&self, p: &Vec3, tol: f64) -> bool {
        ((p - self.first).norm() - self.distance_to_first).abs() <= tol
            && ((p - self.second).norm() - self.distance_to_second).abs() <= tol
    }
}

/// Appends two rows (one row of 4Q patches) on top of a 4Q strip.
///
/// `seed` fixes the six new vertices of patch `seed_patch`, ordered as the
/// middle-row vertices left to right followed by the top-row vertices left to
/// right. The remaining patches are evolved outward from the seed.
pub fn evolve_4q_strip(strip: &QuadNet, seed_patch: usize, seed: &[Vec3; 6]) -> Result<QuadNet> {
    let grid = full_grid(strip)?;
    let (rows, cols) = (strip.rows(), strip.cols());
    if rows % 2 == 0 || cols % 2 == 0 || cols < 3 {
        return Err(Error::invalid(format!("a {rows}×{cols} grid is not a 4Q strip")));
    }
    let patches = (cols - 1) / 2;
    if seed_patch >= patches {
        return Err(Error::invalid(format!("seed patch {seed_patch} is outside 0..{patches}")));
    }
    if seed.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
        return Err(Error::invalid("seed positions must be finite"));
    }
    let top = rows - 1;
    let scale = strip.mean_edge_length();
    let mut ev = Evolution {
        s: grid[top - 1].clone(),
        t: grid[top].clone(),
        u: vec![None; cols],
        w: vec![None; cols],
        top,
        scale,
    };
    for i in 0..3 {
        ev.u[2 * seed_patch + i] = Some(seed[i]);
        ev.w[2 * seed_patch + i] = Some(seed[3 + i]);
    }
    for q in seed_patch + 1..patches {
        ev.patch(q)?;
    }
    // mirror to evolve toward the first column
    let mut mirrored = Evolution {
        s: ev.s.iter().rev().copied().collect(),
        t: ev.t.iter().rev().copied().collect(),
        u: ev.u.iter().rev().copied().collect(),
        w: ev.w.iter().rev().copied().collect(),
        top,
        scale,
    };
    let mirrored_seed = patches - 1 - seed_patch;
    for q in mirrored_seed + 1..patches {
        mirrored.patch(q).map_err(|e| match e {
            Error::InfeasibleDirection { patch } => Error::InfeasibleDirection { patch: patches - 1 - patch },
            Error::InfeasibleLengths { patch } => Error::InfeasibleLengths { patch: patches - 1 - patch },
            other => other,
        })?;
    }
    let u: Vec<Vec3> = mirrored.u.iter().rev().map(|p| p.expect("evolved vertex")).collect();
    let w: Vec<Vec3> = mirrored.w.iter().rev().map(|p| p.expect("evolved vertex")).collect();
    let mut grid = grid;
    grid.push(u);
    grid.push(w);
    QuadNet::from_fn(rows + 2, cols, |r, c| grid[r][c])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::{assemble, fourq_patches, geodesic_even_residuals, Mode, References};
    use crate::fixtures::{sample, Chart};
    use crate::net::{make_grid, Star, StarKind};

    #[test]
    fn reflection_in_a_bent_curve_plane() {
        let center = Vec3::zeros();
        let p = propagate_direction(&center, &Vec3::new(1.0, 0.0, 0.3), &Vec3::new(-1.0, 0.0, 0.2), &Vec3::new(0.0, -1.0, 0.0))
            .unwrap();
        let Propagated::Direction { direction } = p else { panic!("expected a direction") };
        assert!((direction - Vec3::y()).norm() < 1e-15);
    }

    #[test]
    fn straight_curve_gives_a_family() {
        let center = Vec3::zeros();
        let p = propagate_direction(&center, &Vec3::x(), &-Vec3::x(), &Vec3::new(0.0, -1.0, 0.2)).unwrap();
        let Propagated::Family { axis, cosine } = p else { panic!("expected a family") };
        assert!(axis.cross(&Vec3::x()).norm() < 1e-15 && cosine == 0.0);
        let member = p.resolve(&Vec3::new(0.3, 0.0, 1.0)).unwrap();
        assert!((member - Vec3::z()).norm() < 1e-15);
        assert!(propagate_direction(&center, &center, &Vec3::x(), &Vec3::y()).is_err());
    }

    #[test]
    fn propagated_star_is_geodesic() {
        let center = Vec3::new(0.1, 0.2, 0.0);
        let (f, b, o) = (Vec3::new(1.2, 0.3, 0.4), Vec3::new(-0.9, 0.1, 0.5), Vec3::new(0.2, -1.1, 0.1));
        let Propagated::Direction { direction } = propagate_geodesic_direction(&center, &f, &b, &o).unwrap() else {
            panic!("expected a direction")
        };
        let star = Star::from_vectors(StarKind::Inner, &[f - center, direction * 0.7, b - center, o - center]).unwrap();
        let res = geodesic_even_residuals(&star).unwrap();
        assert!(res.iter().all(|r| r.abs() < 1e-12), "{res:?}");
    }

    #[test]
    fn reflection_mirrors_angles_to_the_curve() {
        let center = Vec3::new(0.1, 0.2, 0.0);
        let (f, b, o) = (Vec3::new(1.2, 0.3, 0.4), Vec3::new(-0.9, 0.1, 0.5), Vec3::new(0.2, -1.1, 0.1));
        let Propagated::Direction { direction } = propagate_direction(&center, &f, &b, &o).unwrap() else {
            panic!("expected a direction")
        };
        for side in [f - center, b - center] {
            assert!((angle(&direction, &side) - angle(&(o - center), &side)).abs() < 1e-14);
        }
    }

    #[test]
    fn reflection_is_an_involution() {
        let n = Vec3::new(0.3, -0.2, 0.9).normalize();
        let v = Vec3::new(0.5, 0.4, -0.3);
        assert!((reflect(&reflect(&v, &n), &n) - v).norm() < 1e-15);
    }

    #[test]
    fn cone_ray_examples() {
        let cone = ConeSpec::new(Vec3::zeros(), Vec3::z(), PI / 4.0).unwrap();
        let hits = intersect_cone_ray(&cone, &Vec3::x(), &Vec3::z());
        assert_eq!(hits.len(), 1);
        assert!((hits[0].0 - 1.0).abs() < 1e-15 && (hits[0].1 - Vec3::new(1.0, 0.0, 1.0)).norm() < 1e-15);
        let parallel = Vec3::new(1.0, 0.0, 1.0).normalize();
        assert!(intersect_cone_ray(&cone, &Vec3::new(5.0, 0.0, 0.0), &parallel).is_empty());
        assert!(ConeSpec::new(Vec3::zeros(), Vec3::z(), 0.0).is_err());
    }

    #[test]
    fn right_angle_cone_is_a_plane() {
        let cone = ConeSpec::new(Vec3::new(0.0, 1.0, 0.0), -Vec3::y(), PI / 2.0).unwrap();
        let hits = intersect_cone_ray(&cone, &Vec3::new(1.0, 0.0, 0.0), &Vec3::y());
        assert_eq!(hits.len(), 1);
        assert!((hits[0].1 - Vec3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
    }

    fn plain_norm(net: &QuadNet) -> f64 {
        let refs = References::from_net(net, Mode::Plain).unwrap();
        assemble(net, Mode::Plain, &refs).unwrap().sum_squares(net.positions())
    }

    #[test]
    fn flat_grid_extends_flat() {
        let net = make_grid(4, 5, 1.0).unwrap();
        for side in [Side::Top, Side::Bottom, Side::Left, Side::Right] {
            let ext = extend_row(&net, side, 0.7, PI / 2.0).unwrap();
            assert_eq!(ext.vertex_count(), net.vertex_count() + if matches!(side, Side::Top | Side::Bottom) { 5 } else { 4 });
            assert!(ext.positions().iter().all(|p| p.z == 0.0));
            assert!(plain_norm(&ext) < 1e-24);
        }
        let top = extend_row(&net, Side::Top, 0.7, PI / 2.0).unwrap();
        assert!((top.position(top.vertex_at(4, 3).unwrap()) - Vec3::new(3.0, 3.7, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn cylinder_extends_along_its_axis() {
        let chart = Chart::Cylinder { radius: 1.0 };
        let h = 0.1;
        let mut net = sample(&chart, 3, 12, (-0.5, 0.0), h).unwrap();
        for _ in 0..5 {
            net = extend_row(&net, Side::Top, h, PI / 2.0).unwrap();
        }
        let truth = sample(&chart, 8, 12, (-0.5, 0.0), h).unwrap();
        for (p, q) in net.positions().iter().zip(truth.positions()) {
            assert!((p - q).norm() < 1e-9);
        }
        assert!(plain_norm(&net) < 1e-18);
    }

    #[test]
    fn extension_failure_names_the_column() {
        // a tiny first cone angle makes the second vertex unreachable
        let net = make_grid(3, 4, 1.0).unwrap();
        let err = extend_row(&net, Side::Top, 1.0, 0.01).unwrap_err();
        assert!(matches!(err, Error::ExtensionInfeasible { column: 2 }), "{err:?}");
    }

    fn fourq_norm(net: &QuadNet) -> f64 {
        let refs = References::from_net(net, Mode::Fourq).unwrap();
        assemble(net, Mode::Fourq, &refs).unwrap().sum_squares(net.positions())
    }

    fn opposite_sides_equal(net: &QuadNet, tol: f64) -> bool {
        fourq_patches(net).unwrap().iter().all(|p| (p.lengths[0] - p.lengths[1]).abs() < tol && (p.lengths[2] - p.lengths[3]).abs() < tol)
    }

    fn seed_from(truth: &QuadNet, row: usize, patch: usize) -> [Vec3; 6] {
        let at = |r: usize, c: usize| truth.position(truth.vertex_at(r, c).unwrap());
        let c = 2 * patch;
        [at(row, c), at(row, c + 1), at(row, c + 2), at(row + 1, c), at(row + 1, c + 1), at(row + 1, c + 2)]
    }

    #[test]
    fn flat_strip_evolves_flat() {
        let strip = make_grid(3, 9, 1.0).unwrap();
        let truth = make_grid(5, 9, 1.0).unwrap();
        for patch in 0..4 {
            let net = evolve_4q_strip(&strip, patch, &seed_from(&truth, 3, patch)).unwrap();
            for (p, q) in net.positions().iter().zip(truth.positions()) {
                assert!((p - q).norm() < 1e-9, "seed {patch}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn cylinder_strips_evolve_on_the_cylinder() {
        let chart = Chart::Cylinder { radius: 1.0 };
        // rows along the axis, then rows around the circle
        let along = |r: usize, c: usize| chart.eval(-0.4 + 0.1 * c as f64, 0.1 * r as f64);
        let around = |r: usize, c: usize| chart.eval(-0.4 + 0.1 * r as f64, 0.1 * c as f64);
        for f in [&along as &dyn Fn(usize, usize) -> Vec3, &around] {
            let strip = QuadNet::from_fn(3, 9, f).unwrap();
            let truth = QuadNet::from_fn(5, 9, f).unwrap();
            let net = evolve_4q_strip(&strip, 1, &seed_from(&truth, 3, 1)).unwrap();
            for (p, q) in net.positions().iter().zip(truth.positions()) {
                assert!((p - q).norm() < 1e-8);
            }
            assert!(fourq_norm(&net) < 1e-18);
            assert!(opposite_sides_equal(&net, 1e-9));
        }
    }

    #[test]
    fn incompatible_seed_is_rejected() {
        let strip = make_grid(3, 7, 1.0).unwrap();
        let truth = make_grid(5, 7, 1.0).unwrap();
        let mut seed = seed_from(&truth, 3, 0);
        seed[2].z += 1e-3;
        let err = evolve_4q_strip(&strip, 0, &seed).unwrap_err();
        assert!(matches!(err, Error::InfeasibleDirection { patch: 1 }), "{err:?}");
    }
}
