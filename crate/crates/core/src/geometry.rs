//! Small vector helpers shared across modules.

use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;

/// Normalizes `v`, returning `None` when its norm is below `tol`.
pub fn unit(v: &Vec3, tol: f64) -> Option<Vec3> {
    let n = v.norm();
    (n > tol).then(|| v / n)
}

/// Angle between two vectors in `[0, π]`, robust near 0 and π.
pub fn angle(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Reflects `v` across the plane through the origin with unit normal `n`.
pub fn reflect(v: &Vec3, n: &Vec3) -> Vec3 {
    v - n * (2.0 * v.dot(n))
}

/// Rotates `v` by π about the unit axis `n`.
pub fn half_turn(v: &Vec3, n: &Vec3) -> Vec3 {
    n * (2.0 * v.dot(n)) - v
}

/// Optimal rotation `R` minimizing `Σ |R·a_i − b_i|²` for centered point sets.
pub fn procrustes_rotation(a: &[Vec3], b: &[Vec3]) -> Matrix3<f64> {
    let mut h = Matrix3::zeros();
    for (p, q) in a.iter().zip(b) {
        h += q * p.transpose();
    }
    rotation_from_covariance(&h)
}

/// Closest rotation to `h` in the Frobenius sense, with reflection fix.
pub fn rotation_from_covariance(h: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = h.svd(true, true);
    let (mut u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let r = u * vt;
    if r.determinant() >= 0.0 {
        return r;
    }
    // flip the direction of the weakest singular value
    let weakest = svd.singular_values.imin();
    let c = u.column(weakest) * -1.0;
    u.set_column(weakest, &c);
    u * vt
}

pub fn centroid(points: &[Vec3]) -> Vec3 {
    let sum: Vec3 = points.iter().sum();
    sum / points.len().max(1) as f64
}
