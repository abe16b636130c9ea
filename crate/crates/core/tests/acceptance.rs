//! Exit criteria of the engine. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::{Duration, Instant};

use devnet::analysis::{boundary_signature, eps_star_orders, rulings, signatures_isometric, AnalyticNet};
use devnet::constraints::{assemble, equal_angle_residuals, fourq_length_residuals, ConstraintSet, Mode, References};
use devnet::energies::{total_energy_and_gradient, EnergyConfig};
use devnet::extension::{extend_row, Side};
use devnet::fixtures::{conical_geodesic_star, rolled_grid, sample, Chart};
use devnet::geometry::angle;
use devnet::interpolation::{interpolate, InterpolationJob};
use devnet::net::make_grid;
use devnet::solver::{solve, SolverConfig};
use devnet::{QuadNet, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn plain_set(net: &QuadNet) -> ConstraintSet {
    assemble(net, Mode::Plain, &References::from_net(net, Mode::Plain).unwrap()).unwrap()
}

/// `Σ c²` at mean edge length 1.
fn unit_scale_norm(set: &ConstraintSet, net: &QuadNet) -> f64 {
    let s = 1.0 / net.mean_edge_length();
    let pos: Vec<Vec3> = net.positions().iter().map(|p| p * s).collect();
    set.scaled(s).sum_squares(&pos)
}

/// The displaced corner of a 21×21 grid, optionally with the opposite corner
/// pinned so the pull cannot be absorbed by a rigid motion.
fn corner_pull(pinned: bool) -> (QuadNet, BTreeMap<usize, Vec3>) {
    let net = make_grid(21, 21, 1.0).unwrap();
    let (a, b) = (net.vertex_at(0, 0).unwrap(), net.vertex_at(20, 20).unwrap());
    let mut handles: BTreeMap<usize, Vec3> = [(a, net.position(a) + Vec3::new(0.3, 0.3, 0.5))].into_iter().collect();
    if pinned {
        handles.insert(b, net.position(b));
    }
    (net, handles)
}

fn feasibility() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, pinned) in [("corner handle alone", false), ("opposite corner pinned", true)] {
        let (net, handles) = corner_pull(pinned);
        let energy = EnergyConfig::new(&net, &net).unwrap().with_handles(handles);
        let start = Instant::now();
        let (out, report) = solve(&net, &plain_set(&net), &energy, &SolverConfig::default()).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        let norm = unit_scale_norm(&plain_set(&net), &out);
        ok &= report.converged && norm < 1e-12 && report.outer_iters <= 60 && elapsed < Duration::from_secs(60);
        parts.push(format!("{name}: Σc² = {norm:.3e}, {} outer iterations, {:.2?}", report.outer_iters, elapsed));
    }
    check(ok, parts.join("; "))
}

fn penalty_schedule() -> Outcome {
    let (net, handles) = corner_pull(true);
    let energy = EnergyConfig::new(&net, &net).unwrap().with_handles(handles);
    let (_, report) = solve(&net, &plain_set(&net), &energy, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let exact = report.trace.iter().enumerate().all(|(k, s)| s.weight == 2f64.powi(-(k as i32)));
    check(exact && !report.trace.is_empty(), format!("{} logged weights, all equal to 2^-k", report.trace.len()))
}

fn random_net(rng: &mut ChaCha8Rng) -> (QuadNet, Mode) {
    let mode = if rng.gen_bool(0.5) { Mode::Plain } else { Mode::Fourq };
    let (rows, cols) = if mode == Mode::Fourq { (5, 5 + 2 * rng.gen_range(0..2)) } else { (rng.gen_range(3..6), rng.gen_range(3..7)) };
    let base = make_grid(rows, cols, rng.gen_range(0.5..2.0)).unwrap();
    let base = if mode == Mode::Plain && cols >= 4 && rng.gen_bool(0.3) {
        let pairs: Vec<_> = (0..rows).map(|r| (base.vertex_at(r, 0).unwrap(), base.vertex_at(r, cols - 1).unwrap())).collect();
        base.glue(&pairs).unwrap()
    } else {
        base
    };
    let jitter: Vec<Vec3> = (0..base.vertex_count())
        .map(|_| Vec3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(-0.3..0.3)))
        .collect();
    let pos = base.positions().iter().zip(&jitter).map(|(p, j)| p + j).collect();
    (base.with_positions(pos).unwrap(), mode)
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let size: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / size.max(1e-12)
}

/// Central differences of `f` in every coordinate of `pos`.
fn central_differences(pos: &[Vec3], f: impl Fn(&[Vec3]) -> f64) -> Vec<f64> {
    let h = 1e-6;
    let mut p = pos.to_vec();
    let mut out = Vec::with_capacity(3 * pos.len());
    for v in 0..pos.len() {
        for k in 0..3 {
            let x = p[v][k];
            p[v][k] = x + h;
            let up = f(&p);
            p[v][k] = x - h;
            let down = f(&p);
            p[v][k] = x;
            out.push((up - down) / (2.0 * h));
        }
    }
    out
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..100 {
        let (net, mode) = random_net(&mut rng);
        let refs = References::from_net(&net, mode).unwrap();
        // perturb the references so no term sits at its zero
        let refs = References {
            corner_angles: refs.corner_angles.iter().map(|(&v, a)| (v, a + 0.1)).collect(),
            patches: refs.patches.iter().cloned().map(|mut p| { p.lengths.iter_mut().for_each(|l| *l *= 0.9); p }).collect(),
        };
        let set = assemble(&net, mode, &refs).unwrap();
        let mut buf = Vec::new();
        for term in set.terms() {
            term.residual_with_gradient(net.positions(), &mut buf);
            let mut analytic = vec![0.0; 3 * net.vertex_count()];
            for (v, g) in &buf {
                for k in 0..3 {
                    analytic[3 * v + k] += g[k];
                }
            }
            let numeric = central_differences(net.positions(), |p| term.residual(p));
            let err = relative_error(&analytic, &numeric);
            worst = worst.max(err);
            checked += 1;
        }
        // a jittered frame keeps the smoothness term away from its zero
        let frame_pos = net
            .positions()
            .iter()
            .map(|p| p + Vec3::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05)))
            .collect();
        let frame = net.with_positions(frame_pos).unwrap();
        let reference = net.map_positions(|p| p * 1.1);
        let handles: BTreeMap<usize, Vec3> =
            (0..3).map(|_| (rng.gen_range(0..net.vertex_count()), Vec3::new(rng.gen(), rng.gen(), rng.gen()))).collect();
        let base = EnergyConfig::new(&reference, &frame).unwrap();
        let smooth_only = EnergyConfig { w_iso: 0.0, ..base.clone() };
        for cfg in [smooth_only, base.clone(), base.with_handles(handles)] {
            let (_, g) = total_energy_and_gradient(&net, &cfg).unwrap();
            let analytic: Vec<f64> = g.iter().flat_map(|v| [v.x, v.y, v.z]).collect();
            let numeric = central_differences(net.positions(), |p| {
                total_energy_and_gradient(&net.with_positions(p.to_vec()).unwrap(), &cfg).unwrap().0
            });
            let err = relative_error(&analytic, &numeric);
            worst = worst.max(err);
            checked += 1;
        }
    }
    check(worst < 1e-6, format!("{checked} gradients over 100 nets, worst relative error {worst:.2e}"))
}

const TAYLOR_EPS: [f64; 5] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3];

fn taylor_orders() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for (surface, rule) in [
        (AnalyticNet::PlaneSkew, "|slope| < 0.2"),
        (AnalyticNet::CylinderNongeodesic, "slope ≥ 1.9"),
        (AnalyticNet::CylinderGeodesic, "slope ≥ 2.9"),
        (AnalyticNet::ConeGeodesic, "slope ≥ 2.9"),
    ] {
        let report = eps_star_orders(surface, surface.default_point(), &TAYLOR_EPS).map_err(|e| e.to_string())?;
        // spreads at round-off for every ε mean the order is unbounded
        let slope = report.slope.unwrap_or(f64::INFINITY);
        let pass = match rule {
            "|slope| < 0.2" => slope.abs() < 0.2,
            "slope ≥ 1.9" => slope >= 1.9,
            _ => slope >= 2.9,
        };
        ok &= pass;
        lines.push(format!("{} {:.3} ({rule})", surface.name(), slope));
    }
    let elapsed = start.elapsed();
    check(ok && elapsed < Duration::from_secs(5), format!("{}; {:.2?}", lines.join(", "), elapsed))
}

/// Extends a sampled chart net by `steps` rows on `side` (top or right) one
/// at a time, feeding each step the analytic first edge length and cone
/// angle, and returns the worst vertex error and the final `Σ c²` at unit
/// scale.
fn extend_analytic(
    chart: &Chart,
    origin: (f64, f64),
    h: f64,
    (rows, cols): (usize, usize),
    side: Side,
    steps: usize,
) -> Result<(f64, f64), String> {
    let mut net = sample(chart, rows, cols, origin, h).map_err(|e| e.to_string())?;
    let f = |r: f64, c: f64| chart.eval(origin.0 + c * h, origin.1 + r * h);
    // node `i` along the new row `k` and its neighbour on the old boundary
    let (node, inward): (Box<dyn Fn(usize, usize) -> (usize, usize)>, (f64, f64)) = match side {
        Side::Top => (Box::new(|k, i| (rows + k, i)), (-1.0, 0.0)),
        Side::Right => (Box::new(|k, i| (i, cols + k)), (0.0, -1.0)),
        _ => return Err("only top and right extensions are sampled".into()),
    };
    let along = if side == Side::Top { cols } else { rows };
    let mut worst = 0.0f64;
    for k in 0..steps {
        let at = |i: usize| {
            let (r, c) = node(k, i);
            (r as f64, c as f64)
        };
        let ((r1, c1), (r2, c2)) = (at(1), at(2));
        let (g1, f1, g2) = (f(r1, c1), f(r1 + inward.0, c1 + inward.1), f(r2, c2));
        let length = (g1 - f1).norm();
        let alpha = angle(&(f1 - g1), &(g2 - g1));
        net = extend_row(&net, side, length, alpha).map_err(|e| format!("row {}: {e}", k + 1))?;
        for i in 0..along {
            let (r, c) = node(k, i);
            let p = net.position(net.vertex_at(r, c).unwrap());
            worst = worst.max((p - f(r as f64, c as f64)).norm());
        }
    }
    Ok((worst, unit_scale_norm(&plain_set(&net), &net)))
}

fn extension_soundness() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, chart, origin, side) in [
        // rings along the axis
        ("cylinder", Chart::Cylinder { radius: 2.0 }, (-0.5, 0.0), Side::Top),
        // columns away from the apex
        ("cone", Chart::Cone { half_angle: 0.5 }, (1.0, -0.5), Side::Right),
    ] {
        match extend_analytic(&chart, origin, 0.1, (11, 5), side, 20) {
            Ok((err, norm)) => {
                ok &= err < 1e-9 && norm < 1e-18;
                parts.push(format!("{name}: 20 rows, max vertex error {err:.2e}, Σc² = {norm:.2e}"));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{name}: failed at {e}"));
            }
        }
    }
    check(ok, parts.join("; "))
}

fn rulings_oracle() -> Outcome {
    let h = 0.02;
    let cone = sample(&Chart::Cone { half_angle: 0.5 }, 30, 30, (1.0, -15.0 * h), h).map_err(|e| e.to_string())?;
    let field = rulings(&cone).map_err(|e| e.to_string())?;
    let mut worst_cone = 0.0f64;
    let mut count = 0;
    for (v, d) in field.valid() {
        let p = cone.position(v);
        // the apex sits at the origin
        worst_cone = worst_cone.max(p.cross(&d).norm() / p.norm());
        count += 1;
    }
    let cyl = sample(&Chart::Cylinder { radius: 1.0 }, 30, 30, (-1.0, 0.0), 0.05).map_err(|e| e.to_string())?;
    let mut worst_cyl = 0.0f64;
    let mut count_cyl = 0;
    for (_, d) in rulings(&cyl).map_err(|e| e.to_string())?.valid() {
        worst_cyl = worst_cyl.max(angle(&d, &Vec3::y()).min(angle(&d, &-Vec3::y())));
        count_cyl += 1;
    }
    check(
        count > 0 && count_cyl > 0 && worst_cone < 1e-4 && worst_cyl < 1e-4,
        format!("cone: {count} rulings, apex distance ≤ {worst_cone:.2e}·slant; cylinder: {count_cyl} rulings, axis angle ≤ {worst_cyl:.2e} rad"),
    )
}

fn conical_geodesic_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(76);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let axis = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let half_angle = rng.gen_range(0.1..1.3);
        let phi1 = rng.gen_range(0.0..2.0 * PI);
        let phi2 = phi1 + rng.gen_range(0.3..PI - 0.3);
        let lengths = [0; 4].map(|_| rng.gen_range(0.5..2.0));
        let star = conical_geodesic_star(&axis, half_angle, phi1, phi2, lengths).map_err(|e| e.to_string())?;
        for r in equal_angle_residuals(&star).map_err(|e| e.to_string())? {
            worst = worst.max(r.abs());
        }
    }
    check(worst < 1e-12, format!("50 stars, worst equal-angle residual {worst:.2e}"))
}

fn interpolation() -> Outcome {
    let source = make_grid(9, 33, 1.0).unwrap();
    let target = rolled_grid(9, 33, 1.0, PI).unwrap();
    let job = InterpolationJob { source: source.clone(), target: target.clone(), frame_count: 10, solver: SolverConfig::default() };
    let out = interpolate(&job).map_err(|e| e.to_string())?;
    if let Some((i, why)) = &out.failure {
        return Err(format!("frame {i}: {why}"));
    }
    let refs = References::from_net(&source, Mode::Fourq).unwrap();
    let set = assemble(&source, Mode::Fourq, &refs).unwrap();
    let (mut worst_norm, mut worst_side) = (0.0f64, 0.0f64);
    for frame in &out.frames {
        worst_norm = worst_norm.max(unit_scale_norm(&set, frame));
        for patch in &refs.patches {
            for r in fourq_length_residuals(frame, patch).unwrap() {
                worst_side = worst_side.max(r.abs());
            }
        }
    }
    let endpoints = out.frames.len() == 10
        && out.frames[0].positions() == source.positions()
        && out.frames[9].positions() == target.positions();
    check(
        endpoints && worst_norm < 1e-12 && worst_side < 1e-10,
        format!("10 frames, max Σc² {worst_norm:.2e}, max side error {worst_side:.2e}, endpoints identical: {endpoints}"),
    )
}

fn disc_isometry() -> Outcome {
    let flat = boundary_signature(&make_grid(6, 11, 1.0).unwrap()).map_err(|e| e.to_string())?;
    let rolled = boundary_signature(&rolled_grid(6, 11, 1.0, 2.5).unwrap()).map_err(|e| e.to_string())?;
    let other = boundary_signature(&make_grid(6, 12, 1.0).unwrap()).map_err(|e| e.to_string())?;
    let same = signatures_isometric(&flat, &rolled, 1e-9);
    let different = !signatures_isometric(&flat, &other, 1e-9);
    check(same && different, format!("rectangle ≅ rolled: {same}; rectangle ≇ longer rectangle: {different}"))
}

fn interactive_performance() -> Outcome {
    let net = make_grid(32, 32, 1.0).unwrap();
    let (corner, pin) = (net.vertex_at(0, 0).unwrap(), net.vertex_at(31, 31).unwrap());
    // the pinned corner keeps the ARAP start from being a rigid motion
    let handles =
        [(corner, net.position(corner) + Vec3::new(0.3, 0.3, 0.5)), (pin, net.position(pin))].into_iter().collect();
    let energy = EnergyConfig::new(&net, &net).unwrap().with_handles(handles);
    let cfg = SolverConfig { max_outer: 1, ..SolverConfig::default() };
    let set = plain_set(&net);
    let start = Instant::now();
    let (_, report) = solve(&net, &set, &energy, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        elapsed < Duration::from_secs(1) && report.outer_iters == 1,
        format!("{} vertices, one outer iteration ({} inner) in {:.2?}", net.vertex_count(), report.inner_iters_total, elapsed),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("feasibility at ε = 1e-12 on a 21×21 corner pull", feasibility),
        ("penalty schedule w0·2^-k", penalty_schedule),
        ("gradient correctness against central differences", gradient_correctness),
        ("Taylor-order verification", taylor_orders),
        ("extension soundness on cylinder and cone", extension_soundness),
        ("rulings oracle", rulings_oracle),
        ("conical geodesic stars are orthogonal", conical_geodesic_oracle),
        ("isometric interpolation of an 8×32 strip", interpolation),
        ("disc-isometry comparator", disc_isometry),
        ("interactive-scale performance", interactive_performance),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
