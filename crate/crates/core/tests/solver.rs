use std::collections::BTreeMap;

use devnet::constraints::{assemble, ConstraintSet, Mode, References};
use devnet::energies::EnergyConfig;
use devnet::net::make_grid;
use devnet::solver::{arap_initialize, solve, SolverConfig};
use devnet::{QuadNet, Vec3};
use nalgebra::{Rotation3, Unit};

fn plain_set(net: &QuadNet) -> ConstraintSet {
    assemble(net, Mode::Plain, &References::from_net(net, Mode::Plain).unwrap()).unwrap()
}

fn unit_norm(set: &ConstraintSet, net: &QuadNet) -> f64 {
    let s = 1.0 / net.mean_edge_length();
    let x: Vec<Vec3> = net.positions().iter().map(|p| p * s).collect();
    set.scaled(s).sum_squares(&x)
}

/// Corner pull on an `n × n` grid with the opposite corner pinned.
fn pull(net: &QuadNet, n: usize, offset: Vec3) -> BTreeMap<usize, Vec3> {
    let (a, b) = (net.vertex_at(0, 0).unwrap(), net.vertex_at(n - 1, n - 1).unwrap());
    [(a, net.position(a) + offset), (b, net.position(b))].into_iter().collect()
}

fn rigid() -> (Rotation3<f64>, Vec3) {
    (Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::new(0.3, -0.5, 0.8)), 1.1), Vec3::new(4.0, -2.0, 7.5))
}

#[test]
fn arap_start_commutes_with_rigid_motions() {
    let net = make_grid(9, 9, 1.0).unwrap();
    let handles = pull(&net, 9, Vec3::new(0.2, 0.1, 0.6));
    let (rot, shift) = rigid();
    let moved = net.map_positions(|p| rot * p + shift);
    let moved_handles = handles.iter().map(|(&v, t)| (v, rot * t + shift)).collect();
    let a = arap_initialize(&net, &handles).unwrap();
    let b = arap_initialize(&moved, &moved_handles).unwrap();
    let worst = a.positions().iter().zip(b.positions()).map(|(p, q)| (rot * p + shift - q).norm()).fold(0.0, f64::max);
    assert!(worst < 1e-8, "ARAP drift {worst:e}");
}

/// The inner L-BFGS solves stop at their iteration cap on bending problems,
/// so round-off steers the two runs apart by up to about 1e-3; both must
/// still converge to feasible nets meeting the handles and with matching
/// energies.
#[test]
fn solve_commutes_with_rigid_motions_up_to_the_inner_cap() {
    let net = make_grid(7, 7, 1.0).unwrap();
    let handles = pull(&net, 7, Vec3::new(0.2, 0.1, 0.6));
    let energy = EnergyConfig::new(&net, &net).unwrap().with_handles(handles.clone());
    let (out, report) = solve(&net, &plain_set(&net), &energy, &SolverConfig::default()).unwrap();

    let (rot, shift) = rigid();
    let moved = net.map_positions(|p| rot * p + shift);
    let moved_handles: BTreeMap<usize, Vec3> = handles.iter().map(|(&v, t)| (v, rot * t + shift)).collect();
    let moved_energy = EnergyConfig::new(&moved, &moved).unwrap().with_handles(moved_handles.clone());
    let (moved_out, moved_report) = solve(&moved, &plain_set(&moved), &moved_energy, &SolverConfig::default()).unwrap();

    assert!(report.converged && moved_report.converged);
    assert!(unit_norm(&plain_set(&net), &out) < 1e-12 && unit_norm(&plain_set(&moved), &moved_out) < 1e-12);
    let (ea, eb) = (report.trace.last().unwrap().energy, moved_report.trace.last().unwrap().energy);
    assert!((ea - eb).abs() < 0.05 * ea, "energies {ea:e} vs {eb:e}");
    for (v, t) in &handles {
        let miss = (out.position(*v) - t).norm();
        let moved_miss = (moved_out.position(*v) - moved_handles[v]).norm();
        assert!((miss - moved_miss).abs() < 1e-2, "handle {v}: {miss:e} vs {moved_miss:e}");
    }
    let worst = out.positions().iter().zip(moved_out.positions()).map(|(p, q)| (rot * p + shift - q).norm()).fold(0.0, f64::max);
    assert!(worst < 1e-2, "drift {worst:e}");
}

#[test]
fn prescale_on_and_off_both_reach_feasibility() {
    let net = make_grid(6, 6, 2.5).unwrap();
    let handles = pull(&net, 6, Vec3::new(0.5, 0.0, 1.0));
    let energy = EnergyConfig::new(&net, &net).unwrap().with_handles(handles);
    for prescale in [true, false] {
        let cfg = SolverConfig { prescale, ..SolverConfig::default() };
        let (out, report) = solve(&net, &plain_set(&net), &energy, &cfg).unwrap();
        assert!(report.converged, "prescale {prescale}");
        assert!(unit_norm(&plain_set(&net), &out) < cfg.epsilon, "prescale {prescale}");
    }
}

#[test]
fn converged_reports_are_feasible() {
    for (n, offset) in [(4, Vec3::new(0.0, 0.0, 0.4)), (5, Vec3::new(0.3, -0.2, 0.5)), (8, Vec3::new(-0.4, 0.4, 1.0))] {
        let net = make_grid(n, n, 1.0).unwrap();
        let energy = EnergyConfig::new(&net, &net).unwrap().with_handles(pull(&net, n, offset));
        let (out, report) = solve(&net, &plain_set(&net), &energy, &SolverConfig::default()).unwrap();
        assert!(report.converged, "{n}×{n}");
        assert!(unit_norm(&plain_set(&net), &out) < 1e-12);
        assert!(report.trace.iter().enumerate().all(|(k, s)| s.weight == 2f64.powi(-(k as i32))));
    }
}

#[test]
fn bent_result_is_not_flat() {
    // the pulled corner leaves the plane, so the net must bend
    let net = make_grid(6, 6, 1.0).unwrap();
    let energy = EnergyConfig::new(&net, &net).unwrap().with_handles(pull(&net, 6, Vec3::new(0.0, 0.0, 1.0)));
    let (out, _) = solve(&net, &plain_set(&net), &energy, &SolverConfig::default()).unwrap();
    let lift = out.positions().iter().map(|p| p.z.abs()).fold(0.0, f64::max);
    assert!(lift > 0.3, "max lift {lift}");
}
