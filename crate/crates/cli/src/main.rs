//! `devnet`: command-line driver for deformation, interpolation, extension
//! and analysis of orthogonal geodesic nets.
//!
//! Exit codes: 0 on success, 2 when a solve does not converge, 1 on bad
//! input or any other error.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use devnet::analysis::{boundary_signature, eps_star_orders, gauss_1d_score, gauss_map, rulings, AnalyticNet, RulingSample};
use devnet::constraints::{assemble, References};
use devnet::energies::{EnergyConfig, DEFAULT_W_ISO, DEFAULT_W_POS};
use devnet::extension::{extend_row, Side};
use devnet::interpolation::{interpolate, InterpolationJob};
use devnet::io::{export_obj, HandleEntry, NetFile};
use devnet::net::make_grid;
use devnet::solver::{solve, SolverConfig};
use devnet::{Error, Vec3};
use serde_json::json;

#[derive(Parser)]
#[command(name = "devnet", version, about = "Discrete developable surfaces as orthogonal geodesic nets")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Deform a net towards handle targets while keeping it developable.
    Deform {
        #[arg(long)]
        net: PathBuf,
        /// JSON list of `{"id", "target"}`; defaults to the handles stored in the net.
        #[arg(long)]
        handles: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_W_ISO)]
        w_iso: f64,
        #[arg(long, default_value_t = DEFAULT_W_POS)]
        w_pos: f64,
        #[arg(long, default_value_t = 1.0)]
        w0: f64,
        #[arg(long, default_value_t = 1e-12)]
        eps: f64,
        #[arg(long, default_value_t = 60)]
        max_outer: usize,
        /// Where the outer-iteration trace goes on non-convergence;
        /// defaults to `<out>.trace.json`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Interpolate between two 4Q nets with equal side lengths.
    Interpolate {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        frames: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Append rows to one side of a net.
    Extend {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        side: Side,
        /// Length of the first new edge.
        #[arg(long)]
        length: f64,
        /// Half-angle of the first cone, in radians.
        #[arg(long)]
        angle: f64,
        #[arg(long, default_value_t = 1)]
        rows: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print Gauss map, rulings, 1D score and boundary signature as JSON lines.
    Analyze {
        #[arg(long)]
        net: PathBuf,
    },
    /// Measure the ε-star angle orders of an analytic net.
    VerifyTaylor {
        #[arg(long)]
        surface: String,
        /// Evaluation point `x,y`; defaults to the surface's reference point.
        #[arg(long, value_parser = parse_point)]
        point: Option<(f64, f64)>,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.03,0.01,0.003,0.001")]
        eps: Vec<f64>,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run the edit service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
    },
    /// Write a flat grid net.
    MakeGrid {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[arg(long, default_value_t = 1.0)]
        spacing: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a net as Wavefront OBJ.
    ExportObj {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Split quads along the (v00, v11) diagonal.
        #[arg(long)]
        triangulate: bool,
    },
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::SolverDiverged { .. }) { 2 } else { 1 };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

fn input(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

fn not_converged(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn parse_point(s: &str) -> Result<(f64, f64), String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    Ok((x.trim().parse().map_err(|e| format!("{e}"))?, y.trim().parse().map_err(|e| format!("{e}"))?))
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("devnet: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Deform { net, handles, out, w_iso, w_pos, w0, eps, max_outer, trace } => {
            let trace = trace.unwrap_or_else(|| with_suffix(&out, ".trace.json"));
            deform(&net, handles.as_deref(), &out, &trace, w_iso, w_pos, SolverConfig { w0, epsilon: eps, max_outer, ..SolverConfig::default() })
        }
        Cmd::Interpolate { source, target, frames, out_dir } => run_interpolation(&source, &target, frames, &out_dir),
        Cmd::Extend { net, side, length, angle, rows, out } => {
            let file = NetFile::load(&net)?;
            let mut grown = file.to_net()?;
            for _ in 0..rows {
                grown = extend_row(&grown, side, length, angle)?;
            }
            NetFile::from_net(&grown).with_mode(file.mode, None).save(&out)?;
            Ok(())
        }
        Cmd::Analyze { net } => analyze(&NetFile::load(&net)?.to_net()?),
        Cmd::VerifyTaylor { surface, point, eps, json } => {
            let name = surface;
            let surface = AnalyticNet::from_name(&name).ok_or_else(|| {
                let known: Vec<&str> = AnalyticNet::ALL.iter().map(|s| s.name()).collect();
                input(format!("unknown surface '{name}', expected one of {}", known.join(", ")))
            })?;
            let report = eps_star_orders(surface, point.unwrap_or(surface.default_point()), &eps)?;
            let mut out = io::stdout().lock();
            if json {
                writeln!(out, "{}", serde_json::to_string(&report)?)?;
                return Ok(());
            }
            writeln!(out, "surface {} at ({}, {})", surface.name(), report.point.0, report.point.1)?;
            writeln!(out, "{:>10}  {:>12}  {:>12}", "eps", "angle_spread", "cos_spread")?;
            for s in &report.samples {
                writeln!(out, "{:>10.3e}  {:>12.4e}  {:>12.4e}", s.eps, s.angle_spread, s.cosine_spread)?;
            }
            match report.slope {
                Some(slope) => writeln!(out, "slope {slope:.3}")?,
                None => writeln!(out, "slope unbounded (spreads at round-off)")?,
            }
            writeln!(out, "class {}", serde_json::to_value(report.class)?.as_str().unwrap_or_default())?;
            Ok(())
        }
        Cmd::Serve { addr } => {
            let listener = std::net::TcpListener::bind(&addr)?;
            eprintln!("devnet: serving on {}", listener.local_addr()?);
            devnet_service::server::serve(listener)?;
            Ok(())
        }
        Cmd::MakeGrid { rows, cols, spacing, out } => {
            NetFile::from_net(&make_grid(rows, cols, spacing)?).save(&out)?;
            Ok(())
        }
        Cmd::ExportObj { net, out, triangulate } => {
            fs::write(&out, export_obj(&NetFile::load(&net)?.to_net()?, triangulate))?;
            Ok(())
        }
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn deform(
    net_path: &Path,
    handles_path: Option<&Path>,
    out: &Path,
    trace_path: &Path,
    w_iso: f64,
    w_pos: f64,
    cfg: SolverConfig,
) -> Result<(), Failure> {
    if !(w_iso >= 0.0 && w_pos >= 0.0 && cfg.w0 > 0.0 && cfg.epsilon > 0.0) {
        return Err(input("weights must be non-negative and w0, eps positive"));
    }
    let file = NetFile::load(net_path)?;
    let net = file.to_net()?;
    let handles: BTreeMap<_, _> = match handles_path {
        Some(path) => {
            let entries: Vec<HandleEntry> = serde_json::from_str(&fs::read_to_string(path)?)?;
            entries.iter().map(|h| (h.id, Vec3::new(h.target[0], h.target[1], h.target[2]))).collect()
        }
        None => file.handle_map(),
    };
    if let Some(v) = handles.keys().find(|&&v| v >= net.vertex_count()) {
        return Err(input(format!("handle vertex {v} does not exist")));
    }
    let references = match &file.references {
        Some(r) => r.clone(),
        None => References::from_net(&net, file.mode)?,
    };
    let constraints = assemble(&net, file.mode, &references)?;
    let mut energy = EnergyConfig::new(&net, &net)?.with_handles(handles.clone());
    energy.w_iso = w_iso;
    energy.w_pos = w_pos;
    let (result, report) = solve(&net, &constraints, &energy, &cfg)?;
    NetFile::from_net(&result).with_mode(file.mode, Some(references)).with_handles(&handles).save(out)?;
    println!(
        "{}",
        json!({
            "converged": report.converged,
            "outer_iters": report.outer_iters,
            "inner_iters_total": report.inner_iters_total,
            "constraint_norm": report.final_constraint_norm,
            "energy": report.final_energy,
        })
    );
    if !report.converged {
        fs::write(trace_path, serde_json::to_string_pretty(&report)?)?;
        return Err(not_converged(format!(
            "no convergence: constraint norm {:e} after {} outer iterations; trace in {}",
            report.final_constraint_norm,
            report.outer_iters,
            trace_path.display()
        )));
    }
    Ok(())
}

fn run_interpolation(source: &Path, target: &Path, frames: usize, out_dir: &Path) -> Result<(), Failure> {
    let job = InterpolationJob {
        source: NetFile::load(source)?.to_net()?,
        target: NetFile::load(target)?.to_net()?,
        frame_count: frames,
        solver: SolverConfig::default(),
    };
    let result = interpolate(&job)?;
    fs::create_dir_all(out_dir)?;
    let width = frames.to_string().len().max(3);
    let mut telemetry = String::new();
    for (k, (net, report)) in result.frames.iter().zip(&result.reports).enumerate() {
        let file = NetFile::from_net(net).with_mode(devnet::constraints::Mode::Fourq, None);
        file.save(out_dir.join(format!("frame_{k:0width$}.json")))?;
        telemetry.push_str(&serde_json::to_string(report)?);
        telemetry.push('\n');
    }
    fs::write(out_dir.join("telemetry.jsonl"), telemetry)?;
    match result.failure {
        Some((index, reason)) => Err(not_converged(format!("frame {index} failed: {reason}"))),
        None => Ok(()),
    }
}

fn analyze(net: &devnet::QuadNet) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    let as_array = |v: &Vec3| [v.x, v.y, v.z];
    let normals: Vec<Option<[f64; 3]>> = gauss_map(net)?.iter().map(|n| n.as_ref().map(as_array)).collect();
    writeln!(out, "{}", json!({ "kind": "gauss_map", "normals": normals }))?;
    let field = rulings(net)?;
    let samples: Vec<serde_json::Value> = field
        .samples
        .iter()
        .map(|s| match s {
            RulingSample::Valid { direction } => json!(as_array(direction)),
            RulingSample::LowConfidence => json!("low_confidence"),
            RulingSample::Ineligible => serde_json::Value::Null,
        })
        .collect();
    writeln!(out, "{}", json!({ "kind": "rulings", "directions": samples }))?;
    writeln!(out, "{}", json!({ "kind": "gauss_1d_score", "score": gauss_1d_score(net)? }))?;
    let signature = match boundary_signature(net) {
        Ok(sig) => json!({ "kind": "boundary_signature", "corners": sig.corners, "pieces": sig.pieces }),
        Err(e) => json!({ "kind": "boundary_signature", "error": e.to_string() }),
    };
    writeln!(out, "{signature}")?;
    Ok(())
}
