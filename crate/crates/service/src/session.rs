//! Session state and its command fold, independent of any transport.

use std::collections::BTreeMap;
use std::sync::atomic::AtomicBool;

use devnet::analysis::{gauss_map, rulings, RulingSample};
use devnet::constraints::{assemble, ConstraintSet, Mode, References};
use devnet::energies::EnergyConfig;
use devnet::net::GridEdge;
use devnet::solver::{solve_cancellable, SolverConfig, SolverReport};
use devnet::{QuadNet, Vec3, VertexId};

use crate::protocol::{Command, Overlay, SolveParams};

/// Why a command was not applied.
#[derive(Debug, Clone, PartialEq)]
pub enum Refusal {
    /// Written against an old revision; carries the current one.
    Stale { current: u64 },
    /// Well formed but not applicable to the current state.
    Invalid(String),
}

/// Everything a solve needs, detached from the session so it can run on
/// another thread.
#[derive(Clone, Debug)]
pub struct SolveJob {
    pub revision: u64,
    pub net: QuadNet,
    pub constraints: ConstraintSet,
    pub energy: EnergyConfig,
    pub config: SolverConfig,
    pub overlays: Vec<Overlay>,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub revision: u64,
    pub net: QuadNet,
    pub report: SolverReport,
    pub rulings: Option<Vec<Option<[f64; 3]>>>,
    pub normals: Option<Vec<Option<[f64; 3]>>>,
}

impl SolveJob {
    /// Runs the solve; `None` when `cancel` stopped it early.
    pub fn run(&self, cancel: &AtomicBool) -> Result<Option<SolveOutcome>, String> {
        let (net, report) =
            solve_cancellable(&self.net, &self.constraints, &self.energy, &self.config, cancel).map_err(|e| e.to_string())?;
        if report.cancelled {
            return Ok(None);
        }
        let as_array = |v: Vec3| [v.x, v.y, v.z];
        let rulings = self
            .overlays
            .contains(&Overlay::Rulings)
            .then(|| rulings(&net))
            .transpose()
            .map_err(|e| e.to_string())?
            .map(|field| {
                field
                    .samples
                    .iter()
                    .map(|s| match s {
                        RulingSample::Valid { direction } => Some(as_array(*direction)),
                        _ => None,
                    })
                    .collect()
            });
        let normals = self
            .overlays
            .contains(&Overlay::GaussMap)
            .then(|| gauss_map(&net))
            .transpose()
            .map_err(|e| e.to_string())?
            .map(|normals| normals.into_iter().map(|n| n.map(as_array)).collect());
        Ok(Some(SolveOutcome { revision: self.revision, net, report, rulings, normals }))
    }
}

/// Solver weights and limits that persist across solves.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Settings {
    w_iso: f64,
    w_pos: f64,
    config: SolverConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            w_iso: devnet::energies::DEFAULT_W_ISO,
            w_pos: devnet::energies::DEFAULT_W_POS,
            config: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
struct Loaded {
    /// Current base net; live solves start here.
    net: QuadNet,
    /// Rest shape `F⁰`, source of the boundary lengths and references.
    reference: QuadNet,
    /// Previous solved state `F^k` the smoothness term is measured against.
    frame: QuadNet,
    /// Cleared when the frame came from a solve that did not converge.
    frame_feasible: bool,
    handles: BTreeMap<VertexId, Vec3>,
    mode: Mode,
    references: References,
}

/// One editing session: the state folded from the applied commands.
///
/// Live solves are a pure function of this state, so replaying the same
/// commands and solving gives the same geometry however the solves that
/// ran in between were interleaved. Only a committing solve changes the
/// base net, and it is part of the fold.
#[derive(Clone, Debug, Default)]
pub struct Session {
    revision: u64,
    loaded: Option<Loaded>,
    settings: Settings,
    overlays: Vec<Overlay>,
}

/// What applying a command asks of the caller.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    None,
    /// Start (or restart) a live solve of the new state.
    LiveSolve,
    /// Stop streaming live solves.
    StopLive,
    /// Run a solve to completion and commit it with [`Session::commit`].
    CommitSolve,
}

impl Session {
    pub fn new() -> Session {
        Session::default()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn net(&self) -> Option<&QuadNet> {
        self.loaded.as_ref().map(|l| &l.net)
    }

    pub fn handles(&self) -> Option<&BTreeMap<VertexId, Vec3>> {
        self.loaded.as_ref().map(|l| &l.handles)
    }

    pub fn frame_feasible(&self) -> bool {
        self.loaded.as_ref().is_some_and(|l| l.frame_feasible)
    }

    /// Applies a state-changing command. The revision grows by one exactly
    /// when the command is applied.
    pub fn apply(&mut self, cmd: &Command) -> Result<Effect, Refusal> {
        let Some(revision) = cmd.revision() else {
            return Ok(Effect::None);
        };
        if revision != self.revision {
            return Err(Refusal::Stale { current: self.revision });
        }
        let effect = self.apply_unchecked(cmd).map_err(Refusal::Invalid)?;
        self.revision += 1;
        Ok(effect)
    }

    fn loaded(&mut self) -> Result<&mut Loaded, String> {
        self.loaded.as_mut().ok_or_else(|| "no net is loaded".to_string())
    }

    fn apply_unchecked(&mut self, cmd: &Command) -> Result<Effect, String> {
        match cmd {
            Command::Load { net, .. } => {
                let file = net;
                let net = file.to_net().map_err(|e| e.to_string())?;
                let references = match &file.references {
                    Some(r) => r.clone(),
                    None => References::from_net(&net, file.mode).map_err(|e| e.to_string())?,
                };
                assemble(&net, file.mode, &references).map_err(|e| e.to_string())?;
                let handles = file.handle_map();
                check_handles(&net, handles.keys())?;
                self.loaded = Some(Loaded {
                    reference: net.clone(),
                    frame: net.clone(),
                    frame_feasible: true,
                    net,
                    handles,
                    mode: file.mode,
                    references,
                });
                Ok(Effect::StopLive)
            }
            Command::SetHandles { handles, .. } => {
                let l = self.loaded()?;
                let map: BTreeMap<VertexId, Vec3> =
                    handles.iter().map(|h| (h.id, Vec3::new(h.target[0], h.target[1], h.target[2]))).collect();
                check_handles(&l.net, map.keys())?;
                check_finite(map.values())?;
                l.handles = map;
                Ok(Effect::None)
            }
            Command::MoveHandle { id, target, .. } => {
                let l = self.loaded()?;
                let p = Vec3::new(target[0], target[1], target[2]);
                check_handles(&l.net, [id])?;
                check_finite([&p])?;
                l.handles.insert(*id, p);
                Ok(Effect::LiveSolve)
            }
            Command::Glue { pairs, .. } => {
                let pairs: Vec<(VertexId, VertexId)> = pairs.iter().map(|&[a, b]| (a, b)).collect();
                self.edit_topology(|net| net.glue(&pairs))?;
                Ok(Effect::None)
            }
            Command::Cut { seam, .. } => {
                let seam: Vec<GridEdge> = seam.clone();
                self.edit_topology(|net| net.cut(&seam))?;
                Ok(Effect::None)
            }
            Command::Solve { params, .. } => {
                self.loaded()?;
                self.update_settings(params)?;
                Ok(if params.commit { Effect::CommitSolve } else { Effect::LiveSolve })
            }
            Command::Subscribe { .. } => Ok(Effect::None),
        }
    }

    fn update_settings(&mut self, p: &SolveParams) -> Result<(), String> {
        let mut s = self.settings;
        if let Some(w) = p.w_iso {
            s.w_iso = w;
        }
        if let Some(w) = p.w_pos {
            s.w_pos = w;
        }
        if let Some(w) = p.w0 {
            s.config.w0 = w;
        }
        if let Some(e) = p.epsilon {
            s.config.epsilon = e;
        }
        if let Some(m) = p.max_outer {
            s.config.max_outer = m;
        }
        if !(s.w_iso >= 0.0 && s.w_pos >= 0.0 && s.config.w0 > 0.0 && s.config.epsilon > 0.0) {
            return Err("solve weights must be non-negative and w0, epsilon positive".into());
        }
        self.settings = s;
        self.overlays = p.overlays.clone();
        Ok(())
    }

    /// Applies the same topology edit to the base, reference and frame nets
    /// and carries handles over through the cell corners.
    fn edit_topology(&mut self, edit: impl Fn(&QuadNet) -> devnet::Result<QuadNet>) -> Result<(), String> {
        let l = self.loaded()?;
        let net = edit(&l.net).map_err(|e| e.to_string())?;
        let reference = edit(&l.reference).map_err(|e| e.to_string())?;
        let frame = edit(&l.frame).map_err(|e| e.to_string())?;
        let ids = id_map(&l.net, &net);
        let handles = l.handles.iter().filter_map(|(v, p)| ids.get(v).map(|w| (*w, *p))).collect();
        let references = References::from_net(&reference, l.mode).map_err(|e| e.to_string())?;
        assemble(&net, l.mode, &references).map_err(|e| e.to_string())?;
        *l = Loaded { net, reference, frame, frame_feasible: l.frame_feasible, handles, mode: l.mode, references };
        Ok(())
    }

    /// The solve the current state asks for.
    pub fn job(&self) -> Option<SolveJob> {
        let l = self.loaded.as_ref()?;
        let constraints = assemble(&l.net, l.mode, &l.references).ok()?;
        let mut energy = EnergyConfig::new(&l.reference, &l.frame).ok()?.with_handles(l.handles.clone());
        energy.w_iso = self.settings.w_iso;
        energy.w_pos = self.settings.w_pos;
        Some(SolveJob {
            revision: self.revision,
            net: l.net.clone(),
            constraints,
            energy,
            config: self.settings.config,
            overlays: self.overlays.clone(),
        })
    }

    /// Makes a committing solve's result the new base and frame net. A
    /// result that missed `ε` is kept as the best found and flagged.
    pub fn commit(&mut self, outcome: &SolveOutcome) {
        if let Some(l) = self.loaded.as_mut() {
            l.net = outcome.net.clone();
            l.frame = outcome.net.clone();
            l.frame_feasible = outcome.report.converged;
        }
    }
}

fn check_handles<'a>(net: &QuadNet, ids: impl IntoIterator<Item = &'a VertexId>) -> Result<(), String> {
    match ids.into_iter().find(|&&v| v >= net.vertex_count()) {
        Some(v) => Err(format!("vertex {v} does not exist")),
        None => Ok(()),
    }
}

fn check_finite<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Result<(), String> {
    if points.into_iter().all(|p| p.iter().all(|x| x.is_finite())) {
        Ok(())
    } else {
        Err("handle targets must be finite".into())
    }
}

/// Vertex ids of `before` mapped to ids of `after` through shared cell
/// corners; a split vertex maps to its lowest new id.
fn id_map(before: &QuadNet, after: &QuadNet) -> BTreeMap<VertexId, VertexId> {
    let mut map = BTreeMap::new();
    for (a, b) in before.cells().iter().zip(after.cells()) {
        if let (Some(a), Some(b)) = (a, b) {
            for k in 0..4 {
                map.entry(a[k]).and_modify(|w: &mut VertexId| *w = (*w).min(b[k])).or_insert(b[k]);
            }
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use devnet::io::{HandleEntry, NetFile};
    use devnet::net::make_grid;

    fn load(rev: u64, net: &QuadNet) -> Command {
        Command::Load { revision: rev, net: NetFile::from_net(net) }
    }

    #[test]
    fn revisions_count_applied_commands() {
        let mut s = Session::new();
        let net = make_grid(4, 4, 1.0).unwrap();
        assert_eq!(s.apply(&load(0, &net)), Ok(Effect::StopLive));
        assert_eq!(s.revision(), 1);
        // stale and invalid commands leave the revision alone
        assert_eq!(s.apply(&Command::MoveHandle { revision: 0, id: 0, target: [0.0; 3] }), Err(Refusal::Stale { current: 1 }));
        assert!(matches!(s.apply(&Command::MoveHandle { revision: 1, id: 99, target: [0.0; 3] }), Err(Refusal::Invalid(_))));
        assert_eq!(s.revision(), 1);
        assert_eq!(s.apply(&Command::MoveHandle { revision: 1, id: 0, target: [0.0, 0.0, 0.3] }), Ok(Effect::LiveSolve));
        assert_eq!(s.apply(&Command::Subscribe { channels: vec![] }), Ok(Effect::None));
        assert_eq!(s.revision(), 2);
    }

    #[test]
    fn commands_need_a_loaded_net() {
        let mut s = Session::new();
        assert!(matches!(s.apply(&Command::Solve { revision: 0, params: SolveParams::default() }), Err(Refusal::Invalid(_))));
        assert!(s.job().is_none());
    }

    #[test]
    fn glue_carries_handles_over() {
        let mut s = Session::new();
        let net = make_grid(4, 6, 1.0).unwrap();
        s.apply(&load(0, &net)).unwrap();
        let last = net.vertex_at(3, 5).unwrap();
        s.apply(&Command::SetHandles { revision: 1, handles: vec![HandleEntry { id: last, target: [5.0, 3.0, 0.0] }] })
            .unwrap();
        let pairs = (0..4).map(|r| [net.vertex_at(r, 5).unwrap(), net.vertex_at(r, 0).unwrap()]).collect();
        s.apply(&Command::Glue { revision: 2, pairs }).unwrap();
        let glued = s.net().unwrap();
        assert_eq!(glued.vertex_count(), 20);
        let (&id, _) = s.handles().unwrap().iter().next().unwrap();
        assert_eq!(glued.home(id), (3, 0));
    }

    #[test]
    fn solving_a_feasible_net_without_handles_echoes_it() {
        let mut s = Session::new();
        let net = make_grid(5, 5, 1.0).unwrap();
        s.apply(&load(0, &net)).unwrap();
        assert_eq!(s.apply(&Command::Solve { revision: 1, params: SolveParams::default() }), Ok(Effect::LiveSolve));
        let out = s.job().unwrap().run(&AtomicBool::new(false)).unwrap().unwrap();
        assert!(out.report.converged);
        assert_eq!(out.net.positions(), net.positions());
    }
}
