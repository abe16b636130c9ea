//! Deformation energy: Laplacian smoothness relative to the previous frame,
//! boundary edge-length retention and soft handle positions.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::net::{QuadNet, VertexId};

pub const DEFAULT_W_ISO: f64 = 1.0;
pub const DEFAULT_W_POS: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyConfig {
    pub w_iso: f64,
    pub w_pos: f64,
    pub handles: BTreeMap<VertexId, Vec3>,
    /// Positions of the previous frame the smoothness term is measured against.
    pub frame_ref: Vec<Vec3>,
    /// Reference lengths aligned with [`QuadNet::boundary_edges`].
    pub boundary_ref_lengths: Vec<f64>,
}

impl EnergyConfig {
    /// Default weights, boundary lengths from `reference` and smoothness
    /// measured against `frame`. Both nets must share the topology of the net
    /// being deformed.
    pub fn new(reference: &QuadNet, frame: &QuadNet) -> Result<EnergyConfig> {
        if !reference.same_topology(frame) {
            return Err(Error::invalid("reference and frame nets differ in topology"));
        }
        Ok(EnergyConfig {
            w_iso: DEFAULT_W_ISO,
            w_pos: DEFAULT_W_POS,
            handles: BTreeMap::new(),
            frame_ref: frame.positions().to_vec(),
            boundary_ref_lengths: boundary_lengths(reference),
        })
    }

    pub fn with_handles(mut self, handles: BTreeMap<VertexId, Vec3>) -> Self {
        self.handles = handles;
        self
    }

    /// Checks weights and that every reference array fits `net`.
    pub fn validate(&self, net: &QuadNet) -> Result<()> {
        if !(self.w_iso >= 0.0 && self.w_pos >= 0.0) {
            return Err(Error::invalid("energy weights must be non-negative"));
        }
        if self.frame_ref.len() != net.vertex_count() {
            return Err(Error::invalid("frame reference does not match the net topology"));
        }
        if self.boundary_ref_lengths.len() != net.boundary_edges().len() {
            return Err(Error::invalid(format!(
                "{} boundary reference lengths for {} boundary edges",
                self.boundary_ref_lengths.len(),
                net.boundary_edges().len()
            )));
        }
        if let Some(v) = self.handles.keys().find(|&&v| v >= net.vertex_count()) {
            return Err(Error::invalid(format!("handle {v} does not exist")));
        }
        Ok(())
    }

    /// Uniformly scales every positional and length reference.
    pub fn scaled(&self, s: f64) -> EnergyConfig {
        EnergyConfig {
            w_iso: self.w_iso,
            w_pos: self.w_pos,
            handles: self.handles.iter().map(|(v, p)| (*v, p * s)).collect(),
            frame_ref: self.frame_ref.iter().map(|p| p * s).collect(),
            boundary_ref_lengths: self.boundary_ref_lengths.iter().map(|l| l * s).collect(),
        }
    }
}

pub fn boundary_lengths(net: &QuadNet) -> Vec<f64> {
    net.boundary_edges().iter().map(|[a, b]| (net.position(*a) - net.position(*b)).norm()).collect()
}

/// `‖L(F) − L(F_ref)‖²` with the uniform Laplacian.
pub fn e_smooth(net: &QuadNet, frame_ref: &QuadNet) -> Result<f64> {
    if !net.same_topology(frame_ref) {
        return Err(Error::invalid("smoothness reference differs in topology"));
    }
    let mut grad = vec![Vec3::zeros(); net.vertex_count()];
    Ok(smooth_term(net, net.positions(), frame_ref.positions(), &mut grad))
}

/// `Σ (‖e‖ − l)²` over boundary edges.
pub fn e_iso(net: &QuadNet, boundary_ref_lengths: &[f64]) -> Result<f64> {
    if boundary_ref_lengths.len() != net.boundary_edges().len() {
        return Err(Error::invalid("boundary reference count does not match the net"));
    }
    let mut grad = vec![Vec3::zeros(); net.vertex_count()];
    Ok(iso_term(net, net.positions(), boundary_ref_lengths, &mut grad))
}

/// Total energy and its gradient.
pub fn total_energy_and_gradient(net: &QuadNet, cfg: &EnergyConfig) -> Result<(f64, Vec<Vec3>)> {
    cfg.validate(net)?;
    let mut grad = vec![Vec3::zeros(); net.vertex_count()];
    let e = energy_gradient(net, net.positions(), cfg, &mut grad);
    Ok((e, grad))
}

/// Adds the energy gradient at `pos` into `grad` and returns the energy.
/// `cfg` must already be validated against `net`.
pub(crate) fn energy_gradient(net: &QuadNet, pos: &[Vec3], cfg: &EnergyConfig, grad: &mut [Vec3]) -> f64 {
    let mut e = smooth_term(net, pos, &cfg.frame_ref, grad);
    if cfg.w_iso > 0.0 {
        let mut g = vec![Vec3::zeros(); pos.len()];
        e += cfg.w_iso * iso_term(net, pos, &cfg.boundary_ref_lengths, &mut g);
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += gi * cfg.w_iso;
        }
    }
    for (&v, target) in &cfg.handles {
        let d = pos[v] - target;
        e += cfg.w_pos * d.norm_squared();
        grad[v] += d * (2.0 * cfg.w_pos);
    }
    e
}

fn smooth_term(net: &QuadNet, pos: &[Vec3], frame: &[Vec3], grad: &mut [Vec3]) -> f64 {
    let mut e = 0.0;
    for v in 0..pos.len() {
        let nb = net.neighbors(v);
        let inv = 1.0 / nb.len() as f64;
        let mut lap = pos[v] - frame[v];
        for &w in nb {
            lap -= (pos[w] - frame[w]) * inv;
        }
        e += lap.norm_squared();
        grad[v] += lap * 2.0;
        for &w in nb {
            grad[w] -= lap * (2.0 * inv);
        }
    }
    e
}

fn iso_term(net: &QuadNet, pos: &[Vec3], refs: &[f64], grad: &mut [Vec3]) -> f64 {
    let mut e = 0.0;
    for ([a, b], l) in net.boundary_edges().iter().zip(refs) {
        let d = pos[*b] - pos[*a];
        let len = d.norm();
        let r = len - l;
        e += r * r;
        let g = d * (2.0 * r / len);
        grad[*b] += g;
        grad[*a] -= g;
    }
    e
}
