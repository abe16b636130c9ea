//! Quad-grid nets with glue/cut topology and cyclically ordered stars.
//!
//! Topology is stored per grid cell as four canonical vertex ids in the order
//! `v00, v10, v11, v01`, where cell `(r, c)` spans grid nodes `(r, c)`,
//! `(r, c+1)`, `(r+1, c+1)` and `(r+1, c)`. Gluing merges ids, cutting splits
//! them; the grid itself never changes. Node `(r, c)` of a fresh grid sits at
//! `(c·spacing, r·spacing, 0)`, so the first star direction points along +x
//! and the second along +y.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub type VertexId = usize;

/// Relative tolerance (times mean edge length) below which an edge counts as zero.
pub const ZERO_EDGE_REL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StarKind {
    /// Closed fan of four quads.
    Inner,
    /// Open fan of two quads (three edges).
    BoundaryChain,
    /// Single quad (two edges).
    Corner,
    /// Open fan of three or more quads, e.g. a concave corner or a slit end.
    Fan,
}

/// One of the two coordinate curves through an inner star.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    First,
    Second,
}

impl Axis {
    fn edge_pair(self) -> (usize, usize) {
        match self {
            Axis::First => (0, 2),
            Axis::Second => (1, 3),
        }
    }
}

/// A grid edge between two 4-adjacent grid nodes, given as `(row, col)` pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridEdge(pub (usize, usize), pub (usize, usize));

#[derive(Clone, Debug, PartialEq)]
struct Fan {
    neighbors: Vec<VertexId>,
    kind: StarKind,
}

#[derive(Debug, PartialEq)]
struct Topology {
    rows: usize,
    cols: usize,
    cells: Vec<Option<[VertexId; 4]>>,
    vertex_count: usize,
    fans: Vec<Fan>,
    edges: Vec<[VertexId; 2]>,
    boundary_edges: Vec<[VertexId; 2]>,
    node_vertices: Vec<Vec<VertexId>>,
    home: Vec<(usize, usize)>,
}

/// A quad net: shared immutable topology plus per-vertex positions.
#[derive(Clone, Debug)]
pub struct QuadNet {
    topo: Arc<Topology>,
    positions: Vec<Vec3>,
}

#[derive(Clone, Debug)]
pub struct StarEdge {
    pub vertex: VertexId,
    pub vector: Vec3,
    pub length: f64,
    pub direction: Vec3,
}

/// A vertex with its cyclically ordered incident edges.
#[derive(Clone, Debug)]
pub struct Star {
    pub center: VertexId,
    pub kind: StarKind,
    pub edges: Vec<StarEdge>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrenetFrame {
    pub t: Vec3,
    pub n: Vec3,
    pub b: Vec3,
}

/// Result of [`frenet_frame`]: a full frame, or only the tangent when the
/// three curve points are collinear.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CurveFrame {
    Regular(FrenetFrame),
    Collinear { tangent: Vec3 },
}

impl CurveFrame {
    pub fn tangent(&self) -> Vec3 {
        match self {
            CurveFrame::Regular(f) => f.t,
            CurveFrame::Collinear { tangent } => *tangent,
        }
    }
}

pub fn make_grid(rows: usize, cols: usize, spacing: f64) -> Result<QuadNet> {
    QuadNet::grid(rows, cols, spacing)
}

pub fn star_at(net: &QuadNet, v: VertexId) -> Result<Star> {
    net.star(v)
}

pub fn glue(net: &QuadNet, pairs: &[(VertexId, VertexId)]) -> Result<QuadNet> {
    net.glue(pairs)
}

pub fn cut(net: &QuadNet, seam: &[GridEdge]) -> Result<QuadNet> {
    net.cut(seam)
}

/// Frenet frame of the coordinate curve `axis` through an inner star.
pub fn frenet_frame(star: &Star, axis: Axis) -> Result<CurveFrame> {
    if star.kind != StarKind::Inner {
        return Err(Error::invalid("frenet frame needs an inner star"));
    }
    let (i, j) = axis.edge_pair();
    let (fwd, back) = (star.edges[i].direction, star.edges[j].direction);
    curve_frame(&fwd, &back)
}

/// Frenet frame from the two unit directions of a discrete curve at a point.
pub fn curve_frame(fwd: &Vec3, back: &Vec3) -> Result<CurveFrame> {
    let diff = fwd - back;
    let dn = diff.norm();
    if dn < 1e-12 {
        return Err(Error::degenerate("curve folds back onto itself"));
    }
    let t = diff / dn;
    let sum = fwd + back;
    let sn = sum.norm();
    if sn < 1e-12 {
        return Ok(CurveFrame::Collinear { tangent: t });
    }
    let n = sum / sn;
    Ok(CurveFrame::Regular(FrenetFrame { t, n, b: t.cross(&n) }))
}

impl Star {
    /// Builds a star from raw edge vectors, for tests and constructions.
    pub fn from_vectors(kind: StarKind, vectors: &[Vec3]) -> Result<Star> {
        let edges = vectors
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let length = v.norm();
                if length <= 0.0 || !length.is_finite() {
                    return Err(Error::degenerate(format!("edge {i} has zero length")));
                }
                Ok(StarEdge { vertex: i + 1, vector: *v, length, direction: v / length })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Star { center: 0, kind, edges })
    }

    pub fn vectors(&self) -> Vec<Vec3> {
        self.edges.iter().map(|e| e.vector).collect()
    }

    /// Angles between consecutive edges; cyclic for inner stars.
    pub fn angles(&self) -> Vec<f64> {
        let n = self.edges.len();
        let count = if self.kind == StarKind::Inner { n } else { n - 1 };
        (0..count)
            .map(|j| crate::geometry::angle(&self.edges[j].vector, &self.edges[(j + 1) % n].vector))
            .collect()
    }
}

impl QuadNet {
    /// Planar grid with `rows × cols` vertices.
    pub fn grid(rows: usize, cols: usize, spacing: f64) -> Result<QuadNet> {
        if rows < 2 || cols < 2 {
            return Err(Error::invalid(format!("grid needs at least 2×2 vertices, got {rows}×{cols}")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid("grid spacing must be positive"));
        }
        QuadNet::from_fn(rows, cols, |r, c| Vec3::new(c as f64 * spacing, r as f64 * spacing, 0.0))
    }

    /// Full grid with node positions given by `f(row, col)`.
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Vec3) -> Result<QuadNet> {
        let alive = vec![true; (rows.max(1) - 1) * (cols.max(1) - 1)];
        QuadNet::from_mask(rows, cols, &alive, f)
    }

    /// Grid restricted to the alive cells, one vertex per touched node.
    pub fn from_mask(
        rows: usize,
        cols: usize,
        alive: &[bool],
        f: impl Fn(usize, usize) -> Vec3,
    ) -> Result<QuadNet> {
        if rows < 2 || cols < 2 {
            return Err(Error::invalid(format!("grid needs at least 2×2 vertices, got {rows}×{cols}")));
        }
        let ncells = (rows - 1) * (cols - 1);
        if alive.len() != ncells {
            return Err(Error::invalid(format!("alive mask has {} entries, expected {ncells}", alive.len())));
        }
        let node = |r: usize, c: usize| r * cols + c;
        let cells: Vec<Option<[VertexId; 4]>> = (0..ncells)
            .map(|i| {
                let (r, c) = (i / (cols - 1), i % (cols - 1));
                alive[i].then(|| [node(r, c), node(r, c + 1), node(r + 1, c + 1), node(r + 1, c)])
            })
            .collect();
        let positions = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        QuadNet::canonical(rows, cols, cells, positions)
    }

    /// Builds a net from explicit cell corner ids, which must already be
    /// canonical (as produced by this module and preserved by the file format).
    pub fn from_cells(
        rows: usize,
        cols: usize,
        cells: Vec<Option<[VertexId; 4]>>,
        positions: Vec<Vec3>,
    ) -> Result<QuadNet> {
        let topo = Topology::build(rows, cols, cells, positions.len())?;
        let net = QuadNet { topo: Arc::new(topo), positions };
        let canon = QuadNet::canonical(rows, cols, net.topo.cells.clone(), net.positions.clone())?;
        if canon.topo.cells != net.topo.cells {
            return Err(Error::invalid("vertex ids are not in canonical order"));
        }
        Ok(net)
    }

    /// Renumbers ids by first grid occurrence, drops unreferenced ids and validates.
    fn canonical(
        rows: usize,
        cols: usize,
        cells: Vec<Option<[VertexId; 4]>>,
        positions: Vec<Vec3>,
    ) -> Result<QuadNet> {
        if rows < 2 || cols < 2 || cells.len() != (rows - 1) * (cols - 1) {
            return Err(Error::invalid("cell array does not match grid size"));
        }
        let mut key: Vec<Option<(usize, usize)>> = vec![None; positions.len()];
        for (ci, cell) in cells.iter().enumerate() {
            let Some(ids) = cell else { continue };
            for (k, &v) in ids.iter().enumerate() {
                if v >= positions.len() {
                    return Err(Error::invalid(format!("cell {ci} references missing vertex {v}")));
                }
                let (r, c) = corner_node(cols, ci, k);
                let cand = (r * cols + c, ci);
                key[v] = Some(key[v].map_or(cand, |old| old.min(cand)));
            }
        }
        let mut order: Vec<VertexId> = (0..positions.len()).filter(|&v| key[v].is_some()).collect();
        order.sort_by_key(|&v| key[v]);
        let mut remap = vec![usize::MAX; positions.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old] = new;
        }
        let cells: Vec<_> = cells.iter().map(|c| c.map(|ids| ids.map(|v| remap[v]))).collect();
        let positions: Vec<Vec3> = order.iter().map(|&v| positions[v]).collect();
        let topo = Topology::build(rows, cols, cells, positions.len())?;
        Ok(QuadNet { topo: Arc::new(topo), positions })
    }

    pub fn rows(&self) -> usize {
        self.topo.rows
    }

    pub fn cols(&self) -> usize {
        self.topo.cols
    }

    pub fn vertex_count(&self) -> usize {
        self.topo.vertex_count
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn position(&self, v: VertexId) -> Vec3 {
        self.positions[v]
    }

    /// Same topology with new positions.
    pub fn with_positions(&self, positions: Vec<Vec3>) -> Result<QuadNet> {
        if positions.len() != self.vertex_count() {
            return Err(Error::invalid(format!(
                "expected {} positions, got {}",
                self.vertex_count(),
                positions.len()
            )));
        }
        Ok(QuadNet { topo: Arc::clone(&self.topo), positions })
    }

    pub fn map_positions(&self, f: impl Fn(&Vec3) -> Vec3) -> QuadNet {
        QuadNet { topo: Arc::clone(&self.topo), positions: self.positions.iter().map(f).collect() }
    }

    pub fn same_topology(&self, other: &QuadNet) -> bool {
        Arc::ptr_eq(&self.topo, &other.topo) || self.topo == other.topo
    }

    /// Corner ids of every cell, `None` for dead cells.
    pub fn cells(&self) -> &[Option<[VertexId; 4]>] {
        &self.topo.cells
    }

    pub fn cell(&self, r: usize, c: usize) -> Option<[VertexId; 4]> {
        if r + 1 >= self.rows() || c + 1 >= self.cols() {
            return None;
        }
        self.topo.cells[r * (self.cols() - 1) + c]
    }

    pub fn alive_mask(&self) -> Vec<bool> {
        self.topo.cells.iter().map(Option::is_some).collect()
    }

    /// Alive quads in cell order.
    pub fn quads(&self) -> impl Iterator<Item = [VertexId; 4]> + '_ {
        self.topo.cells.iter().flatten().copied()
    }

    pub fn quad_count(&self) -> usize {
        self.quads().count()
    }

    /// All vertex ids found at a grid node (several after a cut).
    pub fn vertices_at(&self, r: usize, c: usize) -> &[VertexId] {
        if r >= self.rows() || c >= self.cols() {
            return &[];
        }
        &self.topo.node_vertices[r * self.cols() + c]
    }

    /// The unique vertex at a grid node, if there is exactly one.
    pub fn vertex_at(&self, r: usize, c: usize) -> Option<VertexId> {
        match self.vertices_at(r, c) {
            [v] => Some(*v),
            _ => None,
        }
    }

    /// The lowest grid node at which vertex `v` appears.
    pub fn home(&self, v: VertexId) -> (usize, usize) {
        self.topo.home[v]
    }

    /// Unique undirected edges, sorted.
    pub fn edges(&self) -> &[[VertexId; 2]] {
        &self.topo.edges
    }

    /// Edges with exactly one incident quad, sorted.
    pub fn boundary_edges(&self) -> &[[VertexId; 2]] {
        &self.topo.boundary_edges
    }

    /// Cyclically ordered neighbors of `v`.
    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        &self.topo.fans[v].neighbors
    }

    pub fn kind(&self, v: VertexId) -> StarKind {
        self.topo.fans[v].kind
    }

    pub fn inner_vertices(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.vertex_count()).filter(|&v| self.kind(v) == StarKind::Inner)
    }

    pub fn is_boundary(&self, v: VertexId) -> bool {
        self.kind(v) != StarKind::Inner
    }

    pub fn mean_edge_length(&self) -> f64 {
        let edges = self.edges();
        if edges.is_empty() {
            return 0.0;
        }
        let sum: f64 = edges.iter().map(|[a, b]| (self.positions[*a] - self.positions[*b]).norm()).sum();
        sum / edges.len() as f64
    }

    /// Star of `v` with edges in cyclic order.
    pub fn star(&self, v: VertexId) -> Result<Star> {
        self.star_with_min_length(v, ZERO_EDGE_REL * self.mean_edge_length())
    }

    /// Like [`QuadNet::star`] with an explicit zero-length threshold, which
    /// avoids recomputing the mean edge length for every vertex.
    pub fn star_with_min_length(&self, v: VertexId, min_length: f64) -> Result<Star> {
        if v >= self.vertex_count() {
            return Err(Error::invalid(format!("vertex {v} does not exist")));
        }
        let fan = &self.topo.fans[v];
        if fan.neighbors.is_empty() {
            return Err(Error::topology(format!("vertex {v} is isolated")));
        }
        let center = self.positions[v];
        let edges = fan
            .neighbors
            .iter()
            .map(|&w| {
                let vector = self.positions[w] - center;
                let length = vector.norm();
                if !(length > min_length) {
                    return Err(Error::degenerate(format!("edge ({v}, {w}) has zero length")));
                }
                Ok(StarEdge { vertex: w, vector, length, direction: vector / length })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Star { center: v, kind: fan.kind, edges })
    }

    /// Identifies vertex pairs; each merged vertex sits at the mean of its sources.
    pub fn glue(&self, pairs: &[(VertexId, VertexId)]) -> Result<QuadNet> {
        let n = self.vertex_count();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(a, b) in pairs {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("glue pair ({a}, {b}) references a missing vertex")));
            }
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut sums = vec![Vec3::zeros(); n];
        let mut counts = vec![0usize; n];
        for v in 0..n {
            let r = find(&mut parent, v);
            sums[r] += self.positions[v];
            counts[r] += 1;
        }
        let positions: Vec<Vec3> =
            (0..n).map(|v| if counts[v] > 0 { sums[v] / counts[v] as f64 } else { Vec3::zeros() }).collect();
        let mut cells = Vec::with_capacity(self.topo.cells.len());
        for (ci, cell) in self.topo.cells.iter().enumerate() {
            let Some(ids) = cell else {
                cells.push(None);
                continue;
            };
            let mapped = ids.map(|v| find(&mut parent, v));
            for i in 0..4 {
                for j in i + 1..4 {
                    if mapped[i] == mapped[j] {
                        let (r, c) = self.cell_coords(ci);
                        return Err(Error::topology(format!(
                            "glue identifies vertices {} and {} of the same quad ({r}, {c})",
                            ids[i], ids[j]
                        )));
                    }
                }
            }
            cells.push(Some(mapped));
        }
        QuadNet::canonical(self.rows(), self.cols(), cells, positions)
    }

    /// Splits vertices along a seam of grid edges. Duplicates start coincident.
    pub fn cut(&self, seam: &[GridEdge]) -> Result<QuadNet> {
        let mut seam_ids: Vec<[VertexId; 2]> = Vec::new();
        for &GridEdge(a, b) in seam {
            let sides = self.cells_along(a, b)?;
            if sides.is_empty() {
                return Err(Error::invalid(format!("seam edge {a:?}-{b:?} touches no alive cell")));
            }
            for [x, y] in sides {
                seam_ids.push([x.min(y), x.max(y)]);
            }
        }
        seam_ids.sort_unstable();
        seam_ids.dedup();
        let is_seam = |x: VertexId, y: VertexId| seam_ids.binary_search(&[x.min(y), x.max(y)]).is_ok();

        let n = self.vertex_count();
        let mut occurrences: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (ci, cell) in self.topo.cells.iter().enumerate() {
            if let Some(ids) = cell {
                for (k, &v) in ids.iter().enumerate() {
                    occurrences[v].push((ci, k));
                }
            }
        }
        let mut new_positions = Vec::new();
        let mut corner_ids: Vec<[VertexId; 4]> = vec![[0; 4]; self.topo.cells.len()];
        for (v, occ) in occurrences.iter().enumerate() {
            let mut group: Vec<usize> = (0..occ.len()).collect();
            fn find(p: &mut [usize], mut x: usize) -> usize {
                while p[x] != x {
                    p[x] = p[p[x]];
                    x = p[x];
                }
                x
            }
            let mut by_neighbor: BTreeMap<VertexId, Vec<usize>> = BTreeMap::new();
            for (i, &(ci, k)) in occ.iter().enumerate() {
                let ids = self.topo.cells[ci].unwrap();
                for w in [ids[(k + 1) % 4], ids[(k + 3) % 4]] {
                    by_neighbor.entry(w).or_default().push(i);
                }
            }
            for (w, list) in &by_neighbor {
                if is_seam(v, *w) {
                    continue;
                }
                for pair in list.windows(2) {
                    let (a, b) = (find(&mut group, pair[0]), find(&mut group, pair[1]));
                    if a != b {
                        group[a.max(b)] = a.min(b);
                    }
                }
            }
            let mut ids_of_group: BTreeMap<usize, VertexId> = BTreeMap::new();
            for (i, &(ci, k)) in occ.iter().enumerate() {
                let root = find(&mut group, i);
                let id = *ids_of_group.entry(root).or_insert_with(|| {
                    new_positions.push(self.positions[v]);
                    new_positions.len() - 1
                });
                corner_ids[ci][k] = id;
            }
        }
        let cells = self.topo.cells.iter().zip(&corner_ids).map(|(cell, ids)| cell.map(|_| *ids)).collect();
        QuadNet::canonical(self.rows(), self.cols(), cells, new_positions)
    }

    fn cell_coords(&self, ci: usize) -> (usize, usize) {
        (ci / (self.cols() - 1), ci % (self.cols() - 1))
    }

    /// Vertex-id pairs of the grid edge `a`-`b` as seen from each alive adjacent cell.
    fn cells_along(&self, a: (usize, usize), b: (usize, usize)) -> Result<Vec<[VertexId; 2]>> {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let (rows, cols) = (self.rows(), self.cols());
        if b.0 >= rows || b.1 >= cols {
            return Err(Error::invalid(format!("seam edge {a:?}-{b:?} is outside the grid")));
        }
        let mut out = Vec::new();
        if a.0 == b.0 && a.1 + 1 == b.1 {
            let (r, c) = a;
            if r > 0 {
                if let Some(ids) = self.cell(r - 1, c) {
                    out.push([ids[3], ids[2]]);
                }
            }
            if let Some(ids) = self.cell(r, c) {
                out.push([ids[0], ids[1]]);
            }
        } else if a.1 == b.1 && a.0 + 1 == b.0 {
            let (r, c) = a;
            if c > 0 {
                if let Some(ids) = self.cell(r, c - 1) {
                    out.push([ids[1], ids[2]]);
                }
            }
            if let Some(ids) = self.cell(r, c) {
                out.push([ids[0], ids[3]]);
            }
        } else {
            return Err(Error::invalid(format!("seam edge {a:?}-{b:?} does not join adjacent nodes")));
        }
        Ok(out)
    }
}

fn corner_node(cols: usize, ci: usize, k: usize) -> (usize, usize) {
    let (r, c) = (ci / (cols - 1), ci % (cols - 1));
    match k {
        0 => (r, c),
        1 => (r, c + 1),
        2 => (r + 1, c + 1),
        _ => (r + 1, c),
    }
}

impl Topology {
    fn build(rows: usize, cols: usize, cells: Vec<Option<[VertexId; 4]>>, vertex_count: usize) -> Result<Topology> {
        if rows < 2 || cols < 2 || cells.len() != (rows - 1) * (cols - 1) {
            return Err(Error::invalid("cell array does not match grid size"));
        }
        let mut occurrences: Vec<Vec<(usize, usize)>> = vec![Vec::new(); vertex_count];
        let mut edge_count: BTreeMap<[VertexId; 2], usize> = BTreeMap::new();
        let mut node_vertices: Vec<Vec<VertexId>> = vec![Vec::new(); rows * cols];
        let mut home = vec![(usize::MAX, usize::MAX); vertex_count];
        for (ci, cell) in cells.iter().enumerate() {
            let Some(ids) = cell else { continue };
            for (k, &v) in ids.iter().enumerate() {
                if v >= vertex_count {
                    return Err(Error::invalid(format!("cell {ci} references missing vertex {v}")));
                }
                if ids[..k].contains(&v) {
                    return Err(Error::topology(format!("quad {ci} repeats vertex {v}")));
                }
                occurrences[v].push((ci, k));
                let (r, c) = corner_node(cols, ci, k);
                node_vertices[r * cols + c].push(v);
                home[v] = home[v].min((r, c));
                let w = ids[(k + 1) % 4];
                *edge_count.entry([v.min(w), v.max(w)]).or_default() += 1;
            }
        }
        for list in &mut node_vertices {
            list.sort_unstable();
            list.dedup();
        }
        if let Some(v) = occurrences.iter().position(Vec::is_empty) {
            return Err(Error::topology(format!("vertex {v} is isolated")));
        }
        if let Some((e, n)) = edge_count.iter().find(|(_, &n)| n > 2) {
            return Err(Error::topology(format!("edge ({}, {}) is shared by {n} quads", e[0], e[1])));
        }
        let fans = occurrences
            .iter()
            .enumerate()
            .map(|(v, occ)| build_fan(v, occ, &cells))
            .collect::<Result<Vec<_>>>()?;
        let edges: Vec<[VertexId; 2]> = edge_count.keys().copied().collect();
        let boundary_edges = edge_count.iter().filter(|(_, &n)| n == 1).map(|(e, _)| *e).collect();
        Ok(Topology { rows, cols, cells, vertex_count, fans, edges, boundary_edges, node_vertices, home })
    }
}

/// Orders the neighbors of `v` by walking across shared edges of its quads.
fn build_fan(v: VertexId, occ: &[(usize, usize)], cells: &[Option<[VertexId; 4]>]) -> Result<Fan> {
    // (next, prev, corner, cell) for every quad corner at v
    let pairs: Vec<(VertexId, VertexId, usize, usize)> = occ
        .iter()
        .map(|&(ci, k)| {
            let ids = cells[ci].unwrap();
            (ids[(k + 1) % 4], ids[(k + 3) % 4], k, ci)
        })
        .collect();
    let mut degree: BTreeMap<VertexId, usize> = BTreeMap::new();
    for &(a, b, _, _) in &pairs {
        *degree.entry(a).or_default() += 1;
        *degree.entry(b).or_default() += 1;
    }
    let ends: Vec<VertexId> = degree.iter().filter(|(_, &d)| d == 1).map(|(&w, _)| w).collect();
    let non_manifold = || Error::topology(format!("vertex {v} is not a manifold vertex"));

    let start = if ends.is_empty() {
        let i = (0..pairs.len()).min_by_key(|&i| (pairs[i].2, pairs[i].3)).unwrap();
        (i, pairs[i].0, pairs[i].1)
    } else if ends.len() == 2 {
        let by_next = (0..pairs.len()).filter(|&i| ends.contains(&pairs[i].0)).min_by_key(|&i| (pairs[i].2, pairs[i].3));
        match by_next {
            Some(i) => (i, pairs[i].0, pairs[i].1),
            None => {
                let i = (0..pairs.len())
                    .filter(|&i| ends.contains(&pairs[i].1))
                    .min_by_key(|&i| (pairs[i].2, pairs[i].3))
                    .ok_or_else(non_manifold)?;
                (i, pairs[i].1, pairs[i].0)
            }
        }
    } else {
        return Err(non_manifold());
    };

    let mut used = vec![false; pairs.len()];
    used[start.0] = true;
    let mut seq = vec![start.1, start.2];
    let mut cur = start.2;
    let closed = ends.is_empty();
    loop {
        let Some(i) = (0..pairs.len()).find(|&i| !used[i] && (pairs[i].0 == cur || pairs[i].1 == cur)) else {
            break;
        };
        used[i] = true;
        let other = if pairs[i].0 == cur { pairs[i].1 } else { pairs[i].0 };
        if closed && other == seq[0] {
            break;
        }
        seq.push(other);
        cur = other;
    }
    if used.iter().any(|u| !u) {
        return Err(non_manifold());
    }
    let kind = if closed {
        if seq.len() != 4 {
            return Err(Error::topology(format!("inner vertex {v} has valence {}, expected 4", seq.len())));
        }
        StarKind::Inner
    } else {
        match seq.len() {
            2 => StarKind::Corner,
            3 => StarKind::BoundaryChain,
            _ => StarKind::Fan,
        }
    };
    Ok(Fan { neighbors: seq, kind })
}
