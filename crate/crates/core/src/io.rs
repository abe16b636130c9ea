//! Net files (versioned JSON) and OBJ export.
//!
//! A net file stores the grid size, the alive cells as alternating run
//! lengths, positions in vertex id order, and only those cell corners whose
//! vertex id differs from the id an uncut, unglued grid with the same alive
//! cells would assign. Together these rebuild the topology exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constraints::{Mode, References};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::net::{QuadNet, VertexId};

pub const FORMAT_VERSION: &str = "1.0";
const SUPPORTED_MAJOR: u32 = 1;

/// Alive cells in row-major order as alternating runs, starting with `first`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunLength {
    pub first: bool,
    pub runs: Vec<usize>,
}

impl RunLength {
    pub fn encode(mask: &[bool]) -> RunLength {
        let first = mask.first().copied().unwrap_or(true);
        let mut runs = Vec::new();
        let mut current = first;
        let mut count = 0;
        for &b in mask {
            if b == current {
                count += 1;
            } else {
                runs.push(count);
                current = b;
                count = 1;
            }
        }
        if count > 0 {
            runs.push(count);
        }
        RunLength { first, runs }
    }

    pub fn decode(&self) -> Vec<bool> {
        let mut out = Vec::new();
        let mut value = self.first;
        for &n in &self.runs {
            out.extend(std::iter::repeat_n(value, n));
            value = !value;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandleEntry {
    pub id: VertexId,
    pub target: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetFile {
    pub format_version: String,
    pub rows: usize,
    pub cols: usize,
    pub alive_mask: RunLength,
    /// `x, y, z` per vertex in id order.
    pub positions: Vec<f64>,
    /// `[cell_row, cell_col, corner, id]` for corners that differ from plain grid numbering.
    #[serde(default)]
    pub grid_to_vertex: Vec<[usize; 4]>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub references: Option<References>,
    #[serde(default)]
    pub handles: Vec<HandleEntry>,
}

/// Cell corners of the net an alive mask alone describes.
fn plain_cells(rows: usize, cols: usize, alive: &[bool]) -> Result<Vec<Option<[VertexId; 4]>>> {
    Ok(QuadNet::from_mask(rows, cols, alive, |_, _| Vec3::zeros())?.cells().to_vec())
}

impl NetFile {
    pub fn from_net(net: &QuadNet) -> NetFile {
        let (rows, cols) = (net.rows(), net.cols());
        let alive = net.alive_mask();
        let plain = plain_cells(rows, cols, &alive).expect("alive mask of a valid net");
        let mut grid_to_vertex = Vec::new();
        for (ci, (cell, base)) in net.cells().iter().zip(&plain).enumerate() {
            if let (Some(ids), Some(base)) = (cell, base) {
                for k in 0..4 {
                    if ids[k] != base[k] {
                        grid_to_vertex.push([ci / (cols - 1), ci % (cols - 1), k, ids[k]]);
                    }
                }
            }
        }
        NetFile {
            format_version: FORMAT_VERSION.to_string(),
            rows,
            cols,
            alive_mask: RunLength::encode(&alive),
            positions: net.positions().iter().flat_map(|p| [p.x, p.y, p.z]).collect(),
            grid_to_vertex,
            mode: Mode::Plain,
            references: None,
            handles: Vec::new(),
        }
    }

    pub fn with_mode(mut self, mode: Mode, references: Option<References>) -> NetFile {
        self.mode = mode;
        self.references = references;
        self
    }

    pub fn with_handles(mut self, handles: &BTreeMap<VertexId, Vec3>) -> NetFile {
        self.handles = handles.iter().map(|(&id, p)| HandleEntry { id, target: [p.x, p.y, p.z] }).collect();
        self
    }

    pub fn to_net(&self) -> Result<QuadNet> {
        check_version(&self.format_version)?;
        let field = |name: &str, message: String| Error::Parse { location: format!("field '{name}'"), message };
        if self.rows < 2 || self.cols < 2 {
            return Err(field("rows", format!("grid {}×{} is smaller than 2×2", self.rows, self.cols)));
        }
        let alive = self.alive_mask.decode();
        let ncells = (self.rows - 1) * (self.cols - 1);
        if alive.len() != ncells {
            return Err(field("alive_mask", format!("runs cover {} cells, expected {ncells}", alive.len())));
        }
        if self.positions.len() % 3 != 0 {
            return Err(field("positions", "length is not a multiple of 3".into()));
        }
        let positions: Vec<Vec3> = self.positions.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        let mut cells = plain_cells(self.rows, self.cols, &alive)?;
        for (i, &[r, c, k, id]) in self.grid_to_vertex.iter().enumerate() {
            let ci = r * (self.cols - 1) + c;
            let slot = (r < self.rows - 1 && c < self.cols - 1 && k < 4)
                .then(|| cells[ci].as_mut())
                .flatten()
                .ok_or_else(|| field("grid_to_vertex", format!("entry {i} names a missing cell corner")))?;
            slot[k] = id;
        }
        QuadNet::from_cells(self.rows, self.cols, cells, positions)
            .map_err(|e| field("grid_to_vertex", e.to_string()))
    }

    pub fn handle_map(&self) -> BTreeMap<VertexId, Vec3> {
        self.handles.iter().map(|h| (h.id, Vec3::new(h.target[0], h.target[1], h.target[2]))).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("net files always serialize")
    }

    pub fn from_json(text: &str) -> Result<NetFile> {
        // read the version first so newer files fail with the right error
        #[derive(Deserialize)]
        struct Probe {
            format_version: Option<String>,
        }
        if let Ok(Probe { format_version: Some(v) }) = serde_json::from_str::<Probe>(text) {
            check_version(&v)?;
        }
        serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<NetFile> {
        NetFile::from_json(&std::fs::read_to_string(path)?)
    }
}

fn check_version(version: &str) -> Result<()> {
    let major = version.split('.').next().and_then(|m| m.parse::<u32>().ok());
    match major {
        Some(SUPPORTED_MAJOR) => Ok(()),
        _ => Err(Error::UnsupportedVersion(version.to_string())),
    }
}

pub fn save_net(net: &QuadNet, path: impl AsRef<Path>) -> Result<()> {
    NetFile::from_net(net).save(path)
}

pub fn load_net(path: impl AsRef<Path>) -> Result<QuadNet> {
    NetFile::load(path)?.to_net()
}

/// Wavefront OBJ text: one `v` per vertex in id order, then one quad per
/// alive cell, or two triangles split along the `v00–v11` diagonal.
pub fn export_obj(net: &QuadNet, triangulate: bool) -> String {
    let mut out = String::new();
    for p in net.positions() {
        writeln!(out, "v {} {} {}", p.x, p.y, p.z).expect("writing to a string");
    }
    // corners counterclockwise from (row, col): a flat grid faces +z
    for quad in net.quads() {
        let [a, b, c, d] = quad.map(|v| v + 1);
        if triangulate {
            writeln!(out, "f {a} {b} {c}\nf {a} {c} {d}").expect("writing to a string");
        } else {
            writeln!(out, "f {a} {b} {c} {d}").expect("writing to a string");
        }
    }
    out
}
