//! On-disk formats: meshes as JSON, plans as little-endian binary, per-level
//! reports, and CSV tables for plotting.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use ggr_core::diagnostics::{slice, KktCertificate, MapTable};
use ggr_core::ggr::LevelResult;
use ggr_core::mesh::{Cell, Element, Mesh};
use ggr_core::pbcd::SweepRecord;
use ggr_core::{CostRule, Mat, PlanSet};
use serde::{Deserialize, Serialize};

/// First bytes of a plan file.
pub const PLAN_MAGIC: &[u8; 8] = b"GGRPLAN1";

/// Errors of the readers and writers.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    /// Filesystem failure.
    #[error("{path}: {source}")]
    Io {
        /// File involved.
        path: String,
        /// Cause.
        source: io::Error,
    },
    /// Malformed JSON.
    #[error("{path}: {source}")]
    Json {
        /// File involved.
        path: String,
        /// Cause.
        source: serde_json::Error,
    },
    /// CSV writer failure.
    #[error("{path}: {source}")]
    Csv {
        /// File involved.
        path: String,
        /// Cause.
        source: csv::Error,
    },
    /// Content that parses but makes no sense.
    #[error("{path}: {reason}")]
    Invalid {
        /// File involved.
        path: String,
        /// What is wrong.
        reason: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn invalid(path: &Path, reason: impl Into<String>) -> FormatError {
    FormatError::Invalid {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Writes through a temporary file and renames, so readers never see half a file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Pretty JSON with a trailing newline.
pub fn to_json_bytes<T: Serialize + ?Sized>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("plain data serializes");
    s.push(b'\n');
    s
}

/// Reads and parses a JSON file.
pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, FormatError> {
    let text = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&text).map_err(|source| FormatError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// One mesh element as stored in `mesh.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementRecord {
    /// Position in the mesh.
    pub id: usize,
    /// `[lo, hi]` or `[x0, x1, y0, y1]`.
    pub bounds: Vec<f64>,
    /// Length or area.
    pub volume: f64,
    /// Cell center.
    pub barycenter: Vec<f64>,
    /// Parent on the previous level.
    pub parent: Option<usize>,
    /// Mass of the density on the cell.
    pub mass: f64,
    /// Refinement depth.
    pub depth: u32,
}

/// Mesh as a list of element records.
pub fn mesh_records(mesh: &Mesh) -> Vec<ElementRecord> {
    mesh.elements()
        .iter()
        .map(|e| {
            let c = e.barycenter();
            ElementRecord {
                id: e.id,
                bounds: e.cell.bounds(),
                volume: e.volume(),
                barycenter: c[..mesh.dim()].to_vec(),
                parent: e.parent,
                mass: e.mass,
                depth: e.depth,
            }
        })
        .collect()
}

/// Writes `mesh.json`.
pub fn write_mesh(path: &Path, mesh: &Mesh) -> Result<(), FormatError> {
    write_atomic(path, &to_json_bytes(&mesh_records(mesh)))
}

/// Reads `mesh.json`; the result equals the mesh that was written.
pub fn read_mesh(path: &Path) -> Result<Mesh, FormatError> {
    let records: Vec<ElementRecord> = read_json(path)?;
    let elements = records
        .into_iter()
        .map(|r| {
            let cell = Cell::from_bounds(&r.bounds).ok_or_else(|| invalid(path, format!("element {}: bad bounds", r.id)))?;
            Ok(Element {
                id: r.id,
                cell,
                mass: r.mass,
                parent: r.parent,
                depth: r.depth,
            })
        })
        .collect::<Result<Vec<_>, FormatError>>()?;
    Mesh::from_elements(elements).map_err(|e| invalid(path, e.to_string()))
}

/// Plan bytes: magic, `u64` K, `u64` block count, then every block row-major
/// as `f64`, all little-endian.
pub fn encode_plan(z: &PlanSet) -> Vec<u8> {
    let k = z.k();
    let mut out = Vec::with_capacity(24 + 8 * k * k * z.len());
    out.extend_from_slice(PLAN_MAGIC);
    out.extend_from_slice(&(k as u64).to_le_bytes());
    out.extend_from_slice(&(z.len() as u64).to_le_bytes());
    for b in z.blocks() {
        for v in b.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Inverse of [`encode_plan`].
pub fn decode_plan(bytes: &[u8]) -> Result<PlanSet, String> {
    if bytes.len() < 24 || &bytes[..8] != PLAN_MAGIC {
        return Err("not a plan file".into());
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let (k, n) = (word(8) as usize, word(16) as usize);
    let expect = k
        .checked_mul(k)
        .and_then(|kk| kk.checked_mul(n))
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(24))
        .ok_or("size overflow")?;
    if bytes.len() != expect {
        return Err(format!("expected {expect} bytes for K={k} and {n} blocks, found {}", bytes.len()));
    }
    let mut pos = 24;
    let mut blocks = Vec::with_capacity(n);
    for _ in 0..n {
        let data: Vec<f64> = (0..k * k)
            .map(|t| f64::from_le_bytes(bytes[pos + 8 * t..pos + 8 * t + 8].try_into().expect("8 bytes")))
            .collect();
        pos += 8 * k * k;
        blocks.push(Mat::from_vec(k, k, data));
    }
    PlanSet::new(blocks).map_err(|e| e.to_string())
}

/// Writes `plan.bin`.
pub fn write_plan(path: &Path, z: &PlanSet) -> Result<(), FormatError> {
    write_atomic(path, &encode_plan(z))
}

/// Reads `plan.bin`.
pub fn read_plan(path: &Path) -> Result<PlanSet, FormatError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    decode_plan(&bytes).map_err(|r| invalid(path, r))
}

/// Optimality residuals as stored in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktRecord {
    /// Stationarity residual.
    pub stationarity: f64,
    /// Complementarity residual.
    pub complementarity: f64,
    /// Feasibility residual.
    pub feasibility: f64,
    /// Maximum of the three.
    pub overall: f64,
}

impl From<&KktCertificate> for KktRecord {
    fn from(c: &KktCertificate) -> Self {
        Self {
            stationarity: c.stationarity,
            complementarity: c.complementarity,
            feasibility: c.feasibility,
            overall: c.overall,
        }
    }
}

/// One multistart run on the coarse level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    /// Start index.
    pub index: usize,
    /// `f`.
    #[serde(rename = "E")]
    pub energy: f64,
    /// `f_beta`.
    pub penalized: f64,
    /// Complementarity violation.
    pub comp: f64,
    /// PBCD sweeps.
    pub sweeps: usize,
    /// Stopping reason.
    pub termination: String,
}

/// Deterministic summary of one level; no timings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    /// Level index.
    pub level: usize,
    /// Mesh size.
    #[serde(rename = "K")]
    pub k: usize,
    /// Energy `f`.
    #[serde(rename = "E")]
    pub energy: f64,
    /// `f_beta`.
    pub penalized: f64,
    /// Complementarity violation.
    pub comp: f64,
    /// Error of the GR starting point.
    pub err_s: Option<f64>,
    /// Error of the converged plan.
    pub err_e: Option<f64>,
    /// Exact map matched to each block.
    pub assignment: Option<Vec<usize>>,
    /// Feasibility residual.
    pub feas: f64,
    /// Optimality certificate.
    pub kkt: KktRecord,
    /// Last value of the PBCD KKT violation functional.
    pub kkt_violation: Option<f64>,
    /// Penalty parameter.
    pub beta: f64,
    /// Proximal parameter.
    pub sigma: f64,
    /// Iterate-gap tolerance.
    pub eps_outer: f64,
    /// Projection tolerance.
    pub eps_inner: f64,
    /// Cost rule used.
    pub cost_rule: String,
    /// PBCD sweeps for the returned plan.
    pub sweeps: usize,
    /// Stopping reason.
    pub termination: String,
    /// Winning start on the coarse level.
    pub best_start: Option<usize>,
    /// Every start on the coarse level.
    pub starts: Option<Vec<StartRecord>>,
}

/// Canonical name of a cost rule.
pub fn cost_rule_name(c: CostRule) -> &'static str {
    match c {
        CostRule::CellAverage => "cell_average",
        CostRule::Barycentric => "barycentric",
    }
}

impl From<&LevelResult> for LevelReport {
    fn from(l: &LevelResult) -> Self {
        let starts = l.starts.as_ref().map(|s| {
            s.iter()
                .map(|s| StartRecord {
                    index: s.index,
                    energy: s.energy,
                    penalized: s.penalized,
                    comp: s.comp_violation,
                    sweeps: s.report.sweeps(),
                    termination: s.report.termination.as_str().to_string(),
                })
                .collect::<Vec<_>>()
        });
        let best_start = starts.as_ref().and_then(|s| {
            s.iter()
                .min_by(|a, b| {
                    a.penalized
                        .total_cmp(&b.penalized)
                        .then(a.comp.total_cmp(&b.comp))
                        .then(a.index.cmp(&b.index))
                })
                .map(|s| s.index)
        });
        Self {
            level: l.level,
            k: l.k(),
            energy: l.energy,
            penalized: l.penalized,
            comp: l.comp_violation,
            err_s: l.err_s,
            err_e: l.err_e,
            assignment: l.assignment.clone(),
            feas: l.feasibility,
            kkt: (&l.kkt).into(),
            kkt_violation: l.report.last().map(|r| r.kkt_violation),
            beta: l.beta,
            sigma: l.pbcd.sigma,
            eps_outer: l.pbcd.eps_outer,
            eps_inner: l.pbcd.projection.tol,
            cost_rule: cost_rule_name(l.cost_rule).to_string(),
            sweeps: l.report.sweeps(),
            termination: l.report.termination.as_str().to_string(),
            best_start,
            starts,
        }
    }
}

/// Wall-clock seconds of one level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelTiming {
    /// Level index.
    pub level: usize,
    /// Mesh size.
    #[serde(rename = "K")]
    pub k: usize,
    /// Seconds for the level.
    pub time: f64,
    /// Seconds inside PBCD for the returned plan.
    pub pbcd_time: f64,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, FormatError> {
    csv::Writer::from_path(path).map_err(|source| FormatError::Csv {
        path: path.display().to_string(),
        source,
    })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> FormatError + '_ {
    move |source| FormatError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Header of [`write_trace`] files.
pub const TRACE_HEADER: [&str; 13] = [
    "level",
    "sweep",
    "E",
    "penalized",
    "comp",
    "feas",
    "kkt_violation",
    "gap",
    "newton_iters",
    "cg_iters",
    "max_projection_residual",
    "elapsed",
    "K",
];

/// Per-sweep records of one level.
pub fn write_trace(path: &Path, level: usize, k: usize, records: &[SweepRecord]) -> Result<(), FormatError> {
    let mut w = csv_writer(path)?;
    w.write_record(TRACE_HEADER).map_err(csv_err(path))?;
    for r in records {
        w.write_record([
            level.to_string(),
            r.sweep.to_string(),
            r.energy.to_string(),
            r.penalized.to_string(),
            r.comp_violation.to_string(),
            r.feasibility.to_string(),
            r.kkt_violation.to_string(),
            r.gap.to_string(),
            r.newton_iters.to_string(),
            r.cg_iters.to_string(),
            r.max_projection_residual.to_string(),
            r.elapsed.to_string(),
            k.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Concatenates trace files that share [`TRACE_HEADER`].
pub fn concat_csv(path: &Path, parts: &[std::path::PathBuf]) -> Result<(), FormatError> {
    let mut out = Vec::new();
    for (i, p) in parts.iter().enumerate() {
        let text = fs::read_to_string(p).map_err(io_err(p))?;
        let body = if i == 0 { &text[..] } else { text.split_once('\n').map_or("", |x| x.1) };
        out.extend_from_slice(body.as_bytes());
    }
    write_atomic(path, &out)
}

fn coords(p: [f64; 2], dim: usize) -> Vec<String> {
    p[..dim].iter().map(|v| v.to_string()).collect()
}

fn maybe_coords(p: Option<[f64; 2]>, dim: usize) -> Vec<String> {
    match p {
        Some(p) => coords(p, dim),
        None => vec![String::new(); dim],
    }
}

fn map_header(dim: usize) -> Vec<&'static str> {
    if dim == 1 {
        vec!["level", "block", "row", "x", "tx"]
    } else {
        vec!["level", "block", "row", "x", "y", "tx", "ty"]
    }
}

/// Transport maps of several levels. Blocks are numbered `2..=N` as the
/// maps `T_2, ..., T_N`; undefined images are empty fields.
pub fn write_maps(path: &Path, tables: &[(usize, MapTable)]) -> Result<(), FormatError> {
    let mut w = csv_writer(path)?;
    let dim = tables.first().map_or(1, |t| t.1.dim);
    w.write_record(map_header(dim)).map_err(csv_err(path))?;
    for (level, t) in tables {
        for (b, imgs) in t.images.iter().enumerate() {
            for (j, (p, img)) in t.points.iter().zip(imgs).enumerate() {
                let mut rec = vec![level.to_string(), (b + 2).to_string(), j.to_string()];
                rec.extend(coords(*p, t.dim));
                rec.extend(maybe_coords(*img, t.dim));
                w.write_record(&rec).map_err(csv_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

/// Slice of a 2D map: pre-image points in the disk and their images.
pub fn write_slice(path: &Path, level: usize, t: &MapTable, center: [f64; 2], radius: f64) -> Result<(), FormatError> {
    let mut w = csv_writer(path)?;
    w.write_record(["level", "role", "row", "x", "y"]).map_err(csv_err(path))?;
    let pts = slice(t, center, radius);
    for (j, p, _) in &pts {
        let mut rec = vec![level.to_string(), "preimage".to_string(), j.to_string()];
        rec.extend(coords(*p, 2));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    for b in 0..t.images.len() {
        for (j, _, imgs) in &pts {
            let mut rec = vec![level.to_string(), format!("T{}", b + 2), j.to_string()];
            rec.extend(maybe_coords(imgs[b], 2));
            w.write_record(&rec).map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Per-level summary table.
pub fn write_levels(path: &Path, levels: &[LevelReport]) -> Result<(), FormatError> {
    let mut w = csv_writer(path)?;
    w.write_record(["level", "K", "E", "err_s", "err_e", "feas", "kkt", "comp", "sweeps", "termination"])
        .map_err(csv_err(path))?;
    for l in levels {
        w.write_record([
            l.level.to_string(),
            l.k.to_string(),
            l.energy.to_string(),
            opt(l.err_s),
            opt(l.err_e),
            l.feas.to_string(),
            l.kkt.overall.to_string(),
            l.comp.to_string(),
            l.sweeps.to_string(),
            l.termination.clone(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_bytes_round_trip() {
        let a = Mat::from_fn(3, 3, |i, j| (i * 3 + j) as f64 * 0.1 + 1e-17);
        let z = PlanSet::new(vec![a.clone(), a]).unwrap();
        let bytes = encode_plan(&z);
        assert_eq!(&bytes[..8], PLAN_MAGIC);
        assert_eq!(bytes.len(), 24 + 2 * 9 * 8);
        assert_eq!(decode_plan(&bytes).unwrap(), z);
        assert!(decode_plan(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_plan(b"GGRPLAN0xxxxxxxxxxxxxxxx").is_err());
    }
}
