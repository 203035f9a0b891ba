//! Runs the pipeline into an output directory, one subdirectory per level,
//! and resumes interrupted runs.
//!
//! Layout of the output directory:
//!
//! ```text
//! config.json        resolved configuration
//! report.json        configuration and per-level results (no timings)
//! timings.json       wall-clock seconds per level
//! levels.csv         one row per level
//! maps.csv           transport maps (--emit-maps)
//! slice.csv          2D slice of the finest maps (--emit-maps, 2D only)
//! trace.csv          per-sweep PBCD records (--emit-traces)
//! level_<l>/         mesh.json, plan.bin, timing.json, trace.csv, report.json
//! ```
//!
//! `level_<l>/report.json` is written last and marks the level as complete.

use std::fs;
use std::path::{Path, PathBuf};

use ggr_core::diagnostics::transport_maps;
use ggr_core::ggr::{Ggr, LevelResult};
use ggr_core::pbcd::{Clock, SweepRecord};
use ggr_core::{Mesh, PlanSet};
use serde_json::{json, Value};

use crate::config::{ConfigIssue, RunConfig};
use crate::formats::{self, FormatError, LevelReport, LevelTiming};
use crate::parallel::{RayonMultistart, WallClock};

/// Command-line switches that are not part of the configuration.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Output directory.
    pub out: PathBuf,
    /// Multistart workers; 0 lets rayon decide.
    pub threads: usize,
    /// Continue a run found in `out`.
    pub resume: bool,
    /// Write `maps.csv` (and `slice.csv` in 2D).
    pub emit_maps: bool,
    /// Write per-sweep traces.
    pub emit_traces: bool,
}

/// Why a run stopped.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// The configuration is invalid.
    #[error("invalid configuration: {}", list(.0))]
    Config(Vec<ConfigIssue>),
    /// Reading or writing files failed.
    #[error(transparent)]
    Format(#[from] FormatError),
    /// A pipeline stage failed.
    #[error("level {level}: {source}")]
    Solve {
        /// Level that failed.
        level: usize,
        /// Cause.
        source: ggr_core::Error,
    },
    /// The thread pool could not be built.
    #[error("thread pool: {0}")]
    Pool(String),
}

fn list(issues: &[ConfigIssue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

impl RunError {
    /// 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 1,
        }
    }

    /// Machine-readable description.
    pub fn to_json(&self) -> Value {
        match self {
            RunError::Config(issues) => json!({
                "error": "config",
                "issues": issues.iter().map(|i| json!({"key": i.key, "message": i.message})).collect::<Vec<_>>(),
            }),
            RunError::Solve { level, source } => json!({
                "error": "solve",
                "level": level,
                "message": source.to_string(),
            }),
            other => json!({"error": "io", "message": other.to_string()}),
        }
    }

    fn config(key: &str, message: impl Into<String>) -> Self {
        RunError::Config(vec![ConfigIssue {
            key: key.to_string(),
            message: message.into(),
        }])
    }
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    /// Per-level results, coarse first.
    pub levels: Vec<LevelReport>,
    /// Number of levels found complete on disk before this invocation.
    pub reused_levels: usize,
}

/// `out/level_<l>`.
pub fn level_dir(out: &Path, level: usize) -> PathBuf {
    out.join(format!("level_{level}"))
}

fn is_complete(dir: &Path) -> bool {
    ["report.json", "mesh.json", "plan.bin"].iter().all(|f| dir.join(f).is_file())
}

/// Number of consecutive complete levels starting at 0.
pub fn completed_levels(out: &Path) -> usize {
    (0..).take_while(|&l| is_complete(&level_dir(out, l))).count()
}

fn mkdir(path: &Path) -> Result<(), RunError> {
    fs::create_dir_all(path).map_err(|source| {
        FormatError::Io {
            path: path.display().to_string(),
            source,
        }
        .into()
    })
}

fn save_level(out: &Path, l: &LevelResult, trace: Option<&[SweepRecord]>) -> Result<LevelReport, RunError> {
    let dir = level_dir(out, l.level);
    mkdir(&dir)?;
    formats::write_mesh(&dir.join("mesh.json"), &l.mesh)?;
    formats::write_plan(&dir.join("plan.bin"), &l.plan)?;
    let timing = LevelTiming {
        level: l.level,
        k: l.k(),
        time: l.time,
        pbcd_time: l.report.wall_time,
    };
    formats::write_atomic(&dir.join("timing.json"), &formats::to_json_bytes(&timing))?;
    if let Some(records) = trace {
        formats::write_trace(&dir.join("trace.csv"), l.level, l.k(), records)?;
    }
    let report = LevelReport::from(l);
    formats::write_atomic(&dir.join("report.json"), &formats::to_json_bytes(&report))?;
    Ok(report)
}

fn load_level(out: &Path, level: usize) -> Result<(Mesh, PlanSet), RunError> {
    let dir = level_dir(out, level);
    let mesh = formats::read_mesh(&dir.join("mesh.json"))?;
    let plan = formats::read_plan(&dir.join("plan.bin"))?;
    if plan.k() != mesh.len() {
        return Err(FormatError::Invalid {
            path: dir.display().to_string(),
            reason: format!("plan has K={} but the mesh has {} elements", plan.k(), mesh.len()),
        }
        .into());
    }
    Ok((mesh, plan))
}

/// Reads the configuration stored by an earlier run in `out`.
pub fn stored_config(out: &Path) -> Result<RunConfig, RunError> {
    let path = out.join("config.json");
    if !path.is_file() {
        return Err(RunError::config("resume", format!("{} not found", path.display())));
    }
    let v: Value = formats::read_json(&path)?;
    RunConfig::from_value(&v).map_err(RunError::Config)
}

fn has_entries(dir: &Path) -> bool {
    fs::read_dir(dir).map(|mut d| d.next().is_some()).unwrap_or(false)
}

fn densest_cell(mesh: &Mesh) -> ([f64; 2], f64) {
    let e = mesh
        .elements()
        .iter()
        .max_by(|a, b| a.density().total_cmp(&b.density()).then(b.id.cmp(&a.id)))
        .expect("meshes are nonempty");
    (e.barycenter(), 3.0 * e.volume().sqrt())
}

/// Runs (or resumes) the pipeline described by `cfg` into `opts.out`.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunSummary, RunError> {
    let out = &opts.out;
    let canonical = cfg.canonical_json();
    if opts.resume {
        let stored = stored_config(out)?;
        let mut a = stored.canonical_json();
        let mut b = canonical.clone();
        a.as_object_mut().expect("object").remove("levels");
        b.as_object_mut().expect("object").remove("levels");
        if a != b {
            return Err(RunError::config("resume", "configuration differs from the one stored in the run directory"));
        }
    } else if has_entries(out) {
        return Err(RunError::config(
            "out",
            format!("{} is not empty; pass --resume to continue a run", out.display()),
        ));
    }
    mkdir(out)?;
    formats::write_atomic(&out.join("config.json"), &formats::to_json_bytes(&canonical))?;

    let result = execute(cfg, opts);
    if let Err(e) = &result {
        let _ = formats::write_atomic(&out.join("error.json"), &formats::to_json_bytes(&e.to_json()));
    } else {
        let _ = fs::remove_file(out.join("error.json"));
    }
    result
}

fn execute(cfg: &RunConfig, opts: &RunOptions) -> Result<RunSummary, RunError> {
    let out = &opts.out;
    let gcfg = cfg.to_ggr().map_err(|source| RunError::Solve { level: 0, source })?;
    let g = Ggr::new(&gcfg).map_err(|source| RunError::Solve { level: 0, source })?;
    let clock = WallClock::start();
    let reused = completed_levels(out).min(cfg.levels + 1);
    let mut prev = if reused > 0 { Some(load_level(out, reused - 1)?) } else { None };

    for level in reused..=cfg.levels {
        let mut records: Vec<SweepRecord> = Vec::new();
        let solved = match &prev {
            None => {
                let stage = RayonMultistart::new(opts.threads).map_err(|e| RunError::Pool(e.to_string()))?;
                g.initial_level(&stage, &clock).inspect(|l| records = l.report.records.clone())
            }
            Some((mesh, plan)) => g.refined_level_with(level, mesh, plan, &clock, &mut |r| {
                if opts.emit_traces {
                    records.push(*r);
                }
            }),
        };
        let l = solved.map_err(|source| RunError::Solve { level, source })?;
        save_level(out, &l, opts.emit_traces.then_some(&records[..]))?;
        prev = Some((l.mesh, l.plan));
    }

    let mut reports = Vec::with_capacity(cfg.levels + 1);
    let mut timings = Vec::with_capacity(cfg.levels + 1);
    for level in 0..=cfg.levels {
        let dir = level_dir(out, level);
        reports.push(formats::read_json::<LevelReport>(&dir.join("report.json"))?);
        timings.push(formats::read_json::<LevelTiming>(&dir.join("timing.json"))?);
    }
    let report = json!({"config": cfg.canonical_json(), "levels": reports});
    formats::write_atomic(&out.join("report.json"), &formats::to_json_bytes(&report))?;
    let total = clock.seconds();
    let timing = json!({"levels": timings, "this_invocation": total, "reused_levels": reused});
    formats::write_atomic(&out.join("timings.json"), &formats::to_json_bytes(&timing))?;
    formats::write_levels(&out.join("levels.csv"), &reports)?;

    if opts.emit_maps {
        let mut tables = Vec::with_capacity(cfg.levels + 1);
        for level in 0..=cfg.levels {
            let (mesh, plan) = load_level(out, level)?;
            tables.push((level, transport_maps(&plan, &mesh), mesh));
        }
        let (level, finest, mesh) = tables.last().expect("at least level 0");
        if finest.dim == 2 {
            let (center, radius) = cfg.slice.map_or_else(|| densest_cell(mesh), |s| (s.center, s.radius));
            formats::write_slice(&out.join("slice.csv"), *level, finest, center, radius)?;
        }
        let tables: Vec<_> = tables.into_iter().map(|(l, t, _)| (l, t)).collect();
        formats::write_maps(&out.join("maps.csv"), &tables)?;
    }
    if opts.emit_traces {
        let parts: Vec<PathBuf> = (0..=cfg.levels)
            .map(|l| level_dir(out, l).join("trace.csv"))
            .filter(|p| p.is_file())
            .collect();
        formats::concat_csv(&out.join("trace.csv"), &parts)?;
    }
    Ok(RunSummary {
        levels: reports,
        reused_levels: reused,
    })
}
