//! End-to-end runs: full solves, decoupled piece solves, reconstruction,
//! sweeps over split counts, and their on-disk artifacts.

mod config;
mod field_io;
mod sweep;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{AxisConfig, OutputConfig, ProblemConfig, SlabConfig, SplitLists, SystemConfig, DEFAULT_MEMORY_BUDGET};
pub use field_io::{decode_field, encode_field, read_field, write_field, FieldIoError, MAGIC, VERSION};
pub use sweep::{best_row, run_sweep, write_sweep_csv, SweepOutcome, SweepRow, SWEEP_HEADER};

use crate::decompose::{build_pieces, Block, DecomposeError, Section, SubProblem};
use crate::grid::{Grid, GridError};
use crate::hjsolver::{solve_terminal_hjpde, SolveError, ValueFunction};
use crate::reconstruct::{compare, PieceResult, ReconstructError, Reconstruction, ReconstructionReport};
use crate::shapes::ShapeError;
use crate::systems::ModelError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("full solve needs about {needed} bytes, over the budget of {budget} bytes")]
    MemoryBudget { needed: u64, budget: u64 },
    #[error("malformed pieces manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Field(#[from] FieldIoError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct FullSolve {
    pub value: ValueFunction,
    pub seconds: f64,
    pub memory_bytes: u64,
}

pub fn run_full_solve(cfg: &ProblemConfig) -> Result<FullSolve, PipelineError> {
    cfg.validate()?;
    let needed = cfg.full_solve_bytes();
    if needed > cfg.memory_budget_bytes {
        return Err(PipelineError::MemoryBudget {
            needed,
            budget: cfg.memory_budget_bytes,
        });
    }
    let started = Instant::now();
    let grid = cfg.full_grid()?;
    let model = cfg.full_model()?;
    let target = cfg.target_surface()?.sample_on_grid(&grid)?;
    let mut value = solve_terminal_hjpde(&grid, &model, &target, None, &cfg.solve_options())?;
    value.label = format!("full:{}", cfg.system.name);
    Ok(FullSolve {
        value,
        seconds: started.elapsed().as_secs_f64(),
        memory_bytes: needed,
    })
}

#[derive(Debug, Clone)]
pub struct DecoupledSolve {
    /// Split count per coupling.
    pub splits: Vec<usize>,
    pub pieces: Vec<PieceResult>,
    /// Wall time of all piece solves.
    pub seconds: f64,
}

impl DecoupledSolve {
    /// Sum of the individual subsystem solve times.
    pub fn solve_seconds_total(&self) -> f64 {
        self.pieces.iter().map(|p| p.x.solve_seconds + p.y.solve_seconds).sum()
    }
}

fn solve_sub(
    cfg: &ProblemConfig,
    base: &Grid,
    sub: &SubProblem,
    target: &crate::shapes::ImplicitSurface,
    label: String,
) -> Result<ValueFunction, PipelineError> {
    let grid = base.project(&sub.dims)?;
    let target = target.sample_on_grid(&grid)?;
    // unsplit subsystems keep their values unmasked
    let constraint = if sub.constraints.is_empty() {
        None
    } else {
        Some(sub.constraint_surface.sample_on_grid(&grid)?)
    };
    let mut vf = solve_terminal_hjpde(&grid, &sub.model, &target, constraint.as_ref(), &cfg.solve_options())?;
    vf.label = label;
    Ok(vf)
}

/// Solves every piece of the `(mv, mpsi)` split.
pub fn run_decoupled_solve(cfg: &ProblemConfig, mv: usize, mpsi: usize) -> Result<DecoupledSolve, PipelineError> {
    cfg.validate()?;
    let spec = cfg.decomposition()?;
    let splits = ProblemConfig::split_counts(&spec, mv, mpsi)?;
    spec.check_splits_against_target(&splits, &cfg.target_dims())?;
    let pieces = build_pieces(&spec, &splits)?;
    let base = cfg.subsystem_base_grid()?;
    let tx = cfg.block_target(&spec, Block::X)?;
    let ty = cfg.block_target(&spec, Block::Y)?;

    let started = Instant::now();
    let jobs: Vec<(usize, Block)> = (0..pieces.len())
        .flat_map(|i| [(i, Block::X), (i, Block::Y)])
        .collect();
    let run = |&(i, b): &(usize, Block)| {
        let piece = &pieces[i];
        let target = if b == Block::X { &tx } else { &ty };
        let label = format!("{}{:?}", if b == Block::X { "x" } else { "y" }, piece.indices);
        solve_sub(cfg, &base, piece.sub(b), target, label)
    };
    let solved: Vec<ValueFunction> = if cfg.parallel_pieces {
        jobs.par_iter().map(run).collect::<Result<_, _>>()?
    } else {
        jobs.iter().map(run).collect::<Result<_, _>>()?
    };
    let seconds = started.elapsed().as_secs_f64();

    let mut solved = solved.into_iter();
    let results = pieces
        .iter()
        .map(|p| PieceResult {
            indices: p.indices.clone(),
            sections: p.sections.clone(),
            x: solved.next().expect("x solve per piece"),
            x_dims: p.x.dims.clone(),
            y: solved.next().expect("y solve per piece"),
            y_dims: p.y.dims.clone(),
        })
        .collect();
    Ok(DecoupledSolve {
        splits,
        pieces: results,
        seconds,
    })
}

/// Default audit tolerance: three of the coarsest grid spacings.
pub fn default_tolerance(grid: &Grid) -> f64 {
    3.0 * grid.max_spacing()
}

/// Reconstructs `pieces` on the reference grid and audits them.
pub fn compare_pieces(
    pieces: &[PieceResult],
    full: &ValueFunction,
    tol: f64,
) -> Result<ReconstructionReport, PipelineError> {
    let recon = Reconstruction::on_grid(pieces, full.grid())?;
    Ok(compare(&recon, full, tol)?)
}

pub fn write_report(report: &ReconstructionReport, path: impl AsRef<Path>) -> Result<(), PipelineError> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub const MANIFEST: &str = "pieces.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceEntry {
    pub indices: Vec<usize>,
    #[serde(default)]
    pub sections: Vec<Section>,
    pub x_file: String,
    pub x_dims: Vec<usize>,
    pub y_file: String,
    pub y_dims: Vec<usize>,
    #[serde(default)]
    pub x_solve_seconds: f64,
    #[serde(default)]
    pub y_solve_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecesManifest {
    pub splits: Vec<usize>,
    pub pieces: Vec<PieceEntry>,
    #[serde(default)]
    pub wall_seconds: f64,
}

/// Writes one HJVF file per subsystem solve plus a `pieces.json` manifest.
pub fn write_pieces(solve: &DecoupledSolve, dir: impl AsRef<Path>, record_timing: bool) -> Result<(), PipelineError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let t = |s: f64| if record_timing { s } else { 0.0 };
    let mut entries = Vec::with_capacity(solve.pieces.len());
    for p in &solve.pieces {
        let stem = p.indices.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("_");
        let stem = if stem.is_empty() { "0".to_string() } else { stem };
        let x_file = format!("piece_{stem}_x.hjvf");
        let y_file = format!("piece_{stem}_y.hjvf");
        write_field(&p.x, dir.join(&x_file))?;
        write_field(&p.y, dir.join(&y_file))?;
        entries.push(PieceEntry {
            indices: p.indices.clone(),
            sections: p.sections.clone(),
            x_file,
            x_dims: p.x_dims.clone(),
            y_file,
            y_dims: p.y_dims.clone(),
            x_solve_seconds: t(p.x.solve_seconds),
            y_solve_seconds: t(p.y.solve_seconds),
        });
    }
    let manifest = PiecesManifest {
        splits: solve.splits.clone(),
        pieces: entries,
        wall_seconds: t(solve.seconds),
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

pub fn read_pieces(dir: impl AsRef<Path>) -> Result<Vec<PieceResult>, PipelineError> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: PiecesManifest = serde_json::from_str(&text).map_err(|e| PipelineError::Manifest(e.to_string()))?;
    if manifest.pieces.is_empty() {
        return Err(PipelineError::Manifest("no pieces listed".into()));
    }
    let load = |file: &str| -> Result<ValueFunction, PipelineError> {
        if Path::new(file).components().count() != 1 {
            return Err(PipelineError::Manifest(format!("piece file {file:?} is not a plain file name")));
        }
        let mut vf = read_field(dir.join(file))?;
        vf.label = file.to_string();
        Ok(vf)
    };
    manifest
        .pieces
        .iter()
        .map(|e| {
            Ok(PieceResult {
                indices: e.indices.clone(),
                sections: e.sections.clone(),
                x: load(&e.x_file)?,
                x_dims: e.x_dims.clone(),
                y: load(&e.y_file)?,
                y_dims: e.y_dims.clone(),
            })
        })
        .collect()
}

/// `true` when `path` is a pieces directory rather than an HJVF file.
pub fn is_pieces_dir(path: impl AsRef<Path>) -> bool {
    let path: PathBuf = path.as_ref().to_path_buf();
    path.is_dir() && path.join(MANIFEST).is_file()
}
