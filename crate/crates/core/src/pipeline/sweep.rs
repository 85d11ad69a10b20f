use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use super::{default_tolerance, io_err, run_decoupled_solve, run_full_solve, FullSolve, PipelineError, ProblemConfig};
use crate::reconstruct::{compare, Reconstruction, ReconstructionReport};

pub const SWEEP_HEADER: &str = "mv,mpsi,pieces,volume_approx,volume_full,volume_ratio,\
solve_seconds_decoupled,solve_seconds_full,reconstruct_seconds";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mv: usize,
    pub mpsi: usize,
    pub pieces: usize,
    pub volume_approx: f64,
    pub volume_full: f64,
    pub volume_ratio: Option<f64>,
    pub solve_seconds_decoupled: f64,
    pub solve_seconds_full: f64,
    pub reconstruct_seconds: f64,
    pub report: ReconstructionReport,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub full: FullSolve,
    /// `mv` outer, `mpsi` inner, in the order given.
    pub rows: Vec<SweepRow>,
    /// Index of the row with the largest volume ratio.
    pub best: Option<usize>,
}

/// First row with the largest defined volume ratio.
pub fn best_row(rows: &[SweepRow]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in rows.iter().enumerate() {
        if let Some(q) = r.volume_ratio {
            if best.is_none_or(|(_, b)| q > b) {
                best = Some((i, q));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// One full solve, then one decoupled solve and audit per `(mv, mpsi)`.
pub fn run_sweep(cfg: &ProblemConfig, mvs: &[usize], mpsis: &[usize]) -> Result<SweepOutcome, PipelineError> {
    if mvs.is_empty() || mpsis.is_empty() {
        return Err(PipelineError::Config("sweep needs at least one mv and one mpsi".into()));
    }
    let full = run_full_solve(cfg)?;
    let tol = default_tolerance(full.value.grid());
    let t = |s: f64| if cfg.record_timing { s } else { 0.0 };
    let mut rows = Vec::with_capacity(mvs.len() * mpsis.len());
    for &mv in mvs {
        for &mpsi in mpsis {
            let dec = run_decoupled_solve(cfg, mv, mpsi)?;
            let started = Instant::now();
            let recon = Reconstruction::on_grid(&dec.pieces, full.value.grid())?;
            let report = compare(&recon, &full.value, tol)?;
            let reconstruct_seconds = started.elapsed().as_secs_f64();
            rows.push(SweepRow {
                mv,
                mpsi,
                pieces: dec.pieces.len(),
                volume_approx: report.volume_approx,
                volume_full: report.volume_full,
                volume_ratio: report.volume_ratio,
                solve_seconds_decoupled: t(dec.seconds),
                solve_seconds_full: t(full.seconds),
                reconstruct_seconds: t(reconstruct_seconds),
                report,
            });
        }
    }
    let best = best_row(&rows);
    Ok(SweepOutcome { full, rows, best })
}

/// Undefined ratios are written as empty fields.
pub fn write_sweep_csv(rows: &[SweepRow], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        let ratio = r.volume_ratio.map(|q| q.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.mv,
            r.mpsi,
            r.pieces,
            r.volume_approx,
            r.volume_full,
            ratio,
            r.solve_seconds_decoupled,
            r.solve_seconds_full,
            r.reconstruct_seconds
        )?;
    }
    Ok(())
}

impl SweepOutcome {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        write_sweep_csv(&self.rows, &mut buf).map_err(io_err(path))?;
        fs::write(path, buf).map_err(io_err(path))
    }
}
