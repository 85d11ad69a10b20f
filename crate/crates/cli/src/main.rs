use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use hjreach::grid::{Axis, Grid};
use hjreach::hjsolver::ValueFunction;
use hjreach::pipeline::{
    compare_pieces, default_tolerance, is_pieces_dir, read_field, read_pieces, run_decoupled_solve,
    run_full_solve, run_sweep, write_field, write_pieces, write_report, ProblemConfig,
};
use hjreach::reconstruct::{compare, materialize, sublevel_volume_field, Interpolant, Reconstruction};
use hjreach::systems::ParamValue;

#[derive(Parser)]
#[command(name = "hjreach", version, about = "Grid-based reachability with decoupled approximations")]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolveKind {
    Full,
    Decoupled,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExportFormat {
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the full problem into an HJVF file, or its decoupled pieces
    /// into a directory.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: SolveKind,
        #[arg(long, default_value_t = 1)]
        mv: usize,
        #[arg(long, default_value_t = 1)]
        mpsi: usize,
        #[arg(long)]
        out: PathBuf,
        /// Use sin(psi) instead of cos(psi) in the x-subsystem drift.
        #[arg(long)]
        paper_literal_sin: bool,
    },
    /// Reconstruct pieces on the grid of a config and report the set volume.
    Reconstruct {
        #[arg(long)]
        pieces: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        /// Materialize the reconstructed field as an HJVF file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Audit an approximation (HJVF file or pieces directory) against a
    /// full solve.
    Compare {
        #[arg(long)]
        approx: PathBuf,
        #[arg(long)]
        full: PathBuf,
        /// Defaults to three of the full grid's largest spacings.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        report: PathBuf,
    },
    /// One full solve, then one decoupled solve per split pair.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the config's split lists.
        #[arg(long, value_delimiter = ',')]
        mv: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        mpsi: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        paper_literal_sin: bool,
    },
    /// Evaluate the reconstruction at one state.
    Query {
        #[arg(long)]
        pieces: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        state: Vec<f64>,
    },
    /// Write a 2D or lower slice of an HJVF field as CSV.
    Export {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: ExportFormat,
        /// Fixed coordinates as `dim=value`, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        slice: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &Path, literal_sin: bool) -> Result<ProblemConfig> {
    let mut cfg = ProblemConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(n) = cfg.threads {
        // a --threads pool, if any, was built first and wins
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if literal_sin {
        cfg.system
            .params
            .insert("paper_literal_sin".into(), ParamValue::Flag(true));
        if let Some(spec) = cfg.decomposition.as_mut() {
            spec.x
                .params
                .insert("paper_literal_sin".into(), ParamValue::Flag(true));
        }
    }
    Ok(cfg)
}

fn solve(config: &Path, mode: SolveKind, mv: usize, mpsi: usize, out: &Path, literal_sin: bool) -> Result<()> {
    let cfg = load_config(config, literal_sin)?;
    match mode {
        SolveKind::Full => {
            ensure!(mv == 1 && mpsi == 1, "--mv/--mpsi apply to decoupled solves only");
            let full = run_full_solve(&cfg)?;
            write_field(&full.value, out)?;
            println!(
                "full solve: {} nodes, {} steps, {:.3} s, ~{} bytes; wrote {}",
                full.value.grid().len(),
                full.value.steps,
                full.seconds,
                full.memory_bytes,
                out.display()
            );
        }
        SolveKind::Decoupled => {
            let dec = run_decoupled_solve(&cfg, mv, mpsi)?;
            write_pieces(&dec, out, cfg.record_timing)?;
            println!(
                "decoupled solve ({mv}, {mpsi}): {} pieces, {} subsystem solves, {:.3} s; wrote {}",
                dec.pieces.len(),
                2 * dec.pieces.len(),
                dec.seconds,
                out.display()
            );
        }
    }
    Ok(())
}

fn reconstruct(pieces: &Path, grid_cfg: &Path, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(grid_cfg, false)?;
    let grid = cfg.full_grid()?;
    let results = read_pieces(pieces)?;
    let recon = Reconstruction::on_grid(&results, &grid)?;
    let field = materialize(&recon, &grid)?;
    let volume = sublevel_volume_field(&field);
    println!("reconstructed {} pieces on {} nodes; volume {volume}", results.len(), grid.len());
    if let Some(out) = out {
        ensure!(
            field.values().iter().all(|v| v.is_finite()),
            "some nodes are covered by no piece; cannot write a finite field"
        );
        write_field(&ValueFunction::from_field(field, cfg.horizon, cfg.mode), out)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn compare_cmd(approx: &Path, full: &Path, tol: Option<f64>, report: &Path) -> Result<()> {
    let full = read_field(full).with_context(|| format!("reading {}", full.display()))?;
    let tol = tol.unwrap_or_else(|| default_tolerance(full.grid()));
    let rep = if is_pieces_dir(approx) {
        compare_pieces(&read_pieces(approx)?, &full, tol)?
    } else {
        let approx = read_field(approx).with_context(|| format!("reading {}", approx.display()))?;
        compare(&approx, &full, tol)?
    };
    write_report(&rep, report)?;
    println!(
        "volume ratio {}, violation fraction {}, max violation {} at tolerance {tol}",
        rep.volume_ratio.map_or("undefined".into(), |q| q.to_string()),
        rep.violation_fraction,
        rep.max_violation
    );
    Ok(())
}

fn sweep(config: &Path, mv: &[usize], mpsi: &[usize], out: &Path, literal_sin: bool) -> Result<()> {
    let cfg = load_config(config, literal_sin)?;
    let mv = if mv.is_empty() { &cfg.splits.mv } else { mv };
    let mpsi = if mpsi.is_empty() { &cfg.splits.mpsi } else { mpsi };
    let outcome = run_sweep(&cfg, mv, mpsi)?;
    outcome.write_csv(out)?;
    println!("wrote {} rows to {}", outcome.rows.len(), out.display());
    match outcome.best {
        Some(i) => {
            let r = &outcome.rows[i];
            println!(
                "best: mv {} mpsi {} volume ratio {}",
                r.mv,
                r.mpsi,
                r.volume_ratio.unwrap_or(f64::NAN)
            );
        }
        None => println!("best: none (reference set is empty)"),
    }
    Ok(())
}

fn query(pieces: &Path, state: &[f64]) -> Result<()> {
    let results = read_pieces(pieces)?;
    let recon = Reconstruction::new(&results)?;
    let v = recon.evaluate(state)?;
    println!("value {v}");
    println!("{}", if v <= 0.0 { "inside" } else { "outside" });
    Ok(())
}

fn parse_slice(items: &[String], dims: usize) -> Result<Vec<Option<f64>>> {
    let mut fixed = vec![None; dims];
    for item in items {
        let (d, v) = item
            .split_once('=')
            .with_context(|| format!("slice entry {item:?} is not dim=value"))?;
        let d: usize = d.trim().parse().with_context(|| format!("bad dimension in {item:?}"))?;
        let v: f64 = v.trim().parse().with_context(|| format!("bad value in {item:?}"))?;
        ensure!(d < dims, "slice dimension {d} out of range for a {dims}-dimensional field");
        ensure!(fixed[d].is_none(), "dimension {d} fixed twice");
        fixed[d] = Some(v);
    }
    Ok(fixed)
}

fn export(input: &Path, slice: &[String], out: &Path) -> Result<()> {
    let vf = read_field(input).with_context(|| format!("reading {}", input.display()))?;
    let grid = vf.grid();
    let fixed = parse_slice(slice, grid.dim_count())?;
    let free: Vec<usize> = (0..grid.dim_count()).filter(|&d| fixed[d].is_none()).collect();
    ensure!(free.len() <= 2, "slice leaves {} free dimensions; at most 2 allowed", free.len());
    for (d, v) in fixed.iter().enumerate() {
        if let Some(v) = v {
            let a = grid.axis(d);
            if !a.periodic && (*v < a.min || *v > a.max) {
                bail!("slice value {v} outside [{}, {}] on dimension {d}", a.min, a.max);
            }
        }
    }
    let slice_grid = if free.is_empty() {
        None
    } else {
        Some(Grid::new(free.iter().map(|&d| *grid.axis(d)).collect::<Vec<Axis>>())?)
    };
    let interp = Interpolant::new(&vf.field);
    let mut text = String::new();
    let header: Vec<String> = free.iter().map(|d| format!("z{d}")).chain(["value".into()]).collect();
    text.push_str(&header.join(","));
    text.push('\n');
    let mut z: Vec<f64> = fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
    let count = slice_grid.as_ref().map_or(1, Grid::len);
    for flat in 0..count {
        let mut row = Vec::with_capacity(free.len() + 1);
        if let Some(g) = &slice_grid {
            let local = g.state_of_index(&g.multi_index(flat)?)?;
            for (k, &d) in free.iter().enumerate() {
                z[d] = local[k];
                row.push(local[k].to_string());
            }
        }
        row.push(interp.interpolate(&z)?.to_string());
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let mut f = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    f.write_all(text.as_bytes())?;
    println!("wrote {count} rows to {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        ensure!(n > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Solve {
            config,
            mode,
            mv,
            mpsi,
            out,
            paper_literal_sin,
        } => solve(&config, mode, mv, mpsi, &out, paper_literal_sin),
        Command::Reconstruct { pieces, grid, out } => reconstruct(&pieces, &grid, out.as_deref()),
        Command::Compare {
            approx,
            full,
            tol,
            report,
        } => compare_cmd(&approx, &full, tol, &report),
        Command::Sweep {
            config,
            mv,
            mpsi,
            out,
            paper_literal_sin,
        } => sweep(&config, &mv, &mpsi, &out, paper_literal_sin),
        Command::Query { pieces, state } => query(&pieces, &state),
        Command::Export {
            input,
            format: ExportFormat::Csv,
            slice,
            out,
        } => export(&input, &slice, &out),
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
