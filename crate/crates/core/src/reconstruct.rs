//! Full-dimensional reconstruction from subsystem value functions, set
//! volumes, and the under-approximation audit.
//!
//! A subsystem value function is back-projected by ignoring the coordinates
//! it does not own. The subsystem sets of one piece intersect (pointwise
//! `max`) and the pieces are united (pointwise `min`). Nothing is
//! materialized: volumes and audits stream over the comparison grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decompose::Section;
use crate::grid::{Grid, ScalarField, MAX_DIMS};
use crate::hjsolver::ValueFunction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconstructError {
    #[error("coordinate {value} on subsystem dim {dim} lies outside [{min}, {max}]")]
    OutOfRange {
        dim: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("dimension map {map:?} does not fit subsystem with {sub_dims} dims and full state with {full_dims} dims")]
    BadDimMap {
        map: Vec<usize>,
        sub_dims: usize,
        full_dims: usize,
    },
    #[error("no pieces to reconstruct from")]
    NoPieces,
    #[error("approximation and reference live on different grids")]
    GridMismatch,
    #[error("negative tolerance {0}")]
    NegativeTolerance(f64),
    #[error("query has {got} coordinates, expected {expected}")]
    StateLength { expected: usize, got: usize },
}

/// Anything that can be evaluated at a full-state point.
pub trait ValueQuery: Sync {
    fn value_at(&self, z: &[f64]) -> Result<f64, ReconstructError>;

    /// Grid the values natively live on, if any; comparisons require it to
    /// match the reference grid.
    fn native_grid(&self) -> Option<&Grid> {
        None
    }
}

/// Multilinear interpolation of a gridded field, wrapping periodic dims.
#[derive(Debug, Clone, Copy)]
pub struct Interpolant<'a> {
    field: &'a ScalarField,
}

/// Relative slack for coordinates that overshoot a grid end by rounding.
const EDGE_SLACK: f64 = 1e-9;
/// Grid positions this close to an integer are treated as nodes.
const SNAP: f64 = 1e-9;

impl<'a> Interpolant<'a> {
    pub fn new(field: &'a ScalarField) -> Self {
        Self { field }
    }

    pub fn field(&self) -> &'a ScalarField {
        self.field
    }

    pub fn interpolate(&self, z: &[f64]) -> Result<f64, ReconstructError> {
        let grid = self.field.grid();
        let n = grid.dim_count();
        if z.len() != n {
            return Err(ReconstructError::StateLength {
                expected: n,
                got: z.len(),
            });
        }
        let mut lower = [0usize; MAX_DIMS];
        let mut upper = [0usize; MAX_DIMS];
        let mut frac = [0.0f64; MAX_DIMS];
        for k in 0..n {
            let axis = grid.axis(k);
            let h = grid.spacing()[k];
            let mut t = (z[k] - axis.min) / h;
            // node coordinates reproduce node values exactly
            let nearest = t.round();
            if (t - nearest).abs() < SNAP {
                t = nearest;
            }
            if axis.periodic {
                t = t.rem_euclid(axis.nodes as f64);
                let i = (t.floor() as usize).min(axis.nodes - 1);
                lower[k] = i;
                upper[k] = (i + 1) % axis.nodes;
                frac[k] = (t - i as f64).clamp(0.0, 1.0);
            } else {
                let last = (axis.nodes - 1) as f64;
                if !(t >= -EDGE_SLACK && t <= last + EDGE_SLACK) {
                    return Err(ReconstructError::OutOfRange {
                        dim: k,
                        value: z[k],
                        min: axis.min,
                        max: axis.max,
                    });
                }
                let t = t.clamp(0.0, last);
                let i = (t.floor() as usize).min(axis.nodes - 2);
                lower[k] = i;
                upper[k] = i + 1;
                frac[k] = t - i as f64;
            }
        }
        let strides = grid.strides();
        let values = self.field.values();
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut flat = 0;
            for k in 0..n {
                if corner >> k & 1 == 1 {
                    w *= frac[k];
                    flat += upper[k] * strides[k];
                } else {
                    w *= 1.0 - frac[k];
                    flat += lower[k] * strides[k];
                }
            }
            if w != 0.0 {
                acc += w * values[flat];
            }
        }
        Ok(acc)
    }
}

impl ValueQuery for ScalarField {
    fn value_at(&self, z: &[f64]) -> Result<f64, ReconstructError> {
        Interpolant::new(self).interpolate(z)
    }

    fn native_grid(&self) -> Option<&Grid> {
        Some(self.grid())
    }
}

impl ValueQuery for ValueFunction {
    fn value_at(&self, z: &[f64]) -> Result<f64, ReconstructError> {
        self.field.value_at(z)
    }

    fn native_grid(&self) -> Option<&Grid> {
        Some(self.grid())
    }
}

/// A subsystem value function read through full-state coordinates.
#[derive(Debug, Clone)]
pub struct Backprojection<'a> {
    interp: Interpolant<'a>,
    dim_map: Vec<usize>,
}

impl<'a> Backprojection<'a> {
    /// `dim_map[i]` is the full-state dimension of subsystem dimension `i`.
    pub fn new(sub_value: &'a ValueFunction, dim_map: &[usize]) -> Result<Self, ReconstructError> {
        let sub_dims = sub_value.grid().dim_count();
        let mut sorted = dim_map.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if dim_map.len() != sub_dims || sorted.len() != dim_map.len() {
            return Err(ReconstructError::BadDimMap {
                map: dim_map.to_vec(),
                sub_dims,
                full_dims: 0,
            });
        }
        Ok(Self {
            interp: Interpolant::new(&sub_value.field),
            dim_map: dim_map.to_vec(),
        })
    }

    pub fn dim_map(&self) -> &[usize] {
        &self.dim_map
    }

    fn eval(&self, z: &[f64]) -> Result<f64, ReconstructError> {
        let mut local = [0.0f64; MAX_DIMS];
        let n = self.dim_map.len();
        for (i, &d) in self.dim_map.iter().enumerate() {
            local[i] = *z.get(d).ok_or(ReconstructError::StateLength {
                expected: d + 1,
                got: z.len(),
            })?;
        }
        self.interp.interpolate(&local[..n])
    }
}

impl ValueQuery for Backprojection<'_> {
    fn value_at(&self, z: &[f64]) -> Result<f64, ReconstructError> {
        self.eval(z)
    }
}

/// Back-projects `sub_value` onto `full_grid`, checking that the subsystem
/// grid covers the full grid's projected ranges.
pub fn backproject<'a>(
    sub_value: &'a ValueFunction,
    full_grid: &Grid,
    dim_map: &[usize],
) -> Result<Backprojection<'a>, ReconstructError> {
    let bp = Backprojection::new(sub_value, dim_map).map_err(|e| match e {
        ReconstructError::BadDimMap { map, sub_dims, .. } => ReconstructError::BadDimMap {
            map,
            sub_dims,
            full_dims: full_grid.dim_count(),
        },
        e => e,
    })?;
    let sub_grid = sub_value.grid();
    if dim_map.iter().any(|&d| d >= full_grid.dim_count()) {
        return Err(ReconstructError::BadDimMap {
            map: dim_map.to_vec(),
            sub_dims: sub_grid.dim_count(),
            full_dims: full_grid.dim_count(),
        });
    }
    for (i, &d) in dim_map.iter().enumerate() {
        let full_axis = full_grid.axis(d);
        let sub_axis = sub_grid.axis(i);
        if sub_axis.periodic {
            continue;
        }
        let slack = EDGE_SLACK * sub_grid.spacing()[i];
        let last_full = full_axis.coordinate(full_axis.nodes - 1);
        for value in [full_axis.min, last_full] {
            if value < sub_axis.min - slack || value > sub_axis.max + slack {
                return Err(ReconstructError::OutOfRange {
                    dim: i,
                    value,
                    min: sub_axis.min,
                    max: sub_axis.max,
                });
            }
        }
    }
    Ok(bp)
}

/// Solved subsystem pair for one split piece.
#[derive(Debug, Clone)]
pub struct PieceResult {
    pub indices: Vec<usize>,
    /// Split-state ranges the piece answers for; empty means everywhere.
    pub sections: Vec<Section>,
    pub x: ValueFunction,
    pub x_dims: Vec<usize>,
    pub y: ValueFunction,
    pub y_dims: Vec<usize>,
}

/// Lazily evaluated union over pieces of the intersection of each piece's
/// back-projected subsystem sets.
#[derive(Debug, Clone)]
pub struct Reconstruction<'a> {
    pieces: Vec<(Backprojection<'a>, Backprojection<'a>, &'a [Section])>,
}

impl<'a> Reconstruction<'a> {
    pub fn new(pieces: &'a [PieceResult]) -> Result<Self, ReconstructError> {
        if pieces.is_empty() {
            return Err(ReconstructError::NoPieces);
        }
        let pieces = pieces
            .iter()
            .map(|p| {
                Ok((
                    Backprojection::new(&p.x, &p.x_dims)?,
                    Backprojection::new(&p.y, &p.y_dims)?,
                    p.sections.as_slice(),
                ))
            })
            .collect::<Result<_, ReconstructError>>()?;
        Ok(Self { pieces })
    }

    /// Like [`Reconstruction::new`], also checking coverage of `full_grid`.
    pub fn on_grid(pieces: &'a [PieceResult], full_grid: &Grid) -> Result<Self, ReconstructError> {
        if pieces.is_empty() {
            return Err(ReconstructError::NoPieces);
        }
        let pieces = pieces
            .iter()
            .map(|p| {
                Ok((
                    backproject(&p.x, full_grid, &p.x_dims)?,
                    backproject(&p.y, full_grid, &p.y_dims)?,
                    p.sections.as_slice(),
                ))
            })
            .collect::<Result<_, ReconstructError>>()?;
        Ok(Self { pieces })
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    /// Minimum over the pieces whose sections contain `z`; `+inf` when
    /// none does.
    pub fn evaluate(&self, z: &[f64]) -> Result<f64, ReconstructError> {
        let mut best = f64::INFINITY;
        for (x, y, sections) in &self.pieces {
            if sections.iter().all(|s| s.contains(z)) {
                best = best.min(x.eval(z)?.max(y.eval(z)?));
            }
        }
        Ok(best)
    }
}

impl ValueQuery for Reconstruction<'_> {
    fn value_at(&self, z: &[f64]) -> Result<f64, ReconstructError> {
        self.evaluate(z)
    }
}

pub fn evaluate_reconstruction(pieces: &[PieceResult], z: &[f64]) -> Result<f64, ReconstructError> {
    Reconstruction::new(pieces)?.evaluate(z)
}

fn node_values<'q>(
    query: &'q dyn ValueQuery,
    grid: &'q Grid,
) -> impl IndexedParallelIterator<Item = Result<f64, ReconstructError>> + 'q {
    (0..grid.len()).into_par_iter().map_init(
        || [0.0f64; MAX_DIMS],
        move |z, i| {
            let z = &mut z[..grid.dim_count()];
            grid.state_of_flat(i, z);
            query.value_at(z)
        },
    )
}

/// Evaluates `query` at every node of `grid`.
pub fn materialize(query: &dyn ValueQuery, grid: &Grid) -> Result<ScalarField, ReconstructError> {
    let values = node_values(query, grid).collect::<Result<Vec<_>, _>>()?;
    Ok(ScalarField::from_parts_unchecked(grid.clone(), values))
}

/// `(count of nodes with value <= 0) * cell volume`.
pub fn sublevel_volume_field(field: &ScalarField) -> f64 {
    let count = field.values().par_iter().filter(|&&v| v <= 0.0).count();
    count as f64 * field.grid().cell_volume()
}

pub fn sublevel_volume(query: &dyn ValueQuery, grid: &Grid) -> Result<f64, ReconstructError> {
    let count = node_values(query, grid)
        .map(|v| v.map(|v| usize::from(v <= 0.0)))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(count as f64 * grid.cell_volume())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub volume_approx: f64,
    pub volume_full: f64,
    /// `None` when the reference set is empty.
    pub volume_ratio: Option<f64>,
    pub max_violation: f64,
    pub violation_fraction: f64,
    pub tolerance: f64,
    pub nodes: usize,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    approx_inside: usize,
    full_inside: usize,
    violations: usize,
    max_violation: f64,
}

impl Tally {
    fn merge(self, o: Tally) -> Tally {
        Tally {
            approx_inside: self.approx_inside + o.approx_inside,
            full_inside: self.full_inside + o.full_inside,
            violations: self.violations + o.violations,
            max_violation: self.max_violation.max(o.max_violation),
        }
    }
}

/// Audits `approx` against the reference on the reference grid. A node
/// violates when `full - approx > tol`, i.e. the approximation claims more
/// than the reference beyond tolerance.
pub fn compare(
    approx: &dyn ValueQuery,
    full: &ValueFunction,
    tol: f64,
) -> Result<ReconstructionReport, ReconstructError> {
    if !(tol >= 0.0) {
        return Err(ReconstructError::NegativeTolerance(tol));
    }
    let grid = full.grid();
    if let Some(g) = approx.native_grid() {
        if g != grid {
            return Err(ReconstructError::GridMismatch);
        }
    }
    let reference = full.values();
    let tally = node_values(approx, grid)
        .enumerate()
        .map(|(i, a)| {
            let a = a?;
            let f = reference[i];
            let gap = f - a;
            Ok(Tally {
                approx_inside: usize::from(a <= 0.0),
                full_inside: usize::from(f <= 0.0),
                violations: usize::from(gap > tol),
                max_violation: gap.max(0.0),
            })
        })
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;
    let cell = grid.cell_volume();
    let volume_approx = tally.approx_inside as f64 * cell;
    let volume_full = tally.full_inside as f64 * cell;
    Ok(ReconstructionReport {
        volume_approx,
        volume_full,
        volume_ratio: (volume_full > 0.0).then(|| volume_approx / volume_full),
        max_violation: tally.max_violation,
        violation_fraction: tally.violations as f64 / grid.len() as f64,
        tolerance: tol,
        nodes: grid.len(),
    })
}
