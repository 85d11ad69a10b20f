//! Rectangular node-centered grids and first-order one-sided differences.
//!
//! Non-periodic dimensions include both endpoints; periodic dimensions
//! exclude `max`, which is identified with `min`. Node values are stored
//! row-major with the last dimension varying fastest.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Grids with more dimensions than this are rejected.
pub const MAX_DIMS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("dimension {dim}: extent must be positive (min {min}, max {max})")]
    NonPositiveExtent { dim: usize, min: f64, max: f64 },
    #[error("dimension {dim}: node count {count} < 2")]
    TooFewNodes { dim: usize, count: usize },
    #[error("grid has {0} dimensions, at most {MAX_DIMS} supported")]
    TooManyDims(usize),
    #[error("index {index} out of range for dimension {dim} with {count} nodes")]
    IndexOutOfRange { dim: usize, index: usize, count: usize },
    #[error("dimension {dim} out of range for {dim_count}-dimensional grid")]
    DimOutOfRange { dim: usize, dim_count: usize },
    #[error("field has {got} values, grid has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
}

/// One axis of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub nodes: usize,
    pub periodic: bool,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        let cells = if self.periodic {
            self.nodes
        } else {
            self.nodes - 1
        };
        (self.max - self.min) / cells as f64
    }

    pub fn coordinate(&self, index: usize) -> f64 {
        self.min + index as f64 * self.spacing()
    }

    pub fn period(&self) -> f64 {
        self.max - self.min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Axis>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self, GridError> {
        if axes.is_empty() {
            return Err(GridError::DimensionMismatch(
                "grid needs at least one dimension".into(),
            ));
        }
        if axes.len() > MAX_DIMS {
            return Err(GridError::TooManyDims(axes.len()));
        }
        for (dim, a) in axes.iter().enumerate() {
            if a.nodes < 2 {
                return Err(GridError::TooFewNodes {
                    dim,
                    count: a.nodes,
                });
            }
            if !(a.max > a.min) || !a.min.is_finite() || !a.max.is_finite() {
                return Err(GridError::NonPositiveExtent {
                    dim,
                    min: a.min,
                    max: a.max,
                });
            }
        }
        let spacing = axes.iter().map(Axis::spacing).collect();
        let mut strides = vec![1usize; axes.len()];
        for k in (0..axes.len() - 1).rev() {
            strides[k] = strides[k + 1] * axes[k + 1].nodes;
        }
        let len = strides[0] * axes[0].nodes;
        Ok(Self {
            axes,
            spacing,
            strides,
            len,
        })
    }

    pub fn dim_count(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, dim: usize) -> &Axis {
        &self.axes[dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Total node count.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    /// Volume quantum attributed to each node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn flat_index(&self, multi: &[usize]) -> Result<usize, GridError> {
        self.check_multi(multi)?;
        Ok(multi
            .iter()
            .zip(&self.strides)
            .map(|(i, s)| i * s)
            .sum())
    }

    pub fn multi_index(&self, flat: usize) -> Result<Vec<usize>, GridError> {
        if flat >= self.len {
            return Err(GridError::IndexOutOfRange {
                dim: 0,
                index: flat,
                count: self.len,
            });
        }
        let mut out = vec![0; self.dim_count()];
        self.decode(flat, &mut out);
        Ok(out)
    }

    /// Unchecked decode of `flat` into `out[..dim_count]`.
    pub(crate) fn decode(&self, flat: usize, out: &mut [usize]) {
        let mut rem = flat;
        for (k, s) in self.strides.iter().enumerate() {
            out[k] = rem / s;
            rem %= s;
        }
    }

    pub fn state_of_index(&self, multi: &[usize]) -> Result<Vec<f64>, GridError> {
        self.check_multi(multi)?;
        Ok(multi
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.coordinate(i))
            .collect())
    }

    /// Writes the coordinates of node `flat` into `out[..dim_count]`.
    pub(crate) fn state_of_flat(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for (k, s) in self.strides.iter().enumerate() {
            let i = rem / s;
            rem %= s;
            out[k] = self.axes[k].min + i as f64 * self.spacing[k];
        }
    }

    /// Per-dimension coordinate ranges; periodic dims report `[min, max]`.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.axes.iter().map(|a| (a.min, a.max)).collect()
    }

    /// Sub-grid built from the listed dimensions, in order.
    pub fn project(&self, dims: &[usize]) -> Result<Grid, GridError> {
        let axes = dims
            .iter()
            .map(|&d| {
                self.axes.get(d).copied().ok_or(GridError::DimOutOfRange {
                    dim: d,
                    dim_count: self.dim_count(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Grid::new(axes)
    }

    fn check_multi(&self, multi: &[usize]) -> Result<(), GridError> {
        if multi.len() != self.dim_count() {
            return Err(GridError::DimensionMismatch(format!(
                "multi-index has {} entries, grid has {} dims",
                multi.len(),
                self.dim_count()
            )));
        }
        for (dim, (&i, a)) in multi.iter().zip(&self.axes).enumerate() {
            if i >= a.nodes {
                return Err(GridError::IndexOutOfRange {
                    dim,
                    index: i,
                    count: a.nodes,
                });
            }
        }
        Ok(())
    }
}

pub fn make_grid(
    mins: &[f64],
    maxs: &[f64],
    counts: &[usize],
    periodic: &[bool],
) -> Result<Grid, GridError> {
    let n = mins.len();
    if maxs.len() != n || counts.len() != n || periodic.len() != n {
        return Err(GridError::DimensionMismatch(format!(
            "mins {}, maxs {}, counts {}, periodic {}",
            n,
            maxs.len(),
            counts.len(),
            periodic.len()
        )));
    }
    Grid::new(
        (0..n)
            .map(|k| Axis {
                min: mins[k],
                max: maxs[k],
                nodes: counts[k],
                periodic: periodic[k],
            })
            .collect(),
    )
}

/// Which neighbor a one-sided difference uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_parts_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), values.len());
        Self { grid, values }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        let values = vec![value; grid.len()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, multi: &[usize]) -> Result<f64, GridError> {
        Ok(self.values[self.grid.flat_index(multi)?])
    }

    /// Left and right differences at node `flat` along `dim`, with
    /// periodic wrap or linear-extrapolation ghost nodes.
    #[inline]
    pub(crate) fn diffs_at(&self, flat: usize, index_in_dim: usize, dim: usize) -> (f64, f64) {
        neighbor_diffs(&self.grid, &self.values, flat, index_in_dim, dim)
    }

    pub fn one_sided_diff(&self, dim: usize, side: Side) -> Result<ScalarField, GridError> {
        if dim >= self.grid.dim_count() {
            return Err(GridError::DimOutOfRange {
                dim,
                dim_count: self.grid.dim_count(),
            });
        }
        let stride = self.grid.strides()[dim];
        let nodes = self.grid.axis(dim).nodes;
        let values = (0..self.grid.len())
            .map(|flat| {
                let i = (flat / stride) % nodes;
                let (l, r) = self.diffs_at(flat, i, dim);
                match side {
                    Side::Left => l,
                    Side::Right => r,
                }
            })
            .collect();
        Ok(ScalarField::from_parts_unchecked(self.grid.clone(), values))
    }
}

#[inline]
pub(crate) fn neighbor_diffs(
    grid: &Grid,
    values: &[f64],
    flat: usize,
    i: usize,
    dim: usize,
) -> (f64, f64) {
    let axis = &grid.axes[dim];
    let s = grid.strides[dim];
    let n = axis.nodes;
    let h = grid.spacing[dim];
    let v = values[flat];
    let (prev, next) = if axis.periodic {
        let prev = if i == 0 {
            values[flat + (n - 1) * s]
        } else {
            values[flat - s]
        };
        let next = if i == n - 1 {
            values[flat - (n - 1) * s]
        } else {
            values[flat + s]
        };
        (prev, next)
    } else if i == 0 {
        let next = values[flat + s];
        (2.0 * v - next, next)
    } else if i == n - 1 {
        let prev = values[flat - s];
        (prev, 2.0 * v - prev)
    } else {
        (values[flat - s], values[flat + s])
    };
    ((v - prev) / h, (next - v) / h)
}

pub fn cell_volume(grid: &Grid) -> f64 {
    grid.cell_volume()
}
