//! Implicit surface functions. A point belongs to the encoded set iff the
//! surface evaluates to a value `<= 0` there.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::grid::{Grid, ScalarField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("half width must be positive, got {0}")]
    NonPositiveHalfWidth(f64),
    #[error("cannot combine an empty list of surfaces")]
    Empty,
    #[error("complement takes exactly one surface, got {0}")]
    ComplementArity(usize),
    #[error("surface reads dimension {dim}, grid has {dim_count}")]
    DimensionMismatch { dim: usize, dim_count: usize },
    #[error("period must be positive, got {0}")]
    NonPositivePeriod(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineMode {
    IntersectionMax,
    UnionMin,
    ComplementNegate,
}

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
enum Node {
    Constant(f64),
    Slab {
        dim: usize,
        center: f64,
        half_width: f64,
    },
    /// Slab measured with wrapped distance on a circle of length `period`.
    ArcSlab {
        dim: usize,
        center: f64,
        half_width: f64,
        period: f64,
    },
    Combine(CombineMode, Vec<ImplicitSurface>),
    Custom {
        dims: Vec<usize>,
        eval: Arc<EvalFn>,
    },
}

#[derive(Clone)]
pub struct ImplicitSurface {
    node: Node,
}

impl fmt::Debug for ImplicitSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Node::Constant(c) => write!(f, "Constant({c})"),
            Node::Slab {
                dim,
                center,
                half_width,
            } => write!(f, "Slab(dim {dim}, |z - {center}| <= {half_width})"),
            Node::ArcSlab {
                dim,
                center,
                half_width,
                period,
            } => write!(
                f,
                "ArcSlab(dim {dim}, |z - {center}| <= {half_width} mod {period})"
            ),
            Node::Combine(mode, parts) => f.debug_tuple("Combine").field(mode).field(parts).finish(),
            Node::Custom { dims, .. } => write!(f, "Custom(dims {dims:?})"),
        }
    }
}

impl ImplicitSurface {
    pub fn constant(value: f64) -> Self {
        Self {
            node: Node::Constant(value),
        }
    }

    /// `|z[dim] - center| - half_width`.
    pub fn slab(dim: usize, center: f64, half_width: f64) -> Result<Self, ShapeError> {
        if !(half_width > 0.0) {
            return Err(ShapeError::NonPositiveHalfWidth(half_width));
        }
        Ok(Self {
            node: Node::Slab {
                dim,
                center,
                half_width,
            },
        })
    }

    /// Slab on a periodic coordinate: the offset from `center` is wrapped
    /// into `[-period/2, period/2)` before taking its magnitude.
    pub fn arc_slab(
        dim: usize,
        center: f64,
        half_width: f64,
        period: f64,
    ) -> Result<Self, ShapeError> {
        if !(half_width > 0.0) {
            return Err(ShapeError::NonPositiveHalfWidth(half_width));
        }
        if !(period > 0.0) {
            return Err(ShapeError::NonPositivePeriod(period));
        }
        Ok(Self {
            node: Node::ArcSlab {
                dim,
                center,
                half_width,
                period,
            },
        })
    }

    /// Closed interval `[lo, hi]` on one coordinate, as a slab.
    pub fn interval(dim: usize, lo: f64, hi: f64, period: Option<f64>) -> Result<Self, ShapeError> {
        let center = 0.5 * (lo + hi);
        let half_width = 0.5 * (hi - lo);
        match period {
            Some(p) => Self::arc_slab(dim, center, half_width, p),
            None => Self::slab(dim, center, half_width),
        }
    }

    pub fn custom<F>(dims: Vec<usize>, eval: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            node: Node::Custom {
                dims,
                eval: Arc::new(eval),
            },
        }
    }

    pub fn combine(surfaces: Vec<ImplicitSurface>, mode: CombineMode) -> Result<Self, ShapeError> {
        if surfaces.is_empty() {
            return Err(ShapeError::Empty);
        }
        if mode == CombineMode::ComplementNegate && surfaces.len() != 1 {
            return Err(ShapeError::ComplementArity(surfaces.len()));
        }
        Ok(Self {
            node: Node::Combine(mode, surfaces),
        })
    }

    pub fn intersection(surfaces: Vec<ImplicitSurface>) -> Result<Self, ShapeError> {
        Self::combine(surfaces, CombineMode::IntersectionMax)
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        match &self.node {
            Node::Constant(c) => *c,
            Node::Slab {
                dim,
                center,
                half_width,
            } => (z[*dim] - center).abs() - half_width,
            Node::ArcSlab {
                dim,
                center,
                half_width,
                period,
            } => {
                let d = z[*dim] - center;
                let wrapped = d - period * (d / period).round();
                wrapped.abs() - half_width
            }
            Node::Combine(mode, parts) => match mode {
                CombineMode::IntersectionMax => parts
                    .iter()
                    .map(|s| s.eval(z))
                    .fold(f64::NEG_INFINITY, f64::max),
                CombineMode::UnionMin => parts
                    .iter()
                    .map(|s| s.eval(z))
                    .fold(f64::INFINITY, f64::min),
                CombineMode::ComplementNegate => -parts[0].eval(z),
            },
            Node::Custom { eval, .. } => eval(z),
        }
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        self.eval(z) <= 0.0
    }

    /// Sorted set of coordinate indices the surface reads.
    pub fn dims(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.collect_dims(&mut out);
        out
    }

    fn collect_dims(&self, out: &mut BTreeSet<usize>) {
        match &self.node {
            Node::Constant(_) => {}
            Node::Slab { dim, .. } | Node::ArcSlab { dim, .. } => {
                out.insert(*dim);
            }
            Node::Combine(_, parts) => parts.iter().for_each(|p| p.collect_dims(out)),
            Node::Custom { dims, .. } => out.extend(dims.iter().copied()),
        }
    }

    /// Same surface reading coordinate `map[d]` wherever it used to read `d`.
    /// Custom evaluators cannot be remapped and are returned unchanged
    /// (`None`).
    pub fn remap_dims(&self, map: impl Fn(usize) -> Option<usize> + Copy) -> Option<Self> {
        let node = match &self.node {
            Node::Constant(c) => Node::Constant(*c),
            Node::Slab {
                dim,
                center,
                half_width,
            } => Node::Slab {
                dim: map(*dim)?,
                center: *center,
                half_width: *half_width,
            },
            Node::ArcSlab {
                dim,
                center,
                half_width,
                period,
            } => Node::ArcSlab {
                dim: map(*dim)?,
                center: *center,
                half_width: *half_width,
                period: *period,
            },
            Node::Combine(mode, parts) => Node::Combine(
                *mode,
                parts
                    .iter()
                    .map(|p| p.remap_dims(map))
                    .collect::<Option<Vec<_>>>()?,
            ),
            Node::Custom { .. } => return None,
        };
        Some(Self { node })
    }

    pub fn sample_on_grid(&self, grid: &Grid) -> Result<ScalarField, ShapeError> {
        if let Some(&dim) = self.dims().iter().next_back() {
            if dim >= grid.dim_count() {
                return Err(ShapeError::DimensionMismatch {
                    dim,
                    dim_count: grid.dim_count(),
                });
            }
        }
        let values: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; grid.dim_count()],
                |z, i| {
                    grid.state_of_flat(i, z);
                    self.eval(z)
                },
            )
            .collect();
        Ok(ScalarField::from_parts_unchecked(grid.clone(), values))
    }
}

pub fn slab(dim: usize, center: f64, half_width: f64) -> Result<ImplicitSurface, ShapeError> {
    ImplicitSurface::slab(dim, center, half_width)
}

pub fn combine(
    surfaces: Vec<ImplicitSurface>,
    mode: CombineMode,
) -> Result<ImplicitSurface, ShapeError> {
    ImplicitSurface::combine(surfaces, mode)
}

pub fn sample_on_grid(surface: &ImplicitSurface, grid: &Grid) -> Result<ScalarField, ShapeError> {
    surface.sample_on_grid(grid)
}
