use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::decompose::{Block, SelfCoupledSpec};
use crate::grid::{Axis, Grid};
use crate::hjsolver::{SolveMode, SolveOptions};
use crate::shapes::ImplicitSurface;
use crate::systems::{builtin_model, Interval, ModelName, ParamMap, ParamValue, SubsystemModel};

pub const DEFAULT_MEMORY_BUDGET: u64 = 4 << 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub name: ModelName,
    #[serde(default)]
    pub params: ParamMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub min: f64,
    pub max: f64,
    pub nodes: usize,
    #[serde(default)]
    pub periodic: bool,
}

/// `|z[dim] - center| <= half_width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlabConfig {
    pub dim: usize,
    #[serde(default)]
    pub center: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitLists {
    #[serde(default = "one")]
    pub mv: Vec<usize>,
    #[serde(default = "one")]
    pub mpsi: Vec<usize>,
}

fn one() -> Vec<usize> {
    vec![1]
}

impl Default for SplitLists {
    fn default() -> Self {
        Self {
            mv: one(),
            mpsi: one(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_csv: Option<String>,
}

fn default_horizon() -> f64 {
    1.0
}
fn default_cfl() -> f64 {
    0.5
}
fn default_budget() -> u64 {
    DEFAULT_MEMORY_BUDGET
}
fn yes() -> bool {
    true
}

/// A reachability problem as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub system: SystemConfig,
    #[serde(rename = "box")]
    pub domain: Vec<AxisConfig>,
    /// Intersection of slabs.
    pub target: Vec<SlabConfig>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub mode: SolveMode,
    #[serde(default = "default_cfl")]
    pub cfl_factor: f64,
    #[serde(default)]
    pub splits: SplitLists,
    /// Per-dimension node counts for subsystem solves; defaults to the box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsystem_nodes: Option<Vec<usize>>,
    /// Overrides the builtin decomposition of `system`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<SelfCoupledSpec>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default = "default_budget")]
    pub memory_budget_bytes: u64,
    /// When false, timing columns are written as zero so that output bytes
    /// depend only on the inputs.
    #[serde(default = "yes")]
    pub record_timing: bool,
    /// Solve pieces concurrently.
    #[serde(default = "yes")]
    pub parallel_pieces: bool,
}

impl ProblemConfig {
    /// The plane problem on `[-40, 40]^2 x [-pi, pi) x [6, 12]` with
    /// `nodes` per dimension and the 4 m square target.
    pub fn plane(nodes: usize) -> Self {
        let axis = |name: &str, min: f64, max: f64, periodic: bool| AxisConfig {
            name: Some(name.into()),
            min,
            max,
            nodes,
            periodic,
        };
        let pi = std::f64::consts::PI;
        Self {
            system: SystemConfig {
                name: ModelName::Plane4d,
                params: ParamMap::from([
                    ("omega".to_string(), ParamValue::Range(Interval { lo: -1.0, hi: 1.0 })),
                    ("a".to_string(), ParamValue::Range(Interval { lo: -1.0, hi: 1.0 })),
                ]),
            },
            domain: vec![
                axis("p_x", -40.0, 40.0, false),
                axis("p_y", -40.0, 40.0, false),
                axis("psi", -pi, pi, true),
                axis("v", 6.0, 12.0, false),
            ],
            target: vec![
                SlabConfig {
                    dim: 0,
                    center: 0.0,
                    half_width: 2.0,
                },
                SlabConfig {
                    dim: 1,
                    center: 0.0,
                    half_width: 2.0,
                },
            ],
            horizon: 1.0,
            mode: SolveMode::ReachWithin,
            cfl_factor: 0.5,
            splits: SplitLists::default(),
            subsystem_nodes: None,
            decomposition: None,
            output: OutputConfig::default(),
            threads: None,
            memory_budget_bytes: DEFAULT_MEMORY_BUDGET,
            record_timing: true,
            parallel_pieces: true,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.solve_options().validate()?;
        let grid = self.full_grid()?;
        let model = self.full_model()?;
        if model.state_dim() != grid.dim_count() {
            return Err(PipelineError::Config(format!(
                "model {} has {} states but the box has {} dims",
                self.system.name,
                model.state_dim(),
                grid.dim_count()
            )));
        }
        if self.target.is_empty() {
            return Err(PipelineError::Config("target needs at least one slab".into()));
        }
        if let Some(s) = self.target.iter().find(|s| s.dim >= grid.dim_count()) {
            return Err(PipelineError::Config(format!(
                "target slab reads dimension {} of a {}-dimensional box",
                s.dim,
                grid.dim_count()
            )));
        }
        self.target_surface()?;
        if let Some(n) = &self.subsystem_nodes {
            if n.len() != grid.dim_count() {
                return Err(PipelineError::Config(format!(
                    "subsystem_nodes has {} entries for {} dims",
                    n.len(),
                    grid.dim_count()
                )));
            }
        }
        if self.splits.mv.contains(&0) || self.splits.mpsi.contains(&0) {
            return Err(PipelineError::Config("split counts must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(PipelineError::Config("threads must be positive".into()));
        }
        Ok(())
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            horizon: self.horizon,
            cfl_factor: self.cfl_factor,
            mode: self.mode,
            snapshot_times: Vec::new(),
        }
    }

    fn axes(&self, counts: Option<&[usize]>) -> Vec<Axis> {
        self.domain
            .iter()
            .enumerate()
            .map(|(k, a)| Axis {
                min: a.min,
                max: a.max,
                nodes: counts.map_or(a.nodes, |c| c[k]),
                periodic: a.periodic,
            })
            .collect()
    }

    pub fn full_grid(&self) -> Result<Grid, PipelineError> {
        Ok(Grid::new(self.axes(None))?)
    }

    /// Full-dimensional grid at subsystem resolution; subsystem grids are
    /// its projections.
    pub fn subsystem_base_grid(&self) -> Result<Grid, PipelineError> {
        Ok(Grid::new(self.axes(self.subsystem_nodes.as_deref()))?)
    }

    pub fn full_model(&self) -> Result<SubsystemModel, PipelineError> {
        Ok(builtin_model(self.system.name, &self.system.params)?)
    }

    pub fn target_dims(&self) -> BTreeSet<usize> {
        self.target.iter().map(|s| s.dim).collect()
    }

    pub fn target_surface(&self) -> Result<ImplicitSurface, PipelineError> {
        let parts = self
            .target
            .iter()
            .map(|s| ImplicitSurface::slab(s.dim, s.center, s.half_width))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ImplicitSurface::intersection(parts)?)
    }

    pub fn decomposition(&self) -> Result<SelfCoupledSpec, PipelineError> {
        let spec = match &self.decomposition {
            Some(spec) => spec.clone(),
            None => {
                let domain = self
                    .domain
                    .iter()
                    .map(|a| Interval { lo: a.min, hi: a.max })
                    .collect();
                let periodic = self.domain.iter().map(|a| a.periodic).collect();
                SelfCoupledSpec::for_system(self.system.name, &self.system.params, domain, periodic)?
            }
        };
        spec.validate()?;
        if spec.dim_count() != self.domain.len() {
            return Err(PipelineError::Config(format!(
                "decomposition covers {} dims, box has {}",
                spec.dim_count(),
                self.domain.len()
            )));
        }
        Ok(spec)
    }

    /// Target of one block, in the block's local coordinates.
    pub fn block_target(&self, spec: &SelfCoupledSpec, block: Block) -> Result<ImplicitSurface, PipelineError> {
        let dims = &spec.block(block).dims;
        let parts = self
            .target
            .iter()
            .filter_map(|s| {
                dims.iter()
                    .position(|&d| d == s.dim)
                    .map(|local| ImplicitSurface::slab(local, s.center, s.half_width))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if parts.is_empty() {
            return Err(PipelineError::Config(format!(
                "target constrains none of the {block:?}-block dims {dims:?}"
            )));
        }
        Ok(ImplicitSurface::intersection(parts)?)
    }

    /// Split counts per coupling of `spec` from the `(mv, mpsi)` pair; the
    /// first coupling takes `mv` and the second `mpsi`.
    pub fn split_counts(spec: &SelfCoupledSpec, mv: usize, mpsi: usize) -> Result<Vec<usize>, PipelineError> {
        let asked = [mv, mpsi];
        let n = spec.couplings.len();
        if asked.iter().skip(n).any(|&m| m != 1) {
            return Err(PipelineError::Config(format!(
                "system has {n} coupled states; cannot split (mv {mv}, mpsi {mpsi})"
            )));
        }
        Ok(asked[..n.min(2)].to_vec())
    }

    /// Bytes held by one full solve: value, target and next-step fields.
    pub fn full_solve_bytes(&self) -> u64 {
        let nodes: u64 = self.domain.iter().map(|a| a.nodes as u64).product();
        nodes.saturating_mul(8 * 3)
    }
}
