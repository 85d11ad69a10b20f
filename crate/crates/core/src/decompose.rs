//! Coupling-as-disturbance decomposition of a self-coupled system
//! `x' = g(x, y, ..)`, `y' = h(y, x, ..)` into two subsystems, and the
//! disturbance-splitting schedule that turns one decomposition into a
//! family of pieces.
//!
//! Each coupled state (a state of one block appearing in the other block's
//! dynamics) becomes a bounded disturbance of the receiving block. Splitting
//! its range into sections gives one piece per combination of sections; in a
//! piece the receiving block sees only its section as disturbance, while the
//! block that owns the state is confined to that same section by a state
//! constraint.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shapes::{ImplicitSurface, ShapeError};
use crate::systems::{builtin_model, Interval, ModelError, ModelName, ParamMap, ParamValue, SubsystemModel};

#[derive(Debug, Error)]
pub enum DecomposeError {
    #[error("invalid decomposition: {0}")]
    InvalidSpec(String),
    #[error("split count must be at least 1")]
    ZeroSplit,
    #[error("expected {expected} split counts, got {got}")]
    SplitArity { expected: usize, got: usize },
    #[error("target depends on dimension {0}, which cannot be split")]
    TargetDependsOnSplit(usize),
    #[error("no builtin decomposition for model `{0}`")]
    NoDecomposition(ModelName),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    X,
    Y,
}

impl Block {
    pub fn other(self) -> Block {
        match self {
            Block::X => Block::Y,
            Block::Y => Block::X,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsystemSpec {
    pub model: ModelName,
    #[serde(default)]
    pub params: ParamMap,
    /// Full-state dimensions, in the subsystem's own state order.
    pub dims: Vec<usize>,
}

/// A state of one block that enters the other block's dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    /// Full-state dimension of the coupled state.
    pub state_dim: usize,
    /// Block whose dynamics read the coupled state.
    pub receiver: Block,
    /// Disturbance parameter of the receiver's model that replaces it.
    pub param: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfCoupledSpec {
    pub full_model: ModelName,
    #[serde(default)]
    pub full_params: ParamMap,
    /// Computation box, one interval per full-state dimension.
    pub domain: Vec<Interval>,
    pub periodic: Vec<bool>,
    pub x: SubsystemSpec,
    pub y: SubsystemSpec,
    #[serde(default)]
    pub couplings: Vec<Coupling>,
}

/// Default box for the plane: `p_x, p_y` in [-40, 40] m, `psi` in
/// [-pi, pi) rad, `v` in [6, 12] m/s.
pub fn plane_domain() -> (Vec<Interval>, Vec<bool>) {
    (
        vec![
            Interval { lo: -40.0, hi: 40.0 },
            Interval { lo: -40.0, hi: 40.0 },
            Interval { lo: -PI, hi: PI },
            Interval { lo: 6.0, hi: 12.0 },
        ],
        vec![false, false, true, false],
    )
}

fn pick(params: &ParamMap, keys: &[&str]) -> ParamMap {
    params
        .iter()
        .filter(|(k, _)| keys.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), *v))
        .collect()
}

impl SelfCoupledSpec {
    /// The plane `(p_x, p_y, psi, v)` split into `(p_x, psi)` and
    /// `(p_y, v)`: speed `v` couples into the x-block as `d_v`, heading
    /// `psi` couples into the y-block as `d_psi`.
    pub fn plane(params: &ParamMap, domain: Vec<Interval>, periodic: Vec<bool>) -> Self {
        Self {
            full_model: ModelName::Plane4d,
            full_params: pick(params, &["omega", "a", "avoid"]),
            domain,
            periodic,
            x: SubsystemSpec {
                model: ModelName::PlaneXSub,
                params: pick(params, &["omega", "paper_literal_sin", "avoid"]),
                dims: vec![0, 2],
            },
            y: SubsystemSpec {
                model: ModelName::PlaneYSub,
                params: pick(params, &["a", "avoid"]),
                dims: vec![1, 3],
            },
            couplings: vec![
                Coupling {
                    state_dim: 3,
                    receiver: Block::X,
                    param: "d_v".into(),
                },
                Coupling {
                    state_dim: 2,
                    receiver: Block::Y,
                    param: "d_psi".into(),
                },
            ],
        }
    }

    /// Two independent integrators; no coupling, so the decomposition is
    /// exact.
    pub fn decoupled2d(params: &ParamMap, domain: Vec<Interval>, periodic: Vec<bool>) -> Self {
        let rename = |key: &str| -> ParamMap {
            params
                .get(key)
                .map(|v| ParamMap::from([("u".to_string(), *v)]))
                .unwrap_or_default()
        };
        Self {
            full_model: ModelName::Decoupled2d,
            full_params: pick(params, &["u_x", "u_y", "avoid"]),
            domain,
            periodic,
            x: SubsystemSpec {
                model: ModelName::Integrator1d,
                params: rename("u_x"),
                dims: vec![0],
            },
            y: SubsystemSpec {
                model: ModelName::Integrator1d,
                params: rename("u_y"),
                dims: vec![1],
            },
            couplings: vec![],
        }
    }

    pub fn for_system(
        name: ModelName,
        params: &ParamMap,
        domain: Vec<Interval>,
        periodic: Vec<bool>,
    ) -> Result<Self, DecomposeError> {
        let spec = match name {
            ModelName::Plane4d => Self::plane(params, domain, periodic),
            ModelName::Decoupled2d => Self::decoupled2d(params, domain, periodic),
            other => return Err(DecomposeError::NoDecomposition(other)),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim_count(&self) -> usize {
        self.domain.len()
    }

    pub fn block(&self, b: Block) -> &SubsystemSpec {
        match b {
            Block::X => &self.x,
            Block::Y => &self.y,
        }
    }

    pub fn owner_of(&self, dim: usize) -> Option<Block> {
        if self.x.dims.contains(&dim) {
            Some(Block::X)
        } else if self.y.dims.contains(&dim) {
            Some(Block::Y)
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<(), DecomposeError> {
        let n = self.dim_count();
        if self.periodic.len() != n {
            return Err(DecomposeError::InvalidSpec(format!(
                "{} periodic flags for {n} dims",
                self.periodic.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for &d in self.x.dims.iter().chain(&self.y.dims) {
            if d >= n || !seen.insert(d) {
                return Err(DecomposeError::InvalidSpec(format!(
                    "blocks must partition dims 0..{n}; dimension {d} is repeated or out of range"
                )));
            }
        }
        if seen.len() != n {
            return Err(DecomposeError::InvalidSpec(format!(
                "blocks cover {} of {n} dims",
                seen.len()
            )));
        }
        for c in &self.couplings {
            match self.owner_of(c.state_dim) {
                Some(owner) if owner != c.receiver => {}
                _ => {
                    return Err(DecomposeError::InvalidSpec(format!(
                        "coupled state {} must belong to the block opposite its receiver",
                        c.state_dim
                    )))
                }
            }
        }
        // models must accept the block dims, given full-range disturbances
        for b in [Block::X, Block::Y] {
            let sub = self.block(b);
            let mut params = sub.params.clone();
            for c in self.couplings.iter().filter(|c| c.receiver == b) {
                params.insert(c.param.clone(), ParamValue::Range(self.domain[c.state_dim]));
            }
            let model = builtin_model(sub.model, &params)?;
            if model.state_dim() != sub.dims.len() {
                return Err(DecomposeError::InvalidSpec(format!(
                    "model {} has {} states, block has {} dims",
                    sub.model,
                    model.state_dim(),
                    sub.dims.len()
                )));
            }
        }
        builtin_model(self.full_model, &self.full_params)?;
        Ok(())
    }

    /// Refuses splitting any coupled state the target reads.
    pub fn check_splits_against_target(
        &self,
        splits: &[usize],
        target_dims: &BTreeSet<usize>,
    ) -> Result<(), DecomposeError> {
        for (c, &m) in self.couplings.iter().zip(splits) {
            if m > 1 && target_dims.contains(&c.state_dim) {
                return Err(DecomposeError::TargetDependsOnSplit(c.state_dim));
            }
        }
        Ok(())
    }

    pub fn full_model(&self) -> Result<SubsystemModel, DecomposeError> {
        Ok(builtin_model(self.full_model, &self.full_params)?)
    }
}

/// `m` equal closed sections of `iv`; neighbors share an endpoint and the
/// last section ends exactly at `iv.hi`.
pub fn uniform_split(iv: Interval, m: usize) -> Result<Vec<Interval>, DecomposeError> {
    if m == 0 {
        return Err(DecomposeError::ZeroSplit);
    }
    let w = iv.width() / m as f64;
    let edge = |k: usize| {
        if k == m {
            iv.hi
        } else {
            iv.lo + k as f64 * w
        }
    };
    Ok((0..m)
        .map(|k| Interval {
            lo: edge(k),
            hi: edge(k + 1),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSchedule {
    /// Split count per coupling.
    pub counts: Vec<usize>,
    /// Sections per coupling.
    pub sections: Vec<Vec<Interval>>,
}

impl SplitSchedule {
    pub fn new(spec: &SelfCoupledSpec, counts: &[usize]) -> Result<Self, DecomposeError> {
        if counts.len() != spec.couplings.len() {
            return Err(DecomposeError::SplitArity {
                expected: spec.couplings.len(),
                got: counts.len(),
            });
        }
        let sections = spec
            .couplings
            .iter()
            .zip(counts)
            .map(|(c, &m)| uniform_split(spec.domain[c.state_dim], m))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            counts: counts.to_vec(),
            sections,
        })
    }

    pub fn piece_count(&self) -> usize {
        self.counts.iter().product()
    }
}

/// One subsystem problem of a piece.
#[derive(Debug, Clone)]
pub struct SubProblem {
    pub block: Block,
    pub model: SubsystemModel,
    /// Full-state dims of the subsystem state, in order.
    pub dims: Vec<usize>,
    /// Disturbance sections received, keyed by the coupled full-state dim.
    pub disturbances: Vec<(usize, Interval)>,
    /// State constraints on own coordinates, keyed by full-state dim.
    pub constraints: Vec<(usize, Interval)>,
    /// Constraint set in subsystem coordinates; the whole box when
    /// nothing is split.
    pub constraint_surface: ImplicitSurface,
}

impl SubProblem {
    pub fn disturbance_for(&self, full_dim: usize) -> Option<Interval> {
        self.disturbances
            .iter()
            .find(|(d, _)| *d == full_dim)
            .map(|(_, iv)| *iv)
    }

    pub fn constraint_for(&self, full_dim: usize) -> Option<Interval> {
        self.constraints
            .iter()
            .find(|(d, _)| *d == full_dim)
            .map(|(_, iv)| *iv)
    }
}

/// Closed range of one full-state coordinate; periodic ranges wrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
}

impl Section {
    pub fn contains(&self, z: &[f64]) -> bool {
        let Some(&s) = z.get(self.dim) else {
            return false;
        };
        let slack = 1e-9 * (self.hi - self.lo).abs().max(1.0);
        let s = match self.period {
            Some(p) => {
                let w = self.lo + (s - self.lo).rem_euclid(p);
                // a point just below lo wraps to just below lo + p
                if w > self.lo + p - slack {
                    w - p
                } else {
                    w
                }
            }
            None => s,
        };
        s >= self.lo - slack && s <= self.hi + slack
    }
}

#[derive(Debug, Clone)]
pub struct Piece {
    /// Section index per coupling, 0-based.
    pub indices: Vec<usize>,
    /// Split-state ranges this piece answers for, one per coupling.
    pub sections: Vec<Section>,
    pub x: SubProblem,
    pub y: SubProblem,
}

impl Piece {
    pub fn sub(&self, b: Block) -> &SubProblem {
        match b {
            Block::X => &self.x,
            Block::Y => &self.y,
        }
    }
}

/// Cross product of all split sections, last coupling varying fastest.
pub fn build_pieces(spec: &SelfCoupledSpec, splits: &[usize]) -> Result<Vec<Piece>, DecomposeError> {
    spec.validate()?;
    let schedule = SplitSchedule::new(spec, splits)?;
    let total = schedule.piece_count();
    let mut pieces = Vec::with_capacity(total);
    let mut indices = vec![0usize; splits.len()];
    for _ in 0..total {
        let chosen: Vec<(usize, Interval)> = spec
            .couplings
            .iter()
            .zip(&indices)
            .zip(&schedule.sections)
            .map(|((c, &i), secs)| (c.state_dim, secs[i]))
            .collect();
        let sections = chosen
            .iter()
            .map(|&(dim, iv)| Section {
                dim,
                lo: iv.lo,
                hi: iv.hi,
                period: spec.periodic[dim].then(|| spec.domain[dim].width()),
            })
            .collect();
        pieces.push(Piece {
            indices: indices.clone(),
            sections,
            x: sub_problem(spec, Block::X, &chosen)?,
            y: sub_problem(spec, Block::Y, &chosen)?,
        });
        // odometer increment
        for k in (0..indices.len()).rev() {
            indices[k] += 1;
            if indices[k] < splits[k] {
                break;
            }
            indices[k] = 0;
        }
    }
    Ok(pieces)
}

fn sub_problem(
    spec: &SelfCoupledSpec,
    block: Block,
    chosen: &[(usize, Interval)],
) -> Result<SubProblem, DecomposeError> {
    let sub = spec.block(block);
    let mut params = sub.params.clone();
    let mut disturbances = Vec::new();
    let mut constraints = Vec::new();
    for (c, &(dim, section)) in spec.couplings.iter().zip(chosen) {
        if c.receiver == block {
            params.insert(c.param.clone(), ParamValue::Range(section));
            disturbances.push((dim, section));
        } else {
            constraints.push((dim, section));
        }
    }
    let model = builtin_model(sub.model, &params)?;

    // every own dim is boxed; split dims are narrowed to their section
    let parts = sub
        .dims
        .iter()
        .enumerate()
        .map(|(local, &full)| {
            let iv = constraints
                .iter()
                .find(|(d, _)| *d == full)
                .map(|(_, iv)| *iv)
                .unwrap_or(spec.domain[full]);
            let period = spec.periodic[full].then(|| spec.domain[full].width());
            ImplicitSurface::interval(local, iv.lo, iv.hi, period)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SubProblem {
        block,
        model,
        dims: sub.dims.clone(),
        disturbances,
        constraints,
        constraint_surface: ImplicitSurface::intersection(parts)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plane() -> SelfCoupledSpec {
        let (domain, periodic) = plane_domain();
        SelfCoupledSpec::plane(&ParamMap::new(), domain, periodic)
    }

    fn close(a: Interval, b: Interval) -> bool {
        (a.lo - b.lo).abs() < 1e-12 && (a.hi - b.hi).abs() < 1e-12
    }

    #[test]
    fn uniform_split_examples() {
        let s = uniform_split(Interval { lo: 6.0, hi: 12.0 }, 2).unwrap();
        assert_eq!(s, vec![Interval { lo: 6.0, hi: 9.0 }, Interval { lo: 9.0, hi: 12.0 }]);
        let full = Interval { lo: -PI, hi: PI };
        assert_eq!(uniform_split(full, 1).unwrap(), vec![full]);
        let q = uniform_split(Interval { lo: 0.0, hi: 1.0 }, 4).unwrap();
        assert_eq!(
            q.iter().map(|i| (i.lo, i.hi)).collect::<Vec<_>>(),
            vec![(0.0, 0.25), (0.25, 0.5), (0.5, 0.75), (0.75, 1.0)]
        );
        assert!(matches!(uniform_split(full, 0), Err(DecomposeError::ZeroSplit)));
    }

    #[test]
    fn plane_pieces_2_by_3() {
        let spec = plane();
        let pieces = build_pieces(&spec, &[2, 3]).unwrap();
        assert_eq!(pieces.len(), 6);
        // second v section is [9, 12]; first v section [6, 9], middle psi section
        let p = pieces.iter().find(|p| p.indices == vec![0, 1]).unwrap();
        let v_sec = Interval { lo: 6.0, hi: 9.0 };
        let psi_sec = Interval {
            lo: -PI / 3.0,
            hi: PI / 3.0,
        };
        assert!(close(p.x.disturbance_for(3).unwrap(), v_sec));
        assert!(close(p.x.constraint_for(2).unwrap(), psi_sec));
        assert!(close(p.y.disturbance_for(2).unwrap(), psi_sec));
        assert!(close(p.y.constraint_for(3).unwrap(), v_sec));
        assert_eq!(p.x.model.disturbances(), vec![p.x.disturbance_for(3).unwrap()]);
        // constraint surface confines psi (local dim 1) to the section
        assert!(p.x.constraint_surface.contains(&[0.0, 0.0]));
        assert!(!p.x.constraint_surface.contains(&[0.0, 2.0]));
        assert!(p.y.constraint_surface.contains(&[0.0, 8.0]));
        assert!(!p.y.constraint_surface.contains(&[0.0, 10.0]));
    }

    #[test]
    fn unsplit_piece_uses_full_ranges() {
        let spec = plane();
        let pieces = build_pieces(&spec, &[1, 1]).unwrap();
        assert_eq!(pieces.len(), 1);
        let p = &pieces[0];
        assert_eq!(p.x.disturbance_for(3).unwrap(), spec.domain[3]);
        assert_eq!(p.y.disturbance_for(2).unwrap(), spec.domain[2]);
        // masks are no-ops over the whole box
        for i in 0..=40 {
            let t = i as f64 / 40.0;
            let px = -40.0 + 80.0 * t;
            let psi = -PI + 2.0 * PI * t;
            let v = 6.0 + 6.0 * t;
            assert!(p.x.constraint_surface.contains(&[px, psi]));
            assert!(p.y.constraint_surface.contains(&[px, v]));
        }
    }

    #[test]
    fn target_dependent_split_refused() {
        let spec = plane();
        let target_dims: BTreeSet<usize> = [0, 1, 2].into();
        assert!(spec.check_splits_against_target(&[4, 1], &target_dims).is_ok());
        assert!(matches!(
            spec.check_splits_against_target(&[1, 2], &target_dims),
            Err(DecomposeError::TargetDependsOnSplit(2))
        ));
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = plane();
        spec.y.dims = vec![1, 2];
        assert!(matches!(spec.validate(), Err(DecomposeError::InvalidSpec(_))));

        let mut spec = plane();
        spec.couplings[0].receiver = Block::Y;
        assert!(matches!(spec.validate(), Err(DecomposeError::InvalidSpec(_))));

        assert!(matches!(
            build_pieces(&plane(), &[1]),
            Err(DecomposeError::SplitArity { .. })
        ));
        let (d, p) = plane_domain();
        assert!(matches!(
            SelfCoupledSpec::for_system(ModelName::QuadLateral, &ParamMap::new(), d, p),
            Err(DecomposeError::NoDecomposition(_))
        ));
    }

    #[test]
    fn decoupled2d_has_no_couplings() {
        let dom = vec![Interval { lo: -2.0, hi: 2.0 }; 2];
        let spec = SelfCoupledSpec::for_system(
            ModelName::Decoupled2d,
            &ParamMap::new(),
            dom,
            vec![false, false],
        )
        .unwrap();
        let pieces = build_pieces(&spec, &[]).unwrap();
        assert_eq!(pieces.len(), 1);
        assert!(pieces[0].x.disturbances.is_empty());
    }

    proptest! {
        #[test]
        fn split_covers_range(lo in -10.0f64..10.0, w in 0.01f64..20.0, m in 1usize..40, t in 0.0f64..=1.0) {
            let iv = Interval { lo, hi: lo + w };
            let secs = uniform_split(iv, m).unwrap();
            prop_assert_eq!(secs.first().unwrap().lo, iv.lo);
            prop_assert_eq!(secs.last().unwrap().hi, iv.hi);
            for pair in secs.windows(2) {
                prop_assert_eq!(pair[0].hi, pair[1].lo);
            }
            let s = (lo + t * w).min(iv.hi);
            prop_assert!(secs.iter().any(|sec| sec.contains(s)));
        }

        #[test]
        fn pieces_are_cross_wired(mv in 1usize..5, mpsi in 1usize..9) {
            let spec = plane();
            let pieces = build_pieces(&spec, &[mv, mpsi]).unwrap();
            prop_assert_eq!(pieces.len(), mv * mpsi);
            for p in &pieces {
                for c in &spec.couplings {
                    let recv = p.sub(c.receiver);
                    let owner = p.sub(c.receiver.other());
                    prop_assert_eq!(recv.disturbance_for(c.state_dim), owner.constraint_for(c.state_dim));
                }
            }
        }
    }
}
