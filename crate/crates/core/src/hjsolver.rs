//! Explicit solver for the terminal-value HJ PDE on a grid.
//!
//! Time runs backward from the terminal condition `V(0, z) = l(z)`; the
//! solver marches in `tau = -t`, where `D_tau V = H(z, D_z V)`. Spatial
//! derivatives are first-order one-sided differences combined through a
//! global Lax-Friedrichs numerical Hamiltonian, and the step obeys the
//! CFL bound `dt * sum_k alpha_k / dx_k <= cfl_factor`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{neighbor_diffs, Grid, GridError, ScalarField, MAX_DIMS};
use crate::systems::{Interval, ModelError, SubsystemModel};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solve options: {0}")]
    InvalidOptions(String),
    #[error("model has {model} state dims, grid has {grid}")]
    DimensionMismatch { model: usize, grid: usize },
    #[error("{0} field is not sampled on the solve grid")]
    GridMismatch(&'static str),
    #[error("non-finite target value at node {0}")]
    NonFiniteTarget(usize),
    #[error("constraint set is empty on the grid")]
    EmptyConstraint,
    #[error(
        "non-finite value at node {node} after step {step} (tau = {tau}); \
         the time step likely violates the CFL bound"
    )]
    NonFinite { step: usize, tau: f64, node: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    /// Target must be reached exactly at the horizon.
    ExactTime,
    /// Target may be reached at any time up to the horizon: `V <- min(V, l)`
    /// after every step.
    #[default]
    ReachWithin,
}

impl SolveMode {
    pub fn as_byte(self) -> u8 {
        match self {
            SolveMode::ExactTime => 0,
            SolveMode::ReachWithin => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(SolveMode::ExactTime),
            1 => Some(SolveMode::ReachWithin),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub horizon: f64,
    #[serde(default = "default_cfl")]
    pub cfl_factor: f64,
    #[serde(default)]
    pub mode: SolveMode,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

fn default_cfl() -> f64 {
    0.5
}

impl SolveOptions {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            cfl_factor: default_cfl(),
            mode: SolveMode::ReachWithin,
            snapshot_times: Vec::new(),
        }
    }

    pub fn with_mode(mut self, mode: SolveMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(SolveError::InvalidOptions(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.cfl_factor > 0.0 && self.cfl_factor <= 1.0) {
            return Err(SolveError::InvalidOptions(format!(
                "cfl_factor must lie in (0, 1], got {}",
                self.cfl_factor
            )));
        }
        if let Some(t) = self
            .snapshot_times
            .iter()
            .find(|&&t| !(0.0..=self.horizon).contains(&t))
        {
            return Err(SolveError::InvalidOptions(format!(
                "snapshot time {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub tau: f64,
    pub field: ScalarField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub field: ScalarField,
    pub label: String,
    pub horizon: f64,
    pub mode: SolveMode,
    pub solve_seconds: f64,
    pub steps: usize,
    pub snapshots: Vec<Snapshot>,
}

impl ValueFunction {
    /// Wraps a field that did not come out of a solve.
    pub fn from_field(field: ScalarField, horizon: f64, mode: SolveMode) -> Self {
        Self {
            field,
            label: String::new(),
            horizon,
            mode,
            solve_seconds: 0.0,
            steps: 0,
            snapshots: Vec::new(),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }
}

/// Largest stable step, `cfl_factor / sum_k (alpha_k / dx_k)`. A static
/// field (all `alpha_k = 0`) is advanced over the whole `horizon` at once.
pub fn cfl_timestep(grid: &Grid, alphas: &[f64], cfl_factor: f64, horizon: f64) -> f64 {
    let rate: f64 = alphas
        .iter()
        .zip(grid.spacing())
        .map(|(a, dx)| a / dx)
        .sum();
    if rate > 0.0 {
        cfl_factor / rate
    } else {
        horizon
    }
}

/// State box covered by the grid, one interval per dimension.
pub fn grid_box(grid: &Grid) -> Vec<Interval> {
    grid.axes()
        .iter()
        .map(|a| Interval { lo: a.min, hi: a.max })
        .collect()
}

/// One explicit Lax-Friedrichs step of length `dt`.
pub fn lax_friedrichs_update(
    field: &ScalarField,
    model: &SubsystemModel,
    alphas: &[f64],
    dt: f64,
) -> Result<ScalarField, SolveError> {
    let grid = field.grid();
    check_model(grid, model)?;
    if alphas.len() != grid.dim_count() {
        return Err(SolveError::InvalidOptions(format!(
            "{} dissipation coefficients for {} dims",
            alphas.len(),
            grid.dim_count()
        )));
    }
    let values = step_values(field, model, alphas, dt, None, None);
    if let Some(node) = values.iter().position(|v| !v.is_finite()) {
        return Err(SolveError::NonFinite {
            step: 1,
            tau: dt,
            node,
        });
    }
    Ok(ScalarField::from_parts_unchecked(grid.clone(), values))
}

/// Node update fused with optional freezing (`min` with `freeze` and the
/// previous value) and masking (`max` with `mask`), in that order.
fn step_values(
    field: &ScalarField,
    model: &SubsystemModel,
    alphas: &[f64],
    dt: f64,
    freeze: Option<&[f64]>,
    mask: Option<&[f64]>,
) -> Vec<f64> {
    let grid = field.grid();
    let n = grid.dim_count();
    let values = field.values();
    (0..grid.len())
        .into_par_iter()
        .map_init(
            || ([0usize; MAX_DIMS], [0.0f64; MAX_DIMS], [0.0f64; MAX_DIMS]),
            |(idx, z, p), flat| {
                grid.decode(flat, idx);
                let mut dissipation = 0.0;
                for k in 0..n {
                    let axis = grid.axis(k);
                    z[k] = axis.min + idx[k] as f64 * grid.spacing()[k];
                    let (left, right) = neighbor_diffs(grid, values, flat, idx[k], k);
                    p[k] = 0.5 * (left + right);
                    dissipation += alphas[k] * 0.5 * (right - left);
                }
                let h = model.hamiltonian_unchecked(&z[..n], &p[..n]);
                let mut v = values[flat] + dt * (h + dissipation);
                if v.is_nan() {
                    return v;
                }
                // running minimum keeps reach-within values nonincreasing in
                // tau even where boundary extrapolation is not monotone
                if let Some(l) = freeze {
                    v = v.min(l[flat]).min(values[flat]);
                }
                if let Some(c) = mask {
                    v = v.max(c[flat]);
                }
                v
            },
        )
        .collect()
}

fn check_model(grid: &Grid, model: &SubsystemModel) -> Result<(), SolveError> {
    if model.state_dim() != grid.dim_count() {
        return Err(SolveError::DimensionMismatch {
            model: model.state_dim(),
            grid: grid.dim_count(),
        });
    }
    Ok(())
}

pub fn solve_terminal_hjpde(
    grid: &Grid,
    model: &SubsystemModel,
    target: &ScalarField,
    constraint: Option<&ScalarField>,
    opts: &SolveOptions,
) -> Result<ValueFunction, SolveError> {
    let started = Instant::now();
    opts.validate()?;
    check_model(grid, model)?;
    if target.grid() != grid {
        return Err(SolveError::GridMismatch("target"));
    }
    if let Some(node) = target.values().iter().position(|v| !v.is_finite()) {
        return Err(SolveError::NonFiniteTarget(node));
    }
    if let Some(c) = constraint {
        if c.grid() != grid {
            return Err(SolveError::GridMismatch("constraint"));
        }
        if !c.values().iter().any(|&v| v <= 0.0) {
            return Err(SolveError::EmptyConstraint);
        }
    }

    let alphas = model.dissipation_bounds(&grid_box(grid))?;
    let dt = cfl_timestep(grid, &alphas, opts.cfl_factor, opts.horizon);

    let mut stops: Vec<f64> = opts.snapshot_times.clone();
    stops.push(opts.horizon);
    stops.sort_by(f64::total_cmp);
    stops.dedup();

    let freeze = (opts.mode == SolveMode::ReachWithin).then(|| target.values());
    let mask = constraint.map(ScalarField::values);

    let mut current = match mask {
        Some(c) => {
            let v = target
                .values()
                .iter()
                .zip(c)
                .map(|(a, b)| a.max(*b))
                .collect();
            ScalarField::from_parts_unchecked(grid.clone(), v)
        }
        None => target.clone(),
    };
    let mut snapshots = Vec::new();
    let mut tau = 0.0;
    let mut steps = 0;
    for &stop in &stops {
        while tau < stop {
            // land exactly on the stop when the remainder is within a hair of a full step
            let (step, next) = if tau + dt >= stop * (1.0 - 1e-12) {
                (stop - tau, stop)
            } else {
                (dt, tau + dt)
            };
            let values = step_values(&current, model, &alphas, step, freeze, mask);
            steps += 1;
            if let Some(node) = values.iter().position(|v| !v.is_finite()) {
                return Err(SolveError::NonFinite {
                    step: steps,
                    tau: next,
                    node,
                });
            }
            current = ScalarField::from_parts_unchecked(grid.clone(), values);
            tau = next;
        }
        if stop < opts.horizon || opts.snapshot_times.contains(&stop) {
            snapshots.push(Snapshot {
                tau: stop,
                field: current.clone(),
            });
        }
    }

    Ok(ValueFunction {
        field: current,
        label: model.label.clone(),
        horizon: opts.horizon,
        mode: opts.mode,
        solve_seconds: started.elapsed().as_secs_f64(),
        steps,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::shapes::ImplicitSurface;
    use crate::systems::{Dynamics, Interval};

    fn integrator(lo: f64, hi: f64) -> SubsystemModel {
        SubsystemModel::new(Dynamics::Integrator1d {
            input: Interval::new(lo, hi).unwrap(),
        })
    }

    fn line(min: f64, max: f64, n: usize) -> Grid {
        make_grid(&[min], &[max], &[n], &[false]).unwrap()
    }

    fn abs_target(grid: &Grid, radius: f64) -> ScalarField {
        ImplicitSurface::slab(0, 0.0, radius)
            .unwrap()
            .sample_on_grid(grid)
            .unwrap()
    }

    /// Linear interpolation of sign changes, scanning from the left.
    fn zero_crossings(grid: &Grid, v: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..v.len() - 1 {
            let (a, b) = (v[i], v[i + 1]);
            if (a <= 0.0) != (b <= 0.0) {
                let x0 = grid.axis(0).coordinate(i);
                out.push(x0 + grid.spacing()[0] * a / (a - b));
            }
        }
        out
    }

    #[test]
    fn cfl_examples() {
        let g = make_grid(&[0.0, 0.0], &[1.0, 1.0], &[11, 11], &[false, false]).unwrap();
        let dt = cfl_timestep(&g, &[12.0, 1.0], 0.5, 1.0);
        assert!((dt - 0.5 / 130.0).abs() < 1e-15);
        assert_eq!(cfl_timestep(&g, &[0.0, 0.0], 0.5, 2.5), 2.5);
        let g = line(0.0, 4.0, 5);
        assert_eq!(cfl_timestep(&g, &[1.0], 1.0, 9.0), 1.0);
    }

    #[test]
    fn static_model_leaves_field_unchanged() {
        let g = line(-3.0, 3.0, 31);
        let l = abs_target(&g, 1.0);
        let m = integrator(0.0, 0.0);
        let next = lax_friedrichs_update(&l, &m, &[0.0], 0.1).unwrap();
        assert_eq!(next.values(), l.values());

        let opts = SolveOptions::new(1.0).with_mode(SolveMode::ExactTime);
        let vf = solve_terminal_hjpde(&g, &m, &l, None, &opts).unwrap();
        assert_eq!(vf.values(), l.values());
        assert_eq!(vf.steps, 1);
    }

    #[test]
    fn unit_drift_shifts_affine_field() {
        // z' = 1 and l(z) = z: V(tau, z) = z + tau
        let g = line(-2.0, 2.0, 41);
        let l = ImplicitSurface::custom(vec![0], |z| z[0])
            .sample_on_grid(&g)
            .unwrap();
        let m = integrator(1.0, 1.0);
        let opts = SolveOptions::new(0.7).with_mode(SolveMode::ExactTime);
        let vf = solve_terminal_hjpde(&g, &m, &l, None, &opts).unwrap();
        for (i, v) in vf.values().iter().enumerate() {
            let z = g.axis(0).coordinate(i);
            assert!((v - (z + 0.7)).abs() < 1e-12, "node {i}: {v}");
        }
    }

    #[test]
    fn one_step_lowers_outside_value() {
        let g = line(-3.0, 3.0, 61);
        let l = abs_target(&g, 1.0);
        let m = integrator(-1.0, 1.0);
        let dt = 0.05;
        let next = lax_friedrichs_update(&l, &m, &[1.0], dt).unwrap();
        let i = 50; // z = 2
        assert!((g.axis(0).coordinate(i) - 2.0).abs() < 1e-12);
        assert!((next.values()[i] - (l.values()[i] - dt)).abs() < 1e-12);
    }

    #[test]
    fn integrator_brs_matches_analytic() {
        let g = line(-3.0, 3.0, 201);
        let l = abs_target(&g, 1.0);
        let m = integrator(-1.0, 1.0);
        let vf = solve_terminal_hjpde(&g, &m, &l, None, &SolveOptions::new(0.5)).unwrap();
        let zc = zero_crossings(&g, vf.values());
        assert_eq!(zc.len(), 2);
        assert!((zc[0] + 1.5).abs() <= 0.06, "{zc:?}");
        assert!((zc[1] - 1.5).abs() <= 0.06, "{zc:?}");
    }

    #[test]
    fn constraint_confines_brs() {
        let g = line(-3.0, 3.0, 201);
        let l = abs_target(&g, 1.0);
        let c = abs_target(&g, 1.2);
        let m = integrator(-1.0, 1.0);
        let vf = solve_terminal_hjpde(&g, &m, &l, Some(&c), &SolveOptions::new(0.5)).unwrap();
        for (i, v) in vf.values().iter().enumerate() {
            let z = g.axis(0).coordinate(i);
            if *v <= 0.0 {
                assert!(z.abs() <= 1.2 + 1e-12);
            }
            assert!(*v <= l.values()[i].max(c.values()[i]));
        }
    }

    #[test]
    fn grid_refinement_reduces_crossing_error() {
        let m = integrator(-1.0, 1.0);
        let errors: Vec<f64> = [101, 201, 401]
            .iter()
            .map(|&n| {
                let g = line(-3.0, 3.0, n);
                let l = abs_target(&g, 1.0);
                let vf = solve_terminal_hjpde(&g, &m, &l, None, &SolveOptions::new(0.5)).unwrap();
                zero_crossings(&g, vf.values())
                    .iter()
                    .map(|z| (z.abs() - 1.5).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        // crossings sit in affine regions, so the error is already at rounding level
        assert!(
            errors[1] <= errors[0] + 1e-12 && errors[2] <= errors[1] + 1e-12,
            "{errors:?}"
        );
        assert!(errors.iter().all(|&e| e <= 0.06));
    }

    #[test]
    fn snapshots_land_on_requested_times() {
        let g = line(-3.0, 3.0, 61);
        let l = abs_target(&g, 1.0);
        let m = integrator(-1.0, 1.0);
        let mut opts = SolveOptions::new(1.0);
        opts.snapshot_times = vec![0.0, 0.33];
        let vf = solve_terminal_hjpde(&g, &m, &l, None, &opts).unwrap();
        let taus: Vec<f64> = vf.snapshots.iter().map(|s| s.tau).collect();
        assert_eq!(taus, vec![0.0, 0.33]);
        assert_eq!(vf.snapshots[0].field.values(), l.values());
    }

    #[test]
    fn option_and_input_errors() {
        let g = line(-1.0, 1.0, 11);
        let l = abs_target(&g, 0.5);
        let m = integrator(-1.0, 1.0);
        let mut opts = SolveOptions::new(0.0);
        assert!(matches!(
            solve_terminal_hjpde(&g, &m, &l, None, &opts),
            Err(SolveError::InvalidOptions(_))
        ));
        opts.horizon = 1.0;
        opts.cfl_factor = 1.5;
        assert!(matches!(
            solve_terminal_hjpde(&g, &m, &l, None, &opts),
            Err(SolveError::InvalidOptions(_))
        ));
        let positive = ScalarField::constant(g.clone(), 1.0);
        assert!(matches!(
            solve_terminal_hjpde(&g, &m, &l, Some(&positive), &SolveOptions::new(1.0)),
            Err(SolveError::EmptyConstraint)
        ));
        let other = line(-1.0, 1.0, 12);
        assert!(matches!(
            solve_terminal_hjpde(&other, &m, &l, None, &SolveOptions::new(1.0)),
            Err(SolveError::GridMismatch("target"))
        ));
    }

    #[test]
    fn oversized_step_is_caught() {
        // far beyond the CFL bound the anti-diffusive error grows without limit
        let g = line(-1.0, 1.0, 41);
        let mut field = ImplicitSurface::custom(vec![0], |z| (40.0 * z[0]).sin())
            .sample_on_grid(&g)
            .unwrap();
        let m = integrator(-1.0, 1.0);
        let mut result = Ok(());
        for _ in 0..2000 {
            match lax_friedrichs_update(&field, &m, &[1.0], 1e3) {
                Ok(f) => field = f,
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        assert!(matches!(result, Err(SolveError::NonFinite { .. })));
    }
}
