//! Builtin dynamics with closed-form optimized Hamiltonians
//! `H(z, p) = min_u max_d p . f(z, u, d)` and per-dimension bounds on
//! `|f_k|` used as global Lax-Friedrichs dissipation coefficients.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("model `{model}` requires parameter `{param}`")]
    MissingParam { model: &'static str, param: &'static str },
    #[error("parameter `{param}`: {reason}")]
    InvalidParam { param: String, reason: String },
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("dimension {dim} out of range for {state_dim}-dimensional model")]
    DimOutOfRange { dim: usize, state_dim: usize },
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
}

/// Closed interval `[lo, hi]`, serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, ModelError> {
        if lo <= hi && lo.is_finite() && hi.is_finite() {
            Ok(Self { lo, hi })
        } else {
            Err(ModelError::InvalidInterval { lo, hi })
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, s: f64) -> bool {
        self.lo <= s && s <= self.hi
    }

    /// `sup |s|` over the interval.
    pub fn abs_max(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = ModelError;
    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(iv: Interval) -> Self {
        [iv.lo, iv.hi]
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Ordered `(min, max)` of `coef * s` for `s` in `iv`.
pub fn interval_linear_extrema(coef: f64, iv: Interval) -> (f64, f64) {
    let a = coef * iv.lo;
    let b = coef * iv.hi;
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Exact `(min, max)` of `sin` over `iv`: endpoint values, plus the
/// extremal values of any critical point `±pi/2 + 2 pi k` inside.
pub fn interval_sin_extrema(iv: Interval) -> (f64, f64) {
    if iv.width() >= 2.0 * PI {
        return (-1.0, 1.0);
    }
    let (a, b) = (iv.lo.sin(), iv.hi.sin());
    let mut lo = a.min(b);
    let mut hi = a.max(b);
    if contains_phase(iv, FRAC_PI_2) {
        hi = 1.0;
    }
    if contains_phase(iv, -FRAC_PI_2) {
        lo = -1.0;
    }
    (lo, hi)
}

pub fn interval_cos_extrema(iv: Interval) -> (f64, f64) {
    interval_sin_extrema(Interval {
        lo: iv.lo + FRAC_PI_2,
        hi: iv.hi + FRAC_PI_2,
    })
}

/// Whether some `phase + 2 pi k` lies in `iv`.
fn contains_phase(iv: Interval, phase: f64) -> bool {
    let k = ((iv.lo - phase) / (2.0 * PI)).ceil();
    phase + 2.0 * PI * k <= iv.hi
}

fn sup_abs((lo, hi): (f64, f64)) -> f64 {
    lo.abs().max(hi.abs())
}

/// Which player grows the reachable set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameRole {
    /// Control minimizes, disturbance maximizes.
    #[default]
    Reach,
    /// Control maximizes, disturbance minimizes.
    Avoid,
}

impl GameRole {
    #[inline]
    fn control(self, (lo, hi): (f64, f64)) -> f64 {
        match self {
            GameRole::Reach => lo,
            GameRole::Avoid => hi,
        }
    }

    #[inline]
    fn disturbance(self, (lo, hi): (f64, f64)) -> f64 {
        match self {
            GameRole::Reach => hi,
            GameRole::Avoid => lo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Plane4d,
    PlaneXSub,
    PlaneYSub,
    Integrator1d,
    Decoupled2d,
    QuadLateral,
}

impl ModelName {
    pub const ALL: [ModelName; 6] = [
        ModelName::Plane4d,
        ModelName::PlaneXSub,
        ModelName::PlaneYSub,
        ModelName::Integrator1d,
        ModelName::Decoupled2d,
        ModelName::QuadLateral,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Plane4d => "plane4d",
            ModelName::PlaneXSub => "plane_x_sub",
            ModelName::PlaneYSub => "plane_y_sub",
            ModelName::Integrator1d => "integrator1d",
            ModelName::Decoupled2d => "decoupled2d",
            ModelName::QuadLateral => "quad_lateral",
        }
    }
}

impl FromStr for ModelName {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelName::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ModelError::UnknownModel(s.to_string()))
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Flag(bool),
    Scalar(f64),
    Range(Interval),
}

pub type ParamMap = BTreeMap<String, ParamValue>;

fn interval_param(
    params: &ParamMap,
    model: &'static str,
    key: &'static str,
    default: Option<Interval>,
) -> Result<Interval, ModelError> {
    match params.get(key) {
        Some(ParamValue::Range(iv)) => Ok(*iv),
        Some(other) => Err(ModelError::InvalidParam {
            param: key.into(),
            reason: format!("expected an interval, got {other:?}"),
        }),
        None => default.ok_or(ModelError::MissingParam { model, param: key }),
    }
}

fn scalar_param(params: &ParamMap, model: &'static str, key: &'static str) -> Result<f64, ModelError> {
    match params.get(key) {
        Some(ParamValue::Scalar(v)) if v.is_finite() => Ok(*v),
        Some(other) => Err(ModelError::InvalidParam {
            param: key.into(),
            reason: format!("expected a finite number, got {other:?}"),
        }),
        None => Err(ModelError::MissingParam { model, param: key }),
    }
}

fn flag_param(params: &ParamMap, key: &str) -> Result<bool, ModelError> {
    match params.get(key) {
        Some(ParamValue::Flag(b)) => Ok(*b),
        Some(other) => Err(ModelError::InvalidParam {
            param: key.into(),
            reason: format!("expected a boolean, got {other:?}"),
        }),
        None => Ok(false),
    }
}

const UNIT: Interval = Interval { lo: -1.0, hi: 1.0 };

/// Dynamics of a builtin model, with its bounds.
#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    /// State `(p_x, p_y, psi, v)`: `p_x' = v cos psi, p_y' = v sin psi,
    /// psi' = omega, v' = a`.
    Plane4d { turn_rate: Interval, accel: Interval },
    /// State `(p_x, psi)`: `p_x' = d_v cos psi, psi' = omega`, with the
    /// speed `d_v` as disturbance. `literal_sin` uses `sin psi` instead.
    PlaneXSub {
        turn_rate: Interval,
        speed: Interval,
        literal_sin: bool,
    },
    /// State `(p_y, v)`: `p_y' = v sin d_psi, v' = a`, with the heading
    /// `d_psi` as disturbance.
    PlaneYSub { accel: Interval, heading: Interval },
    /// `z' = u`.
    Integrator1d { input: Interval },
    /// `x' = u_x, y' = u_y`.
    Decoupled2d { input_x: Interval, input_y: Interval },
    /// Lateral quadrotor near hover: `z1' = z2, z2' = g tan z3, z3' = z4,
    /// z4' = -d0 z3 - d1 z4 + n0 u`.
    QuadLateral {
        input: Interval,
        d0: f64,
        d1: f64,
        n0: f64,
        gravity: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemModel {
    pub dynamics: Dynamics,
    pub role: GameRole,
    pub label: String,
}

pub fn builtin_model(name: ModelName, params: &ParamMap) -> Result<SubsystemModel, ModelError> {
    let model = name.as_str();
    let dynamics = match name {
        ModelName::Plane4d => Dynamics::Plane4d {
            turn_rate: interval_param(params, model, "omega", Some(UNIT))?,
            accel: interval_param(params, model, "a", Some(UNIT))?,
        },
        ModelName::PlaneXSub => Dynamics::PlaneXSub {
            turn_rate: interval_param(params, model, "omega", Some(UNIT))?,
            speed: interval_param(params, model, "d_v", None)?,
            literal_sin: flag_param(params, "paper_literal_sin")?,
        },
        ModelName::PlaneYSub => Dynamics::PlaneYSub {
            accel: interval_param(params, model, "a", Some(UNIT))?,
            heading: interval_param(params, model, "d_psi", None)?,
        },
        ModelName::Integrator1d => Dynamics::Integrator1d {
            input: interval_param(params, model, "u", Some(UNIT))?,
        },
        ModelName::Decoupled2d => Dynamics::Decoupled2d {
            input_x: interval_param(params, model, "u_x", Some(UNIT))?,
            input_y: interval_param(params, model, "u_y", Some(UNIT))?,
        },
        ModelName::QuadLateral => Dynamics::QuadLateral {
            input: interval_param(params, model, "u", Some(UNIT))?,
            d0: scalar_param(params, model, "d0")?,
            d1: scalar_param(params, model, "d1")?,
            n0: scalar_param(params, model, "n0")?,
            gravity: scalar_param(params, model, "g")?,
        },
    };
    let role = if flag_param(params, "avoid")? {
        GameRole::Avoid
    } else {
        GameRole::Reach
    };
    Ok(SubsystemModel {
        dynamics,
        role,
        label: model.to_string(),
    })
}

impl SubsystemModel {
    pub fn new(dynamics: Dynamics) -> Self {
        let label = match &dynamics {
            Dynamics::Plane4d { .. } => ModelName::Plane4d,
            Dynamics::PlaneXSub { .. } => ModelName::PlaneXSub,
            Dynamics::PlaneYSub { .. } => ModelName::PlaneYSub,
            Dynamics::Integrator1d { .. } => ModelName::Integrator1d,
            Dynamics::Decoupled2d { .. } => ModelName::Decoupled2d,
            Dynamics::QuadLateral { .. } => ModelName::QuadLateral,
        }
        .to_string();
        Self {
            dynamics,
            role: GameRole::Reach,
            label,
        }
    }

    pub fn state_dim(&self) -> usize {
        match self.dynamics {
            Dynamics::Integrator1d { .. } => 1,
            Dynamics::PlaneXSub { .. } | Dynamics::PlaneYSub { .. } | Dynamics::Decoupled2d { .. } => 2,
            Dynamics::Plane4d { .. } | Dynamics::QuadLateral { .. } => 4,
        }
    }

    pub fn controls(&self) -> Vec<Interval> {
        match &self.dynamics {
            Dynamics::Plane4d { turn_rate, accel } => vec![*turn_rate, *accel],
            Dynamics::PlaneXSub { turn_rate, .. } => vec![*turn_rate],
            Dynamics::PlaneYSub { accel, .. } => vec![*accel],
            Dynamics::Integrator1d { input } | Dynamics::QuadLateral { input, .. } => vec![*input],
            Dynamics::Decoupled2d { input_x, input_y } => vec![*input_x, *input_y],
        }
    }

    pub fn disturbances(&self) -> Vec<Interval> {
        match &self.dynamics {
            Dynamics::PlaneXSub { speed, .. } => vec![*speed],
            Dynamics::PlaneYSub { heading, .. } => vec![*heading],
            _ => vec![],
        }
    }

    /// `f(z, u, d)` for explicit control and disturbance values.
    pub fn dynamics(&self, z: &[f64], u: &[f64], d: &[f64]) -> Result<Vec<f64>, ModelError> {
        self.check_len("state", z.len(), self.state_dim())?;
        self.check_len("control", u.len(), self.controls().len())?;
        self.check_len("disturbance", d.len(), self.disturbances().len())?;
        Ok(match &self.dynamics {
            Dynamics::Plane4d { .. } => {
                vec![z[3] * z[2].cos(), z[3] * z[2].sin(), u[0], u[1]]
            }
            Dynamics::PlaneXSub { literal_sin, .. } => {
                let heading = if *literal_sin { z[1].sin() } else { z[1].cos() };
                vec![d[0] * heading, u[0]]
            }
            Dynamics::PlaneYSub { .. } => vec![z[1] * d[0].sin(), u[0]],
            Dynamics::Integrator1d { .. } => vec![u[0]],
            Dynamics::Decoupled2d { .. } => vec![u[0], u[1]],
            Dynamics::QuadLateral {
                d0,
                d1,
                n0,
                gravity,
                ..
            } => vec![
                z[1],
                gravity * z[2].tan(),
                z[3],
                -d0 * z[2] - d1 * z[3] + n0 * u[0],
            ],
        })
    }

    pub fn hamiltonian(&self, state: &[f64], costate: &[f64]) -> Result<f64, ModelError> {
        self.check_len("state", state.len(), self.state_dim())?;
        self.check_len("costate", costate.len(), self.state_dim())?;
        Ok(self.hamiltonian_unchecked(state, costate))
    }

    /// Closed-form optimized Hamiltonian; slices must have `state_dim`
    /// entries.
    #[inline]
    pub(crate) fn hamiltonian_unchecked(&self, z: &[f64], p: &[f64]) -> f64 {
        let role = self.role;
        match &self.dynamics {
            Dynamics::Plane4d { turn_rate, accel } => {
                let (s, c) = z[2].sin_cos();
                p[0] * z[3] * c
                    + p[1] * z[3] * s
                    + role.control(interval_linear_extrema(p[2], *turn_rate))
                    + role.control(interval_linear_extrema(p[3], *accel))
            }
            Dynamics::PlaneXSub {
                turn_rate,
                speed,
                literal_sin,
            } => {
                let heading = if *literal_sin { z[1].sin() } else { z[1].cos() };
                role.disturbance(interval_linear_extrema(p[0] * heading, *speed))
                    + role.control(interval_linear_extrema(p[1], *turn_rate))
            }
            Dynamics::PlaneYSub { accel, heading } => {
                let coef = p[0] * z[1];
                let (smin, smax) = interval_sin_extrema(*heading);
                let (a, b) = (coef * smin, coef * smax);
                let range = if a <= b { (a, b) } else { (b, a) };
                role.disturbance(range) + role.control(interval_linear_extrema(p[1], *accel))
            }
            Dynamics::Integrator1d { input } => role.control(interval_linear_extrema(p[0], *input)),
            Dynamics::Decoupled2d { input_x, input_y } => {
                role.control(interval_linear_extrema(p[0], *input_x))
                    + role.control(interval_linear_extrema(p[1], *input_y))
            }
            Dynamics::QuadLateral {
                input,
                d0,
                d1,
                n0,
                gravity,
            } => {
                p[0] * z[1]
                    + p[1] * gravity * z[2].tan()
                    + p[2] * z[3]
                    + p[3] * (-d0 * z[2] - d1 * z[3])
                    + role.control(interval_linear_extrema(p[3] * n0, *input))
            }
        }
    }

    /// `sup |f_dim|` over the state box and all admissible inputs.
    pub fn dissipation_bound(&self, dim: usize, state_box: &[Interval]) -> Result<f64, ModelError> {
        let n = self.state_dim();
        if dim >= n {
            return Err(ModelError::DimOutOfRange { dim, state_dim: n });
        }
        self.check_len("state box", state_box.len(), n)?;
        let b = state_box;
        Ok(match &self.dynamics {
            Dynamics::Plane4d { turn_rate, accel } => match dim {
                0 => b[3].abs_max() * sup_abs(interval_cos_extrema(b[2])),
                1 => b[3].abs_max() * sup_abs(interval_sin_extrema(b[2])),
                2 => turn_rate.abs_max(),
                _ => accel.abs_max(),
            },
            Dynamics::PlaneXSub {
                turn_rate,
                speed,
                literal_sin,
            } => match dim {
                0 => {
                    let heading = if *literal_sin {
                        interval_sin_extrema(b[1])
                    } else {
                        interval_cos_extrema(b[1])
                    };
                    speed.abs_max() * sup_abs(heading)
                }
                _ => turn_rate.abs_max(),
            },
            Dynamics::PlaneYSub { accel, heading } => match dim {
                0 => b[1].abs_max() * sup_abs(interval_sin_extrema(*heading)),
                _ => accel.abs_max(),
            },
            Dynamics::Integrator1d { input } => input.abs_max(),
            Dynamics::Decoupled2d { input_x, input_y } => match dim {
                0 => input_x.abs_max(),
                _ => input_y.abs_max(),
            },
            Dynamics::QuadLateral {
                input,
                d0,
                d1,
                n0,
                gravity,
            } => match dim {
                0 => b[1].abs_max(),
                1 => {
                    if b[2].abs_max() >= FRAC_PI_2 {
                        return Err(ModelError::InvalidParam {
                            param: "state box".into(),
                            reason: "pitch range must lie inside (-pi/2, pi/2)".into(),
                        });
                    }
                    // tan is increasing on (-pi/2, pi/2)
                    gravity.abs() * b[2].lo.tan().abs().max(b[2].hi.tan().abs())
                }
                2 => b[3].abs_max(),
                _ => {
                    let terms = [
                        interval_linear_extrema(-d0, b[2]),
                        interval_linear_extrema(-d1, b[3]),
                        interval_linear_extrema(*n0, *input),
                    ];
                    let lo: f64 = terms.iter().map(|t| t.0).sum();
                    let hi: f64 = terms.iter().map(|t| t.1).sum();
                    lo.abs().max(hi.abs())
                }
            },
        })
    }

    pub fn dissipation_bounds(&self, state_box: &[Interval]) -> Result<Vec<f64>, ModelError> {
        (0..self.state_dim())
            .map(|k| self.dissipation_bound(k, state_box))
            .collect()
    }

    fn check_len(&self, what: &'static str, got: usize, expected: usize) -> Result<(), ModelError> {
        if got == expected {
            Ok(())
        } else {
            Err(ModelError::DimensionMismatch { what, expected, got })
        }
    }
}

pub fn hamiltonian(model: &SubsystemModel, state: &[f64], costate: &[f64]) -> Result<f64, ModelError> {
    model.hamiltonian(state, costate)
}

pub fn dissipation_bound(
    model: &SubsystemModel,
    dim: usize,
    state_box: &[Interval],
) -> Result<f64, ModelError> {
    model.dissipation_bound(dim, state_box)
}
