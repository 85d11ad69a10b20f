use std::f64::consts::PI;

use hjreach::systems::{builtin_model, GameRole, Interval, ModelName, ParamMap, ParamValue, SubsystemModel};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn iv(lo: f64, hi: f64) -> Interval {
    Interval { lo, hi }
}

fn models() -> Vec<(SubsystemModel, Vec<Interval>)> {
    let with = |name: ModelName, entries: &[(&str, ParamValue)]| {
        let params: ParamMap = entries.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        builtin_model(name, &params).unwrap()
    };
    vec![
        (
            with(ModelName::Plane4d, &[]),
            vec![iv(-40.0, 40.0), iv(-40.0, 40.0), iv(-PI, PI), iv(6.0, 12.0)],
        ),
        (
            with(ModelName::PlaneXSub, &[("d_v", ParamValue::Range(iv(6.0, 9.0)))]),
            vec![iv(-40.0, 40.0), iv(-PI, PI)],
        ),
        (
            with(
                ModelName::PlaneXSub,
                &[
                    ("d_v", ParamValue::Range(iv(6.0, 12.0))),
                    ("paper_literal_sin", ParamValue::Flag(true)),
                ],
            ),
            vec![iv(-40.0, 40.0), iv(-PI, PI)],
        ),
        (
            with(ModelName::PlaneYSub, &[("d_psi", ParamValue::Range(iv(0.3, 2.0)))]),
            vec![iv(-40.0, 40.0), iv(6.0, 12.0)],
        ),
        (
            with(ModelName::Integrator1d, &[("u", ParamValue::Range(iv(-0.5, 2.0)))]),
            vec![iv(-3.0, 3.0)],
        ),
        (
            with(ModelName::Decoupled2d, &[("avoid", ParamValue::Flag(true))]),
            vec![iv(-2.0, 2.0), iv(-2.0, 2.0)],
        ),
        (
            with(
                ModelName::QuadLateral,
                &[
                    ("d0", ParamValue::Scalar(10.0)),
                    ("d1", ParamValue::Scalar(8.0)),
                    ("n0", ParamValue::Scalar(10.0)),
                    ("g", ParamValue::Scalar(9.81)),
                ],
            ),
            vec![iv(-5.0, 5.0), iv(-3.0, 3.0), iv(-0.5, 0.5), iv(-2.0, 2.0)],
        ),
    ]
}

fn draw(rng: &mut StdRng, ivs: &[Interval]) -> Vec<f64> {
    ivs.iter().map(|b| rng.gen_range(b.lo..=b.hi)).collect()
}

fn lattice(ivs: &[Interval], per_dim: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for b in ivs {
        let mut next = Vec::new();
        for prefix in &out {
            for k in 0..per_dim {
                let mut v: Vec<f64> = prefix.clone();
                v.push(b.lo + (b.hi - b.lo) * k as f64 / (per_dim - 1) as f64);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// Min over control samples of max over disturbance samples, with the
/// players swapped for avoid models.
fn brute(model: &SubsystemModel, z: &[f64], p: &[f64], per_dim: usize) -> f64 {
    let us = lattice(&model.controls(), per_dim);
    let ds = lattice(&model.disturbances(), per_dim);
    let avoid = model.role == GameRole::Avoid;
    let dot = |u: &[f64], d: &[f64]| -> f64 {
        let f = model.dynamics(z, u, d).unwrap();
        f.iter().zip(p).map(|(a, b)| a * b).sum()
    };
    if avoid {
        us.iter()
            .map(|u| ds.iter().map(|d| dot(u, d)).fold(f64::INFINITY, f64::min))
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        us.iter()
            .map(|u| ds.iter().map(|d| dot(u, d)).fold(f64::NEG_INFINITY, f64::max))
            .fold(f64::INFINITY, f64::min)
    }
}

#[test]
fn closed_form_hamiltonian_matches_sampled_game() {
    let mut rng = StdRng::seed_from_u64(3);
    for (model, state_box) in models() {
        let avoid = model.role == GameRole::Avoid;
        for _ in 0..200 {
            let z = draw(&mut rng, &state_box);
            let p: Vec<f64> = (0..z.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let h = model.hamiltonian(&z, &p).unwrap();
            let b = brute(&model, &z, &p, 101);
            assert!((h - b).abs() <= 2e-3, "{} z {z:?} p {p:?}: {h} vs {b}", model.label);
            if !avoid {
                assert!(h >= b - 1e-12, "{}: {h} below sampled {b}", model.label);
            }
        }
    }
}

#[test]
fn dissipation_bound_dominates_dynamics() {
    let mut rng = StdRng::seed_from_u64(5);
    for (model, state_box) in models() {
        let alphas = model.dissipation_bounds(&state_box).unwrap();
        let (us, ds) = (model.controls(), model.disturbances());
        for _ in 0..100_000 {
            let z = draw(&mut rng, &state_box);
            let u = draw(&mut rng, &us);
            let d = draw(&mut rng, &ds);
            let f = model.dynamics(&z, &u, &d).unwrap();
            for (k, (fk, a)) in f.iter().zip(&alphas).enumerate() {
                assert!(fk.abs() <= a + 1e-12, "{} dim {k}: |{fk}| > {a}", model.label);
            }
        }
    }
}

#[test]
fn literal_sin_flag_changes_x_drift() {
    let (cos_model, _) = &models()[1];
    let (sin_model, _) = &models()[2];
    let z = [0.0, 0.3];
    let fc = cos_model.dynamics(&z, &[0.0], &[8.0]).unwrap();
    let fs = sin_model.dynamics(&z, &[0.0], &[8.0]).unwrap();
    assert!((fc[0] - 8.0 * 0.3f64.cos()).abs() < 1e-12);
    assert!((fs[0] - 8.0 * 0.3f64.sin()).abs() < 1e-12);
}
