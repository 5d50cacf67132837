//! Characteristic flow against billiard geometry and conservation laws.

use std::f64::consts::PI;

use nalgebra::Vector2;
use proptest::prelude::*;
use vpconvex_core::flow::{bounce_gap_check, count_reflections, velocity_lemma_check};
use vpconvex_core::{advance, reflect, Domain2, FieldModel, FlowOptions, PhaseState};

fn disk() -> Domain2 {
    Domain2::unit_disk()
}

/// Free billiard in the unit disk: `α = ½(|v|² − L²)` with `L = x × v`.
fn billiard_alpha(x: &Vector2<f64>, v: &Vector2<f64>) -> f64 {
    let l = x[0] * v[1] - x[1] * v[0];
    0.5 * (v.norm_squared() - l * l)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn reflection_is_an_isometric_involution(
        vx in -10.0..10.0f64, vy in -10.0..10.0f64, theta in 0.0..(2.0 * PI)
    ) {
        let v = Vector2::new(vx, vy);
        let n = Vector2::new(theta.cos(), theta.sin());
        let r = reflect(&v, &n);
        let scale = v.norm().max(1.0);
        prop_assert!((reflect(&r, &n) - v).norm() <= 1e-12 * scale);
        prop_assert!((r.norm() - v.norm()).abs() <= 1e-12 * scale);
        prop_assert!((r.dot(&n) + v.dot(&n)).abs() <= 1e-12 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn free_billiard_conserves_alpha(
        r in 0.0..0.95f64, phi in 0.0..(2.0 * PI), speed in 0.5..3.0f64, psi in 0.0..(2.0 * PI)
    ) {
        let x = Vector2::new(r * phi.cos(), r * phi.sin());
        let v = Vector2::new(psi.cos(), psi.sin()) * speed;
        let expected = billiard_alpha(&x, &v);
        prop_assume!(expected > 1e-3);
        let tr = advance(&disk(), &PhaseState::new(0.0, x, v), &FieldModel::zero(), 8.0, &FlowOptions::default()).unwrap();
        for (_, a) in &tr.alpha_series {
            prop_assert!((a - expected).abs() <= 1e-8 * expected);
        }
        for ev in &tr.events {
            prop_assert!((ev.alpha_at_event - expected).abs() <= 1e-8 * expected);
            prop_assert!((ev.x.norm() - 1.0).abs() <= 1e-12);
        }
    }
}

/// Chords of the unit disk: a particle leaving the boundary with angle `φ` to
/// the inward normal returns after `2cos φ/|v|`.
#[test]
fn chord_billiard_gaps_and_bound() {
    for phi in [0.1_f64, 0.4, 0.8, 1.2, 1.5] {
        let speed = 1.3;
        // Start at the chord midpoint so the first impact is at a known time.
        let half = phi.cos();
        let x = Vector2::new(0.0, -phi.sin());
        let v = Vector2::new(speed, 0.0);
        let tr = advance(&disk(), &PhaseState::new(0.0, x, v), &FieldModel::zero(), 12.0, &FlowOptions::default()).unwrap();
        assert!(tr.events.len() >= 3);
        let expected_gap = 2.0 * half / speed;
        assert!((tr.events[0].tau - half / speed).abs() < 1e-10);
        for w in tr.events.windows(2) {
            assert!((w[1].tau - w[0].tau - expected_gap).abs() < 1e-9, "phi = {phi}");
        }
        let report = bounce_gap_check(&disk(), &tr, &FieldModel::zero());
        for p in &report.pairs {
            assert!((p.ratio - 1.0).abs() <= 1e-6, "phi = {phi}, ratio {}", p.ratio);
        }
    }
}

#[test]
fn diameter_billiard_hits_at_odd_times() {
    let s = PhaseState::new(0.0, Vector2::zeros(), Vector2::new(1.0, 0.0));
    let tr = advance(&disk(), &s, &FieldModel::zero(), 7.5, &FlowOptions::default()).unwrap();
    let taus: Vec<f64> = tr.events.iter().map(|e| e.tau).collect();
    assert_eq!(taus.len(), 4);
    for (k, t) in taus.iter().enumerate() {
        assert!((t - (2 * k + 1) as f64).abs() < 1e-12);
    }
}

/// `½|v|² + U(x)` is invariant under `ẍ = −∇U` and under specular reflection.
#[test]
fn appendix_field_conserves_particle_energy() {
    let field = FieldModel::appendix();
    for (x, v) in [
        (Vector2::new(-0.9, 0.0), Vector2::new(-0.2, 1.0).normalize() * 0.9),
        (Vector2::new(0.3, 0.4), Vector2::new(1.0, 0.3)),
        (Vector2::new(-0.5, -0.5), Vector2::new(0.1, -2.0)),
    ] {
        let energy = |s: &PhaseState| 0.5 * s.v.norm_squared() + field.potential(&s.x);
        let tr = advance(&disk(), &PhaseState::new(0.0, x, v), &field, 1.0, &FlowOptions::default()).unwrap();
        let e0 = energy(&tr.samples[0]);
        for s in &tr.samples {
            assert!((energy(s) - e0).abs() <= 1e-8, "drift {}", energy(s) - e0);
        }
    }
}

#[test]
fn static_field_flow_is_reversible() {
    let field = FieldModel::appendix();
    let opts = FlowOptions::default();
    let mut total = 0.0;
    let starts = [
        (Vector2::new(-0.6, 0.1), Vector2::new(0.4, 1.1)),
        (Vector2::new(0.2, -0.3), Vector2::new(-1.5, 0.2)),
        (Vector2::new(0.0, 0.7), Vector2::new(0.8, 0.8)),
    ];
    for (x, v) in starts {
        let fwd = advance(&disk(), &PhaseState::new(0.0, x, v), &field, 2.0, &opts).unwrap();
        let end = fwd.final_state();
        assert!(!fwd.events.is_empty());
        let back = advance(&disk(), &PhaseState::new(0.0, end.x, -end.v), &field, 2.0, &opts).unwrap();
        total += (back.final_state().x - x).norm();
    }
    assert!(total / starts.len() as f64 <= 1e-6);
}

#[test]
fn tangential_boundary_start_stalls() {
    let x = Vector2::new(1.0, 0.0);
    let v = Vector2::new(0.0, 1.0);
    let err = advance(&disk(), &PhaseState::new(0.0, x, v), &FieldModel::appendix(), 1.0, &FlowOptions::default())
        .unwrap_err();
    assert_eq!(err.code(), "GrazingStall");
}

#[test]
fn reflection_count_respects_bound() {
    let field = FieldModel::appendix();
    for x0 in [-0.8, -0.9, -0.95] {
        let s = PhaseState::new(0.0, Vector2::new(x0, 0.0), Vector2::new(0.0, 2.0));
        let tr = advance(&disk(), &s, &field, 2.0, &FlowOptions::default()).unwrap();
        for window in [(0.0, 0.5), (0.5, 1.5), (0.0, 2.0)] {
            let c = count_reflections(&disk(), &tr, &field, window);
            assert!(c.holds(), "x0 = {x0}, {window:?}: k = {} bound {}", c.k, c.k_bound);
        }
    }
}

#[test]
fn velocity_lemma_holds_near_the_boundary() {
    let field = FieldModel::appendix();
    let s = PhaseState::new(0.0, Vector2::new(-0.93, 0.0), Vector2::new(0.0, 1.5));
    let tr = advance(&disk(), &s, &field, 3.0, &FlowOptions::default()).unwrap();
    let report = velocity_lemma_check(&disk(), &tr, &field);
    assert!(report.collar_samples > 100);
    assert!(report.fraction_ok >= 0.99, "{report:?}");
}

#[test]
fn ellipse_billiard_conserves_speed_and_stays_inside() {
    let d = Domain2::ellipse(1.5, 0.8).unwrap();
    let s = PhaseState::new(0.0, Vector2::new(0.2, 0.1), Vector2::new(0.7, 1.1));
    let tr = advance(&d, &s, &FieldModel::zero(), 10.0, &FlowOptions::default()).unwrap();
    assert!(tr.events.len() > 5);
    let speed = s.v.norm();
    for p in &tr.samples {
        assert!(d.xi(&p.x) <= 1e-12);
        assert!((p.v.norm() - speed).abs() <= 1e-12 * speed);
    }
}
