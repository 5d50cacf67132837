//! Field solvers against independent radial oracles.

use std::f64::consts::PI;

use nalgebra::Vector2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vpconvex_core::field::{
    boundary_integral, grid_poisson_solve, vpme_poisson_solve, vpme_split_solve, BoundaryCondition, DensitySpec,
    GreenField, GreenQuadrature, PolarGrid, VpmeMethod, VpmeOptions,
};
use vpconvex_core::Error;

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn node(grid: &PolarGrid, i: usize) -> usize {
    if i == 0 {
        0
    } else {
        grid.index(i, 0)
    }
}

fn centred_bump(radius: f64) -> DensitySpec {
    DensitySpec::appendix_bump(Vector2::zeros(), radius, 1.0)
}

/// `M(r) = ∫_{|x|<r} ρ`.
fn enclosed_mass(rho: &DensitySpec, r: f64) -> f64 {
    simpson(|s| 2.0 * PI * s * rho.value_at(&Vector2::new(s, 0.0)), 0.0, r, 4000)
}

/// Dirichlet potential of a radial density: `U(r) = ∫_r^1 M(s)/(2πs) ds`.
fn radial_potential(rho: &DensitySpec, r: f64) -> f64 {
    simpson(|s| if s == 0.0 { 0.0 } else { enclosed_mass(rho, s) / (2.0 * PI * s) }, r, 1.0, 200)
}

#[test]
fn green_and_grid_fields_obey_gauss_law() {
    let rho = centred_bump(0.7);
    let green = GreenField::new(&rho, GreenQuadrature::default()).unwrap();
    let grid = PolarGrid::new(128, 64);
    let sol = grid_poisson_solve(&rho, &BoundaryCondition::Dirichlet, &grid).unwrap();
    for i in [16, 32, 64, 96, 112, 127] {
        let r = grid.radius(i);
        let expected = enclosed_mass(&rho, r) / (2.0 * PI * r);
        let x = Vector2::new(r, 0.0);
        let eg = green.field(&x);
        assert!((eg.norm() - expected).abs() <= 1e-6 * expected, "green at r = {r}");
        assert!(eg.dot(&x) > 0.0);
        let k = grid.index(i, 0);
        assert!((sol.field[k].norm() - expected).abs() <= 2e-3 * expected, "grid at r = {r}");
    }
}

#[test]
fn dirichlet_potential_matches_radial_quadrature() {
    let rho = centred_bump(0.8);
    let grid = PolarGrid::new(128, 32);
    let sol = grid_poisson_solve(&rho, &BoundaryCondition::Dirichlet, &grid).unwrap();
    let scale = radial_potential(&rho, 0.0);
    for i in (0..=128).step_by(16) {
        let k = node(&grid, i);
        let expected = radial_potential(&rho, grid.radius(i));
        assert!((sol.potential[k] - expected).abs() <= 1e-4 * scale, "r = {}", grid.radius(i));
    }
}

/// Finite-volume Newton solve of `U'' + U'/r = e^U − ρ(r) − 1`, `U'(0) = 0`,
/// `U(1) = 0` on a uniform radial mesh.
fn radial_vpme(rho: impl Fn(f64) -> f64, n: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let mut u = vec![0.0; n + 1];
    for _ in 0..50 {
        // Residual F_i and tridiagonal Jacobian (a_i, b_i, c_i), unknowns 0..n-1.
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut f = vec![0.0; n];
        for i in 0..n {
            let r = i as f64 * h;
            let (rp, vol) = if i == 0 { (0.5 * h, h * h / 8.0) } else { (r + 0.5 * h, r * h) };
            let rm = if i == 0 { 0.0 } else { r - 0.5 * h };
            let flux_p = rp * (u[i + 1] - u[i]) / h;
            let flux_m = if i == 0 { 0.0 } else { rm * (u[i] - u[i - 1]) / h };
            f[i] = flux_p - flux_m - vol * (u[i].exp() - rho(r) - 1.0);
            b[i] = -rp / h - rm / h - vol * u[i].exp();
            if i + 1 < n {
                c[i] = rp / h;
            }
            if i > 0 {
                a[i] = rm / h;
            }
        }
        // Thomas algorithm for J δ = −F.
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        cp[0] = c[0] / b[0];
        dp[0] = -f[0] / b[0];
        for i in 1..n {
            let m = b[i] - a[i] * cp[i - 1];
            cp[i] = c[i] / m;
            dp[i] = (-f[i] - a[i] * dp[i - 1]) / m;
        }
        let mut delta = vec![0.0; n];
        delta[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            delta[i] = dp[i] - cp[i] * delta[i + 1];
        }
        let step = delta.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        for i in 0..n {
            u[i] += delta[i];
        }
        if step < 1e-14 {
            break;
        }
    }
    u
}

#[test]
fn radial_vpme_matches_ode_oracle() {
    let rho = DensitySpec::appendix_bump(Vector2::zeros(), 0.9, 3.0);
    let n = 20_000;
    let oracle = radial_vpme(|r| rho.value_at(&Vector2::new(r, 0.0)), n);
    let grid = PolarGrid::new(128, 32);
    let sol = vpme_poisson_solve(&rho, &BoundaryCondition::Dirichlet, &grid, VpmeMethod::DampedNewton, &VpmeOptions::default())
        .unwrap();
    let scale = oracle.iter().fold(0.0_f64, |m, u| m.max(u.abs()));
    assert!(scale > 0.05, "oracle should be nontrivial");
    for i in 0..=128 {
        let k = node(&grid, i);
        let expected = oracle[i * n / 128];
        assert!((sol.potential[k] - expected).abs() <= 1e-3 * scale, "i = {i}");
    }
}

#[test]
fn vpme_zero_density_gives_zero_potential() {
    let grid = PolarGrid::new(64, 64);
    for method in [VpmeMethod::DampedNewton, VpmeMethod::EnergyDescent] {
        let sol = vpme_poisson_solve(&DensitySpec::zero(), &BoundaryCondition::Dirichlet, &grid, method, &VpmeOptions::default())
            .unwrap();
        assert!(sol.potential.iter().all(|u| u.abs() <= 1e-10));
    }
}

#[test]
fn vpme_minimiser_is_independent_of_start() {
    let grid = PolarGrid::new(48, 64);
    let rho = DensitySpec::appendix_default();
    let a = vpme_poisson_solve(&rho, &BoundaryCondition::Dirichlet, &grid, VpmeMethod::DampedNewton, &VpmeOptions::default())
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut noise: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    for k in grid.boundary_nodes() {
        noise[k] = 0.0;
    }
    let b = vpme_poisson_solve(
        &rho,
        &BoundaryCondition::Dirichlet,
        &grid,
        VpmeMethod::EnergyDescent,
        &VpmeOptions { initial: Some(noise) },
    )
    .unwrap();
    let diff = a.potential.iter().zip(&b.potential).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(diff <= 1e-8, "sup difference {diff}");
    assert!(a.hopf_certified() && b.hopf_certified());
}

#[test]
fn energy_descent_never_increases_energy() {
    let grid = PolarGrid::new(32, 32);
    let rho = DensitySpec::appendix_default();
    let sol = vpme_poisson_solve(&rho, &BoundaryCondition::Dirichlet, &grid, VpmeMethod::EnergyDescent, &VpmeOptions::default())
        .unwrap();
    let h = &sol.stats.energy_history;
    assert!(h.len() > 2);
    assert!(h.windows(2).all(|w| w[1] <= w[0] + 1e-14 * w[0].abs().max(1.0)));
}

#[test]
fn split_solution_matches_direct_solve() {
    let grid = PolarGrid::new(64, 64);
    let rho = DensitySpec::appendix_default();
    for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::neumann_constant(&grid, -0.3)] {
        let direct =
            vpme_poisson_solve(&rho, &bc, &grid, VpmeMethod::DampedNewton, &VpmeOptions::default()).unwrap();
        let split = vpme_split_solve(&rho, &bc, &grid).unwrap();
        let parts = split.split.as_ref().expect("split parts recorded");
        for k in 0..grid.len() {
            let sum = parts.regular[k] + parts.singular[k];
            assert!((sum - direct.potential[k]).abs() <= 1e-6, "{bc:?} node {k}");
        }
    }
}

#[test]
fn neumann_linear_gate_uses_total_mass() {
    let grid = PolarGrid::new(32, 64);
    let rho = DensitySpec::appendix_default();
    let exact = -rho.total_mass() / (2.0 * PI);
    let ok = BoundaryCondition::neumann_constant(&grid, exact);
    let sol = grid_poisson_solve(&rho, &ok, &grid).unwrap();
    assert!(sol.mean_potential().abs() < 1e-10);
    let off = BoundaryCondition::neumann_constant(&grid, exact + 1e-7);
    match grid_poisson_solve(&rho, &off, &grid) {
        Err(e @ Error::IncompatibleNeumannData { .. }) => assert_eq!(e.code(), "IncompatibleNeumannData"),
        other => panic!("expected IncompatibleNeumannData, got {other:?}"),
    }
}

#[test]
fn vpme_neumann_gates() {
    let grid = PolarGrid::new(32, 64);
    let rho = DensitySpec::appendix_default();
    let mut h = vec![-0.1; grid.ntheta];
    h[5] = 0.0;
    let limit = (rho.total_mass() + PI) / (2.0 * PI);
    for bc in [
        BoundaryCondition::Neumann(h),
        BoundaryCondition::neumann_constant(&grid, -limit),
        BoundaryCondition::neumann_constant(&grid, 0.2),
    ] {
        let err = vpme_poisson_solve(&rho, &bc, &grid, VpmeMethod::DampedNewton, &VpmeOptions::default()).unwrap_err();
        assert_eq!(err.code(), "NeumannConditionViolated");
    }
    let inside = BoundaryCondition::neumann_constant(&grid, -0.99 * limit);
    assert!(vpme_poisson_solve(&rho, &inside, &grid, VpmeMethod::DampedNewton, &VpmeOptions::default()).is_ok());
}

/// The one-sided normal derivative of the solution approaches the data at
/// second order.
#[test]
fn neumann_solution_has_requested_flux() {
    let rho = DensitySpec::appendix_default();
    let errors: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&nr| {
            let grid = PolarGrid::new(nr, 64);
            let h: Vec<f64> = (0..grid.ntheta)
                .map(|j| -rho.total_mass() / (2.0 * PI) + 0.05 * grid.angle(j).cos())
                .collect();
            assert!((boundary_integral(&h) + rho.total_mass()).abs() < 1e-12);
            let sol = grid_poisson_solve(&rho, &BoundaryCondition::Neumann(h.clone()), &grid).unwrap();
            grid.normal_derivative(&sol.potential)
                .iter()
                .zip(&h)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
        })
        .collect();
    assert!(errors[2] < 1e-2, "{errors:?}");
    assert!(errors[1] / errors[2] > 3.0 && errors[0] / errors[1] > 3.0, "{errors:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn linear_solve_is_linear(a in -2.0..2.0f64, b in -2.0..2.0f64, cx in -0.3..0.3f64) {
        let grid = PolarGrid::new(24, 32);
        let r1 = DensitySpec::appendix_bump(Vector2::new(cx, 0.0), 0.5, 1.0);
        let r2 = DensitySpec::appendix_bump(Vector2::new(0.0, 0.2), 0.6, 1.0);
        let v1 = r1.sample_on(&grid);
        let v2 = r2.sample_on(&grid);
        let mix: Vec<f64> = v1.iter().zip(&v2).map(|(x, y)| a * x + b * y).collect();
        let bc = BoundaryCondition::Dirichlet;
        let s1 = grid_poisson_solve(&DensitySpec::grid_sampled(grid, v1), &bc, &grid).unwrap();
        let s2 = grid_poisson_solve(&DensitySpec::grid_sampled(grid, v2), &bc, &grid).unwrap();
        let sm = grid_poisson_solve(&DensitySpec::grid_sampled(grid, mix), &bc, &grid).unwrap();
        for k in 0..grid.len() {
            let expected = a * s1.potential[k] + b * s2.potential[k];
            prop_assert!((sm.potential[k] - expected).abs() <= 1e-10);
        }
    }

    #[test]
    fn green_field_points_outward_on_the_boundary(theta in 0.0..(2.0 * PI)) {
        let green = GreenField::appendix();
        let n = Vector2::new(theta.cos(), theta.sin());
        prop_assert!(green.field(&(n * (1.0 - 1e-9))).dot(&n) > 0.0);
    }
}
