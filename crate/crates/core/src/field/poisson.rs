//! Grid solvers for the linear Poisson equation `ΔU = −ρ` and the VPME
//! equation `ΔU = e^U − ρ − 1` on the unit disk.
//!
//! The VPME problem is solved as the minimisation of the strictly convex
//! discrete energy
//!
//! `𝔈[φ] = ½·φᵀKφ + Σ_k A_k (e^{φ_k} − φ_k − ρ_k φ_k) − Σ_{∂Ω} Δθ·h_j φ_j`
//!
//! whose Euler–Lagrange equation is the finite-volume discretisation of the
//! PDE. Two minimisers are provided: damped Newton with a preconditioned CG
//! inner solve, and fixed-step preconditioned energy descent.

use std::f64::consts::PI;

use nalgebra::Vector2;

use super::density::DensitySpec;
use super::grid::{PolarGrid, RingBoundary, RingSolver};
use crate::error::{Error, Result};

/// Absolute sup-norm tolerance on the discrete PDE residual.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Tolerance of the Neumann compatibility identity `∫h dσ = −mass`.
pub const COMPATIBILITY_TOL: f64 = 1e-8;

const NEWTON_MAX_STEPS: usize = 60;
const NEWTON_MAX_HALVINGS: usize = 30;
const DESCENT_MAX_STEPS: usize = 50_000;
const POWER_ITERATIONS: usize = 10;
const CG_MAX_ITERS: usize = 400;
/// Rounding-floor multiplier applied to `ε·Σ|terms|` in residual checks.
const FLOOR_FACTOR: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCondition {
    Dirichlet,
    /// Outward normal derivative `h` sampled at the boundary nodes.
    Neumann(Vec<f64>),
}

impl BoundaryCondition {
    pub fn neumann_constant(grid: &PolarGrid, h: f64) -> Self {
        BoundaryCondition::Neumann(vec![h; grid.ntheta])
    }

    pub fn is_dirichlet(&self) -> bool {
        matches!(self, BoundaryCondition::Dirichlet)
    }

    fn ring_boundary(&self) -> RingBoundary {
        match self {
            BoundaryCondition::Dirichlet => RingBoundary::Dirichlet,
            BoundaryCondition::Neumann(_) => RingBoundary::Neumann,
        }
    }
}

/// `∫_{∂Ω} h dσ` by the trapezoidal rule on the unit circle.
pub fn boundary_integral(h: &[f64]) -> f64 {
    let dth = 2.0 * PI / h.len() as f64;
    h.iter().sum::<f64>() * dth
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Equation {
    LinearPoisson,
    Vpme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VpmeMethod {
    DampedNewton,
    EnergyDescent,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VpmeOptions {
    /// Starting iterate (nodal, full grid); zero when absent.
    pub initial: Option<Vec<f64>>,
}

/// Regular/singular decomposition `U = Û + Ū`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitParts {
    /// `Û`: `ΔÛ = e^{Ū+Û} − 1`.
    pub regular: Vec<f64>,
    /// `Ū`: `ΔŪ = −ρ`.
    pub singular: Vec<f64>,
    pub regular_residual_linf: f64,
    pub singular_residual_linf: f64,
    /// Neumann data `(h₁, h₂)` when the boundary condition is Neumann.
    pub neumann_split: Option<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverStats {
    pub iterations: usize,
    pub inner_iterations: usize,
    /// Energies of accepted iterates (VPME only).
    pub energy_history: Vec<f64>,
    /// Right-hand-side imbalance removed before a singular Neumann solve.
    pub compatibility_defect: f64,
    /// Largest `∂ₙU` over boundary nodes.
    pub max_normal_derivative: f64,
    /// Sup-norm of the rounding floor added to the residual tolerance.
    pub residual_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSolution {
    pub grid: PolarGrid,
    pub equation: Equation,
    pub potential: Vec<f64>,
    /// `E = −∇U` at the nodes.
    pub field: Vec<Vector2<f64>>,
    pub rho: Vec<f64>,
    /// Nodal residual of the discrete PDE.
    pub residual: Vec<f64>,
    pub residual_linf: f64,
    pub boundary: BoundaryCondition,
    pub split: Option<SplitParts>,
    pub stats: SolverStats,
}

impl PoissonSolution {
    /// `∂ₙU < 0` at every boundary node.
    pub fn hopf_certified(&self) -> bool {
        self.stats.max_normal_derivative < 0.0
    }

    pub fn field_energy(&self) -> f64 {
        self.grid.dirichlet_energy(&self.potential)
    }

    pub fn mean_potential(&self) -> f64 {
        self.grid.integrate(&self.potential) / PI
    }
}

/// Discrete problem data shared by residual, energy and the minimisers.
struct Problem<'a> {
    grid: PolarGrid,
    areas: Vec<f64>,
    dirichlet: bool,
    rho: &'a [f64],
    offset: Option<&'a [f64]>,
    /// Boundary flux `Δθ·h_j` placed on boundary nodes.
    bflux: Vec<f64>,
    equation: Equation,
}

impl<'a> Problem<'a> {
    fn new(
        grid: PolarGrid,
        bc: &BoundaryCondition,
        rho: &'a [f64],
        offset: Option<&'a [f64]>,
        equation: Equation,
    ) -> Self {
        let mut bflux = vec![0.0; grid.len()];
        if let BoundaryCondition::Neumann(h) = bc {
            let dth = grid.dtheta();
            for (j, k) in grid.boundary_nodes().enumerate() {
                bflux[k] = dth * h[j];
            }
        }
        Self {
            areas: grid.areas(),
            grid,
            dirichlet: bc.is_dirichlet(),
            rho,
            offset,
            bflux,
            equation,
        }
    }

    #[inline]
    fn active(&self, k: usize) -> bool {
        !(self.dirichlet && self.grid.ring_of(k).0 == self.grid.nr)
    }

    #[inline]
    fn exp_at(&self, u: &[f64], k: usize) -> f64 {
        (u[k] + self.offset.map_or(0.0, |b| b[k])).exp()
    }

    /// Right-hand side of `ΔU = f(U)` at node `k`.
    #[inline]
    fn source(&self, u: &[f64], k: usize) -> f64 {
        match self.equation {
            Equation::LinearPoisson => -self.rho[k],
            Equation::Vpme => self.exp_at(u, k) - self.rho[k] - 1.0,
        }
    }

    /// Nodal residual, its sup-norm, the sup-norm of the rounding floor, and
    /// whether every node is within `RESIDUAL_TOL` plus its floor.
    fn residual(&self, u: &[f64]) -> (Vec<f64>, f64, f64, bool) {
        let (ku, scale) = self.grid.apply_stiffness(u);
        let mut res = vec![0.0; u.len()];
        let mut linf: f64 = 0.0;
        let mut floor_linf: f64 = 0.0;
        let mut ok = true;
        for k in 0..u.len() {
            let (r, floor) = if self.active(k) {
                let a = self.areas[k];
                let f = self.source(u, k);
                let lap = (-ku[k] + self.bflux[k]) / a;
                let floor = FLOOR_FACTOR
                    * ((scale[k] + self.bflux[k].abs()) / a + f.abs() + self.rho[k].abs() + 1.0);
                (lap - f, floor)
            } else {
                (u[k], 0.0)
            };
            res[k] = r;
            linf = linf.max(r.abs());
            floor_linf = floor_linf.max(floor);
            if r.abs() > RESIDUAL_TOL + floor {
                ok = false;
            }
        }
        (res, linf, floor_linf, ok)
    }

    fn energy(&self, u: &[f64]) -> f64 {
        let mut e = self.grid.dirichlet_energy(u);
        for k in 0..u.len() {
            if !self.active(k) {
                continue;
            }
            e += self.areas[k] * (self.exp_at(u, k) - u[k] - self.rho[k] * u[k]);
            e -= self.bflux[k] * u[k];
        }
        e
    }

    fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let (mut g, _) = self.grid.apply_stiffness(u);
        for k in 0..u.len() {
            if self.active(k) {
                g[k] += self.areas[k] * (self.exp_at(u, k) - 1.0 - self.rho[k]) - self.bflux[k];
            } else {
                g[k] = 0.0;
            }
        }
        g
    }

    fn exp_weights(&self, u: &[f64]) -> Vec<f64> {
        (0..u.len())
            .map(|k| if self.active(k) { self.areas[k] * self.exp_at(u, k) } else { 0.0 })
            .collect()
    }

    fn hess_apply(&self, weights: &[f64], p: &[f64]) -> Vec<f64> {
        let (mut hp, _) = self.grid.apply_stiffness(p);
        for k in 0..p.len() {
            hp[k] = if self.active(k) { hp[k] + weights[k] * p[k] } else { 0.0 };
        }
        hp
    }

    /// Per-ring mean of `e^{b+u}`, the shift of the Newton preconditioner.
    fn ring_shift(&self, u: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let mut shift = vec![0.0; g.nr + 1];
        shift[0] = self.exp_at(u, 0);
        for (i, s) in shift.iter_mut().enumerate().skip(1) {
            *s = (0..g.ntheta).map(|j| self.exp_at(u, g.index(i, j))).sum::<f64>()
                / g.ntheta as f64;
        }
        shift
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

/// Preconditioned conjugate gradients for `H x = b`.
fn pcg(
    problem: &Problem<'_>,
    weights: &[f64],
    precond: &RingSolver,
    shift: &[f64],
    b: &[f64],
) -> (Vec<f64>, usize) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = problem.dot(b, b).sqrt();
    if bnorm == 0.0 {
        return (x, 0);
    }
    let mut z = precond.solve(shift, &r);
    let mut p = z.clone();
    let mut rz = problem.dot(&r, &z);
    for it in 1..=CG_MAX_ITERS {
        let hp = problem.hess_apply(weights, &p);
        let alpha = rz / problem.dot(&p, &hp);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * hp[k];
        }
        if problem.dot(&r, &r).sqrt() <= 1e-14 * bnorm {
            return (x, it);
        }
        z = precond.solve(shift, &r);
        let rz_new = problem.dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    (x, CG_MAX_ITERS)
}

fn energy_slack(e: f64) -> f64 {
    1e-12 * (1.0 + e.abs())
}

fn minimise(
    problem: &Problem<'_>,
    bc: &BoundaryCondition,
    method: VpmeMethod,
    initial: Option<&[f64]>,
) -> Result<(Vec<f64>, SolverStats)> {
    let grid = problem.grid;
    let mut u = match initial {
        Some(v) => {
            if v.len() != grid.len() {
                return Err(Error::InvalidInput("initial iterate has wrong length".into()));
            }
            v.to_vec()
        }
        None => vec![0.0; grid.len()],
    };
    for k in 0..u.len() {
        if !problem.active(k) {
            u[k] = 0.0;
        }
    }
    let solver = RingSolver::new(grid, bc.ring_boundary());
    let mut stats = SolverStats::default();
    let mut energy = problem.energy(&u);
    stats.energy_history.push(energy);

    match method {
        VpmeMethod::DampedNewton => {
            for step in 0..NEWTON_MAX_STEPS {
                let (_, res, _, ok) = problem.residual(&u);
                if ok {
                    stats.iterations = step;
                    return Ok((u, stats));
                }
                let g = problem.gradient(&u);
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                let weights = problem.exp_weights(&u);
                let shift = problem.ring_shift(&u);
                let (delta, inner) = pcg(problem, &weights, &solver, &shift, &neg);
                stats.inner_iterations += inner;
                let mut lambda = 1.0;
                let mut accepted = false;
                for _ in 0..=NEWTON_MAX_HALVINGS {
                    let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect();
                    let e_trial = problem.energy(&trial);
                    if e_trial.is_finite() && e_trial <= energy + energy_slack(energy) {
                        u = trial;
                        energy = e_trial;
                        accepted = true;
                        break;
                    }
                    lambda *= 0.5;
                }
                if !accepted {
                    return Err(Error::SolverDivergence {
                        step,
                        energy,
                        residual: res,
                    });
                }
                stats.energy_history.push(energy);
            }
            let (_, res, _, ok) = problem.residual(&u);
            if ok {
                stats.iterations = NEWTON_MAX_STEPS;
                Ok((u, stats))
            } else {
                Err(Error::SolverDivergence {
                    step: NEWTON_MAX_STEPS,
                    energy,
                    residual: res,
                })
            }
        }
        VpmeMethod::EnergyDescent => {
            // Metric P = K + diag(A): the Hessian at φ = 0.
            let unit_shift = vec![1.0; grid.nr + 1];
            let lambda_max = {
                let weights = problem.exp_weights(&u);
                let mut w: Vec<f64> = (0..u.len())
                    .map(|k| if problem.active(k) { 1.0 + 0.01 * (k % 7) as f64 } else { 0.0 })
                    .collect();
                let mut lam = 1.0;
                for _ in 0..POWER_ITERATIONS {
                    let hw = problem.hess_apply(&weights, &w);
                    let next = solver.solve(&unit_shift, &hw);
                    let norm = problem.dot(&next, &next).sqrt();
                    lam = norm / problem.dot(&w, &w).sqrt();
                    w = next.iter().map(|v| v / norm).collect();
                }
                lam
            };
            let mut step_size = 1.0 / lambda_max;
            let mut halvings = 0usize;
            for step in 0..DESCENT_MAX_STEPS {
                let (_, res, _, ok) = problem.residual(&u);
                if ok {
                    stats.iterations = step;
                    return Ok((u, stats));
                }
                let g = problem.gradient(&u);
                let dir = solver.solve(&unit_shift, &g);
                loop {
                    let trial: Vec<f64> = u.iter().zip(&dir).map(|(a, d)| a - step_size * d).collect();
                    let e_trial = problem.energy(&trial);
                    if e_trial.is_finite() && e_trial <= energy + energy_slack(energy) {
                        u = trial;
                        energy = e_trial;
                        stats.energy_history.push(energy);
                        break;
                    }
                    step_size *= 0.5;
                    halvings += 1;
                    if halvings > NEWTON_MAX_HALVINGS {
                        return Err(Error::SolverDivergence {
                            step,
                            energy,
                            residual: res,
                        });
                    }
                }
            }
            let (_, res, _, _) = problem.residual(&u);
            Err(Error::SolverDivergence {
                step: DESCENT_MAX_STEPS,
                energy,
                residual: res,
            })
        }
    }
}

fn check_neumann_length(grid: &PolarGrid, bc: &BoundaryCondition) -> Result<()> {
    if let BoundaryCondition::Neumann(h) = bc {
        if h.len() != grid.ntheta {
            return Err(Error::InvalidInput(format!(
                "Neumann data has {} samples, grid has {} boundary nodes",
                h.len(),
                grid.ntheta
            )));
        }
    }
    Ok(())
}

/// Linear solve on nodal data; for Neumann the right-hand side is made
/// exactly compatible first. Returns `(U, compatibility defect)`.
fn linear_nodal(grid: &PolarGrid, bc: &BoundaryCondition, rho: &[f64]) -> (Vec<f64>, f64, Vec<f64>) {
    let areas = grid.areas();
    let mut rhs: Vec<f64> = rho.iter().zip(&areas).map(|(r, a)| r * a).collect();
    let mut rho_used = rho.to_vec();
    let mut defect = 0.0;
    if let BoundaryCondition::Neumann(h) = bc {
        let dth = grid.dtheta();
        for (j, k) in grid.boundary_nodes().enumerate() {
            rhs[k] += dth * h[j];
        }
        defect = rhs.iter().sum::<f64>();
        for k in 0..rhs.len() {
            rhs[k] -= defect * areas[k] / PI;
            rho_used[k] -= defect / PI;
        }
    }
    let solver = RingSolver::new(*grid, bc.ring_boundary());
    let zero_shift = vec![0.0; grid.nr + 1];
    let mut u = solver.solve(&zero_shift, &rhs);
    // Two sweeps of iterative refinement recover the digits the per-mode
    // tridiagonal solves lose near the pole.
    for _ in 0..2 {
        let (ku, _) = grid.apply_stiffness(&u);
        let mut r: Vec<f64> = rhs.iter().zip(&ku).map(|(b, k)| b - k).collect();
        match bc {
            BoundaryCondition::Dirichlet => {
                for k in grid.boundary_nodes() {
                    r[k] = 0.0;
                }
            }
            BoundaryCondition::Neumann(_) => {
                let mean = r.iter().sum::<f64>();
                for k in 0..r.len() {
                    r[k] -= mean * areas[k] / PI;
                }
            }
        }
        let du = solver.solve(&zero_shift, &r);
        for (a, d) in u.iter_mut().zip(&du) {
            *a += d;
        }
    }
    (u, defect, rho_used)
}

fn finish(
    grid: PolarGrid,
    equation: Equation,
    bc: BoundaryCondition,
    u: Vec<f64>,
    rho: Vec<f64>,
    mut stats: SolverStats,
) -> Result<PoissonSolution> {
    let problem = Problem::new(grid, &bc, &rho, None, equation);
    let (residual, residual_linf, floor, ok) = problem.residual(&u);
    if !ok {
        return Err(Error::SolverDivergence {
            step: stats.iterations,
            energy: f64::NAN,
            residual: residual_linf,
        });
    }
    stats.residual_floor = floor;
    stats.max_normal_derivative = grid
        .normal_derivative(&u)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let field = grid.gradient(&u).into_iter().map(|g| -g).collect();
    Ok(PoissonSolution {
        grid,
        equation,
        potential: u,
        field,
        rho,
        residual,
        residual_linf,
        boundary: bc,
        split: None,
        stats,
    })
}

/// `ΔU = −ρ` with Dirichlet `U = 0` or Neumann `∂ₙU = h` (zero-mean gauge).
pub fn grid_poisson_solve(
    rho: &DensitySpec,
    bc: &BoundaryCondition,
    grid: &PolarGrid,
) -> Result<PoissonSolution> {
    check_neumann_length(grid, bc)?;
    if let BoundaryCondition::Neumann(h) = bc {
        let flux = boundary_integral(h);
        let mass = rho.total_mass();
        if (flux + mass).abs() > COMPATIBILITY_TOL {
            return Err(Error::IncompatibleNeumannData { flux, mass });
        }
    }
    let nodes = rho.sample_on(grid);
    let (u, defect, rho_used) = linear_nodal(grid, bc, &nodes);
    let stats = SolverStats {
        compatibility_defect: defect,
        ..SolverStats::default()
    };
    finish(*grid, Equation::LinearPoisson, bc.clone(), u, rho_used, stats)
}

fn check_vpme_neumann(rho: &DensitySpec, bc: &BoundaryCondition) -> Result<()> {
    if let BoundaryCondition::Neumann(h) = bc {
        if let Some(bad) = h.iter().find(|v| !(**v < 0.0)) {
            return Err(Error::NeumannConditionViolated(format!(
                "h must be negative on the whole boundary, found {bad}"
            )));
        }
        let total: f64 = boundary_integral(&h.iter().map(|v| v.abs()).collect::<Vec<_>>());
        let limit = rho.total_mass() + PI;
        if !(total < limit) {
            return Err(Error::NeumannConditionViolated(format!(
                "∫|h| dσ = {total} must stay below mass + |Ω| = {limit}"
            )));
        }
    }
    Ok(())
}

/// `ΔU = e^U − ρ − 1` by discrete energy minimisation.
pub fn vpme_poisson_solve(
    rho: &DensitySpec,
    bc: &BoundaryCondition,
    grid: &PolarGrid,
    method: VpmeMethod,
    options: &VpmeOptions,
) -> Result<PoissonSolution> {
    check_neumann_length(grid, bc)?;
    if rho.sample_on(grid).iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidInput("VPME density must be nonnegative".into()));
    }
    check_vpme_neumann(rho, bc)?;
    let nodes = rho.sample_on(grid);
    let problem = Problem::new(*grid, bc, &nodes, None, Equation::Vpme);
    let (u, stats) = minimise(&problem, bc, method, options.initial.as_deref())?;
    finish(*grid, Equation::Vpme, bc.clone(), u, nodes, stats)
}

/// VPME solve through `U = Û + Ū` with `ΔŪ = −ρ` and `ΔÛ = e^{Ū+Û} − 1`.
/// Neumann data is split as `h₂ = −m/|∂Ω|`, `h₁ = h − h₂` where `m` is the
/// discrete mass of `ρ` on the grid.
pub fn vpme_split_solve(
    rho: &DensitySpec,
    bc: &BoundaryCondition,
    grid: &PolarGrid,
) -> Result<PoissonSolution> {
    check_neumann_length(grid, bc)?;
    check_vpme_neumann(rho, bc)?;
    let nodes = rho.sample_on(grid);
    let (singular_bc, regular_bc, neumann_split) = match bc {
        BoundaryCondition::Dirichlet => (BoundaryCondition::Dirichlet, BoundaryCondition::Dirichlet, None),
        BoundaryCondition::Neumann(h) => {
            let mass = grid.integrate(&nodes);
            let h2 = vec![-mass / (2.0 * PI); h.len()];
            let h1: Vec<f64> = h.iter().zip(&h2).map(|(a, b)| a - b).collect();
            if let Some(bad) = h1.iter().find(|v| **v > 0.0) {
                return Err(Error::NeumannConditionViolated(format!(
                    "regular-part flux h1 = h + m/|∂Ω| must be nonpositive, found {bad}"
                )));
            }
            (
                BoundaryCondition::Neumann(h2.clone()),
                BoundaryCondition::Neumann(h1.clone()),
                Some((h1, h2)),
            )
        }
    };

    let (singular, _, singular_rho) = linear_nodal(grid, &singular_bc, &nodes);
    let singular_problem = Problem::new(*grid, &singular_bc, &singular_rho, None, Equation::LinearPoisson);
    let (_, singular_res, _, ok) = singular_problem.residual(&singular);
    if !ok {
        return Err(Error::SolverDivergence {
            step: 0,
            energy: f64::NAN,
            residual: singular_res,
        });
    }

    let zero = vec![0.0; grid.len()];
    let regular_problem = Problem::new(*grid, &regular_bc, &zero, Some(&singular), Equation::Vpme);
    let (regular, stats) = minimise(&regular_problem, &regular_bc, VpmeMethod::DampedNewton, None)?;
    let (_, regular_res, _, _) = regular_problem.residual(&regular);

    let total: Vec<f64> = regular.iter().zip(&singular).map(|(a, b)| a + b).collect();
    let mut solution = finish(*grid, Equation::Vpme, bc.clone(), total, nodes, stats)?;
    solution.split = Some(SplitParts {
        regular,
        singular,
        regular_residual_linf: regular_res,
        singular_residual_linf: singular_res,
        neumann_split,
    });
    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sup(v: &[f64]) -> f64 {
        v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    #[test]
    fn zero_density_dirichlet_is_zero() {
        let g = PolarGrid::new(32, 32);
        let s = grid_poisson_solve(&DensitySpec::zero(), &BoundaryCondition::Dirichlet, &g).unwrap();
        assert!(sup(&s.potential) <= 1e-14);
        let v = vpme_poisson_solve(&DensitySpec::zero(), &BoundaryCondition::Dirichlet, &g, VpmeMethod::DampedNewton, &VpmeOptions::default()).unwrap();
        assert!(sup(&v.potential) <= 1e-10);
    }

    #[test]
    fn neumann_compatibility_gate() {
        let g = PolarGrid::new(32, 32);
        let rho = DensitySpec::appendix_default();
        let ok = grid_poisson_solve(&rho, &BoundaryCondition::neumann_constant(&g, -1.0 / (2.0 * PI)), &g).unwrap();
        assert_abs_diff_eq!(ok.mean_potential(), 0.0, epsilon = 1e-13);
        let bad = grid_poisson_solve(&rho, &BoundaryCondition::neumann_constant(&g, -1.0 / PI), &g);
        assert!(matches!(bad, Err(Error::IncompatibleNeumannData { .. })));
    }

    #[test]
    fn neumann_normal_derivative_matches_data() {
        let g = PolarGrid::new(128, 64);
        let rho = DensitySpec::appendix_default();
        let h = -1.0 / (2.0 * PI);
        let s = grid_poisson_solve(&rho, &BoundaryCondition::neumann_constant(&g, h), &g).unwrap();
        for dn in g.normal_derivative(&s.potential) {
            assert_abs_diff_eq!(dn, h, epsilon = 2e-3);
        }
    }

    #[test]
    fn vpme_neumann_gates() {
        let g = PolarGrid::new(16, 16);
        let rho = DensitySpec::appendix_default();
        let too_much = -(1.0 + PI) / (2.0 * PI * 0.9);
        let r = vpme_poisson_solve(&rho, &BoundaryCondition::neumann_constant(&g, too_much), &g, VpmeMethod::DampedNewton, &VpmeOptions::default());
        assert!(matches!(r, Err(Error::NeumannConditionViolated(_))));
        let mut h = vec![-0.1; g.ntheta];
        h[3] = 0.0;
        let r = vpme_poisson_solve(&rho, &BoundaryCondition::Neumann(h), &g, VpmeMethod::DampedNewton, &VpmeOptions::default());
        assert!(matches!(r, Err(Error::NeumannConditionViolated(_))));
    }

    #[test]
    fn linearity_dirichlet() {
        let g = PolarGrid::new(48, 32);
        let a = DensitySpec::appendix_default();
        let b = DensitySpec::appendix_bump(Vector2::new(-0.3, 0.2), 0.4, 2.0);
        let sa = grid_poisson_solve(&a, &BoundaryCondition::Dirichlet, &g).unwrap();
        let sb = grid_poisson_solve(&b, &BoundaryCondition::Dirichlet, &g).unwrap();
        let mix: Vec<f64> = a.sample_on(&g).iter().zip(b.sample_on(&g)).map(|(x, y)| 2.0 * x - 0.5 * y).collect();
        let sm = grid_poisson_solve(&DensitySpec::grid_sampled(g, mix), &BoundaryCondition::Dirichlet, &g).unwrap();
        for k in 0..g.len() {
            assert_abs_diff_eq!(sm.potential[k], 2.0 * sa.potential[k] - 0.5 * sb.potential[k], epsilon = 1e-9);
        }
    }

    #[test]
    fn energy_descent_is_monotone() {
        let g = PolarGrid::new(24, 24);
        let rho = DensitySpec::appendix_default();
        let s = vpme_poisson_solve(&rho, &BoundaryCondition::Dirichlet, &g, VpmeMethod::EnergyDescent, &VpmeOptions::default()).unwrap();
        for w in s.stats.energy_history.windows(2) {
            assert!(w[1] <= w[0] + energy_slack(w[0]));
        }
        assert!(s.stats.energy_history.len() > 2);
    }

    #[test]
    fn split_zero_density() {
        let g = PolarGrid::new(16, 16);
        let s = vpme_split_solve(&DensitySpec::zero(), &BoundaryCondition::Dirichlet, &g).unwrap();
        let split = s.split.unwrap();
        assert!(sup(&split.regular) <= 1e-12);
        assert!(sup(&split.singular) <= 1e-12);
    }

    #[test]
    fn split_neumann_rejects_positive_regular_flux() {
        let g = PolarGrid::new(16, 16);
        // h = −0.5/(2π): total |h| is fine but h1 = h + 1/(2π) > 0.
        let r = vpme_split_solve(&DensitySpec::appendix_default(), &BoundaryCondition::neumann_constant(&g, -0.5 / (2.0 * PI)), &g);
        assert!(matches!(r, Err(Error::NeumannConditionViolated(_))));
    }
}
