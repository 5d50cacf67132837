//! Particle representation of `f`, frozen-field transport, the Picard
//! scheme and the coupled time-marching loop.
//!
//! Particles carry fixed weights and the value of `f₀` at their initial
//! phase point; transport pushes them along characteristics, so mass and
//! `‖f‖_∞` are invariant by construction.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{
    appendix_density, calibrate_bump, grid_poisson_solve, vpme_poisson_solve, BoundaryCondition,
    DensitySpec, FieldModel, PolarGrid, VpmeMethod, VpmeOptions,
};
use crate::flow::{advance, alpha_with_field, FlowOptions, PhaseState};
use crate::geometry::Domain2;
use crate::quadrature::GaussLegendre;
use crate::sampling::halton;

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

type ProfileFn = dyn Fn(&Vector2<f64>, &Vector2<f64>) -> f64 + Send + Sync;

/// `b(s) = exp(−1/(1 − s²))` for `s < 1`.
fn velocity_bump(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// `∫_{|v|<V} b(|v|/V) dv`.
fn velocity_bump_mass(v_radius: f64) -> f64 {
    let gl = GaussLegendre::new(64);
    let panels = 8;
    let h = 1.0 / panels as f64;
    let unit: f64 = (0..panels)
        .map(|p| gl.integrate(p as f64 * h, (p + 1) as f64 * h, |s| 2.0 * PI * s * velocity_bump(s)))
        .sum();
    unit * v_radius * v_radius
}

#[derive(Clone)]
pub enum Profile {
    /// `f₀` constant on `{|x − c| < R} × {|v| < V}`.
    UniformDisk {
        center: Vector2<f64>,
        radius: f64,
        v_max: f64,
    },
    /// `f₀ = ρ(x)·b(|v|/V)/Z` with `ρ` the unit-mass bump density.
    AppendixBump {
        center: Vector2<f64>,
        radius: f64,
        v_radius: f64,
    },
    Custom(Arc<ProfileFn>),
}

impl std::fmt::Debug for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Profile::UniformDisk { center, radius, v_max } => f
                .debug_struct("UniformDisk")
                .field("center", center)
                .field("radius", radius)
                .field("v_max", v_max)
                .finish(),
            Profile::AppendixBump { center, radius, v_radius } => f
                .debug_struct("AppendixBump")
                .field("center", center)
                .field("radius", radius)
                .field("v_radius", v_radius)
                .finish(),
            Profile::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl Profile {
    /// The appendix density in space, bump of radius `v_radius` in velocity.
    pub fn appendix_style(v_radius: f64) -> Self {
        Profile::AppendixBump {
            center: Vector2::new(0.5, 0.0),
            radius: 0.5,
            v_radius,
        }
    }

    /// Evaluator with normalisation constants resolved once.
    fn evaluator(&self) -> Arc<ProfileFn> {
        match self.clone() {
            Profile::UniformDisk { center, radius, v_max } => {
                let value = 1.0 / (PI * radius * radius * PI * v_max * v_max);
                Arc::new(move |x, v| {
                    if (x - center).norm() < radius && v.norm() < v_max {
                        value
                    } else {
                        0.0
                    }
                })
            }
            Profile::AppendixBump { center, radius, v_radius } => {
                let c = calibrate_bump(radius, 1.0);
                let z = velocity_bump_mass(v_radius);
                Arc::new(move |x, v| {
                    appendix_density(x, &center, radius, c) * velocity_bump(v.norm() / v_radius) / z
                })
            }
            Profile::Custom(f) => f,
        }
    }
}

/// Declared support: `|x − x_center| < x_radius`, `|v| < v_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Support {
    pub x_center: Vector2<f64>,
    pub x_radius: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sampling {
    /// Equal-area cells in `x` and in `v` (sunflower layouts), one particle
    /// per product cell.
    StratifiedGrid,
    QuasiRandomHalton,
}

#[derive(Debug, Clone)]
pub struct InitialDataSpec {
    pub profile: Profile,
    pub support: Support,
    pub flatness_delta0: f64,
    pub particle_count: usize,
    pub sampling: Sampling,
    pub seed: u64,
}

impl InitialDataSpec {
    pub fn new(profile: Profile, particle_count: usize) -> Self {
        let support = match &profile {
            Profile::UniformDisk { center, radius, v_max } => Support {
                x_center: *center,
                x_radius: *radius,
                v_max: *v_max,
            },
            Profile::AppendixBump { center, radius, v_radius } => Support {
                x_center: *center,
                x_radius: *radius,
                v_max: *v_radius,
            },
            Profile::Custom(_) => Support {
                x_center: Vector2::zeros(),
                x_radius: 1.0,
                v_max: 1.0,
            },
        };
        Self {
            profile,
            support,
            flatness_delta0: 0.0,
            particle_count,
            sampling: Sampling::StratifiedGrid,
            seed: 0,
        }
    }

    pub fn with_support(mut self, support: Support) -> Self {
        self.support = support;
        self
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_flatness(mut self, delta0: f64) -> Self {
        self.flatness_delta0 = delta0;
        self
    }
}

#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub positions: Vec<Vector2<f64>>,
    pub velocities: Vec<Vector2<f64>>,
    pub weights: Vec<f64>,
    pub f0_values: Vec<f64>,
    pub t: f64,
    /// `(t, Q)`: running supremum of sampled speeds.
    pub q_history: Vec<(f64, f64)>,
    /// Particles frozen after reaching the grazing set.
    pub stalled: Vec<bool>,
    pub declared_q0: f64,
    pub flatness_delta0: f64,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn f_linf(&self) -> f64 {
        self.f0_values.iter().fold(0.0, |m, v| m.max(*v))
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.velocities)
            .map(|(w, v)| 0.5 * w * v.norm_squared())
            .sum()
    }

    pub fn max_speed(&self) -> f64 {
        self.velocities.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    pub fn stalled_count(&self) -> usize {
        self.stalled.iter().filter(|s| **s).count()
    }

    pub fn current_q(&self) -> f64 {
        self.q_history.last().map_or(0.0, |q| q.1)
    }

    fn record_q(&mut self) {
        let q = self.current_q().max(self.max_speed());
        self.q_history.push((self.t, q));
    }
}

/// Sunflower layout of `count` points in the disk of radius `radius`: each
/// point is the centre of an equal-area cell.
fn sunflower(count: usize, radius: f64, rotation: f64) -> Vec<Vector2<f64>> {
    (0..count)
        .map(|k| {
            let r = radius * ((k as f64 + 0.5) / count as f64).sqrt();
            let th = rotation + k as f64 * GOLDEN_ANGLE;
            Vector2::new(r * th.cos(), r * th.sin())
        })
        .collect()
}

fn disk_from_unit_square(u: f64, w: f64, radius: f64) -> Vector2<f64> {
    let r = radius * u.sqrt();
    let th = 2.0 * PI * w;
    Vector2::new(r * th.cos(), r * th.sin())
}

/// Velocity points per spatial cell for stratified sampling.
fn velocity_points(n: usize) -> usize {
    if n.is_multiple_of(4) {
        4
    } else {
        1
    }
}

pub fn init_ensemble(spec: &InitialDataSpec, domain: &Domain2) -> Result<ParticleEnsemble> {
    let n = spec.particle_count;
    if n == 0 {
        return Err(Error::InvalidInput("particle_count must be positive".into()));
    }
    let sup = spec.support;
    if !(sup.x_radius > 0.0 && sup.v_max > 0.0) {
        return Err(Error::InvalidInput("support radii must be positive".into()));
    }
    for k in 0..64 {
        let th = 2.0 * PI * k as f64 / 64.0;
        let p = sup.x_center + Vector2::new(th.cos(), th.sin()) * sup.x_radius;
        if domain.xi(&p) > 1e-12 {
            return Err(Error::InvalidInput(
                "declared spatial support leaves the domain".into(),
            ));
        }
    }
    let f0 = spec.profile.evaluator();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let x_area = PI * sup.x_radius * sup.x_radius;
    let v_area = PI * sup.v_max * sup.v_max;

    let (positions, velocities) = match spec.sampling {
        Sampling::StratifiedGrid => {
            let kv = velocity_points(n);
            let m = n / kv;
            let rotation = rng.random::<f64>() * 2.0 * PI;
            let xs = sunflower(m, sup.x_radius, rotation);
            let mut positions = Vec::with_capacity(n);
            let mut velocities = Vec::with_capacity(n);
            for (i, x) in xs.iter().enumerate() {
                let vs = sunflower(kv, sup.v_max, rotation + i as f64 * GOLDEN_ANGLE);
                for v in vs {
                    positions.push(sup.x_center + x);
                    velocities.push(v);
                }
            }
            (positions, velocities)
        }
        Sampling::QuasiRandomHalton => {
            let shift: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>());
            let mut positions = Vec::with_capacity(n);
            let mut velocities = Vec::with_capacity(n);
            for k in 1..=n {
                let u: [f64; 4] = std::array::from_fn(|d| (halton(k, d) + shift[d]).fract());
                positions.push(sup.x_center + disk_from_unit_square(u[0], u[1], sup.x_radius));
                velocities.push(disk_from_unit_square(u[2], u[3], sup.v_max));
            }
            (positions, velocities)
        }
    };

    let cell = x_area * v_area / positions.len() as f64;
    let f0_values: Vec<f64> = positions
        .iter()
        .zip(&velocities)
        .map(|(x, v)| f0(x, v))
        .collect();
    if f0_values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidInput("f0 must be finite and nonnegative".into()));
    }
    let raw: Vec<f64> = f0_values.iter().map(|f| f * cell).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptySupport);
    }
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();

    if spec.flatness_delta0 > 0.0 {
        let zero = Vector2::zeros();
        let flat: Vec<f64> = positions
            .iter()
            .zip(&velocities)
            .zip(&f0_values)
            .filter(|((x, v), _)| alpha_with_field(domain, x, v, &zero) <= spec.flatness_delta0)
            .map(|(_, f)| *f)
            .collect();
        let min = flat.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = flat.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !flat.is_empty() && min != max {
            return Err(Error::FlatnessViolated { min, max });
        }
    }

    let count = positions.len();
    let mut ens = ParticleEnsemble {
        positions,
        velocities,
        weights,
        f0_values,
        t: 0.0,
        q_history: Vec::new(),
        stalled: vec![false; count],
        declared_q0: sup.v_max,
        flatness_delta0: spec.flatness_delta0,
    };
    ens.record_q();
    Ok(ens)
}

/// Cloud-in-cell deposition with the bilinear polar stencil. Node masses are
/// accumulated in particle order, so the result does not depend on threads.
pub fn deposit_density(ens: &ParticleEnsemble, grid: &PolarGrid) -> DensitySpec {
    let mut mass = vec![0.0; grid.len()];
    for (x, w) in ens.positions.iter().zip(&ens.weights) {
        for (k, s) in grid.stencil(x) {
            mass[k] += w * s;
        }
    }
    let areas = grid.areas();
    let values = mass.iter().zip(&areas).map(|(m, a)| m / a).collect();
    DensitySpec::deposited(*grid, values)
}

/// Advances every particle to `t_end` under a static field.
pub fn linear_vlasov_solve(
    ens: &ParticleEnsemble,
    domain: &Domain2,
    field: &FieldModel,
    t_end: f64,
) -> Result<ParticleEnsemble> {
    let opts = FlowOptions {
        record: false,
        ..FlowOptions::default()
    };
    let t0 = ens.t;
    let results: Vec<Result<Option<PhaseState>>> = (0..ens.len())
        .into_par_iter()
        .map(|i| {
            if ens.stalled[i] {
                return Ok(None);
            }
            let state = PhaseState::new(t0, ens.positions[i], ens.velocities[i]);
            match advance(domain, &state, field, t_end, &opts) {
                Ok(tr) => Ok(Some(tr.final_state())),
                Err(Error::GrazingStall { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut out = ens.clone();
    for (i, r) in results.into_iter().enumerate() {
        match r? {
            Some(s) => {
                out.positions[i] = s.x;
                out.velocities[i] = s.v;
            }
            None => out.stalled[i] = true,
        }
    }
    out.t = t_end;
    out.record_q();
    let stalled = out.stalled_count();
    if stalled > 0 && out.flatness_delta0 > 0.0 {
        return Err(Error::StalledParticles { count: stalled });
    }
    Ok(out)
}

/// Which Poisson problem turns a density into a field.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldEquation {
    Linear(BoundaryCondition),
    Vpme(BoundaryCondition, VpmeMethod),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSolveConfig {
    pub equation: FieldEquation,
    pub grid: PolarGrid,
    /// Multiplies the deposited density; zero decouples the particles.
    pub charge_scale: f64,
}

impl FieldSolveConfig {
    pub fn linear_dirichlet(grid: PolarGrid) -> Self {
        Self {
            equation: FieldEquation::Linear(BoundaryCondition::Dirichlet),
            grid,
            charge_scale: 1.0,
        }
    }

    fn scaled(&self, rho: DensitySpec) -> DensitySpec {
        if self.charge_scale == 1.0 {
            return rho;
        }
        let values = rho.sample_on(&self.grid).iter().map(|v| v * self.charge_scale).collect();
        DensitySpec::deposited(self.grid, values)
    }

    /// Field of `ρ`; `warm` is a starting iterate for the VPME minimiser.
    pub fn solve(&self, rho: DensitySpec, warm: Option<&[f64]>) -> Result<FieldModel> {
        if self.charge_scale == 0.0 {
            if let FieldEquation::Linear(BoundaryCondition::Dirichlet) = self.equation {
                return Ok(FieldModel::zero());
            }
        }
        let rho = self.scaled(rho);
        let solution = match &self.equation {
            FieldEquation::Linear(bc) => grid_poisson_solve(&rho, bc, &self.grid)?,
            FieldEquation::Vpme(bc, method) => vpme_poisson_solve(
                &rho,
                bc,
                &self.grid,
                *method,
                &VpmeOptions {
                    initial: warm.map(|w| w.to_vec()),
                },
            )?,
        };
        Ok(FieldModel::from_solution(solution))
    }
}

fn field_difference(a: &FieldModel, b: &FieldModel, grid: &PolarGrid) -> f64 {
    (0..grid.len())
        .map(|k| {
            let x = grid.position(k);
            (a.e(0.0, &x) - b.e(0.0, &x)).norm()
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardConfig {
    pub horizon: f64,
    /// Spacing of the field snapshots; the field is constant between them.
    pub snapshot_dt: f64,
    pub iterations: usize,
    pub field: FieldSolveConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CauchyEntry {
    pub n: usize,
    pub sup_diff: f64,
}

#[derive(Debug, Clone)]
pub struct PicardState {
    pub iteration: usize,
    /// Snapshots of the latest field `Eⁿ` at `snapshot_times`.
    pub fields: Vec<FieldModel>,
    pub previous_fields: Vec<FieldModel>,
    pub snapshot_times: Vec<f64>,
    pub cauchy: Vec<CauchyEntry>,
    /// Set when a Cauchy difference failed to decrease.
    pub nonmonotone_warning: bool,
    /// Particles below the flatness threshold carrying a non-flat value,
    /// per iteration.
    pub flatness_violations: Vec<usize>,
}

fn snapshot_times(horizon: f64, dt: f64) -> Vec<f64> {
    let steps = (horizon / dt).round().max(1.0) as usize;
    (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect()
}

/// Transport under a field piecewise constant on `[times[k], times[k+1])`,
/// returning the ensemble at every snapshot time.
fn transport_piecewise(
    ens0: &ParticleEnsemble,
    domain: &Domain2,
    fields: &[FieldModel],
    times: &[f64],
) -> Result<Vec<ParticleEnsemble>> {
    let mut out = vec![ens0.clone()];
    for k in 0..times.len() - 1 {
        let next = linear_vlasov_solve(out.last().expect("non-empty"), domain, &fields[k], times[k + 1])?;
        out.push(next);
    }
    Ok(out)
}

fn count_flatness_violations(ens: &ParticleEnsemble, domain: &Domain2, field: &FieldModel, flat_value: Option<f64>) -> usize {
    let (delta0, Some(flat)) = (ens.flatness_delta0, flat_value) else {
        return 0;
    };
    if delta0 <= 0.0 {
        return 0;
    }
    ens.positions
        .iter()
        .zip(&ens.velocities)
        .zip(&ens.f0_values)
        .filter(|((x, v), f)| {
            alpha_with_field(domain, x, v, &field.e(ens.t, x)) <= delta0 && **f != flat
        })
        .count()
}

/// Value of `f₀` on the sampled part of `{α ≤ δ₀}` at time zero.
fn flat_value(ens: &ParticleEnsemble, domain: &Domain2) -> Option<f64> {
    let zero = Vector2::zeros();
    ens.positions
        .iter()
        .zip(&ens.velocities)
        .zip(&ens.f0_values)
        .find(|((x, v), _)| alpha_with_field(domain, x, v, &zero) <= ens.flatness_delta0)
        .map(|(_, f)| *f)
        .or(Some(0.0))
}

/// Picard iterates: `E⁰` from `ρ₀`, then for each `n` a frozen-field
/// transport of `f₀` under `Eⁿ⁻¹` followed by Poisson solves at the
/// snapshot times. Returns the state and the ensembles of the last iterate.
pub fn picard_iterate(
    spec: &InitialDataSpec,
    domain: &Domain2,
    config: &PicardConfig,
) -> Result<(PicardState, Vec<ParticleEnsemble>)> {
    if config.iterations == 0 {
        return Err(Error::InvalidInput("Picard needs at least one iteration".into()));
    }
    let ens0 = init_ensemble(spec, domain)?;
    let times = snapshot_times(config.horizon, config.snapshot_dt);
    let rho0 = deposit_density(&ens0, &config.field.grid);
    let e0 = config.field.solve(rho0, None)?;
    let flat = flat_value(&ens0, domain);
    let mut fields = vec![e0; times.len()];
    let mut previous = Vec::new();
    let mut cauchy = Vec::new();
    let mut violations = Vec::new();
    let mut last = Vec::new();
    for n in 1..=config.iterations {
        let ensembles = transport_piecewise(&ens0, domain, &fields, &times)?;
        let mut next = Vec::with_capacity(times.len());
        let mut bad = 0usize;
        for (k, ens) in ensembles.iter().enumerate() {
            bad += count_flatness_violations(ens, domain, &fields[k], flat);
            let warm = fields[k].solution().map(|s| s.potential.as_slice());
            next.push(config.field.solve(deposit_density(ens, &config.field.grid), warm)?);
        }
        let diff = next
            .iter()
            .zip(&fields)
            .map(|(a, b)| field_difference(a, b, &config.field.grid))
            .fold(0.0, f64::max);
        cauchy.push(CauchyEntry { n, sup_diff: diff });
        violations.push(bad);
        previous = std::mem::replace(&mut fields, next);
        last = ensembles;
    }
    let nonmonotone_warning = cauchy.windows(2).any(|w| !(w[1].sup_diff < w[0].sup_diff));
    Ok((
        PicardState {
            iteration: config.iterations,
            fields,
            previous_fields: previous,
            snapshot_times: times,
            cauchy,
            nonmonotone_warning,
            flatness_violations: violations,
        },
        last,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledConfig {
    pub horizon: f64,
    pub dt: f64,
    pub field: FieldSolveConfig,
    /// Times at which ensemble snapshots are kept (nearest step).
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerRow {
    pub t: f64,
    pub mass: f64,
    pub f_linf: f64,
    pub kinetic_energy: f64,
    pub field_energy: f64,
    pub total_energy: f64,
    pub q: f64,
    /// Normalised `[Q(t) − Q(t − Δ)]/(Δ·Q^{8/11}·ln^{1/2}Q)`; zero on the first row.
    pub growth_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub ledger: Vec<LedgerRow>,
    /// Raw (unnormalised) growth ratios, aligned with the ledger.
    pub raw_growth: Vec<f64>,
    pub growth_normalization: f64,
    pub snapshots: Vec<ParticleEnsemble>,
    pub final_ensemble: ParticleEnsemble,
    pub final_field: FieldModel,
    /// Largest `‖E‖_∞` over the run.
    pub max_field: f64,
}

/// Field energy of a solved potential: `½∫|∇U|²` for linear Poisson, plus
/// `∫(U e^U − e^U + 1)` for VPME.
fn field_energy(field: &FieldModel) -> f64 {
    match field.solution() {
        None => 0.0,
        Some(s) => {
            let mut e = s.grid.dirichlet_energy(&s.potential);
            if s.equation == crate::field::Equation::Vpme {
                let integrand: Vec<f64> = s
                    .potential
                    .iter()
                    .map(|u| u * u.exp() - u.exp() + 1.0)
                    .collect();
                e += s.grid.integrate(&integrand);
            }
            e
        }
    }
}

/// `ln^{1/2}` factor of the growth diagnostic, floored at one so that it is
/// defined for `Q < e`.
fn growth_denominator(q: f64) -> f64 {
    q.powf(8.0 / 11.0) * q.max(std::f64::consts::E).ln().sqrt()
}

/// Raw growth ratios of a `(t, Q)` series; the first entry is zero.
pub fn raw_growth_ratios(history: &[(f64, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; history.len()];
    for k in 1..history.len() {
        let (t0, q0) = history[k - 1];
        let (t1, q1) = history[k];
        let dt = t1 - t0;
        out[k] = if dt > 0.0 && q1 > 0.0 {
            (q1 - q0) / (dt * growth_denominator(q1))
        } else {
            0.0
        };
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QPoint {
    pub t: f64,
    pub q: f64,
    pub growth_ratio: f64,
}

/// `(t, Q, growth ratio)` with the ratio normalised by its first positive
/// value.
pub fn q_history(ens: &ParticleEnsemble) -> Vec<QPoint> {
    let raw = raw_growth_ratios(&ens.q_history);
    let norm = raw.iter().copied().find(|r| *r > 0.0).unwrap_or(1.0);
    ens.q_history
        .iter()
        .zip(&raw)
        .map(|(&(t, q), r)| QPoint {
            t,
            q,
            growth_ratio: r / norm,
        })
        .collect()
}

/// Time marching: deposit, solve, advance `dt` under the frozen field.
pub fn coupled_simulate(spec: &InitialDataSpec, domain: &Domain2, config: &CoupledConfig) -> Result<CoupledRun> {
    if !(config.dt > 0.0 && config.horizon > 0.0) {
        return Err(Error::InvalidInput("dt and horizon must be positive".into()));
    }
    let steps = (config.horizon / config.dt).round().max(1.0) as usize;
    let dt = config.horizon / steps as f64;
    let mut ens = init_ensemble(spec, domain)?;
    ens.q_history.clear();
    let mut ledger = Vec::with_capacity(steps + 1);
    let mut snapshots = Vec::new();
    let snapshot_steps: Vec<usize> = config
        .snapshot_times
        .iter()
        .map(|t| (t / dt).round() as usize)
        .collect();
    let mut warm: Option<Vec<f64>> = None;
    let mut max_field: f64 = 0.0;
    let mut field = FieldModel::zero();
    for step in 0..=steps {
        ens.t = dt * step as f64;
        let rho = deposit_density(&ens, &config.field.grid);
        field = config.field.solve(rho, warm.as_deref())?;
        warm = field.solution().map(|s| s.potential.clone());
        max_field = max_field.max(field.sup_norm_e());
        ens.record_q();
        let kinetic = ens.kinetic_energy();
        let fe = field_energy(&field);
        ledger.push(LedgerRow {
            t: ens.t,
            mass: ens.mass(),
            f_linf: ens.f_linf(),
            kinetic_energy: kinetic,
            field_energy: fe,
            total_energy: kinetic + fe,
            q: ens.current_q(),
            growth_ratio: 0.0,
        });
        if snapshot_steps.contains(&step) {
            snapshots.push(ens.clone());
        }
        if step == steps {
            break;
        }
        let t_next = dt * (step + 1) as f64;
        // Avoid the extra Q record that linear_vlasov_solve appends.
        let before = ens.q_history.len();
        ens = linear_vlasov_solve(&ens, domain, &field, t_next)?;
        ens.q_history.truncate(before);
    }
    let history: Vec<(f64, f64)> = ledger.iter().map(|r| (r.t, r.q)).collect();
    let raw = raw_growth_ratios(&history);
    let norm = raw.iter().copied().find(|r| *r > 0.0).unwrap_or(1.0);
    for (row, r) in ledger.iter_mut().zip(&raw) {
        row.growth_ratio = r / norm;
    }
    Ok(CoupledRun {
        ledger,
        raw_growth: raw,
        growth_normalization: norm,
        snapshots,
        final_ensemble: ens,
        final_field: field,
        max_field,
    })
}
