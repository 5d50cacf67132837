//! The appendix experiments: the bump density and its field on the disk, a
//! long trajectory under that field and a family of near-grazing starts.

use std::path::Path;

use anyhow::Result;
use nalgebra::Vector2;
use serde::Serialize;
use vpconvex_core::field::DensityKind;
use vpconvex_core::flow::{
    bounce_gap_check, isolation_check, velocity_lemma_check, FlowConstants, IsolationReport, VelocityLemmaReport,
};
use vpconvex_core::io::{alpha_csv, fmt17, grid_csv, trajectory_csv};
use vpconvex_core::{advance, DensitySpec, Domain2, FieldModel, FlowOptions, PhaseState, PolarGrid, Trajectory};

use crate::artifacts::{ArtifactEntry, ArtifactStore};
use crate::svg::{Plot, Series};

pub const FIG1_GRID: (usize, usize) = (64, 128);
pub const FIG2_START: [f64; 2] = [-0.9, 0.0];
pub const FIG2_DIRECTION: [f64; 2] = [-0.2, 1.0];
pub const FAMILY_STARTS: [f64; 6] = [-0.2, -0.4, -0.6, -0.8, -0.9, -0.95];
pub const FAMILY_DIRECTION: [f64; 2] = [0.0, 1.0];

/// Speeds and horizons of the appendix trajectories; only the launch
/// directions are fixed by the construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AppendixParams {
    pub fig2_speed: f64,
    pub fig2_horizon: f64,
    pub family_speed: f64,
    pub family_horizon: f64,
}

impl Default for AppendixParams {
    fn default() -> Self {
        Self {
            fig2_speed: 0.9,
            fig2_horizon: 6.0,
            family_speed: 2.0,
            family_horizon: 4.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig2Summary {
    pub reflections: usize,
    /// Sign changes of `v₁` between consecutive samples with no reflection
    /// in between, i.e. turns produced by the field alone.
    pub field_driven_vx_sign_changes: usize,
    pub reflection_vx_sign_changes: usize,
    pub max_speed_jump: f64,
    /// `‖E‖_∞ · max Δt`, the largest jump a continuous speed series allows.
    pub speed_jump_bound: f64,
    pub velocity_lemma: VelocityLemmaReport,
    pub bounce_gap_min_ratio: f64,
}

impl Fig2Summary {
    pub fn speed_continuous(&self) -> bool {
        self.max_speed_jump <= self.speed_jump_bound * (1.0 + 1e-6) + 1e-12
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyMember {
    pub start_x: f64,
    pub alpha0: f64,
    pub reflections: usize,
    pub max_boundary_distance: f64,
    pub within_collar: bool,
    pub bounce_gap_min_ratio: f64,
    pub isolation: IsolationReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct AppendixSummary {
    pub params: AppendixParams,
    pub collar_width: f64,
    pub bump_normalization: f64,
    pub e_sup: f64,
    pub e_lipschitz: f64,
    pub outgoing_min_e_dot_n: f64,
    pub constants: FlowConstants,
    pub fig2: Fig2Summary,
    pub family: Vec<FamilyMember>,
}

impl AppendixSummary {
    pub fn family_alpha0_decreasing(&self) -> bool {
        self.family.windows(2).all(|w| w[1].alpha0 < w[0].alpha0)
    }
}

/// Trajectories and derived data, before anything touches the disk.
pub struct AppendixData {
    pub summary: AppendixSummary,
    pub field: FieldModel,
    pub density: DensitySpec,
    pub fig2: Trajectory,
    pub family: Vec<Trajectory>,
}

fn start_state(x: [f64; 2], direction: [f64; 2], speed: f64) -> PhaseState {
    let d = Vector2::from(direction);
    PhaseState::new(0.0, Vector2::from(x), d * (speed / d.norm()))
}

fn fig2_summary(domain: &Domain2, field: &FieldModel, traj: &Trajectory) -> Fig2Summary {
    let (mut driven, mut reflected) = (0, 0);
    let mut max_jump: f64 = 0.0;
    let mut max_dt: f64 = 0.0;
    for k in 1..traj.samples.len() {
        let (a, b) = (&traj.samples[k - 1], &traj.samples[k]);
        max_dt = max_dt.max(b.t - a.t);
        let pre_v = match traj.sample_event[k] {
            Some(i) => traj.events[i].v_pre,
            None => b.v,
        };
        max_jump = max_jump.max((pre_v.norm() - a.v.norm()).abs()).max((b.v.norm() - pre_v.norm()).abs());
        if a.v[0] * b.v[0] < 0.0 {
            if traj.sample_event[k].is_some() {
                reflected += 1;
            } else {
                driven += 1;
            }
        }
    }
    Fig2Summary {
        reflections: traj.events.len(),
        field_driven_vx_sign_changes: driven,
        reflection_vx_sign_changes: reflected,
        max_speed_jump: max_jump,
        speed_jump_bound: field.sup_norm_e() * max_dt,
        velocity_lemma: velocity_lemma_check(domain, traj, field),
        bounce_gap_min_ratio: bounce_gap_check(domain, traj, field).min_ratio,
    }
}

/// Run the appendix trajectories. The seven integrations are independent
/// and run on scoped threads.
pub fn compute(params: &AppendixParams) -> Result<AppendixData> {
    let domain = Domain2::unit_disk();
    let density = DensitySpec::appendix_default();
    let field = FieldModel::appendix();
    let opts = FlowOptions::default();

    let fig2_start = start_state(FIG2_START, FIG2_DIRECTION, params.fig2_speed);
    let (fig2, family) = std::thread::scope(|s| {
        let fig2 = s.spawn(|| advance(&domain, &fig2_start, &field, params.fig2_horizon, &opts));
        let members: Vec<_> = FAMILY_STARTS
            .iter()
            .map(|&x0| {
                let (domain, field, opts) = (&domain, &field, &opts);
                s.spawn(move || {
                    let st = start_state([x0, 0.0], FAMILY_DIRECTION, params.family_speed);
                    advance(domain, &st, field, params.family_horizon, opts)
                })
            })
            .collect();
        let fig2 = fig2.join().expect("trajectory thread panicked");
        let family: Vec<_> = members.into_iter().map(|h| h.join().expect("trajectory thread panicked")).collect();
        (fig2, family)
    });
    let fig2 = fig2?;
    let family = family.into_iter().collect::<vpconvex_core::Result<Vec<_>>>()?;

    let delta = domain.collar_width();
    let members = FAMILY_STARTS
        .iter()
        .zip(&family)
        .map(|(&x0, tr)| {
            let max_dist = tr
                .samples
                .iter()
                .map(|s| domain.boundary_distance(&s.x))
                .fold(0.0, f64::max);
            FamilyMember {
                start_x: x0,
                alpha0: tr.alpha_series[0].1,
                reflections: tr.events.len(),
                max_boundary_distance: max_dist,
                within_collar: max_dist <= delta,
                bounce_gap_min_ratio: bounce_gap_check(&domain, tr, &field).min_ratio,
                isolation: isolation_check(&domain, tr, &field),
            }
        })
        .collect();
    let bump_normalization = match density.kind {
        DensityKind::AppendixBump { norm_const, .. } => norm_const,
        _ => f64::NAN,
    };
    let summary = AppendixSummary {
        params: *params,
        collar_width: delta,
        bump_normalization,
        e_sup: field.sup_norm_e(),
        e_lipschitz: field.lipschitz_e(),
        outgoing_min_e_dot_n: field.outgoing_certificate().min_e_dot_n,
        constants: FlowConstants::assemble(&domain, &field),
        fig2: fig2_summary(&domain, &field, &fig2),
        family: members,
    };
    Ok(AppendixData {
        summary,
        field,
        density,
        fig2,
        family,
    })
}

fn speed_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,speed\n");
    for (t, s) in traj.speeds() {
        out.push_str(&format!("{},{}\n", fmt17(t), fmt17(s)));
    }
    out
}

fn path_points(traj: &Trajectory) -> Vec<(f64, f64)> {
    traj.samples.iter().map(|s| (s.x[0], s.x[1])).collect()
}

/// Emit the five artifact sets (plus SVGs when `plots`) into `store`.
pub fn write_artifacts(data: &AppendixData, store: &mut ArtifactStore, plots: bool) -> Result<()> {
    let grid = PolarGrid::new(FIG1_GRID.0, FIG1_GRID.1);
    let rho = data.density.sample_on(&grid);
    store.write("fig1_density_field.csv", grid_csv(&data.field, &grid, &rho).as_bytes())?;
    store.write("fig2_trajectory.csv", trajectory_csv(&data.fig2).as_bytes())?;
    store.write("fig2_speed.csv", speed_csv(&data.fig2).as_bytes())?;
    store.write("fig3_alpha.csv", alpha_csv(&data.fig2).as_bytes())?;
    for (i, tr) in data.family.iter().enumerate() {
        store.write(&format!("fig4_trajectory_{}.csv", i + 1), trajectory_csv(tr).as_bytes())?;
        store.write(&format!("fig5_alpha_{}.csv", i + 1), alpha_csv(tr).as_bytes())?;
    }
    store.write_json("appendix_report.json", &data.summary)?;

    if plots {
        let slice: Vec<f64> = (0..=400).map(|k| -1.0 + 2.0 * k as f64 / 400.0).collect();
        let fig1 = Plot::new("Bump density and field on the x-axis", "x", "value")
            .series(Series::new(
                "rho",
                slice.iter().map(|&x| (x, data.density.value_at(&Vector2::new(x, 0.0)))).collect(),
            ))
            .series(Series::new(
                "E_x",
                slice
                    .iter()
                    .map(|&x| (x, data.field.e(0.0, &Vector2::new(x * (1.0 - 1e-9), 0.0))[0]))
                    .collect(),
            ));
        store.write("fig1_density_field.svg", fig1.render().as_bytes())?;
        let fig2 = Plot::new("Trajectory from (-0.9, 0)", "x1", "x2")
            .in_disk()
            .series(Series::new("X(s)", path_points(&data.fig2)));
        store.write("fig2_trajectory.svg", fig2.render().as_bytes())?;
        let speed = Plot::new("Speed along the trajectory", "t", "|V|").series(Series::new("|V|", data.fig2.speeds()));
        store.write("fig2_speed.svg", speed.render().as_bytes())?;
        let alpha = Plot::new("Kinetic distance", "t", "alpha")
            .log_y()
            .series(Series::new("alpha", data.fig2.alpha_series.clone()));
        store.write("fig3_alpha.svg", alpha.render().as_bytes())?;
        let mut fig4 = Plot::new("Trajectories with initial velocity along (0, 1)", "x1", "x2").in_disk();
        let mut fig5 = Plot::new("Kinetic distance of the family", "t", "alpha").log_y();
        for (x0, tr) in FAMILY_STARTS.iter().zip(&data.family) {
            fig4 = fig4.series(Series::new(format!("x0 = {x0}"), path_points(tr)));
            fig5 = fig5.series(Series::new(format!("x0 = {x0}"), tr.alpha_series.clone()));
        }
        store.write("fig4_trajectories.svg", fig4.render().as_bytes())?;
        store.write("fig5_alpha.svg", fig5.render().as_bytes())?;
    }
    Ok(())
}

/// Compute, write and record the manifest constants.
pub fn reproduce(out: &Path, plots: bool, params: &AppendixParams) -> Result<(AppendixSummary, Vec<ArtifactEntry>)> {
    let data = compute(params)?;
    let mut store = ArtifactStore::create(out)?;
    write_artifacts(&data, &mut store, plots)?;
    let s = &data.summary;
    let v_min = data.fig2.samples.iter().map(|p| p.v.norm()).fold(f64::INFINITY, f64::min);
    store.constant("c_omega", s.constants.convexity);
    store.constant("c0_velocity_lemma", s.constants.velocity_lemma_constant(v_min));
    store.constant("c1_reflection", s.constants.reflection_constant());
    store.constant("e_sup", s.e_sup);
    store.constant("e_lipschitz", s.e_lipschitz);
    store.constant("bump_normalization", s.bump_normalization);
    store.constant("collar_width", s.collar_width);
    store.constant("h_split_rule", "not used (Dirichlet)");
    store.constant("appendix_params", s.params);
    let config = serde_json::json!({ "command": "reproduce_appendix", "plots": plots, "params": s.params });
    let entries = store.finish("reproduce_appendix", config)?;
    Ok((data.summary, entries))
}
