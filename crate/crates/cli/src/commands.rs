//! Dispatch of a parsed run configuration to the solvers.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nalgebra::Vector2;
use serde::Serialize;
use serde_json::json;
use vpconvex_core::field::{
    grid_poisson_solve, vpme_poisson_solve, vpme_split_solve, DensityKind, GreenField, GreenQuadrature, VpmeOptions,
};
use vpconvex_core::flow::{bounce_gap_check, count_reflections, isolation_check, velocity_lemma_check, FlowConstants};
use vpconvex_core::io::{alpha_csv, ensemble_csv, grid_csv, ledger_csv, picard_csv, trajectory_csv};
use vpconvex_core::kinetic::{coupled_simulate, picard_iterate, CoupledConfig, PicardConfig};
use vpconvex_core::{advance, DensitySpec, Domain2, FieldModel, FlowOptions, PhaseState, PolarGrid};

use crate::appendix::{self, AppendixParams};
use crate::artifacts::{ArtifactEntry, ArtifactStore};
use crate::config::{Command, ConfigError, FieldBlock, FieldSourceKind, InitialBlock, RunConfig};
use crate::svg::{Plot, Series};

pub const DEFAULT_OUT_DIR: &str = "vpconvex-out";

/// Command-line overrides of config values.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub plots: bool,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub command: Command,
    pub out_dir: PathBuf,
    pub artifacts: Vec<ArtifactEntry>,
}

pub fn run_file(path: &Path, opts: &RunOptions) -> Result<RunSummary> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let cfg = RunConfig::parse(&text)?;
    run_config(cfg, opts)
}

pub fn run_config(mut cfg: RunConfig, opts: &RunOptions) -> Result<RunSummary> {
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    cfg.plots |= opts.plots;
    let out_dir = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    cfg.validate()?;

    if cfg.command == Command::ReproduceAppendix {
        let (_, artifacts) = appendix::reproduce(&out_dir, cfg.plots, &AppendixParams::default())?;
        return Ok(RunSummary {
            command: cfg.command,
            out_dir,
            artifacts,
        });
    }

    let domain = cfg.domain.build(cfg.collar_width)?;
    let mut store = ArtifactStore::create(&out_dir)?;
    store.constant("c_omega", domain.convexity_constant());
    store.constant("collar_width", domain.collar_width());
    match cfg.command {
        Command::Trajectory => trajectory(&cfg, &domain, &mut store)?,
        Command::Field | Command::VpmePoisson => field(&cfg, &mut store)?,
        Command::Picard => picard(&cfg, &domain, &mut store)?,
        Command::Simulate => simulate(&cfg, &domain, &mut store)?,
        Command::ReproduceAppendix => unreachable!("handled above"),
    }
    let echo = serde_json::to_value(&cfg).context("echoing config")?;
    let command = serde_json::to_value(cfg.command)?.as_str().unwrap_or_default().to_string();
    let artifacts = store.finish(&command, echo)?;
    Ok(RunSummary {
        command: cfg.command,
        out_dir,
        artifacts,
    })
}

fn density(cfg: &RunConfig) -> Result<DensitySpec, ConfigError> {
    cfg.density.unwrap_or_default().build()
}

fn bump_normalization(rho: &DensitySpec) -> Option<f64> {
    match rho.kind {
        DensityKind::AppendixBump { norm_const, .. } => Some(norm_const),
        _ => None,
    }
}

fn split_rule(field: &FieldBlock) -> &'static str {
    match (field.source, field.split, field.h) {
        (FieldSourceKind::Vpme, true, Some(_)) => "h2 = -m/|dOmega| constant, h1 = h - h2",
        (FieldSourceKind::Vpme, true, None) => "Dirichlet parts, no flux split",
        _ => "not used",
    }
}

/// Field named by the config: zero, the Green-function field of the
/// density, or a grid solve of it.
fn build_field(cfg: &RunConfig, block: &FieldBlock, store: &mut ArtifactStore) -> Result<(FieldModel, DensitySpec)> {
    let rho = density(cfg)?;
    if let Some(c) = bump_normalization(&rho) {
        store.constant("bump_normalization", c);
    }
    store.constant("h_split_rule", split_rule(block));
    let field = match block.source {
        FieldSourceKind::Zero => FieldModel::zero(),
        FieldSourceKind::Appendix => {
            if cfg.density.is_none() {
                FieldModel::appendix()
            } else {
                FieldModel::from_green(GreenField::new(&rho, GreenQuadrature::default())?)
            }
        }
        FieldSourceKind::Linear => {
            let grid = block.grid.build()?;
            let bc = block.boundary(&grid)?;
            FieldModel::from_solution(grid_poisson_solve(&rho, &bc, &grid)?)
        }
        FieldSourceKind::Vpme => {
            let grid = block.grid.build()?;
            let bc = block.boundary(&grid)?;
            let sol = if block.split {
                vpme_split_solve(&rho, &bc, &grid)?
            } else {
                vpme_poisson_solve(&rho, &bc, &grid, block.method(), &VpmeOptions::default())?
            };
            FieldModel::from_solution(sol)
        }
    };
    store.constant("e_sup", field.sup_norm_e());
    store.constant("e_lipschitz", field.lipschitz_e());
    Ok((field, rho))
}

#[derive(Serialize)]
struct TrajectoryReport {
    velocity_lemma: serde_json::Value,
    bounce_gap: serde_json::Value,
    reflections: serde_json::Value,
    isolation: serde_json::Value,
    certificate_warning: bool,
    grazing_cutoff_reached: bool,
}

fn trajectory(cfg: &RunConfig, domain: &Domain2, store: &mut ArtifactStore) -> Result<()> {
    let block = cfg.field_block()?;
    let p = cfg.particle_block()?;
    let horizon = cfg.horizon()?;
    let x = Vector2::from(p.x);
    if domain.xi(&x) > 0.0 {
        return Err(ConfigError::key("particle.x", "start point lies outside the domain").into());
    }
    let (field, _) = build_field(cfg, block, store)?;
    let mut opts = FlowOptions::default();
    if let Some(h) = cfg.base_step {
        opts.base_step = h;
    }
    let traj = advance(domain, &PhaseState::new(0.0, x, Vector2::from(p.v)), &field, horizon, &opts)?;

    let vl = velocity_lemma_check(domain, &traj, &field);
    let gaps = bounce_gap_check(domain, &traj, &field);
    let count = count_reflections(domain, &traj, &field, (0.0, horizon));
    let iso = isolation_check(domain, &traj, &field);
    let constants = FlowConstants::assemble(domain, &field);
    store.constant("c0_velocity_lemma", vl.constant);
    store.constant("c1_reflection", constants.reflection_constant());

    store.write("trajectory.csv", trajectory_csv(&traj).as_bytes())?;
    store.write("alpha.csv", alpha_csv(&traj).as_bytes())?;
    let report = TrajectoryReport {
        velocity_lemma: json!({ "fraction_ok": vl.fraction_ok, "worst_ratio": vl.worst_ratio,
                                "collar_samples": vl.collar_samples, "constant": vl.constant }),
        bounce_gap: json!({ "min_ratio": gaps.min_ratio, "pairs": gaps.pairs.len() }),
        reflections: json!({ "k": count.k, "k_bound": count.k_bound, "alpha_ref": count.alpha_ref }),
        isolation: serde_json::to_value(iso)?,
        certificate_warning: traj.certificate_warning,
        grazing_cutoff_reached: traj.stats.min_alpha < vpconvex_core::flow::GRAZING_CUTOFF,
    };
    store.write_json("report.json", &report)?;
    if cfg.plots {
        let path: Vec<(f64, f64)> = traj.samples.iter().map(|s| (s.x[0], s.x[1])).collect();
        let mut plot = Plot::new("Trajectory", "x1", "x2").series(Series::new("X(s)", path));
        if domain.is_unit_disk() {
            plot = plot.in_disk();
        } else {
            plot.equal_aspect = true;
        }
        store.write("trajectory.svg", plot.render().as_bytes())?;
        let alpha = Plot::new("Kinetic distance", "t", "alpha")
            .log_y()
            .series(Series::new("alpha", traj.alpha_series.clone()));
        store.write("alpha.svg", alpha.render().as_bytes())?;
    }
    Ok(())
}

fn field(cfg: &RunConfig, store: &mut ArtifactStore) -> Result<()> {
    let block = cfg.field_block()?;
    let grid = block.grid.build()?;
    let (field, rho) = build_field(cfg, block, store)?;
    let name = if cfg.command == Command::VpmePoisson {
        "vpme_solution.csv"
    } else {
        "field.csv"
    };
    let nodal_rho = match field.solution() {
        Some(s) => s.rho.clone(),
        None => rho.sample_on(&grid),
    };
    store.write(name, grid_csv(&field, &grid, &nodal_rho).as_bytes())?;
    if let Some(s) = field.solution() {
        store.constant("hopf_certified", s.hopf_certified());
        store.write_json(
            "solver.json",
            &json!({
                "equation": format!("{:?}", s.equation),
                "residual_linf": s.residual_linf,
                "residual_floor": s.stats.residual_floor,
                "iterations": s.stats.iterations,
                "inner_iterations": s.stats.inner_iterations,
                "energy_history": s.stats.energy_history,
                "compatibility_defect": s.stats.compatibility_defect,
                "max_normal_derivative": s.stats.max_normal_derivative,
                "hopf_certified": s.hopf_certified(),
                "potential_sup": s.potential.iter().fold(0.0_f64, |m, u| m.max(u.abs())),
                "split": s.split.as_ref().map(|p| json!({
                    "regular_residual_linf": p.regular_residual_linf,
                    "singular_residual_linf": p.singular_residual_linf,
                })),
            }),
        )?;
    } else {
        store.constant("outgoing_min_e_dot_n", field.outgoing_certificate().min_e_dot_n);
    }
    if cfg.plots {
        let xs: Vec<f64> = (0..=400).map(|k| -1.0 + 2.0 * k as f64 / 400.0).collect();
        let on_axis = |x: f64| Vector2::new(x * (1.0 - 1e-9), 0.0);
        let plot = Plot::new("Potential and field on the x-axis", "x", "value")
            .series(Series::new("U", xs.iter().map(|&x| (x, field.potential(&on_axis(x)))).collect()))
            .series(Series::new("E_x", xs.iter().map(|&x| (x, field.e(0.0, &on_axis(x))[0])).collect()));
        store.write(&name.replace(".csv", ".svg"), plot.render().as_bytes())?;
    }
    Ok(())
}

fn record_initial(store: &mut ArtifactStore, initial: &InitialBlock) {
    if let InitialBlock::Appendix { radius, .. } = initial {
        store.constant("bump_normalization", vpconvex_core::field::calibrate_bump(*radius, 1.0));
    }
}

fn picard(cfg: &RunConfig, domain: &Domain2, store: &mut ArtifactStore) -> Result<()> {
    let initial = cfg.initial_block()?;
    let spec = initial.build(cfg.seed)?;
    let block = cfg.field_block()?;
    let config = PicardConfig {
        horizon: cfg.horizon()?,
        snapshot_dt: cfg.snapshot_dt.unwrap_or(0.05),
        iterations: cfg.iterations.unwrap_or(1),
        field: block.solve_config()?,
    };
    record_initial(store, initial);
    store.constant("h_split_rule", split_rule(block));
    let (state, ensembles) = picard_iterate(&spec, domain, &config)?;
    let e_sup = state.fields.iter().map(|f| f.sup_norm_e()).fold(0.0, f64::max);
    store.constant("e_sup", e_sup);
    store.constant("nonmonotone_warning", state.nonmonotone_warning);
    store.constant("flatness_violations", &state.flatness_violations);
    store.write("picard.csv", picard_csv(&state.cauchy).as_bytes())?;
    let last = state.fields.last().expect("at least one snapshot");
    let grid = config.field.grid;
    let rho = last.solution().map(|s| s.rho.clone()).unwrap_or_else(|| vec![0.0; grid.len()]);
    store.write("field_final.csv", grid_csv(last, &grid, &rho).as_bytes())?;
    if let Some(ens) = ensembles.last() {
        store.write("ensemble_final.csv", ensemble_csv(ens).as_bytes())?;
    }
    if cfg.plots {
        let pts = state.cauchy.iter().map(|c| (c.n as f64, c.sup_diff)).collect();
        let plot = Plot::new("Picard differences", "n", "sup |E^n - E^(n-1)|")
            .log_y()
            .series(Series::new("sup diff", pts));
        store.write("picard.svg", plot.render().as_bytes())?;
    }
    Ok(())
}

fn snapshot_name(t: f64) -> String {
    format!("ensemble_t{t:.4}.csv")
}

fn simulate(cfg: &RunConfig, domain: &Domain2, store: &mut ArtifactStore) -> Result<()> {
    let initial = cfg.initial_block()?;
    let spec = initial.build(cfg.seed)?;
    let block = cfg.field_block()?;
    let config = CoupledConfig {
        horizon: cfg.horizon()?,
        dt: cfg.dt.unwrap_or(1e-2),
        field: block.solve_config()?,
        snapshot_times: cfg.snapshot_times.clone(),
    };
    record_initial(store, initial);
    store.constant("h_split_rule", split_rule(block));
    let run = coupled_simulate(&spec, domain, &config)?;
    store.constant("e_sup", run.max_field);
    store.constant("growth_normalization", run.growth_normalization);
    store.write("ledger.csv", ledger_csv(&run.ledger).as_bytes())?;
    for ens in &run.snapshots {
        store.write(&snapshot_name(ens.t), ensemble_csv(ens).as_bytes())?;
    }
    store.write("ensemble_final.csv", ensemble_csv(&run.final_ensemble).as_bytes())?;
    let grid: PolarGrid = config.field.grid;
    let rho = run
        .final_field
        .solution()
        .map(|s| s.rho.clone())
        .unwrap_or_else(|| vec![0.0; grid.len()]);
    store.write("field_final.csv", grid_csv(&run.final_field, &grid, &rho).as_bytes())?;
    if cfg.plots {
        let series = |f: fn(&vpconvex_core::kinetic::LedgerRow) -> f64| run.ledger.iter().map(|r| (r.t, f(r))).collect();
        let energy = Plot::new("Energy ledger", "t", "energy")
            .series(Series::new("kinetic", series(|r| r.kinetic_energy)))
            .series(Series::new("field", series(|r| r.field_energy)))
            .series(Series::new("total", series(|r| r.total_energy)));
        store.write("energy.svg", energy.render().as_bytes())?;
        let q = Plot::new("Velocity support", "t", "Q").series(Series::new("Q", series(|r| r.q)));
        store.write("q.svg", q.render().as_bytes())?;
    }
    Ok(())
}
