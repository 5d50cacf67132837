//! Strict JSON run configuration.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use vpconvex_core::field::{BoundaryCondition, PolarGrid, VpmeMethod};
use vpconvex_core::kinetic::{FieldEquation, FieldSolveConfig, InitialDataSpec, Profile, Sampling};
use vpconvex_core::{DensitySpec, Domain2};

/// Rejected configuration, pointing at the offending key where known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn key(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: Some(key.to_string()),
            line: None,
            message: message.into(),
        }
    }

    fn from_json(err: &serde_json::Error) -> Self {
        let text = err.to_string();
        // serde names the culprit between backticks: "unknown field `foo`".
        let key = if text.contains("unknown field") || text.contains("missing field") || text.contains("unknown variant") {
            text.split('`').nth(1).map(str::to_string)
        } else {
            None
        };
        Self {
            key,
            line: (err.line() > 0).then(|| err.line()),
            message: text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Trajectory,
    Field,
    VpmePoisson,
    Picard,
    Simulate,
    ReproduceAppendix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainBlock {
    #[default]
    UnitDisk,
    Ellipse { a: f64, b: f64 },
}

impl DomainBlock {
    pub fn build(&self, collar_width: Option<f64>) -> Result<Domain2, ConfigError> {
        let mut domain = match *self {
            DomainBlock::UnitDisk => Domain2::unit_disk(),
            DomainBlock::Ellipse { a, b } => {
                if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                    return Err(ConfigError::key("domain", "ellipse semi-axes must be positive"));
                }
                Domain2::ellipse(a, b).map_err(|e| ConfigError::key("domain", e.to_string()))?
            }
        };
        if let Some(w) = collar_width {
            if !(w > 0.0) {
                return Err(ConfigError::key("collar_width", "collar width must be positive"));
            }
            domain = domain.with_collar_width(w);
        }
        Ok(domain)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldSourceKind {
    Zero,
    Appendix,
    Linear,
    Vpme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BcKind {
    #[default]
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    #[default]
    DampedNewton,
    EnergyDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub nr: usize,
    pub ntheta: usize,
}

impl Default for GridBlock {
    fn default() -> Self {
        Self { nr: 64, ntheta: 128 }
    }
}

impl GridBlock {
    pub fn build(&self) -> Result<PolarGrid, ConfigError> {
        if self.nr < 2 || self.ntheta < 4 {
            return Err(ConfigError::key("field.grid", "grid needs nr ≥ 2 and ntheta ≥ 4"));
        }
        Ok(PolarGrid::new(self.nr, self.ntheta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldBlock {
    pub source: FieldSourceKind,
    #[serde(default)]
    pub bc: BcKind,
    /// Constant outward normal derivative for Neumann problems.
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub method: MethodKind,
    /// Multiplies the deposited density in self-consistent runs.
    #[serde(default = "one")]
    pub charge_scale: f64,
    /// Solve VPME through the regular/singular decomposition.
    #[serde(default)]
    pub split: bool,
}

fn one() -> f64 {
    1.0
}

impl FieldBlock {
    pub fn boundary(&self, grid: &PolarGrid) -> Result<BoundaryCondition, ConfigError> {
        match (self.bc, self.h) {
            (BcKind::Dirichlet, None) => Ok(BoundaryCondition::Dirichlet),
            (BcKind::Dirichlet, Some(_)) => Err(ConfigError::key("field.h", "h only applies to Neumann data")),
            (BcKind::Neumann, Some(h)) if h.is_finite() => Ok(BoundaryCondition::neumann_constant(grid, h)),
            (BcKind::Neumann, _) => Err(ConfigError::key("field.h", "Neumann data needs a finite h")),
        }
    }

    pub fn method(&self) -> VpmeMethod {
        match self.method {
            MethodKind::DampedNewton => VpmeMethod::DampedNewton,
            MethodKind::EnergyDescent => VpmeMethod::EnergyDescent,
        }
    }

    /// Field equation for self-consistent runs.
    pub fn solve_config(&self) -> Result<FieldSolveConfig, ConfigError> {
        let grid = self.grid.build()?;
        let bc = self.boundary(&grid)?;
        let equation = match self.source {
            FieldSourceKind::Linear => FieldEquation::Linear(bc),
            FieldSourceKind::Vpme => FieldEquation::Vpme(bc, self.method()),
            other => {
                return Err(ConfigError::key(
                    "field.source",
                    format!("self-consistent runs need a linear or vpme field, got {other:?}"),
                ))
            }
        };
        if !self.charge_scale.is_finite() || self.charge_scale < 0.0 {
            return Err(ConfigError::key("field.charge_scale", "charge scale must be finite and nonnegative"));
        }
        Ok(FieldSolveConfig {
            equation,
            grid,
            charge_scale: self.charge_scale,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityBlock {
    Zero,
    /// The appendix bump `C·exp(−1/(r² − |x − c|²))`.
    Bump {
        center: [f64; 2],
        radius: f64,
        #[serde(default = "one")]
        mass: f64,
    },
}

impl Default for DensityBlock {
    fn default() -> Self {
        DensityBlock::Bump {
            center: [0.5, 0.0],
            radius: 0.5,
            mass: 1.0,
        }
    }
}

impl DensityBlock {
    pub fn build(&self) -> Result<DensitySpec, ConfigError> {
        match *self {
            DensityBlock::Zero => Ok(DensitySpec::zero()),
            DensityBlock::Bump { center, radius, mass } => {
                let c = Vector2::from(center);
                if !(radius > 0.0) || c.norm() + radius > 1.0 + 1e-12 {
                    return Err(ConfigError::key("density", "bump support must be a disk inside the unit disk"));
                }
                if !(mass >= 0.0 && mass.is_finite()) {
                    return Err(ConfigError::key("density.mass", "mass must be finite and nonnegative"));
                }
                Ok(DensitySpec::appendix_bump(c, radius, mass))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleBlock {
    pub x: [f64; 2],
    pub v: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingKind {
    #[default]
    Stratified,
    Halton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialBlock {
    /// Appendix bump in space times a radial bump of radius `v_radius` in
    /// velocity.
    Appendix {
        #[serde(default = "appendix_center")]
        center: [f64; 2],
        #[serde(default = "half")]
        radius: f64,
        #[serde(default = "one")]
        v_radius: f64,
        particles: usize,
        #[serde(default)]
        sampling: SamplingKind,
        #[serde(default)]
        flatness_delta0: f64,
    },
    UniformDisk {
        center: [f64; 2],
        radius: f64,
        v_max: f64,
        particles: usize,
        #[serde(default)]
        sampling: SamplingKind,
        #[serde(default)]
        flatness_delta0: f64,
    },
}

fn appendix_center() -> [f64; 2] {
    [0.5, 0.0]
}

fn half() -> f64 {
    0.5
}

impl InitialBlock {
    pub fn build(&self, seed: u64) -> Result<InitialDataSpec, ConfigError> {
        let (profile, particles, sampling, delta0) = match *self {
            InitialBlock::Appendix {
                center,
                radius,
                v_radius,
                particles,
                sampling,
                flatness_delta0,
            } => {
                if !(radius > 0.0 && v_radius > 0.0) {
                    return Err(ConfigError::key("initial", "radius and v_radius must be positive"));
                }
                let p = Profile::AppendixBump {
                    center: Vector2::from(center),
                    radius,
                    v_radius,
                };
                (p, particles, sampling, flatness_delta0)
            }
            InitialBlock::UniformDisk {
                center,
                radius,
                v_max,
                particles,
                sampling,
                flatness_delta0,
            } => {
                if !(radius > 0.0 && v_max > 0.0) {
                    return Err(ConfigError::key("initial", "radius and v_max must be positive"));
                }
                let p = Profile::UniformDisk {
                    center: Vector2::from(center),
                    radius,
                    v_max,
                };
                (p, particles, sampling, flatness_delta0)
            }
        };
        if particles == 0 {
            return Err(ConfigError::key("initial.particles", "need at least one particle"));
        }
        let sampling = match sampling {
            SamplingKind::Stratified => Sampling::StratifiedGrid,
            SamplingKind::Halton => Sampling::QuasiRandomHalton,
        };
        Ok(InitialDataSpec::new(profile, particles)
            .with_sampling(sampling)
            .with_seed(seed)
            .with_flatness(delta0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub domain: DomainBlock,
    #[serde(default)]
    pub collar_width: Option<f64>,
    #[serde(default)]
    pub field: Option<FieldBlock>,
    /// Source density for field solves and frozen trajectory fields.
    #[serde(default)]
    pub density: Option<DensityBlock>,
    #[serde(default)]
    pub particle: Option<ParticleBlock>,
    #[serde(default)]
    pub initial: Option<InitialBlock>,
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Time step of coupled runs.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Integrator base step of trajectory runs.
    #[serde(default)]
    pub base_step: Option<f64>,
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub snapshot_dt: Option<f64>,
    /// Times at which coupled runs dump the particle ensemble.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub plots: bool,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::from_json(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn require<'a, T>(&self, block: &'a Option<T>, key: &str) -> Result<&'a T, ConfigError> {
        block
            .as_ref()
            .ok_or_else(|| ConfigError::key(key, format!("command {:?} needs a `{key}` block", self.command)))
    }

    pub fn horizon(&self) -> Result<f64, ConfigError> {
        let t = *self.require(&self.horizon, "horizon")?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(ConfigError::key("horizon", "horizon must be positive"));
        }
        Ok(t)
    }

    pub fn field_block(&self) -> Result<&FieldBlock, ConfigError> {
        self.require(&self.field, "field")
    }

    pub fn particle_block(&self) -> Result<&ParticleBlock, ConfigError> {
        self.require(&self.particle, "particle")
    }

    pub fn initial_block(&self) -> Result<&InitialBlock, ConfigError> {
        self.require(&self.initial, "initial")
    }

    /// Checks that the blocks the command reads are present and sane.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.domain.build(self.collar_width)?;
        let grid_only = |field: &FieldBlock| -> Result<(), ConfigError> {
            if field.source != FieldSourceKind::Zero && self.domain != DomainBlock::UnitDisk {
                return Err(ConfigError::key("domain", "gridded and appendix fields live on the unit disk"));
            }
            Ok(())
        };
        match self.command {
            Command::Trajectory => {
                self.particle_block()?;
                self.horizon()?;
                let f = self.field_block()?;
                grid_only(f)?;
                if matches!(f.source, FieldSourceKind::Linear | FieldSourceKind::Vpme) {
                    f.grid.build()?;
                }
                if let Some(h) = self.base_step {
                    if !(h > 0.0) {
                        return Err(ConfigError::key("base_step", "base step must be positive"));
                    }
                }
            }
            Command::Field | Command::VpmePoisson => {
                let f = self.field_block()?;
                grid_only(f)?;
                f.grid.build()?;
                if self.command == Command::VpmePoisson && f.source != FieldSourceKind::Vpme {
                    return Err(ConfigError::key("field.source", "vpme_poisson needs source \"vpme\""));
                }
                if f.source == FieldSourceKind::Zero {
                    return Err(ConfigError::key("field.source", "nothing to solve for a zero field"));
                }
            }
            Command::Picard => {
                self.horizon()?;
                self.initial_block()?.build(self.seed)?;
                let f = self.field_block()?;
                grid_only(f)?;
                f.solve_config()?;
                let n = *self.require(&self.iterations, "iterations")?;
                if n == 0 {
                    return Err(ConfigError::key("iterations", "need at least one iteration"));
                }
                let dt = *self.require(&self.snapshot_dt, "snapshot_dt")?;
                if !(dt > 0.0) {
                    return Err(ConfigError::key("snapshot_dt", "snapshot_dt must be positive"));
                }
            }
            Command::Simulate => {
                self.horizon()?;
                self.initial_block()?.build(self.seed)?;
                let f = self.field_block()?;
                grid_only(f)?;
                f.solve_config()?;
                let dt = *self.require(&self.dt, "dt")?;
                if !(dt > 0.0) {
                    return Err(ConfigError::key("dt", "dt must be positive"));
                }
            }
            Command::ReproduceAppendix => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse(r#"{"command": "field", "feild": {}}"#).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("feild"));
        assert_eq!(err.line, Some(1));
    }

    #[test]
    fn nested_unknown_key_is_named() {
        let text = r#"{"command": "field", "field": {"source": "linear", "grid": {"nr": 8, "nth": 16}}}"#;
        assert_eq!(RunConfig::parse(text).unwrap_err().key.as_deref(), Some("nth"));
    }

    #[test]
    fn missing_block_is_named() {
        let err = RunConfig::parse(r#"{"command": "trajectory", "horizon": 1.0}"#).unwrap_err();
        assert_eq!(err.key.as_deref(), Some("particle"));
    }

    #[test]
    fn minimal_trajectory_config() {
        let cfg = RunConfig::parse(
            r#"{"command": "trajectory", "horizon": 2.0, "field": {"source": "zero"},
                "particle": {"x": [0.0, 0.0], "v": [1.0, 0.0]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.domain, DomainBlock::UnitDisk);
        assert_eq!(cfg.field.unwrap().grid, GridBlock::default());
    }

    #[test]
    fn neumann_needs_h() {
        let f = FieldBlock {
            source: FieldSourceKind::Linear,
            bc: BcKind::Neumann,
            h: None,
            grid: GridBlock::default(),
            method: MethodKind::default(),
            charge_scale: 1.0,
            split: false,
        };
        assert_eq!(f.solve_config().unwrap_err().key.as_deref(), Some("field.h"));
    }
}
