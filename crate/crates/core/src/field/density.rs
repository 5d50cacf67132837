//! Charge densities feeding the field solvers.

use std::f64::consts::PI;

use nalgebra::Vector2;

use super::grid::PolarGrid;
use crate::quadrature::adaptive_gk;

/// Smooth compactly supported bump
/// `ρ(x) = C·exp(−1/(1 − |x−c|²/R²))` for `|x − c| < R`, zero elsewhere.
#[inline]
pub fn appendix_density(x: &Vector2<f64>, center: &Vector2<f64>, radius: f64, norm_const: f64) -> f64 {
    let q = (x - center).norm_squared() / (radius * radius);
    if q >= 1.0 {
        0.0
    } else {
        norm_const * (-1.0 / (1.0 - q)).exp()
    }
}

/// `∫₀¹ exp(−1/(1−w)) dw`, the unit-radius bump integral over the disk
/// divided by `π`.
fn unit_bump_integral() -> f64 {
    adaptive_gk(
        |w| if w >= 1.0 { 0.0 } else { (-1.0 / (1.0 - w)).exp() },
        0.0,
        1.0,
        1e-17,
        1e-15,
        200_000,
    )
    .expect("bump integral converges")
}

/// Constant `C` for which the bump of the given radius carries `mass`.
pub fn calibrate_bump(radius: f64, mass: f64) -> f64 {
    mass / (PI * radius * radius * unit_bump_integral())
}

#[derive(Debug, Clone, PartialEq)]
pub enum DensityKind {
    Zero,
    AppendixBump {
        center: Vector2<f64>,
        radius: f64,
        norm_const: f64,
    },
    /// Nodal values on a polar grid.
    GridSampled { grid: PolarGrid, values: Vec<f64> },
    /// Nodal values produced by particle deposition.
    ParticleDeposited { grid: PolarGrid, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensitySpec {
    pub kind: DensityKind,
    /// Declared total mass.
    pub normalization: f64,
}

impl DensitySpec {
    pub fn zero() -> Self {
        Self {
            kind: DensityKind::Zero,
            normalization: 0.0,
        }
    }

    /// Bump of the given mass; `C` is calibrated by quadrature. The support
    /// must lie inside the unit disk for `mass` to be the mass over `Ω`.
    pub fn appendix_bump(center: Vector2<f64>, radius: f64, mass: f64) -> Self {
        assert!(radius > 0.0, "bump radius must be positive");
        Self {
            kind: DensityKind::AppendixBump {
                center,
                radius,
                norm_const: calibrate_bump(radius, mass),
            },
            normalization: mass,
        }
    }

    /// The appendix density: unit mass, centre `(0.5, 0)`, radius `1/2`.
    pub fn appendix_default() -> Self {
        Self::appendix_bump(Vector2::new(0.5, 0.0), 0.5, 1.0)
    }

    pub fn grid_sampled(grid: PolarGrid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len());
        let normalization = grid.integrate(&values);
        Self {
            kind: DensityKind::GridSampled { grid, values },
            normalization,
        }
    }

    pub fn deposited(grid: PolarGrid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len());
        let normalization = grid.integrate(&values);
        Self {
            kind: DensityKind::ParticleDeposited { grid, values },
            normalization,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.normalization
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, DensityKind::Zero)
    }

    pub fn value_at(&self, x: &Vector2<f64>) -> f64 {
        match &self.kind {
            DensityKind::Zero => 0.0,
            DensityKind::AppendixBump {
                center,
                radius,
                norm_const,
            } => appendix_density(x, center, *radius, *norm_const),
            DensityKind::GridSampled { grid, values }
            | DensityKind::ParticleDeposited { grid, values } => grid.interpolate(values, x),
        }
    }

    /// Nodal values on `grid`; grid-based densities on the same grid are
    /// returned as is, otherwise interpolated.
    pub fn sample_on(&self, grid: &PolarGrid) -> Vec<f64> {
        match &self.kind {
            DensityKind::GridSampled { grid: g, values }
            | DensityKind::ParticleDeposited { grid: g, values }
                if g == grid =>
            {
                values.clone()
            }
            _ => (0..grid.len())
                .map(|k| self.value_at(&grid.position(k)))
                .collect(),
        }
    }
}

/// `‖ρ‖_∞^{4/9}·‖ρ‖_{5/3}^{5/9}` with grid norms; the structural pointwise
/// field bound without its constant.
pub fn field_bound_estimate(rho: &DensitySpec, grid: &PolarGrid) -> f64 {
    let values = rho.sample_on(grid);
    let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sup == 0.0 {
        return 0.0;
    }
    let l53: f64 = values
        .iter()
        .enumerate()
        .map(|(k, v)| grid.ring_area(grid.ring_of(k).0) * v.abs().powf(5.0 / 3.0))
        .sum::<f64>()
        .powf(3.0 / 5.0);
    sup.powf(4.0 / 9.0) * l53.powf(5.0 / 9.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;
    use approx::assert_abs_diff_eq;

    #[test]
    fn bump_support_and_peak() {
        let c = Vector2::new(0.5, 0.0);
        assert_eq!(appendix_density(&Vector2::new(1.1, 0.0), &c, 0.5, 3.0), 0.0);
        assert_eq!(appendix_density(&Vector2::new(1.0, 0.0), &c, 0.5, 3.0), 0.0);
        assert_abs_diff_eq!(appendix_density(&c, &c, 0.5, 3.0), 3.0 * (-1f64).exp(), epsilon = 1e-15);
    }

    /// Independent check of the calibration: composite Gauss–Legendre in
    /// Cartesian coordinates over the bump's bounding square.
    #[test]
    fn calibrated_bump_has_unit_mass() {
        let rho = DensitySpec::appendix_default();
        let gl = GaussLegendre::new(12);
        let panels = 48;
        let (x0, x1, y0, y1) = (0.0, 1.0, -0.5, 0.5);
        let hx = (x1 - x0) / panels as f64;
        let hy = (y1 - y0) / panels as f64;
        let mut total = 0.0;
        for px in 0..panels {
            for py in 0..panels {
                let ax = x0 + px as f64 * hx;
                let ay = y0 + py as f64 * hy;
                for (x, wx) in gl.mapped(ax, ax + hx) {
                    for (y, wy) in gl.mapped(ay, ay + hy) {
                        total += wx * wy * rho.value_at(&Vector2::new(x, y));
                    }
                }
            }
        }
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn field_bound_examples() {
        let g = PolarGrid::new(32, 32);
        assert_eq!(field_bound_estimate(&DensitySpec::zero(), &g), 0.0);
        let ones = DensitySpec::grid_sampled(g, vec![1.0; g.len()]);
        assert_abs_diff_eq!(field_bound_estimate(&ones, &g), PI.powf(1.0 / 3.0), epsilon = 1e-12);
        let bump = field_bound_estimate(&DensitySpec::appendix_default(), &PolarGrid::new(128, 128));
        assert!(bump.is_finite() && bump > 0.0);
    }
}
