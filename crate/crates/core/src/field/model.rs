//! Field providers queried by the characteristic flow.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};

use super::green::GreenField;
use super::poisson::{Equation, PoissonSolution};

/// Boundary points used for the outgoing-field certificate.
pub const CERTIFICATE_POINTS: usize = 64;
/// Step of the central differences used for `∇E` on non-analytic sources.
const JACOBIAN_STEP: f64 = 1e-5;

#[derive(Debug, Clone)]
pub enum FieldSource {
    Zero,
    /// Spatially constant field.
    Uniform(Vector2<f64>),
    /// `E(x) = scale·x`.
    LinearRadial { scale: f64 },
    AnalyticAppendix(Arc<GreenField>),
    LinearPoisson(Arc<PoissonSolution>),
    Vpme(Arc<PoissonSolution>),
}

impl FieldSource {
    pub fn name(&self) -> &'static str {
        match self {
            FieldSource::Zero => "zero",
            FieldSource::Uniform(_) => "uniform",
            FieldSource::LinearRadial { .. } => "linear_radial",
            FieldSource::AnalyticAppendix(_) => "appendix",
            FieldSource::LinearPoisson(_) => "linear",
            FieldSource::Vpme(_) => "vpme",
        }
    }
}

/// Minimum of `E·n` over sampled boundary points of the unit circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutgoingCertificate {
    pub min_e_dot_n: f64,
    pub samples: usize,
}

impl OutgoingCertificate {
    pub fn valid(&self) -> bool {
        self.min_e_dot_n > 0.0
    }
}

/// A static field `E = −∇U` with cached norms.
#[derive(Debug, Clone)]
pub struct FieldModel {
    source: FieldSource,
    sup_norm_e: f64,
    lipschitz_e: f64,
    certificate: OutgoingCertificate,
}

impl FieldModel {
    pub fn new(source: FieldSource) -> Self {
        let mut model = Self {
            source,
            sup_norm_e: 0.0,
            lipschitz_e: 0.0,
            certificate: OutgoingCertificate {
                min_e_dot_n: 0.0,
                samples: 0,
            },
        };
        model.refresh_caches();
        model
    }

    pub fn zero() -> Self {
        Self::new(FieldSource::Zero)
    }

    pub fn uniform(e: Vector2<f64>) -> Self {
        Self::new(FieldSource::Uniform(e))
    }

    pub fn linear_radial(scale: f64) -> Self {
        Self::new(FieldSource::LinearRadial { scale })
    }

    pub fn appendix() -> Self {
        Self::new(FieldSource::AnalyticAppendix(Arc::new(GreenField::appendix())))
    }

    pub fn from_green(green: GreenField) -> Self {
        Self::new(FieldSource::AnalyticAppendix(Arc::new(green)))
    }

    pub fn from_solution(solution: PoissonSolution) -> Self {
        let arc = Arc::new(solution);
        match arc.equation {
            Equation::LinearPoisson => Self::new(FieldSource::LinearPoisson(arc)),
            Equation::Vpme => Self::new(FieldSource::Vpme(arc)),
        }
    }

    pub fn source(&self) -> &FieldSource {
        &self.source
    }

    pub fn solution(&self) -> Option<&PoissonSolution> {
        match &self.source {
            FieldSource::LinearPoisson(s) | FieldSource::Vpme(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.source, FieldSource::Zero)
    }

    /// `E(t, x)`; every source is static, `t` is part of the interface.
    #[inline]
    pub fn e(&self, _t: f64, x: &Vector2<f64>) -> Vector2<f64> {
        match &self.source {
            FieldSource::Zero => Vector2::zeros(),
            FieldSource::Uniform(e) => *e,
            FieldSource::LinearRadial { scale } => x * *scale,
            FieldSource::AnalyticAppendix(g) => g.field(x),
            FieldSource::LinearPoisson(s) | FieldSource::Vpme(s) => {
                s.grid.interpolate_vec(&s.field, x)
            }
        }
    }

    /// `U(x)`, up to the additive constant of the source.
    pub fn potential(&self, x: &Vector2<f64>) -> f64 {
        match &self.source {
            FieldSource::Zero => 0.0,
            FieldSource::Uniform(e) => -e.dot(x),
            FieldSource::LinearRadial { scale } => -0.5 * scale * x.norm_squared(),
            FieldSource::AnalyticAppendix(g) => g.potential_and_field(x).0,
            FieldSource::LinearPoisson(s) | FieldSource::Vpme(s) => {
                s.grid.interpolate(&s.potential, x)
            }
        }
    }

    /// Spatial Jacobian `∂E_i/∂x_j`.
    pub fn jacobian(&self, t: f64, x: &Vector2<f64>) -> Matrix2<f64> {
        match &self.source {
            FieldSource::Zero | FieldSource::Uniform(_) => Matrix2::zeros(),
            FieldSource::LinearRadial { scale } => Matrix2::identity() * *scale,
            _ => {
                let h = JACOBIAN_STEP;
                let dx = Vector2::new(h, 0.0);
                let dy = Vector2::new(0.0, h);
                let cx = (self.e(t, &(x + dx)) - self.e(t, &(x - dx))) / (2.0 * h);
                let cy = (self.e(t, &(x + dy)) - self.e(t, &(x - dy))) / (2.0 * h);
                Matrix2::from_columns(&[cx, cy])
            }
        }
    }

    pub fn sup_norm_e(&self) -> f64 {
        self.sup_norm_e
    }

    pub fn lipschitz_e(&self) -> f64 {
        self.lipschitz_e
    }

    pub fn outgoing_certificate(&self) -> OutgoingCertificate {
        self.certificate
    }

    /// Recompute `‖E‖_∞`, the Lipschitz estimate and the outgoing-field
    /// certificate over the closed unit disk.
    pub fn refresh_caches(&mut self) {
        let (sup, lip) = match &self.source {
            FieldSource::Zero => (0.0, 0.0),
            FieldSource::Uniform(e) => (e.norm(), 0.0),
            FieldSource::LinearRadial { scale } => (scale.abs(), scale.abs()),
            FieldSource::AnalyticAppendix(_) => self.sampled_norms(48, 96),
            FieldSource::LinearPoisson(s) | FieldSource::Vpme(s) => grid_norms(s),
        };
        self.sup_norm_e = sup;
        self.lipschitz_e = lip;
        let min = (0..CERTIFICATE_POINTS)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / CERTIFICATE_POINTS as f64;
                let n = Vector2::new(th.cos(), th.sin());
                let x = match self.source {
                    // The Green kernel is evaluated just inside the circle.
                    FieldSource::AnalyticAppendix(_) => n * (1.0 - 1e-9),
                    _ => n,
                };
                self.e(0.0, &x).dot(&n)
            })
            .fold(f64::INFINITY, f64::min);
        self.certificate = OutgoingCertificate {
            min_e_dot_n: min,
            samples: CERTIFICATE_POINTS,
        };
    }

    /// Norms of an analytic field from a polar sample including the boundary
    /// circle; the Lipschitz estimate is the largest difference quotient
    /// between neighbouring samples.
    fn sampled_norms(&self, nr: usize, nt: usize) -> (f64, f64) {
        let point = |i: usize, j: usize| {
            let r = (i as f64 / nr as f64).min(1.0 - 1e-9);
            let th = 2.0 * PI * j as f64 / nt as f64;
            Vector2::new(r * th.cos(), r * th.sin())
        };
        let mut values = vec![Vector2::zeros(); (nr + 1) * nt];
        let mut sup: f64 = 0.0;
        for i in 0..=nr {
            for j in 0..nt {
                let e = self.e(0.0, &point(i, j));
                sup = sup.max(e.norm());
                values[i * nt + j] = e;
            }
        }
        let mut lip: f64 = 0.0;
        for i in 0..=nr {
            for j in 0..nt {
                let a = values[i * nt + j];
                let pa = point(i, j);
                let mut neighbours = vec![(i, (j + 1) % nt)];
                if i < nr {
                    neighbours.push((i + 1, j));
                }
                for (ii, jj) in neighbours {
                    let d = (point(ii, jj) - pa).norm();
                    if d > 0.0 {
                        lip = lip.max((values[ii * nt + jj] - a).norm() / d);
                    }
                }
            }
        }
        (sup, lip)
    }
}

fn grid_norms(s: &PoissonSolution) -> (f64, f64) {
    let g = &s.grid;
    let sup = s.field.iter().fold(0.0f64, |m, e| m.max(e.norm()));
    let mut lip: f64 = 0.0;
    g.for_each_face(|a, b, _| {
        let d = (g.position(a) - g.position(b)).norm();
        if d > 0.0 {
            lip = lip.max((s.field[a] - s.field[b]).norm() / d);
        }
    });
    (sup, lip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::density::DensitySpec;
    use crate::field::grid::PolarGrid;
    use crate::field::poisson::{grid_poisson_solve, BoundaryCondition};
    use approx::assert_abs_diff_eq;

    #[test]
    fn analytic_sources() {
        let z = FieldModel::zero();
        assert_eq!(z.sup_norm_e(), 0.0);
        assert!(!z.outgoing_certificate().valid());
        let r = FieldModel::linear_radial(0.5);
        assert!(r.outgoing_certificate().valid());
        assert_abs_diff_eq!(r.outgoing_certificate().min_e_dot_n, 0.5, epsilon = 1e-15);
        let x = Vector2::new(0.3, -0.4);
        assert_abs_diff_eq!(r.potential(&x), -0.5 * 0.5 * 0.25, epsilon = 1e-15);
        let u = FieldModel::uniform(Vector2::new(0.5, 0.0));
        assert_abs_diff_eq!(u.outgoing_certificate().min_e_dot_n, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn appendix_field_is_outgoing_and_bounded() {
        let f = FieldModel::appendix();
        assert!(f.outgoing_certificate().valid());
        assert!(f.sup_norm_e() > 0.0 && f.lipschitz_e() > 0.0);
        for k in 0..50 {
            let th = 0.37 * k as f64;
            let r = (k as f64 / 50.0).sqrt() * 0.999;
            let x = Vector2::new(r * th.cos(), r * th.sin());
            assert!(f.e(0.0, &x).norm() <= 1.05 * f.sup_norm_e());
        }
    }

    #[test]
    fn grid_field_jacobian_and_certificate() {
        let g = PolarGrid::new(64, 64);
        let s = grid_poisson_solve(&DensitySpec::appendix_default(), &BoundaryCondition::Dirichlet, &g).unwrap();
        let f = FieldModel::from_solution(s);
        assert!(f.outgoing_certificate().valid());
        let j = f.jacobian(0.0, &Vector2::new(0.1, 0.2));
        assert!(j.iter().all(|v| v.is_finite()));
    }
}
