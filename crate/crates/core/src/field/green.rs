//! Potential and field of a bump density on the unit disk through the
//! Dirichlet Green function (image-charge form)
//!
//! `G(x, y) = −(1/2π)·[ln|x − y| − ½·ln(|x|²|y|² − 2x·y + 1)]`.
//!
//! Integrals are taken in polar coordinates centred at the evaluation point,
//! where the Jacobian `s` cancels the `1/|x − y|` singularity of the field
//! kernel. The radial coordinate is stretched as `s = s_max·t²` when the
//! point lies inside the support, which also tames `s·ln s` in the potential.

use std::cell::Cell;
use std::f64::consts::PI;

use nalgebra::Vector2;

use super::density::{DensityKind, DensitySpec};
use crate::error::{Error, Result};
use crate::quadrature::{adaptive_gk, GaussLegendre};

const INV_2PI: f64 = 0.5 / PI;

/// Fixed-rule resolution: angular and radial node counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GreenQuadrature {
    pub angular: usize,
    pub radial: usize,
}

impl Default for GreenQuadrature {
    fn default() -> Self {
        Self {
            angular: 64,
            radial: 48,
        }
    }
}

/// Budgeted adaptive quadrature settings for [`disk_green_field`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveGreen {
    pub abs_tol: f64,
    pub max_evals: usize,
}

impl Default for AdaptiveGreen {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            max_evals: 4_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GreenField {
    center: Vector2<f64>,
    radius: f64,
    norm_const: f64,
    zero: bool,
    angular: GaussLegendre,
    angular_n: usize,
    radial: GaussLegendre,
}

impl GreenField {
    pub fn new(rho: &DensitySpec, rule: GreenQuadrature) -> Result<Self> {
        let (center, radius, norm_const, zero) = match &rho.kind {
            DensityKind::Zero => (Vector2::zeros(), 1.0, 0.0, true),
            DensityKind::AppendixBump {
                center,
                radius,
                norm_const,
            } => {
                if center.norm() + radius > 1.0 + 1e-12 {
                    return Err(Error::InvalidInput(
                        "bump support must lie inside the unit disk".into(),
                    ));
                }
                (*center, *radius, *norm_const, false)
            }
            _ => {
                return Err(Error::InvalidInput(
                    "Green-function field needs an analytic bump density".into(),
                ))
            }
        };
        Ok(Self {
            center,
            radius,
            norm_const,
            zero,
            angular: GaussLegendre::new(rule.angular),
            angular_n: rule.angular,
            radial: GaussLegendre::new(rule.radial),
        })
    }

    pub fn appendix() -> Self {
        Self::new(&DensitySpec::appendix_default(), GreenQuadrature::default())
            .expect("appendix density is a bump inside the disk")
    }

    #[inline]
    fn rho(&self, y: &Vector2<f64>) -> f64 {
        let q = (y - self.center).norm_squared() / (self.radius * self.radius);
        if q >= 1.0 {
            0.0
        } else {
            self.norm_const * (-1.0 / (1.0 - q)).exp()
        }
    }

    /// Integrands at `y = x + s·e`: the potential term carries the polar
    /// Jacobian `s`; in the field term it has already cancelled `1/|x − y|`.
    #[inline]
    fn kernel(&self, x: &Vector2<f64>, e: &Vector2<f64>, s: f64, want_u: bool) -> (f64, Vector2<f64>) {
        let y = x + e * s;
        let rho = self.rho(&y);
        if rho == 0.0 {
            return (0.0, Vector2::zeros());
        }
        let y2 = y.norm_squared();
        let d = x.norm_squared() * y2 - 2.0 * x.dot(&y) + 1.0;
        let field = (-e - (x * y2 - y) * (s / d)) * (INV_2PI * rho);
        let u = if want_u {
            -INV_2PI * (s.ln() - 0.5 * d.ln()) * rho * s
        } else {
            0.0
        };
        (u, field)
    }

    fn integrate(&self, x: &Vector2<f64>, want_u: bool) -> (f64, Vector2<f64>) {
        if self.zero {
            return (0.0, Vector2::zeros());
        }
        let dvec = x - self.center;
        let dist = dvec.norm();
        let r2 = self.radius * self.radius;
        let mut u = 0.0;
        let mut field = Vector2::zeros();
        if dist < self.radius {
            let n = self.angular_n;
            let wphi = 2.0 * PI / n as f64;
            for k in 0..n {
                let phi = (k as f64 + 0.5) * wphi;
                let e = Vector2::new(phi.cos(), phi.sin());
                let b = dvec.dot(&e);
                let smax = -b + (b * b - dist * dist + r2).max(0.0).sqrt();
                for (t, wt) in self.radial.mapped(0.0, 1.0) {
                    let s = smax * t * t;
                    let w = wphi * wt * 2.0 * smax * t;
                    let (du, de) = self.kernel(x, &e, s, want_u);
                    u += w * du;
                    field += de * w;
                }
            }
        } else {
            let phic = (-dvec[1]).atan2(-dvec[0]);
            let beta = (self.radius / dist).min(1.0).asin();
            for (phi, wphi) in self.angular.mapped(phic - beta, phic + beta) {
                let e = Vector2::new(phi.cos(), phi.sin());
                let b = dvec.dot(&e);
                let disc = (b * b - dist * dist + r2).max(0.0).sqrt();
                let (s0, s1) = ((-b - disc).max(0.0), -b + disc);
                if s1 <= s0 {
                    continue;
                }
                for (s, ws) in self.radial.mapped(s0, s1) {
                    let w = wphi * ws;
                    let (du, de) = self.kernel(x, &e, s, want_u);
                    u += w * du;
                    field += de * w;
                }
            }
        }
        (u, field)
    }

    /// `E(x)` with the fixed rule.
    pub fn field(&self, x: &Vector2<f64>) -> Vector2<f64> {
        self.integrate(x, false).1
    }

    /// `(U(x), E(x))` with the fixed rule.
    pub fn potential_and_field(&self, x: &Vector2<f64>) -> (f64, Vector2<f64>) {
        self.integrate(x, true)
    }

    /// `(U(x), E(x))` by nested adaptive Gauss–Kronrod quadrature.
    pub fn potential_and_field_adaptive(
        &self,
        x: &Vector2<f64>,
        opts: AdaptiveGreen,
    ) -> Result<(f64, Vector2<f64>)> {
        if self.zero {
            return Ok((0.0, Vector2::zeros()));
        }
        let mut out = [0.0; 3];
        for (comp, slot) in out.iter_mut().enumerate() {
            *slot = self.adaptive_component(x, comp, opts)?;
        }
        Ok((out[0], Vector2::new(out[1], out[2])))
    }

    fn adaptive_component(&self, x: &Vector2<f64>, comp: usize, opts: AdaptiveGreen) -> Result<f64> {
        let dvec = x - self.center;
        let dist = dvec.norm();
        let r2 = self.radius * self.radius;
        let inside = dist < self.radius;
        let used = Cell::new(0usize);
        let failure: Cell<Option<Error>> = Cell::new(None);
        let pick = |u: f64, e: Vector2<f64>| match comp {
            0 => u,
            1 => e[0],
            _ => e[1],
        };
        let inner = |phi: f64| -> f64 {
            let e = Vector2::new(phi.cos(), phi.sin());
            let b = dvec.dot(&e);
            let disc = (b * b - dist * dist + r2).max(0.0).sqrt();
            let budget = opts.max_evals.saturating_sub(used.get());
            let result = if inside {
                let smax = -b + disc;
                adaptive_gk(
                    |t| {
                        used.set(used.get() + 1);
                        let s = smax * t * t;
                        let (du, de) = self.kernel(x, &e, s, comp == 0);
                        2.0 * smax * t * pick(du, de)
                    },
                    0.0,
                    1.0,
                    0.1 * opts.abs_tol,
                    0.0,
                    budget,
                )
            } else {
                let (s0, s1) = ((-b - disc).max(0.0), -b + disc);
                if s1 <= s0 {
                    return 0.0;
                }
                adaptive_gk(
                    |s| {
                        used.set(used.get() + 1);
                        let (du, de) = self.kernel(x, &e, s, comp == 0);
                        pick(du, de)
                    },
                    s0,
                    s1,
                    0.1 * opts.abs_tol,
                    0.0,
                    budget,
                )
            };
            match result {
                Ok(v) => v,
                Err(e) => {
                    failure.set(Some(e));
                    used.set(opts.max_evals);
                    0.0
                }
            }
        };
        let (a, b) = if inside {
            (0.0, 2.0 * PI)
        } else {
            let phic = (-dvec[1]).atan2(-dvec[0]);
            let beta = (self.radius / dist).min(1.0).asin();
            (phic - beta, phic + beta)
        };
        let outer_budget = (opts.max_evals / 15).max(15);
        let value = adaptive_gk(inner, a, b, opts.abs_tol, 0.0, outer_budget)?;
        if let Some(e) = failure.take() {
            return Err(e);
        }
        Ok(value)
    }
}

/// Potential and field of `ρ` at `x` strictly inside the unit disk, by
/// budgeted adaptive quadrature of the Dirichlet Green function.
pub fn disk_green_field(
    rho: &DensitySpec,
    x: &Vector2<f64>,
    quadrature: AdaptiveGreen,
) -> Result<(f64, Vector2<f64>)> {
    if x.norm() >= 1.0 {
        return Err(Error::InvalidInput(
            "Green-function evaluation needs a point strictly inside the unit disk".into(),
        ));
    }
    GreenField::new(rho, GreenQuadrature::default())?.potential_and_field_adaptive(x, quadrature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn enclosed_mass(rho: &DensitySpec, r: f64) -> f64 {
        let gl = GaussLegendre::new(40);
        let panels = 40;
        let h = r / panels as f64;
        (0..panels)
            .map(|p| {
                gl.integrate(p as f64 * h, (p + 1) as f64 * h, |s| {
                    2.0 * PI * s * rho.value_at(&Vector2::new(s, 0.0))
                })
            })
            .sum()
    }

    #[test]
    fn zero_density_gives_zero() {
        let (u, e) = disk_green_field(&DensitySpec::zero(), &Vector2::new(0.3, 0.2), AdaptiveGreen::default()).unwrap();
        assert_eq!(u, 0.0);
        assert_eq!(e, Vector2::zeros());
    }

    #[test]
    fn fixed_rule_matches_gauss_law() {
        let rho = DensitySpec::appendix_bump(Vector2::zeros(), 0.5, 1.0);
        let g = GreenField::new(&rho, GreenQuadrature::default()).unwrap();
        for &r in &[0.05, 0.2, 0.45, 0.5, 0.7, 0.95] {
            let th = 0.3;
            let x = Vector2::new(r * f64::cos(th), r * f64::sin(th));
            let e = g.field(&x);
            let expect = enclosed_mass(&rho, r) / (2.0 * PI * r);
            assert_abs_diff_eq!(e.norm(), expect, epsilon = 1e-6 * expect.max(1e-3));
            assert!(e.dot(&x) > 0.0);
        }
    }

    #[test]
    fn adaptive_rule_matches_gauss_law() {
        let rho = DensitySpec::appendix_bump(Vector2::zeros(), 0.5, 1.0);
        for &r in &[0.05, 0.3, 0.5, 0.8] {
            let x = Vector2::new(r * f64::cos(1.1), r * f64::sin(1.1));
            let (_, e) = disk_green_field(&rho, &x, AdaptiveGreen::default()).unwrap();
            let expect = enclosed_mass(&rho, r) / (2.0 * PI * r);
            assert_abs_diff_eq!(e.norm(), expect, epsilon = 1e-9 * expect.max(1e-3));
        }
    }

    #[test]
    fn adaptive_matches_fixed_rule() {
        let rho = DensitySpec::appendix_default();
        let g = GreenField::new(&rho, GreenQuadrature::default()).unwrap();
        for x in [Vector2::new(0.4, 0.1), Vector2::new(-0.5, 0.3), Vector2::new(0.2, -0.7)] {
            let (u0, e0) = g.potential_and_field(&x);
            let (u1, e1) = disk_green_field(&rho, &x, AdaptiveGreen::default()).unwrap();
            assert_abs_diff_eq!(u0, u1, epsilon = 1e-6);
            assert_abs_diff_eq!((e0 - e1).norm(), 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn potential_vanishes_on_boundary_and_field_is_outgoing() {
        let g = GreenField::appendix();
        for k in 0..64 {
            let th = 2.0 * PI * k as f64 / 64.0;
            let x = Vector2::new(th.cos(), th.sin());
            let (u, e) = g.potential_and_field(&x);
            assert_abs_diff_eq!(u, 0.0, epsilon = 1e-12);
            assert!(e.dot(&x) > 0.0, "E·n <= 0 at angle {th}");
        }
    }

    #[test]
    fn field_is_minus_gradient_of_potential() {
        let g = GreenField::appendix();
        let h = 1e-5;
        for x in [Vector2::new(0.1, 0.2), Vector2::new(0.6, -0.1), Vector2::new(-0.8, 0.3)] {
            let e = g.field(&x);
            let dx = (g.potential_and_field(&(x + Vector2::new(h, 0.0))).0
                - g.potential_and_field(&(x - Vector2::new(h, 0.0))).0)
                / (2.0 * h);
            let dy = (g.potential_and_field(&(x + Vector2::new(0.0, h))).0
                - g.potential_and_field(&(x - Vector2::new(0.0, h))).0)
                / (2.0 * h);
            assert_abs_diff_eq!(e[0], -dx, epsilon = 1e-7);
            assert_abs_diff_eq!(e[1], -dy, epsilon = 1e-7);
        }
    }

    #[test]
    fn tiny_budget_fails() {
        let rho = DensitySpec::appendix_default();
        let r = disk_green_field(&rho, &Vector2::new(0.5, 0.0), AdaptiveGreen { abs_tol: 1e-15, max_evals: 100 });
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })));
    }
}
