//! Bounded uniformly convex domains described by a level set `Ω = {ξ < 0}`.
//!
//! Built-in kinds (unit disk, axis-aligned ellipse) are two-dimensional and
//! evaluated analytically. Any dimension can be served through a
//! [`CustomLevelSet`], in which case the convexity constant and the gradient
//! floor on the boundary collar are estimated by quasi-random sampling.
//!
//! Custom level sets must be `C^{2,1}`; this cannot be checked here and is
//! the caller's obligation.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SMatrix, SVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::sampling::halton;

/// Absolute tolerance on `|ξ|` for a point to count as a boundary point.
pub const BOUNDARY_TOL: f64 = 1e-12;
/// Default width of the boundary collar `∂Ω_δ`.
pub const DEFAULT_COLLAR_WIDTH: f64 = 0.1;

const CONVEXITY_SAMPLES: usize = 10_000;
const COLLAR_SAMPLES: usize = 4_096;
const PROJECTION_MAX_STEPS: usize = 50;

pub type Point<const D: usize> = SVector<f64, D>;
pub type Hessian<const D: usize> = SMatrix<f64, D, D>;
pub type Point2 = Point<2>;

type ValueFn<const D: usize> = dyn Fn(&Point<D>) -> f64 + Send + Sync;
type GradFn<const D: usize> = dyn Fn(&Point<D>) -> Point<D> + Send + Sync;
type HessFn<const D: usize> = dyn Fn(&Point<D>) -> Hessian<D> + Send + Sync;

/// User supplied level set: value, gradient and Hessian callbacks plus an
/// axis-aligned bounding box of the domain and one interior point.
#[derive(Clone)]
pub struct CustomLevelSet<const D: usize> {
    pub value: Arc<ValueFn<D>>,
    pub gradient: Arc<GradFn<D>>,
    pub hessian: Arc<HessFn<D>>,
    pub lower: Point<D>,
    pub upper: Point<D>,
    pub interior_point: Point<D>,
}

impl<const D: usize> fmt::Debug for CustomLevelSet<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomLevelSet")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum DomainKind<const D: usize> {
    UnitDisk,
    /// `ξ = ½(x²/a² + y²/b² − 1)`.
    Ellipse { a: f64, b: f64 },
    Custom(CustomLevelSet<D>),
}

/// Level-set value, gradient and Hessian at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSetValue<const D: usize> {
    pub xi: f64,
    pub grad: Point<D>,
    pub hessian: Hessian<D>,
}

#[derive(Debug, Clone)]
pub struct ConvexDomain<const D: usize> {
    kind: DomainKind<D>,
    convexity_constant: f64,
    gradient_floor: f64,
    collar_width: f64,
}

pub type Domain2 = ConvexDomain<2>;

impl ConvexDomain<2> {
    pub fn unit_disk() -> Self {
        Self {
            kind: DomainKind::UnitDisk,
            convexity_constant: 1.0,
            // |∇ξ| = |x| ≥ 1 − δ on the collar.
            gradient_floor: 1.0 - DEFAULT_COLLAR_WIDTH,
            collar_width: DEFAULT_COLLAR_WIDTH,
        }
    }

    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "ellipse semi-axes must be positive, got a={a}, b={b}"
            )));
        }
        let collar_width = DEFAULT_COLLAR_WIDTH.min(0.5 * a.min(b));
        let mut domain = Self {
            kind: DomainKind::Ellipse { a, b },
            convexity_constant: (1.0 / (a * a)).min(1.0 / (b * b)),
            gradient_floor: 0.0,
            collar_width,
        };
        domain.gradient_floor = domain.sample_gradient_floor();
        Ok(domain)
    }
}

impl<const D: usize> ConvexDomain<D> {
    /// Builds a domain from callbacks. The convexity constant is the minimum
    /// Hessian eigenvalue over 10⁴ quasi-random points of the closure.
    pub fn custom(level_set: CustomLevelSet<D>) -> Result<Self> {
        if (level_set.value)(&level_set.interior_point) >= 0.0 {
            return Err(Error::InvalidInput(
                "custom level set: interior_point is not inside the domain".into(),
            ));
        }
        let mut domain = Self {
            kind: DomainKind::Custom(level_set),
            convexity_constant: 0.0,
            gradient_floor: 0.0,
            collar_width: DEFAULT_COLLAR_WIDTH,
        };
        domain.convexity_constant = domain.sample_convexity_constant()?;
        domain.gradient_floor = domain.sample_gradient_floor();
        if domain.gradient_floor <= 0.0 {
            return Err(Error::InvalidInput(
                "custom level set: gradient vanishes in the boundary collar".into(),
            ));
        }
        Ok(domain)
    }

    pub fn with_collar_width(mut self, collar_width: f64) -> Self {
        assert!(collar_width > 0.0, "collar width must be positive");
        self.collar_width = collar_width;
        self.gradient_floor = match self.kind {
            DomainKind::UnitDisk => 1.0 - collar_width.min(1.0),
            _ => self.sample_gradient_floor(),
        };
        self
    }

    pub fn kind(&self) -> &DomainKind<D> {
        &self.kind
    }

    pub fn dimension(&self) -> usize {
        D
    }

    pub fn collar_width(&self) -> f64 {
        self.collar_width
    }

    pub fn gradient_floor(&self) -> f64 {
        self.gradient_floor
    }

    pub fn is_unit_disk(&self) -> bool {
        matches!(self.kind, DomainKind::UnitDisk)
    }

    /// Measure of the domain when known in closed form.
    pub fn area(&self) -> Option<f64> {
        match self.kind {
            DomainKind::UnitDisk => Some(std::f64::consts::PI),
            DomainKind::Ellipse { a, b } => Some(std::f64::consts::PI * a * b),
            DomainKind::Custom(_) => None,
        }
    }

    pub fn bounding_box(&self) -> (Point<D>, Point<D>) {
        match &self.kind {
            DomainKind::UnitDisk => (Point::from_element(-1.0), Point::from_element(1.0)),
            DomainKind::Ellipse { a, b } => {
                let mut lo = Point::zeros();
                let mut hi = Point::zeros();
                lo[0] = -a;
                lo[1] = -b;
                hi[0] = *a;
                hi[1] = *b;
                (lo, hi)
            }
            DomainKind::Custom(c) => (c.lower, c.upper),
        }
    }

    fn interior_point(&self) -> Point<D> {
        match &self.kind {
            DomainKind::Custom(c) => c.interior_point,
            _ => Point::zeros(),
        }
    }

    #[inline]
    pub fn xi(&self, x: &Point<D>) -> f64 {
        match &self.kind {
            DomainKind::UnitDisk => 0.5 * (x.norm_squared() - 1.0),
            DomainKind::Ellipse { a, b } => {
                0.5 * (x[0] * x[0] / (a * a) + x[1] * x[1] / (b * b) - 1.0)
            }
            DomainKind::Custom(c) => (c.value)(x),
        }
    }

    #[inline]
    pub fn grad_xi(&self, x: &Point<D>) -> Point<D> {
        match &self.kind {
            DomainKind::UnitDisk => *x,
            DomainKind::Ellipse { a, b } => {
                let mut g = Point::zeros();
                g[0] = x[0] / (a * a);
                g[1] = x[1] / (b * b);
                g
            }
            DomainKind::Custom(c) => (c.gradient)(x),
        }
    }

    #[inline]
    pub fn hessian_xi(&self, x: &Point<D>) -> Hessian<D> {
        match &self.kind {
            DomainKind::UnitDisk => Hessian::identity(),
            DomainKind::Ellipse { a, b } => {
                let mut h = Hessian::zeros();
                h[(0, 0)] = 1.0 / (a * a);
                h[(1, 1)] = 1.0 / (b * b);
                h
            }
            DomainKind::Custom(c) => (c.hessian)(x),
        }
    }

    pub fn level_set_eval(&self, x: &Point<D>) -> LevelSetValue<D> {
        LevelSetValue {
            xi: self.xi(x),
            grad: self.grad_xi(x),
            hessian: self.hessian_xi(x),
        }
    }

    pub fn outward_normal(&self, x: &Point<D>) -> Result<Point<D>> {
        let xi = self.xi(x);
        if xi.abs() > BOUNDARY_TOL {
            return Err(Error::NotOnBoundary { xi });
        }
        Ok(self.normal_unchecked(x))
    }

    /// `∇ξ/|∇ξ|` without the boundary check.
    #[inline]
    pub fn normal_unchecked(&self, x: &Point<D>) -> Point<D> {
        let g = self.grad_xi(x);
        g / g.norm()
    }

    /// Distance to the boundary: exact for the unit disk, the first-order
    /// estimate `|ξ|/|∇ξ|` otherwise (positive inside).
    pub fn boundary_distance(&self, x: &Point<D>) -> f64 {
        match self.kind {
            DomainKind::UnitDisk => 1.0 - x.norm(),
            _ => {
                let xi = self.xi(x);
                let g = self.grad_xi(x).norm();
                if g == 0.0 {
                    f64::INFINITY
                } else {
                    -xi / g
                }
            }
        }
    }

    pub fn in_collar(&self, x: &Point<D>) -> bool {
        self.boundary_distance(x) < self.collar_width
    }

    /// `C_Ω`, the uniform lower bound on `v·∇²ξ·v` for unit `v`.
    pub fn convexity_constant(&self) -> f64 {
        self.convexity_constant
    }

    /// Newton iteration on `ξ` along the gradient direction.
    pub fn project_to_boundary(&self, x: &Point<D>) -> Result<Point<D>> {
        let mut p = *x;
        for _ in 0..PROJECTION_MAX_STEPS {
            let xi = self.xi(&p);
            if xi.abs() <= BOUNDARY_TOL {
                return Ok(p);
            }
            let g = self.grad_xi(&p);
            let g2 = g.norm_squared();
            if !(g2 > 0.0) || !g2.is_finite() {
                break;
            }
            p -= g * (xi / g2);
        }
        Err(Error::NoConvergence {
            what: "boundary projection",
            iterations: PROJECTION_MAX_STEPS,
        })
    }

    /// Boundary point hit by the ray from the interior anchor point in
    /// direction `dir`, found by bisection on `ξ`.
    pub fn boundary_along_ray(&self, dir: &Point<D>) -> Point<D> {
        let origin = self.interior_point();
        let dir = dir / dir.norm();
        let (lo, hi) = self.bounding_box();
        let mut t_out = 2.0 * (hi - lo).norm();
        while self.xi(&(origin + dir * t_out)) <= 0.0 {
            t_out *= 2.0;
        }
        let mut t_in = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (t_in + t_out);
            if mid <= t_in || mid >= t_out {
                break;
            }
            if self.xi(&(origin + dir * mid)) <= 0.0 {
                t_in = mid;
            } else {
                t_out = mid;
            }
        }
        let p = origin + dir * t_in;
        self.project_to_boundary(&p).unwrap_or(p)
    }

    /// Deterministic set of boundary points.
    pub fn boundary_samples(&self, count: usize) -> Vec<Point<D>> {
        match &self.kind {
            DomainKind::UnitDisk | DomainKind::Ellipse { .. } if D == 2 => (0..count)
                .map(|k| {
                    let th = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                    let (a, b) = match self.kind {
                        DomainKind::Ellipse { a, b } => (a, b),
                        _ => (1.0, 1.0),
                    };
                    let mut p = Point::zeros();
                    p[0] = a * th.cos();
                    p[1] = b * th.sin();
                    p
                })
                .collect(),
            _ => sphere_directions::<D>(count)
                .iter()
                .map(|d| self.boundary_along_ray(d))
                .collect(),
        }
    }

    /// Uniformly spread interior points of the closure (rejection from the
    /// bounding box with a Halton sequence).
    pub fn interior_samples(&self, count: usize) -> Vec<Point<D>> {
        let (lo, hi) = self.bounding_box();
        let mut out = Vec::with_capacity(count);
        let mut k = 1usize;
        while out.len() < count && k < 1000 * count.max(1) {
            let mut p = Point::zeros();
            for d in 0..D {
                p[d] = lo[d] + (hi[d] - lo[d]) * halton(k, d);
            }
            k += 1;
            if self.xi(&p) <= 0.0 {
                out.push(p);
            }
        }
        out
    }

    /// Points of the boundary collar `∂Ω_δ`: boundary samples pushed inward
    /// along the normal by fractions of `δ`.
    pub fn collar_samples(&self, count: usize) -> Vec<Point<D>> {
        let layers = 8usize;
        let per_layer = (count / layers).max(8);
        let boundary = self.boundary_samples(per_layer);
        let mut out = Vec::with_capacity(per_layer * layers);
        for l in 0..layers {
            let depth = self.collar_width * l as f64 / layers as f64;
            for p in &boundary {
                let n = self.normal_unchecked(p);
                let q = p - n * depth;
                if self.xi(&q) <= 0.0 {
                    out.push(q);
                }
            }
        }
        out
    }

    fn sample_gradient_floor(&self) -> f64 {
        self.collar_samples(COLLAR_SAMPLES)
            .iter()
            .map(|p| self.grad_xi(p).norm())
            .fold(f64::INFINITY, f64::min)
    }

    fn sample_convexity_constant(&self) -> Result<f64> {
        let mut points = self.interior_samples(CONVEXITY_SAMPLES);
        points.extend(self.boundary_samples(256));
        let mut min_eig = f64::INFINITY;
        for p in &points {
            let h = self.hessian_xi(p);
            let sym = (h + h.transpose()) * 0.5;
            let dynamic = DMatrix::from_column_slice(D, D, sym.as_slice());
            let eig = SymmetricEigen::new(dynamic).eigenvalues.min();
            min_eig = min_eig.min(eig);
        }
        if !(min_eig > 0.0) {
            return Err(Error::NotUniformlyConvex { min_eigenvalue: min_eig });
        }
        Ok(min_eig)
    }
}

fn sphere_directions<const D: usize>(count: usize) -> Vec<Point<D>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let mut d = Point::zeros();
            if D == 2 {
                let th = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                d[0] = th.cos();
                d[1] = th.sin();
            } else {
                // Fibonacci sphere; further coordinates (D > 3) stay zero.
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                let rho = (1.0 - z * z).max(0.0).sqrt();
                let phi = golden * k as f64;
                d[0] = rho * phi.cos();
                d[1] = rho * phi.sin();
                d[2] = z;
            }
            d
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn rotated_ellipse(a: f64, b: f64, angle: f64) -> ConvexDomain<2> {
        let (s, c) = angle.sin_cos();
        let rot = nalgebra::Matrix2::new(c, -s, s, c);
        let diag = nalgebra::Matrix2::new(1.0 / (a * a), 0.0, 0.0, 1.0 / (b * b));
        // ξ(x) = ½(xᵀ Rᵀ... ) with A = R D Rᵀ.
        let m = rot * diag * rot.transpose();
        let ext = a.max(b);
        ConvexDomain::custom(CustomLevelSet {
            value: Arc::new(move |x: &Point2| 0.5 * ((x.transpose() * m * x)[(0, 0)] - 1.0)),
            gradient: Arc::new(move |x: &Point2| m * x),
            hessian: Arc::new(move |_x: &Point2| m),
            lower: Point2::from_element(-ext),
            upper: Point2::from_element(ext),
            interior_point: Point2::zeros(),
        })
        .unwrap()
    }

    #[test]
    fn disk_level_set_values() {
        let d = ConvexDomain::unit_disk();
        let v = d.level_set_eval(&p(0.5, 0.0));
        assert_eq!(v.xi, -0.375);
        assert_eq!(v.grad, p(0.5, 0.0));
        assert_eq!(v.hessian, Hessian::<2>::identity());
        assert_eq!(d.xi(&p(1.0, 0.0)), 0.0);
    }

    #[test]
    fn ellipse_level_set_values() {
        let d = ConvexDomain::ellipse(2.0, 1.0).unwrap();
        let v = d.level_set_eval(&p(2.0, 0.0));
        assert_eq!(v.xi, 0.0);
        assert_eq!(v.grad, p(0.5, 0.0));
    }

    #[test]
    fn normals() {
        let d = ConvexDomain::unit_disk();
        assert_eq!(d.outward_normal(&p(0.0, 1.0)).unwrap(), p(0.0, 1.0));
        assert_eq!(d.outward_normal(&p(-1.0, 0.0)).unwrap(), p(-1.0, 0.0));
        let e = ConvexDomain::ellipse(2.0, 1.0).unwrap();
        assert_eq!(e.outward_normal(&p(0.0, 1.0)).unwrap(), p(0.0, 1.0));
        assert!(matches!(
            d.outward_normal(&p(0.5, 0.0)),
            Err(Error::NotOnBoundary { .. })
        ));
    }

    #[test]
    fn normal_alignment_and_outwardness() {
        for d in [ConvexDomain::unit_disk(), ConvexDomain::ellipse(2.0, 1.0).unwrap()] {
            for x in d.boundary_samples(97) {
                let n = d.outward_normal(&x).unwrap();
                let g = d.grad_xi(&x);
                assert_abs_diff_eq!(n.norm(), 1.0, epsilon = 1e-14);
                assert_abs_diff_eq!(n.dot(&g), g.norm(), epsilon = 1e-12);
                assert!(d.xi(&(x + n * 1e-3)) > 0.0);
            }
        }
    }

    #[test]
    fn convexity_constants() {
        assert_eq!(ConvexDomain::unit_disk().convexity_constant(), 1.0);
        assert_eq!(ConvexDomain::ellipse(2.0, 1.0).unwrap().convexity_constant(), 0.25);
    }

    #[test]
    fn saddle_is_rejected() {
        let saddle = CustomLevelSet {
            value: Arc::new(|x: &Point2| 0.5 * (x[0] * x[0] - x[1] * x[1]) - 0.5),
            gradient: Arc::new(|x: &Point2| Point2::new(x[0], -x[1])),
            hessian: Arc::new(|_x: &Point2| nalgebra::Matrix2::new(1.0, 0.0, 0.0, -1.0)),
            lower: Point2::from_element(-1.0),
            upper: Point2::from_element(1.0),
            interior_point: Point2::zeros(),
        };
        assert!(matches!(
            ConvexDomain::custom(saddle),
            Err(Error::NotUniformlyConvex { .. })
        ));
    }

    #[test]
    fn convexity_constant_is_rotation_invariant() {
        let base = rotated_ellipse(2.0, 1.0, 0.0).convexity_constant();
        for angle in [0.3, 1.1, 2.5] {
            let c = rotated_ellipse(2.0, 1.0, angle).convexity_constant();
            assert_abs_diff_eq!(c, base, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(base, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn projection_examples() {
        let d = ConvexDomain::unit_disk();
        let q = d.project_to_boundary(&p(0.5, 0.0)).unwrap();
        assert_abs_diff_eq!(q[0], 1.0, epsilon = 1e-12);
        assert_eq!(q[1], 0.0);
        let q = d.project_to_boundary(&p(0.0, -0.99)).unwrap();
        assert_abs_diff_eq!(q[1], -1.0, epsilon = 1e-12);
        assert_eq!(d.project_to_boundary(&p(0.6, 0.8)).unwrap(), p(0.6, 0.8));
        assert!(matches!(
            d.project_to_boundary(&p(0.0, 0.0)),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn projection_is_idempotent() {
        let d = ConvexDomain::ellipse(2.0, 1.0).unwrap();
        for x in d.interior_samples(200) {
            if d.grad_xi(&x).norm() < 1e-3 {
                continue;
            }
            let once = d.project_to_boundary(&x).unwrap();
            let twice = d.project_to_boundary(&once).unwrap();
            assert!(d.xi(&once).abs() <= BOUNDARY_TOL);
            assert!((once - twice).norm() <= BOUNDARY_TOL);
        }
    }

    #[test]
    fn gradient_floor_on_collar() {
        let d = ConvexDomain::unit_disk();
        for x in d.collar_samples(512) {
            assert!(d.grad_xi(&x).norm() >= d.gradient_floor() - 1e-12);
        }
        let e = ConvexDomain::ellipse(2.0, 1.0).unwrap();
        assert!(e.gradient_floor() > 0.0);
    }

    #[test]
    fn three_dimensional_ball() {
        let ball = ConvexDomain::<3>::custom(CustomLevelSet {
            value: Arc::new(|x: &Point<3>| 0.5 * (x.norm_squared() - 1.0)),
            gradient: Arc::new(|x: &Point<3>| *x),
            hessian: Arc::new(|_x: &Point<3>| Hessian::<3>::identity()),
            lower: Point::<3>::from_element(-1.0),
            upper: Point::<3>::from_element(1.0),
            interior_point: Point::<3>::zeros(),
        })
        .unwrap();
        assert_abs_diff_eq!(ball.convexity_constant(), 1.0, epsilon = 1e-12);
        for x in ball.boundary_samples(50) {
            assert_abs_diff_eq!(x.norm(), 1.0, epsilon = 1e-12);
        }
    }
}
