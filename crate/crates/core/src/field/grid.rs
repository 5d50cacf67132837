//! Vertex-centred polar grid on the unit disk.
//!
//! Nodes sit at radii `r_i = i·Δr` (`i = 0..=nr`, `Δr = 1/nr`) and angles
//! `θ_j = j·Δθ` (`j = 0..nθ`). The pole `i = 0` is a single node whose
//! control volume is the disk of radius `Δr/2`; its Laplacian is the average
//! over the first ring. Ring `nr` lies on the boundary and owns a half cell.
//!
//! The discrete Laplacian is the finite-volume flux balance
//! `(Lu)_k = −(Ku)_k / A_k` where `K` is the symmetric stiffness matrix
//! (face length over node distance) and `A_k` the control-volume area.
//! The areas partition the disk exactly.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Vector2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolarGrid {
    /// Number of radial intervals; rings are `1..=nr`, ring `nr` is the boundary.
    pub nr: usize,
    pub ntheta: usize,
}

impl PolarGrid {
    pub fn new(nr: usize, ntheta: usize) -> Self {
        assert!(nr >= 2, "polar grid needs at least two radial intervals");
        assert!(ntheta >= 4, "polar grid needs at least four angular nodes");
        Self { nr, ntheta }
    }

    #[inline]
    pub fn dr(&self) -> f64 {
        1.0 / self.nr as f64
    }

    #[inline]
    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.ntheta as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        1 + self.nr * self.ntheta
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node index of ring `i ≥ 1`, angle `j` (wrapped).
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= 1 && i <= self.nr);
        1 + (i - 1) * self.ntheta + j % self.ntheta
    }

    #[inline]
    pub fn radius(&self, i: usize) -> f64 {
        i as f64 * self.dr()
    }

    #[inline]
    pub fn angle(&self, j: usize) -> f64 {
        j as f64 * self.dtheta()
    }

    /// `(ring, angle index)` of node `k`; the pole reports `(0, 0)`.
    #[inline]
    pub fn ring_of(&self, k: usize) -> (usize, usize) {
        if k == 0 {
            (0, 0)
        } else {
            (1 + (k - 1) / self.ntheta, (k - 1) % self.ntheta)
        }
    }

    pub fn position(&self, k: usize) -> Vector2<f64> {
        let (i, j) = self.ring_of(k);
        let r = self.radius(i);
        let th = self.angle(j);
        Vector2::new(r * th.cos(), r * th.sin())
    }

    pub fn boundary_nodes(&self) -> std::ops::Range<usize> {
        let start = self.index(self.nr, 0);
        start..start + self.ntheta
    }

    /// Control-volume area of any node on ring `i`.
    pub fn ring_area(&self, i: usize) -> f64 {
        let dr = self.dr();
        let dth = self.dtheta();
        if i == 0 {
            PI * dr * dr / 4.0
        } else if i < self.nr {
            self.radius(i) * dr * dth
        } else {
            dth * 0.5 * dr * (1.0 - 0.25 * dr)
        }
    }

    pub fn areas(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.ring_area(self.ring_of(k).0)).collect()
    }

    /// Stiffness between the pole and each first-ring node.
    #[inline]
    pub fn c_pole(&self) -> f64 {
        0.5 * self.dtheta()
    }

    /// Stiffness across the face between rings `i` and `i + 1` (`i ≥ 1`).
    #[inline]
    pub fn c_radial(&self, i: usize) -> f64 {
        (self.radius(i) + 0.5 * self.dr()) * self.dtheta() / self.dr()
    }

    /// Stiffness between angular neighbours on ring `i ≥ 1`.
    #[inline]
    pub fn c_angular(&self, i: usize) -> f64 {
        if i < self.nr {
            self.dr() / (self.radius(i) * self.dtheta())
        } else {
            0.5 * self.dr() / self.dtheta()
        }
    }

    /// Visits every stiffness face once as `(a, b, coefficient)`.
    pub fn for_each_face<F: FnMut(usize, usize, f64)>(&self, mut f: F) {
        let nt = self.ntheta;
        let cp = self.c_pole();
        for j in 0..nt {
            f(0, self.index(1, j), cp);
        }
        for i in 1..=self.nr {
            let ca = self.c_angular(i);
            for j in 0..nt {
                f(self.index(i, j), self.index(i, j + 1), ca);
            }
            if i < self.nr {
                let cr = self.c_radial(i);
                for j in 0..nt {
                    f(self.index(i, j), self.index(i + 1, j), cr);
                }
            }
        }
    }

    /// `K·u` evaluated as sums of differences, plus `Σ c(|u_a| + |u_b|)` per
    /// node, the scale of the rounding floor of the product.
    pub fn apply_stiffness(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut ku = vec![0.0; self.len()];
        let mut scale = vec![0.0; self.len()];
        self.for_each_face(|a, b, c| {
            let flux = c * (u[a] - u[b]);
            ku[a] += flux;
            ku[b] -= flux;
            let s = c * (u[a].abs() + u[b].abs());
            scale[a] += s;
            scale[b] += s;
        });
        (ku, scale)
    }

    /// `½ Σ_faces c (u_a − u_b)²`, the discrete Dirichlet energy.
    pub fn dirichlet_energy(&self, u: &[f64]) -> f64 {
        let mut e = 0.0;
        self.for_each_face(|a, b, c| {
            let d = u[a] - u[b];
            e += c * d * d;
        });
        0.5 * e
    }

    /// Nodal gradient: centred differences inside, second-order one-sided
    /// at the boundary, least-squares over the first ring at the pole.
    pub fn gradient(&self, u: &[f64]) -> Vec<Vector2<f64>> {
        let nt = self.ntheta;
        let dr = self.dr();
        let dth = self.dtheta();
        let mut g = vec![Vector2::zeros(); self.len()];
        let mut pole = Vector2::zeros();
        for j in 0..nt {
            let th = self.angle(j);
            pole += Vector2::new(th.cos(), th.sin()) * (u[self.index(1, j)] - u[0]);
        }
        g[0] = pole * (2.0 / (nt as f64 * dr));
        for i in 1..=self.nr {
            let r = self.radius(i);
            for j in 0..nt {
                let k = self.index(i, j);
                let inner = |m: usize| if m == 0 { u[0] } else { u[self.index(m, j)] };
                let du_dr = if i < self.nr {
                    (u[self.index(i + 1, j)] - inner(i - 1)) / (2.0 * dr)
                } else {
                    (3.0 * u[k] - 4.0 * inner(i - 1) + inner(i - 2)) / (2.0 * dr)
                };
                // sin(Δθ) makes the difference exact on the first harmonic.
                let du_dth = (u[self.index(i, j + 1)] - u[self.index(i, j + nt - 1)])
                    / (2.0 * dth.sin());
                let th = self.angle(j);
                let (s, c) = th.sin_cos();
                let gr = du_dr;
                let gt = du_dth / r;
                g[k] = Vector2::new(gr * c - gt * s, gr * s + gt * c);
            }
        }
        g
    }

    /// Outward normal derivative at boundary nodes (one-sided, second order).
    pub fn normal_derivative(&self, u: &[f64]) -> Vec<f64> {
        let dr = self.dr();
        (0..self.ntheta)
            .map(|j| {
                let at = |i: usize| if i == 0 { u[0] } else { u[self.index(i, j)] };
                (3.0 * at(self.nr) - 4.0 * at(self.nr - 1) + at(self.nr - 2)) / (2.0 * dr)
            })
            .collect()
    }

    /// Cell of `x`: ring `i` with fraction `fr`, sectors `j`, `j + 1` with
    /// fraction `ft`. Points beyond the unit circle clamp to the boundary ring.
    #[inline]
    fn locate(&self, x: &Vector2<f64>) -> (usize, f64, usize, usize, f64) {
        let nt = self.ntheta;
        let s = (x.norm() / self.dr()).min(self.nr as f64);
        let i = (s.floor() as usize).min(self.nr - 1);
        let fr = s - i as f64;
        let mut th = x[1].atan2(x[0]);
        if th < 0.0 {
            th += 2.0 * PI;
        }
        let t = th / self.dtheta();
        let mut j = t.floor() as usize;
        let ft = t - j as f64;
        if j >= nt {
            j -= nt;
        }
        (i, fr, j, (j + 1) % nt, ft)
    }

    /// Bilinear stencil in `(r, θ)`: up to four `(node, weight)` pairs that
    /// sum to one. Points beyond the unit circle clamp to the boundary ring.
    #[inline]
    pub fn stencil(&self, x: &Vector2<f64>) -> [(usize, f64); 4] {
        let (i, fr, j, j1, ft) = self.locate(x);
        if i == 0 {
            [
                (0, 1.0 - fr),
                (self.index(1, j), fr * (1.0 - ft)),
                (self.index(1, j1), fr * ft),
                (0, 0.0),
            ]
        } else {
            [
                (self.index(i, j), (1.0 - fr) * (1.0 - ft)),
                (self.index(i, j1), (1.0 - fr) * ft),
                (self.index(i + 1, j), fr * (1.0 - ft)),
                (self.index(i + 1, j1), fr * ft),
            ]
        }
    }

    pub fn interpolate(&self, values: &[f64], x: &Vector2<f64>) -> f64 {
        self.stencil(x).iter().map(|&(k, w)| w * values[k]).sum()
    }

    /// Bilinear interpolation of the polar components `(v_r, v_θ)`, rotated
    /// back to Cartesian at `x`. Radial fields keep their length exactly.
    pub fn interpolate_vec(&self, values: &[Vector2<f64>], x: &Vector2<f64>) -> Vector2<f64> {
        let (i, fr, j, j1, ft) = self.locate(x);
        let dt = self.dtheta();
        // Rotations from the node angles to the angle of x.
        let (s0, c0) = (ft * dt).sin_cos();
        let (s1, c1) = ((ft - 1.0) * dt).sin_cos();
        let rot = |v: Vector2<f64>, c: f64, s: f64| Vector2::new(c * v[0] - s * v[1], s * v[0] + c * v[1]);
        let sector = |ring: usize| {
            rot(values[self.index(ring, j)], c0, s0) * (1.0 - ft) + rot(values[self.index(ring, j1)], c1, s1) * ft
        };
        let inner = if i == 0 { values[0] } else { sector(i) };
        inner * (1.0 - fr) + sector(i + 1) * fr
    }

    /// Area-weighted integral of nodal values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .enumerate()
            .map(|(k, v)| self.ring_area(self.ring_of(k).0) * v)
            .sum()
    }
}

/// Boundary treatment of the ring solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RingBoundary {
    /// Boundary ring fixed at zero; it is not an unknown.
    Dirichlet,
    /// Boundary ring is an unknown; fluxes enter through the right-hand side.
    Neumann,
}

/// Direct solver for `(K + diag(A_i s_i)) u = f` where the shift `s_i` is
/// constant on each ring. Angular Fourier modes decouple into tridiagonal
/// radial systems.
pub struct RingSolver {
    grid: PolarGrid,
    boundary: RingBoundary,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl RingSolver {
    pub fn new(grid: PolarGrid, boundary: RingBoundary) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(grid.ntheta),
            inverse: planner.plan_fft_inverse(grid.ntheta),
            grid,
            boundary,
        }
    }

    pub fn grid(&self) -> &PolarGrid {
        &self.grid
    }

    fn last_ring(&self) -> usize {
        match self.boundary {
            RingBoundary::Dirichlet => self.grid.nr - 1,
            RingBoundary::Neumann => self.grid.nr,
        }
    }

    /// Solves with per-ring shifts `shift[i]`, `i = 0..=nr`. With a zero
    /// shift and Neumann boundary the system is singular: the right-hand side
    /// must sum to zero and the returned solution has zero area-weighted mean.
    pub fn solve(&self, shift: &[f64], rhs: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let nt = g.ntheta;
        let last = self.last_ring();
        let singular = self.boundary == RingBoundary::Neumann && shift.iter().all(|&s| s == 0.0);

        let mut spectra: Vec<Vec<Complex64>> = (1..=last)
            .map(|i| {
                let mut buf: Vec<Complex64> = (0..nt)
                    .map(|j| Complex64::new(rhs[g.index(i, j)], 0.0))
                    .collect();
                self.forward.process(&mut buf);
                buf
            })
            .collect();

        let mut lower = vec![0.0; last + 1];
        let mut diag = vec![0.0; last + 1];
        let mut upper = vec![0.0; last + 1];
        let mut work = vec![Complex64::new(0.0, 0.0); last + 1];
        let mut u0 = 0.0;

        for m in 0..nt {
            let lambda = 2.0 - 2.0 * (2.0 * PI * m as f64 / nt as f64).cos();
            for i in 1..=last {
                let c_in = if i == 1 { g.c_pole() } else { g.c_radial(i - 1) };
                let c_out = if i < g.nr { g.c_radial(i) } else { 0.0 };
                diag[i] = c_in + c_out + g.c_angular(i) * lambda + g.ring_area(i) * shift[i];
                lower[i] = if i >= 2 { -c_in } else { 0.0 };
                upper[i] = if i < last { -c_out } else { 0.0 };
                work[i] = spectra[i - 1][m];
            }
            if m == 0 {
                // Pole row couples to the ring-1 mean only.
                let cp = g.c_pole();
                diag[0] = nt as f64 * cp + g.ring_area(0) * shift[0];
                upper[0] = -cp;
                lower[1] = -(nt as f64) * cp;
                work[0] = Complex64::new(rhs[0], 0.0);
                if singular {
                    // Gauge u0 = 0 and drop the redundant pole row.
                    lower[1] = 0.0;
                    thomas(&lower[1..], &diag[1..], &upper[1..], &mut work[1..]);
                    u0 = 0.0;
                } else {
                    thomas(&lower, &diag, &upper, &mut work);
                    u0 = work[0].re;
                }
                lower[1] = 0.0;
            } else {
                thomas(&lower[1..], &diag[1..], &upper[1..], &mut work[1..]);
            }
            for i in 1..=last {
                spectra[i - 1][m] = work[i];
            }
        }

        let mut u = vec![0.0; g.len()];
        u[0] = u0;
        let scale = 1.0 / nt as f64;
        for (ring, buf) in spectra.iter_mut().enumerate() {
            self.inverse.process(buf);
            let i = ring + 1;
            for j in 0..nt {
                u[g.index(i, j)] = buf[j].re * scale;
            }
        }
        if singular {
            let mean = g.integrate(&u) / PI;
            for v in &mut u {
                *v -= mean;
            }
        }
        u
    }
}

/// Thomas algorithm for a real tridiagonal matrix and complex right-hand
/// side, in place. `lower[0]` and `upper[n-1]` are ignored.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [Complex64]) {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    c[0] = if n > 1 { upper[0] / beta } else { 0.0 };
    rhs[0] /= beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c[i - 1];
        if i + 1 < n {
            c[i] = upper[i] / beta;
        }
        let prev = rhs[i - 1];
        rhs[i] = (rhs[i] - prev * lower[i]) / beta;
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= next * c[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn areas_partition_the_disk() {
        for (nr, nt) in [(2, 4), (16, 12), (64, 64)] {
            let g = PolarGrid::new(nr, nt);
            let total: f64 = g.areas().iter().sum();
            assert_abs_diff_eq!(total, PI, epsilon = 1e-12);
        }
    }

    #[test]
    fn stiffness_rows_sum_to_zero() {
        let g = PolarGrid::new(8, 12);
        let (ku, _) = g.apply_stiffness(&vec![3.5; g.len()]);
        for v in ku {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn stencil_is_partition_of_unity() {
        let g = PolarGrid::new(10, 16);
        for k in 0..500 {
            let r = (k as f64 * 0.618).fract();
            let th = k as f64 * 0.37;
            let x = Vector2::new(r * th.cos(), r * th.sin());
            let s: f64 = g.stencil(&x).iter().map(|p| p.1).sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-14);
            assert!(g.stencil(&x).iter().all(|p| p.1 >= -1e-15));
        }
    }

    #[test]
    fn interpolation_reproduces_node_values() {
        let g = PolarGrid::new(6, 8);
        let vals: Vec<f64> = (0..g.len()).map(|k| k as f64).collect();
        for k in 0..g.len() {
            let x = g.position(k);
            assert_abs_diff_eq!(g.interpolate(&vals, &x), vals[k], epsilon = 1e-9);
        }
    }

    fn residual(g: &PolarGrid, shift: &[f64], u: &[f64], rhs: &[f64], dirichlet: bool) -> f64 {
        let (ku, _) = g.apply_stiffness(u);
        let mut worst: f64 = 0.0;
        for k in 0..g.len() {
            let (i, _) = g.ring_of(k);
            if dirichlet && i == g.nr {
                continue;
            }
            let lhs = ku[k] + g.ring_area(i) * shift[i] * u[k];
            worst = worst.max((lhs - rhs[k]).abs());
        }
        worst
    }

    #[test]
    fn ring_solver_inverts_the_operator() {
        let g = PolarGrid::new(12, 10);
        let rhs: Vec<f64> = (0..g.len()).map(|k| ((k * 7919) % 13) as f64 - 6.0).collect();
        let shift: Vec<f64> = (0..=g.nr).map(|i| 0.5 + 0.1 * i as f64).collect();
        for (bc, dir) in [(RingBoundary::Dirichlet, true), (RingBoundary::Neumann, false)] {
            let u = RingSolver::new(g, bc).solve(&shift, &rhs);
            assert!(residual(&g, &shift, &u, &rhs, dir) < 1e-10);
        }
        // Dirichlet, no shift.
        let zero = vec![0.0; g.nr + 1];
        let u = RingSolver::new(g, RingBoundary::Dirichlet).solve(&zero, &rhs);
        assert!(residual(&g, &zero, &u, &rhs, true) < 1e-10);
    }

    #[test]
    fn singular_neumann_solve_is_gauged() {
        let g = PolarGrid::new(10, 8);
        let mut rhs: Vec<f64> = (0..g.len()).map(|k| ((k * 31) % 7) as f64).collect();
        let mean = rhs.iter().sum::<f64>() / rhs.len() as f64;
        rhs.iter_mut().for_each(|v| *v -= mean);
        let zero = vec![0.0; g.nr + 1];
        let u = RingSolver::new(g, RingBoundary::Neumann).solve(&zero, &rhs);
        assert!(residual(&g, &zero, &u, &rhs, false) < 1e-10);
        assert_abs_diff_eq!(g.integrate(&u), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gradient_of_linear_function_is_exact() {
        let g = PolarGrid::new(8, 16);
        let u: Vec<f64> = (0..g.len())
            .map(|k| {
                let p = g.position(k);
                2.0 * p[0] - 3.0 * p[1] + 1.0
            })
            .collect();
        for gr in g.gradient(&u) {
            assert_abs_diff_eq!(gr[0], 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(gr[1], -3.0, epsilon = 1e-12);
        }
    }
}
