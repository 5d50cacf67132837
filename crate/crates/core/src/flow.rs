//! Characteristics `Ẋ = V`, `V̇ = E(s, X)` with specular reflection at the
//! boundary, the kinetic distance `α` and the diagnostics built on it.
//!
//! Integration is classical RK4 with a base step that is capped near the
//! boundary by `0.1·√α/(|v| + ‖E‖_∞ + 1)`. A step that leaves the domain is
//! shortened by an Illinois root search on `s ↦ ξ(X_RK4(s))` until the impact
//! point satisfies `|ξ| ≤ BOUNDARY_TOL`; the velocity is then reflected.

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::geometry::{Domain2, DomainKind, BOUNDARY_TOL};

/// Base RK4 step.
pub const BASE_STEP: f64 = 1e-3;
/// Particles stall when `α < GRAZING_CUTOFF·(1 + |v|²)` inside the collar.
pub const GRAZING_CUTOFF: f64 = 1e-14;
pub const DEFAULT_MAX_STEPS: usize = 20_000_000;
const ROOT_ITERATIONS: usize = 200;
const MAX_RETREATS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseState {
    pub t: f64,
    pub x: Vector2<f64>,
    pub v: Vector2<f64>,
}

impl PhaseState {
    pub fn new(t: f64, x: Vector2<f64>, v: Vector2<f64>) -> Self {
        Self { t, x, v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReflectionEvent {
    pub tau: f64,
    pub x: Vector2<f64>,
    pub v_pre: Vector2<f64>,
    pub v_post: Vector2<f64>,
    pub normal: Vector2<f64>,
    pub alpha_at_event: f64,
    /// `v_pre·n`; positive for an outgoing crossing.
    pub normal_speed_pre: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected_steps: usize,
    pub min_alpha: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    /// Strictly increasing in `t`; a state recorded at an impact carries the
    /// post-reflection velocity.
    pub samples: Vec<PhaseState>,
    /// `(t, α)` for every sample.
    pub alpha_series: Vec<(f64, f64)>,
    /// For each sample, the index of the reflection it records, if any.
    pub sample_event: Vec<Option<usize>>,
    pub events: Vec<ReflectionEvent>,
    pub field_id: String,
    pub stats: IntegratorStats,
    /// Set when the field failed the outgoing-field certificate.
    pub certificate_warning: bool,
}

impl Trajectory {
    pub fn final_state(&self) -> PhaseState {
        *self.samples.last().expect("trajectories hold at least the initial state")
    }

    pub fn speeds(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, s.v.norm())).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub base_step: f64,
    pub max_steps: usize,
    /// Keep every step; otherwise only the initial and final states.
    pub record: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            base_step: BASE_STEP,
            max_steps: DEFAULT_MAX_STEPS,
            record: true,
        }
    }
}

/// Specular image `v − 2(v·n)n`.
#[inline]
pub fn reflect(v: &Vector2<f64>, n: &Vector2<f64>) -> Vector2<f64> {
    v - n * (2.0 * v.dot(n))
}

/// `α = ½(v·∇ξ)² + (v·∇²ξ·v + E·∇ξ)|ξ|` for a given field value.
#[inline]
pub fn alpha_with_field(domain: &Domain2, x: &Vector2<f64>, v: &Vector2<f64>, e: &Vector2<f64>) -> f64 {
    let ls = domain.level_set_eval(x);
    let vn = v.dot(&ls.grad);
    0.5 * vn * vn + (v.dot(&(ls.hessian * v)) + e.dot(&ls.grad)) * ls.xi.abs()
}

pub fn kinetic_distance(domain: &Domain2, state: &PhaseState, field: &FieldModel) -> f64 {
    let e = field.e(state.t, &state.x);
    alpha_with_field(domain, &state.x, &state.v, &e)
}

#[inline]
fn rk4(field: &FieldModel, t: f64, x: &Vector2<f64>, v: &Vector2<f64>, h: f64) -> (Vector2<f64>, Vector2<f64>) {
    let half = 0.5 * h;
    let a1 = field.e(t, x);
    let x2 = x + v * half;
    let v2 = v + a1 * half;
    let a2 = field.e(t + half, &x2);
    let x3 = x + v2 * half;
    let v3 = v + a2 * half;
    let a3 = field.e(t + half, &x3);
    let x4 = x + v3 * h;
    let v4 = v + a3 * h;
    let a4 = field.e(t + h, &x4);
    let xn = x + (v + v2 * 2.0 + v3 * 2.0 + v4) * (h / 6.0);
    let vn = v + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
    (xn, vn)
}

fn grazing_threshold(v: &Vector2<f64>) -> f64 {
    GRAZING_CUTOFF * (1.0 + v.norm_squared())
}

/// Sub-step `s ∈ (0, h)` at which the RK4 path meets the boundary.
fn locate_impact(
    domain: &Domain2,
    field: &FieldModel,
    t: f64,
    x: &Vector2<f64>,
    v: &Vector2<f64>,
    h: f64,
    g_hi: f64,
) -> (f64, Vector2<f64>, Vector2<f64>) {
    let (mut lo, mut hi) = (0.0, h);
    let (mut g_lo, mut g_hi) = (domain.xi(x), g_hi);
    let mut side = 0i8;
    let mut best = (h, rk4(field, t, x, v, h), g_hi);
    for _ in 0..ROOT_ITERATIONS {
        let mut s = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
        if !(s > lo && s < hi) {
            s = 0.5 * (lo + hi);
        }
        let (xs, vs) = rk4(field, t, x, v, s);
        let g = domain.xi(&xs);
        if g.abs() < best.2.abs() {
            best = (s, (xs, vs), g);
        }
        if g.abs() <= 0.5 * BOUNDARY_TOL {
            break;
        }
        if g < 0.0 {
            lo = s;
            g_lo = g;
            if side == -1 {
                g_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = s;
            g_hi = g;
            if side == 1 {
                g_lo *= 0.5;
            }
            side = 1;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let (s, (mut xs, vs), g) = best;
    if g.abs() > BOUNDARY_TOL {
        if let Ok(p) = domain.project_to_boundary(&xs) {
            xs = p;
        }
    }
    (s, xs, vs)
}

struct Recorder {
    record: bool,
    traj: Trajectory,
}

impl Recorder {
    fn push(&mut self, state: PhaseState, alpha: f64, event: Option<usize>) {
        if self.record || self.traj.samples.len() < 2 {
            self.traj.samples.push(state);
            self.traj.alpha_series.push((state.t, alpha));
            self.traj.sample_event.push(event);
        } else {
            self.traj.samples[1] = state;
            self.traj.alpha_series[1] = (state.t, alpha);
            self.traj.sample_event[1] = event;
        }
    }
}

/// Integrates from `state` to `t_end` under a static field.
pub fn advance(
    domain: &Domain2,
    state: &PhaseState,
    field: &FieldModel,
    t_end: f64,
    opts: &FlowOptions,
) -> Result<Trajectory> {
    let e_sup = field.sup_norm_e();
    let mut t = state.t;
    let mut x = state.x;
    let mut v = state.v;
    let alpha0 = kinetic_distance(domain, state, field);
    let mut rec = Recorder {
        record: opts.record,
        traj: Trajectory {
            samples: Vec::new(),
            alpha_series: Vec::new(),
            sample_event: Vec::new(),
            events: Vec::new(),
            field_id: field.source().name().to_string(),
            stats: IntegratorStats {
                min_alpha: alpha0,
                ..IntegratorStats::default()
            },
            certificate_warning: !field.outgoing_certificate().valid() && !field.is_zero(),
        },
    };
    if domain.in_collar(&x) && alpha0 < grazing_threshold(&v) {
        return Err(Error::GrazingStall { t, alpha: alpha0 });
    }
    rec.push(*state, alpha0, None);
    let mut alpha = alpha0;
    let mut retreats = 0usize;

    while t < t_end {
        if rec.traj.stats.steps >= opts.max_steps {
            return Err(Error::StepLimitExceeded { steps: opts.max_steps });
        }
        let mut h = opts.base_step;
        if domain.in_collar(&x) {
            h = h.min(0.1 * alpha.max(0.0).sqrt() / (v.norm() + e_sup + 1.0));
        }
        for _ in 0..retreats {
            h *= 0.5;
        }
        let remaining = t_end - t;
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        let (x1, v1) = rk4(field, t, &x, &v, h);
        let g1 = domain.xi(&x1);
        rec.traj.stats.steps += 1;

        let (t_new, x_new, v_pre, impact) = if g1 > BOUNDARY_TOL {
            if domain.xi(&x) > -BOUNDARY_TOL {
                // Still on the boundary after a reflection: shorten the step
                // until the path has moved inside.
                rec.traj.stats.rejected_steps += 1;
                retreats += 1;
                if retreats > MAX_RETREATS {
                    return Err(Error::GrazingStall { t, alpha });
                }
                continue;
            }
            let (s, xs, vs) = locate_impact(domain, field, t, &x, &v, h, g1);
            (t + s, xs, vs, true)
        } else {
            let t1 = if last { t_end } else { t + h };
            let outgoing = g1.abs() <= BOUNDARY_TOL && v1.dot(&domain.grad_xi(&x1)) > 0.0;
            (t1, x1, v1, outgoing)
        };
        retreats = 0;

        let mut event = None;
        let mut v_new = v_pre;
        if impact {
            let n = domain.normal_unchecked(&x_new);
            let vn = v_pre.dot(&n);
            let e = field.e(t_new, &x_new);
            let a_event = alpha_with_field(domain, &x_new, &v_pre, &e);
            if vn <= 0.0 || a_event < grazing_threshold(&v_pre) {
                return Err(Error::GrazingStall { t: t_new, alpha: a_event });
            }
            v_new = reflect(&v_pre, &n);
            rec.traj.events.push(ReflectionEvent {
                tau: t_new,
                x: x_new,
                v_pre,
                v_post: v_new,
                normal: n,
                alpha_at_event: a_event,
                normal_speed_pre: vn,
            });
            event = Some(rec.traj.events.len() - 1);
        }
        t = t_new;
        x = x_new;
        v = v_new;
        alpha = alpha_with_field(domain, &x, &v, &field.e(t, &x));
        if domain.in_collar(&x) {
            if alpha < grazing_threshold(&v) {
                return Err(Error::GrazingStall { t, alpha });
            }
            rec.traj.stats.min_alpha = rec.traj.stats.min_alpha.min(alpha);
        }
        rec.push(PhaseState::new(t, x, v), alpha, event);
    }
    Ok(rec.traj)
}

/// Norms entering the explicit constants of the trajectory lemmas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowConstants {
    pub convexity: f64,
    /// `sup ‖∇²ξ‖` over the collar.
    pub hessian_norm: f64,
    /// `sup |∇ξ|` over the collar.
    pub gradient_norm: f64,
    /// `sup ‖∇³ξ‖` over the collar (zero for quadratic level sets).
    pub third_derivative_norm: f64,
    pub e_sup: f64,
    pub e_lipschitz: f64,
    /// Time derivative of the field; zero for the frozen fields used here.
    pub e_time: f64,
    /// `min E·∇ξ` over collar samples.
    pub collar_min_e_dot_grad: f64,
}

impl FlowConstants {
    pub fn assemble(domain: &Domain2, field: &FieldModel) -> Self {
        let collar = domain.collar_samples(512);
        let mut hessian_norm: f64 = 0.0;
        let mut gradient_norm: f64 = 0.0;
        let mut third: f64 = 0.0;
        let mut min_e_dot_grad = f64::INFINITY;
        let quadratic = !matches!(domain.kind(), DomainKind::Custom(_));
        for p in &collar {
            let ls = domain.level_set_eval(p);
            hessian_norm = hessian_norm.max(ls.hessian.norm());
            gradient_norm = gradient_norm.max(ls.grad.norm());
            min_e_dot_grad = min_e_dot_grad.min(field.e(0.0, p).dot(&ls.grad));
            if !quadratic {
                let h = 1e-5;
                for dir in [Vector2::new(h, 0.0), Vector2::new(0.0, h)] {
                    let d: Matrix2<f64> =
                        (domain.hessian_xi(&(p + dir)) - domain.hessian_xi(&(p - dir))) / (2.0 * h);
                    third = third.max(d.norm());
                }
            }
        }
        // Spectral norms bounded by Frobenius norms; exact for the disk.
        if domain.is_unit_disk() {
            hessian_norm = 1.0;
            gradient_norm = 1.0;
        }
        Self {
            convexity: domain.convexity_constant(),
            hessian_norm,
            gradient_norm,
            third_derivative_norm: third,
            e_sup: field.sup_norm_e(),
            e_lipschitz: field.lipschitz_e(),
            e_time: 0.0,
            collar_min_e_dot_grad: min_e_dot_grad,
        }
    }

    /// Velocity-Lemma constant `C` in `|dα/ds| ≤ C(|V| + 1)α`, valid for
    /// speeds in `[v_min, ∞)`.
    ///
    /// Along characteristics `dα/ds = |ξ|(∇³ξ[V,V,V] + 3E·∇²ξ·V +
    /// (∂ₛE + V·∇E)·∇ξ)` and `α ≥ |ξ|(C_Ω|V|² + c)` in the collar with
    /// `c = max(min E·∇ξ, 0)`.
    pub fn velocity_lemma_constant(&self, v_min: f64) -> f64 {
        let c = self.collar_min_e_dot_grad.max(0.0);
        let k = self.convexity;
        let a = 3.0 * self.e_sup * self.hessian_norm + self.e_lipschitz * self.gradient_norm;
        let b = self.e_time * self.gradient_norm;
        let v_min = v_min.max(f64::MIN_POSITIVE);
        // sup_v v/((k v² + c)(v + 1)) ≤ sup_v v/(k v² + c).
        let k1 = if c > 0.0 {
            (0.5 / (k * c).sqrt()).min(1.0 / (k * v_min))
        } else {
            1.0 / (k * v_min)
        };
        let k2 = 1.0 / (k * v_min * v_min + c);
        self.third_derivative_norm / k + a * k1 + b * k2
    }

    /// `C₁` with `k ≤ Δ·C₁((|v| + Δ‖E‖)² + ‖E‖)/√α·exp(…)`; dominates the
    /// sharper prefactor used by [`count_reflections`].
    pub fn reflection_constant(&self) -> f64 {
        self.hessian_norm.max(self.gradient_norm) / (2.0 * std::f64::consts::SQRT_2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VelocityLemmaReport {
    pub constant: f64,
    pub constants: FlowConstants,
    pub collar_samples: usize,
    pub satisfied: usize,
    pub fraction_ok: f64,
    /// Largest `|Δα/Δs| / (C(|V| + 1)α)` over collar samples.
    pub worst_ratio: f64,
}

/// Finite-difference check of the Velocity-Lemma inequality on consecutive
/// collar samples.
pub fn velocity_lemma_check(domain: &Domain2, traj: &Trajectory, field: &FieldModel) -> VelocityLemmaReport {
    let constants = FlowConstants::assemble(domain, field);
    let v_min = traj
        .samples
        .iter()
        .map(|s| s.v.norm())
        .fold(f64::INFINITY, f64::min);
    let c = constants.velocity_lemma_constant(v_min);
    let mut total = 0usize;
    let mut ok = 0usize;
    let mut worst: f64 = 0.0;
    for w in 0..traj.samples.len().saturating_sub(1) {
        let (a, b) = (&traj.samples[w], &traj.samples[w + 1]);
        if !(domain.in_collar(&a.x) && domain.in_collar(&b.x)) {
            continue;
        }
        let ds = b.t - a.t;
        if ds <= 0.0 {
            continue;
        }
        let (aa, ab) = (traj.alpha_series[w].1, traj.alpha_series[w + 1].1);
        let rate = (ab - aa).abs() / ds;
        let speed = a.v.norm().max(b.v.norm());
        let bound = c * (speed + 1.0) * aa.max(ab);
        total += 1;
        let ratio = if bound > 0.0 {
            rate / bound
        } else if rate == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(ratio);
        if ratio <= 1.0 {
            ok += 1;
        }
    }
    VelocityLemmaReport {
        constant: c,
        constants,
        collar_samples: total,
        satisfied: ok,
        fraction_ok: if total == 0 { 1.0 } else { ok as f64 / total as f64 },
        worst_ratio: worst,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BounceGap {
    pub gap: f64,
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BounceGapReport {
    pub pairs: Vec<BounceGap>,
    pub min_ratio: f64,
}

/// Gap between consecutive reflections against
/// `2√(2α)/(‖∇²ξ‖M² + ‖E‖_∞|∇ξ|)`, `M = |v| + gap·‖E‖_∞`, where `α` is taken
/// at the later impact. For the unit disk `√(2α) = |v_pre·x|`.
pub fn bounce_gap_check(domain: &Domain2, traj: &Trajectory, field: &FieldModel) -> BounceGapReport {
    let constants = FlowConstants::assemble(domain, field);
    let e = constants.e_sup;
    let pairs: Vec<BounceGap> = traj
        .events
        .windows(2)
        .map(|w| {
            let gap = w[1].tau - w[0].tau;
            let m = w[0].v_post.norm() + gap * e;
            let bound = 2.0 * (2.0 * w[1].alpha_at_event).sqrt()
                / (constants.hessian_norm * m * m + e * constants.gradient_norm);
            BounceGap {
                gap,
                bound,
                ratio: gap / bound,
            }
        })
        .collect();
    let min_ratio = pairs.iter().map(|p| p.ratio).fold(f64::INFINITY, f64::min);
    BounceGapReport { pairs, min_ratio }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReflectionCount {
    pub k: usize,
    pub k_bound: f64,
    pub alpha_ref: f64,
    pub velocity_lemma_constant: f64,
}

impl ReflectionCount {
    pub fn holds(&self) -> bool {
        self.k as f64 <= self.k_bound * (1.0 + 1e-9)
    }
}

/// Reflections in `(t0, t1]` and the bound
/// `Δ(‖∇²ξ‖M² + ‖E‖|∇ξ|)/(2√(2α))·exp(C[(|v| + 1)Δ + ‖E‖Δ²])`,
/// `M = |v| + Δ‖E‖`, with `(v, α)` at the end of the window and `α` replaced
/// by the smallest impact value in the window when that is smaller.
pub fn count_reflections(domain: &Domain2, traj: &Trajectory, field: &FieldModel, window: (f64, f64)) -> ReflectionCount {
    let (t0, t1) = window;
    let delta = t1 - t0;
    let constants = FlowConstants::assemble(domain, field);
    let e = constants.e_sup;
    let end = traj
        .samples
        .iter()
        .zip(&traj.alpha_series)
        .take_while(|(s, _)| s.t <= t1)
        .last()
        .map(|(s, a)| (*s, a.1))
        .unwrap_or((traj.samples[0], traj.alpha_series[0].1));
    let in_window: Vec<&ReflectionEvent> =
        traj.events.iter().filter(|ev| ev.tau > t0 && ev.tau <= t1).collect();
    let alpha_ref = in_window
        .iter()
        .map(|ev| ev.alpha_at_event)
        .fold(end.1, f64::min);
    let speed = end.0.v.norm();
    let v_min = traj.samples.iter().map(|s| s.v.norm()).fold(f64::INFINITY, f64::min);
    let c = constants.velocity_lemma_constant(v_min);
    let m = speed + delta * e;
    let k_bound = delta * (constants.hessian_norm * m * m + e * constants.gradient_norm)
        / (2.0 * (2.0 * alpha_ref).sqrt())
        * (c * ((speed + 1.0) * delta + e * delta * delta)).exp();
    ReflectionCount {
        k: in_window.len(),
        k_bound,
        alpha_ref,
        velocity_lemma_constant: c,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IsolationReport {
    pub alpha0: f64,
    pub min_collar_alpha: f64,
    pub envelope: f64,
    pub holds: bool,
}

/// `min α` over collar samples against
/// `α(0)·exp(−C[(sup|V| + 1)T + ‖E‖T²])`.
pub fn isolation_check(domain: &Domain2, traj: &Trajectory, field: &FieldModel) -> IsolationReport {
    let constants = FlowConstants::assemble(domain, field);
    let v_min = traj.samples.iter().map(|s| s.v.norm()).fold(f64::INFINITY, f64::min);
    let v_max = traj.samples.iter().map(|s| s.v.norm()).fold(0.0, f64::max);
    let c = constants.velocity_lemma_constant(v_min);
    let t_span = traj.final_state().t - traj.samples[0].t;
    let alpha0 = traj.alpha_series[0].1;
    let envelope = alpha0 * (-c * ((v_max + 1.0) * t_span + constants.e_sup * t_span * t_span)).exp();
    let min_collar_alpha = traj
        .samples
        .iter()
        .zip(&traj.alpha_series)
        .filter(|(s, _)| domain.in_collar(&s.x))
        .map(|(_, a)| a.1)
        .fold(f64::INFINITY, f64::min);
    IsolationReport {
        alpha0,
        min_collar_alpha,
        envelope,
        holds: !(min_collar_alpha < envelope * (1.0 - 1e-9)),
    }
}
