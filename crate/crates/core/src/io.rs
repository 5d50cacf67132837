//! CSV renderings of solver outputs: comma separated, header row, LF line
//! endings, 17 significant digits.

use std::fmt::Write;

use crate::field::{FieldModel, PolarGrid};
use crate::flow::Trajectory;
use crate::kinetic::{CauchyEntry, LedgerRow, ParticleEnsemble};

/// Shortest round-trip form is not fixed-width; a 17-digit scientific form
/// is, and round-trips every `f64`.
#[inline]
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_row(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&fmt17(*v));
    }
    out.push('\n');
}

pub const GRID_HEADER: &str = "r,theta,x,y,U,Ex,Ey,rho,residual";
pub const TRAJECTORY_HEADER: &str = "t,x1,x2,v1,v2,speed,alpha,event_flag";
pub const LEDGER_HEADER: &str = "t,mass,f_linf,kinetic_energy,field_energy,total_energy,Q,growth_ratio";
pub const PICARD_HEADER: &str = "n,cauchy_sup_diff";
pub const ENSEMBLE_HEADER: &str = "x1,x2,v1,v2,w,f0";

/// One row per node of `grid`. Grid-solved fields report their own nodal
/// values and residual; analytic fields are sampled at the nodes with a
/// zero residual column. `rho` holds nodal density values.
pub fn grid_csv(field: &FieldModel, grid: &PolarGrid, rho: &[f64]) -> String {
    let mut out = String::with_capacity(grid.len() * 160);
    out.push_str(GRID_HEADER);
    out.push('\n');
    let own = field.solution().filter(|s| s.grid == *grid);
    for k in 0..grid.len() {
        let (i, j) = grid.ring_of(k);
        let r = grid.radius(i);
        let theta = if i == 0 { 0.0 } else { grid.angle(j) };
        let x = grid.position(k);
        let (u, e, res) = match own {
            Some(s) => (s.potential[k], s.field[k], s.residual[k]),
            None => {
                // Keep analytic evaluations strictly inside the circle.
                let inside = if i == grid.nr { x * (1.0 - 1e-9) } else { x };
                (field.potential(&inside), field.e(0.0, &inside), 0.0)
            }
        };
        push_row(&mut out, &[r, theta, x[0], x[1], u, e[0], e[1], rho[k], res]);
    }
    out
}

/// Samples with reflections expanded into a pre-impact row (flag 1) and a
/// post-impact row (flag 2).
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::with_capacity(traj.samples.len() * 150);
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for ((s, a), ev) in traj.samples.iter().zip(&traj.alpha_series).zip(&traj.sample_event) {
        if let Some(idx) = ev {
            let e = &traj.events[*idx];
            push_row(
                &mut out,
                &[s.t, s.x[0], s.x[1], e.v_pre[0], e.v_pre[1], e.v_pre.norm(), e.alpha_at_event, 1.0],
            );
            push_row(&mut out, &[s.t, s.x[0], s.x[1], s.v[0], s.v[1], s.v.norm(), a.1, 2.0]);
        } else {
            push_row(&mut out, &[s.t, s.x[0], s.x[1], s.v[0], s.v[1], s.v.norm(), a.1, 0.0]);
        }
    }
    out
}

pub fn alpha_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,alpha\n");
    for (t, a) in &traj.alpha_series {
        push_row(&mut out, &[*t, *a]);
    }
    out
}

pub fn ledger_csv(rows: &[LedgerRow]) -> String {
    let mut out = String::from(LEDGER_HEADER);
    out.push('\n');
    for r in rows {
        push_row(
            &mut out,
            &[r.t, r.mass, r.f_linf, r.kinetic_energy, r.field_energy, r.total_energy, r.q, r.growth_ratio],
        );
    }
    out
}

pub fn picard_csv(entries: &[CauchyEntry]) -> String {
    let mut out = String::from(PICARD_HEADER);
    out.push('\n');
    for e in entries {
        let _ = writeln!(out, "{},{}", e.n, fmt17(e.sup_diff));
    }
    out
}

pub fn ensemble_csv(ens: &ParticleEnsemble) -> String {
    let mut out = String::from(ENSEMBLE_HEADER);
    out.push('\n');
    for i in 0..ens.len() {
        let (x, v) = (ens.positions[i], ens.velocities[i]);
        push_row(&mut out, &[x[0], x[1], v[0], v[1], ens.weights[i], ens.f0_values[i]]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{advance, FlowOptions, PhaseState};
    use crate::geometry::Domain2;
    use nalgebra::Vector2;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for x in [0.1, -1.0 / 3.0, 6.02214076e23, 0.0, f64::MIN_POSITIVE] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn reflections_are_duplicated() {
        let s = PhaseState::new(0.0, Vector2::zeros(), Vector2::new(1.0, 0.0));
        let tr = advance(&Domain2::unit_disk(), &s, &FieldModel::zero(), 1.5, &FlowOptions::default()).unwrap();
        let csv = trajectory_csv(&tr);
        let flagged: Vec<&str> = csv.lines().filter(|l| !l.ends_with(",0.0000000000000000e0")).collect();
        assert_eq!(flagged.len(), 3);
        assert_eq!(flagged[0], TRAJECTORY_HEADER);
        assert!(csv.ends_with('\n') && !csv.contains('\r'));
    }
}
