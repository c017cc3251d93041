//! Post-hoc plan verification and summary statistics. Collision checks use
//! the full oriented car-boxes rather than the corridor cubes.

use crate::error::MetricsError;
use crate::geometry::{OrientedRect, Pose};
use crate::istc::{pivot_deviation, Corridor, IstcSet};
use crate::scenario::{Scenario, VehicleSpec};
use crate::trajectory::{CostBreakdown, Trajectory};
use serde::Serialize;
use std::fmt;
use std::fmt::Write;

/// Containment and bound tolerance of the re-checks.
pub const TOL: f64 = 1e-6;
/// Largest accepted dynamics residual.
pub const DYNAMICS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Collision { a: u32, b: u32, t: usize },
    Obstacle { vehicle: u32, obstacle: u32, t: usize },
    Containment { vehicle: u32, t: usize, corner: usize, excess: f64 },
    Bound { vehicle: u32, t: usize, quantity: String, value: f64 },
    Dynamics { vehicle: u32, residual: f64 },
    Corridor { issue: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Collision { a, b, t } => write!(f, "collision between vehicles {a} and {b} at step {t}"),
            Violation::Obstacle { vehicle, obstacle, t } => {
                write!(f, "vehicle {vehicle} hits obstacle {obstacle} at step {t}")
            }
            Violation::Containment { vehicle, t, corner, excess } => {
                write!(f, "vehicle {vehicle} corner {corner} outside its cube at step {t} by {excess:.3e} m")
            }
            Violation::Bound { vehicle, t, quantity, value } => {
                write!(f, "vehicle {vehicle} {quantity} = {value:.6} out of bounds at step {t}")
            }
            Violation::Dynamics { vehicle, residual } => {
                write!(f, "vehicle {vehicle} dynamics residual {residual:.3e}")
            }
            Violation::Corridor { issue } => write!(f, "corridor: {issue}"),
        }
    }
}

fn footprint_at(v: &VehicleSpec, traj: &Trajectory, t: usize) -> OrientedRect {
    let s = &traj.states[t.min(traj.states.len() - 1)];
    v.footprint(&Pose::new(s.x, s.y, s.theta))
}

/// Pairwise and obstacle collision check at every step. Trajectories that
/// end early hold their last state.
pub fn check_collisions(trajs: &[Trajectory], s: &Scenario) -> Result<Vec<Violation>, MetricsError> {
    let mut out = Vec::new();
    let Some(first) = trajs.first() else {
        return Ok(out);
    };
    for t in trajs {
        if (t.dt - first.dt).abs() > 1e-12 {
            return Err(MetricsError::MismatchedDt(first.dt, t.dt));
        }
    }
    let specs: Vec<&VehicleSpec> = trajs.iter().map(|t| s.vehicle(t.vehicle_id).expect("trajectory vehicle in scenario")).collect();
    let steps = trajs.iter().map(|t| t.states.len()).max().unwrap_or(0);
    for t in 0..steps {
        let boxes: Vec<OrientedRect> = trajs.iter().zip(&specs).map(|(tr, v)| footprint_at(v, tr, t)).collect();
        for a in 0..trajs.len() {
            for b in a + 1..trajs.len() {
                if boxes[a].intersects(&boxes[b]) {
                    let (ia, ib) = (trajs[a].vehicle_id, trajs[b].vehicle_id);
                    out.push(Violation::Collision { a: ia.min(ib), b: ia.max(ib), t });
                }
            }
            let k = (t as f64 * first.dt / s.config.time_unit + 1e-9).floor() as usize;
            for o in &s.obstacles {
                if boxes[a].intersects(&OrientedRect::from_aabb(&o.at(k))) {
                    out.push(Violation::Obstacle { vehicle: trajs[a].vehicle_id, obstacle: o.id, t });
                }
            }
        }
    }
    Ok(out)
}

/// Minimum clearance between each vehicle pair over the whole plan.
pub fn min_separations(trajs: &[Trajectory], s: &Scenario) -> Vec<(u32, u32, f64)> {
    let specs: Vec<&VehicleSpec> = trajs.iter().map(|t| s.vehicle(t.vehicle_id).expect("trajectory vehicle in scenario")).collect();
    let steps = trajs.iter().map(|t| t.states.len()).max().unwrap_or(0);
    let mut out = Vec::new();
    for a in 0..trajs.len() {
        for b in a + 1..trajs.len() {
            let mut best = f64::INFINITY;
            for t in 0..steps {
                let ra = footprint_at(specs[a], &trajs[a], t);
                let rb = footprint_at(specs[b], &trajs[b], t);
                best = best.min(ra.distance(&rb));
            }
            out.push((trajs[a].vehicle_id, trajs[b].vehicle_id, best));
        }
    }
    out
}

pub fn path_length(traj: &Trajectory) -> f64 {
    traj.states.windows(2).map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y)).sum()
}

/// Corner containment, steering/acceleration bounds and dynamics residual.
pub fn check_trajectory(traj: &Trajectory, corridor: &Corridor, v: &VehicleSpec, time_unit: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let id = v.id;
    let spu = (time_unit / traj.dt).round() as usize;
    for (t, s) in traj.states.iter().enumerate().skip(1) {
        let k = t / spu;
        let mut cubes = vec![k.min(corridor.cubes.len() - 1)];
        if t % spu == 0 {
            cubes.push(k - 1);
        }
        let rect = v.footprint(&Pose::new(s.x, s.y, s.theta));
        for (ci, &(x, y)) in rect.corners.iter().enumerate() {
            let mut excess: f64 = 0.0;
            for &c in &cubes {
                let b = corridor.cubes[c].aabb();
                excess = excess.max(b.x_min - x).max(x - b.x_max).max(b.y_min - y).max(y - b.y_max);
            }
            if excess > TOL {
                out.push(Violation::Containment { vehicle: id, t, corner: ci, excess });
            }
        }
        if s.delta.abs() > v.delta_max + TOL {
            out.push(Violation::Bound { vehicle: id, t, quantity: "steering".into(), value: s.delta });
        }
        if s.a > v.a_acc_max + TOL || s.a < -v.a_dec_max - TOL {
            out.push(Violation::Bound { vehicle: id, t, quantity: "acceleration".into(), value: s.a });
        }
    }
    let residual = traj.dynamics_residual();
    if !(residual <= DYNAMICS_TOL) {
        out.push(Violation::Dynamics { vehicle: id, residual });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleStats {
    pub id: u32,
    pub length: f64,
    pub guidance_length: f64,
    pub max_curvature: f64,
    pub max_abs_accel: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    pub pivot_deviation: f64,
    pub cost_smoothness: f64,
    pub cost_comfort: f64,
    pub cost_pivotal: f64,
    pub cost_total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub layer1: f64,
    /// Per-vehicle layer-2 solve times in vehicle order.
    pub layer2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanReport {
    pub scenario: String,
    pub horizon: usize,
    pub istc_objective: f64,
    pub istc_nodes: usize,
    pub istc_timed_out: bool,
    pub vehicles: Vec<VehicleStats>,
    pub min_separation: Vec<(u32, u32, f64)>,
    pub l_total: f64,
    pub guidance_total: f64,
    pub timings: Option<Timings>,
    pub violations: Vec<Violation>,
}

impl PlanReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn vehicle(&self, id: u32) -> Option<&VehicleStats> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn to_text(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "scenario {}", self.scenario);
        let _ = writeln!(o, "horizon {}", self.horizon);
        let _ = writeln!(
            o,
            "istc objective {:.6} nodes {} timed_out {}",
            self.istc_objective, self.istc_nodes, self.istc_timed_out
        );
        if let Some(t) = &self.timings {
            let l2: Vec<String> = t.layer2.iter().map(|x| format!("{x:.3}")).collect();
            let _ = writeln!(o, "t_layer1 {:.3} s", t.layer1);
            let _ = writeln!(o, "t_layer2 {} s", l2.join(" "));
        }
        let _ = writeln!(o, "L_total {:.3} m (guidance {:.3} m)", self.l_total, self.guidance_total);
        let _ = writeln!(o);
        let _ = writeln!(o, "id length max_kappa max_abs_a v_min v_max pivot_dev cost_smooth cost_comfort cost_pivot cost_total");
        for v in &self.vehicles {
            let _ = writeln!(
                o,
                "{} {:.3} {:.5} {:.3} {:.3} {:.3} {:.4} {:.4} {:.4} {:.4} {:.4}",
                v.id,
                v.length,
                v.max_curvature,
                v.max_abs_accel,
                v.min_speed,
                v.max_speed,
                v.pivot_deviation,
                v.cost_smoothness,
                v.cost_comfort,
                v.cost_pivotal,
                v.cost_total
            );
        }
        let _ = writeln!(o);
        for (a, b, d) in &self.min_separation {
            let _ = writeln!(o, "min clearance {a}-{b} {d:.3} m");
        }
        let _ = writeln!(o);
        if self.violations.is_empty() {
            let _ = writeln!(o, "violations none");
        } else {
            let _ = writeln!(o, "violations {}", self.violations.len());
            for v in &self.violations {
                let _ = writeln!(o, "  {v}");
            }
        }
        o
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Aggregates the plan into a report. `guidance_lengths` holds the path length
/// of each vehicle's guidance in the same order as `trajs`.
pub fn summarize(
    s: &Scenario,
    istc: &IstcSet,
    trajs: &[Trajectory],
    guidance_lengths: &[f64],
    timings: Option<Timings>,
) -> Result<PlanReport, MetricsError> {
    let mut violations = Vec::new();
    for issue in crate::istc::check_istc(istc, s).issues {
        violations.push(Violation::Corridor { issue });
    }
    let mut vehicles = Vec::new();
    for (i, tr) in trajs.iter().enumerate() {
        let v = s.vehicle(tr.vehicle_id).expect("trajectory vehicle in scenario");
        let corridor = istc.corridor(tr.vehicle_id).expect("corridor for every trajectory");
        violations.extend(check_trajectory(tr, corridor, v, s.config.time_unit));
        let kappa = tr.curvature();
        let c: CostBreakdown = tr.cost;
        vehicles.push(VehicleStats {
            id: tr.vehicle_id,
            length: path_length(tr),
            guidance_length: guidance_lengths.get(i).copied().unwrap_or(0.0),
            max_curvature: kappa.iter().fold(0.0, |m, k| m.max(k.abs())),
            max_abs_accel: tr.states.iter().fold(0.0, |m, s| m.max(s.a.abs())),
            min_speed: tr.states.iter().map(|s| s.v).fold(f64::INFINITY, f64::min),
            max_speed: tr.states.iter().map(|s| s.v).fold(f64::NEG_INFINITY, f64::max),
            pivot_deviation: pivot_deviation(corridor),
            cost_smoothness: c.smoothness,
            cost_comfort: c.comfort,
            cost_pivotal: c.pivotal,
            cost_total: c.total(),
        });
    }
    violations.extend(check_collisions(trajs, s)?);
    Ok(PlanReport {
        scenario: s.name.clone(),
        horizon: istc.horizon,
        istc_objective: istc.objective,
        istc_nodes: istc.stats.nodes,
        istc_timed_out: istc.stats.timed_out,
        l_total: vehicles.iter().map(|v| v.length).sum(),
        guidance_total: guidance_lengths.iter().sum(),
        vehicles,
        min_separation: min_separations(trajs, s),
        timings,
        violations,
    })
}
