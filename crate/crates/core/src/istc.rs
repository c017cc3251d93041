//! Interactive spatio-temporal corridors: assembly of the corridor MIQP,
//! extraction of the cubes and an independent re-check of every constraint.

use crate::error::{IstcError, MiqpError};
use crate::geometry::{Aabb, Pose};
use crate::guidance::GuidanceTrajectory;
use crate::miqp::{
    solve_miqp, IndicatorGroup, IndicatorMember, MiqpOptions, MiqpProblem, MiqpStatus, QpProblem,
};
use crate::scenario::{PlannerConfig, Scenario, ValidationReport, VehicleSpec};
use std::fmt::Write;
use std::time::Duration;

pub const CHECK_TOL: f64 = 1e-6;

/// One corridor cube: pivot plus the four scale offsets `(x1, x2, y1, y2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorridorCube {
    pub k: usize,
    pub pivot: (f64, f64),
    pub scale: [f64; 4],
}

impl CorridorCube {
    pub fn from_bounds(k: usize, pivot: (f64, f64), b: &Aabb) -> Self {
        CorridorCube {
            k,
            pivot,
            scale: [pivot.0 - b.x_min, b.x_max - pivot.0, pivot.1 - b.y_min, b.y_max - pivot.1],
        }
    }

    pub fn x_min(&self) -> f64 {
        self.pivot.0 - self.scale[0]
    }
    pub fn x_max(&self) -> f64 {
        self.pivot.0 + self.scale[1]
    }
    pub fn y_min(&self) -> f64 {
        self.pivot.1 - self.scale[2]
    }
    pub fn y_max(&self) -> f64 {
        self.pivot.1 + self.scale[3]
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::new(self.x_min(), self.x_max(), self.y_min(), self.y_max())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corridor {
    pub vehicle_id: u32,
    pub cubes: Vec<CorridorCube>,
    /// Guidance reference `(x_ref, y_ref, theta_ref)` per time unit.
    pub refs: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub nodes: usize,
    pub qp_solves: usize,
    pub elapsed: Duration,
    pub timed_out: bool,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IstcSet {
    pub corridors: Vec<Corridor>,
    pub horizon: usize,
    pub objective: f64,
    pub stats: SolveStats,
}

impl IstcSet {
    pub fn corridor(&self, id: u32) -> Option<&Corridor> {
        self.corridors.iter().find(|c| c.vehicle_id == id)
    }
}

/// Row families, also used to explain infeasibility.
pub mod family {
    pub const VEHICLE: &str = "vehicle separation";
    pub const OBSTACLE: &str = "obstacle separation";
    pub const SIZE: &str = "cube size";
    pub const START: &str = "start cube";
    pub const RANGE: &str = "driving range";
    pub const OVERLAP: &str = "corridor overlap";
    pub const PIVOT: &str = "pivot distance";
    pub const TRANSIT: &str = "corridor transit";
    pub const MAP: &str = "map bounds";
}

/// Assembled MIQP plus the layout needed to read the solution back.
#[derive(Debug, Clone)]
pub struct IstcProblem {
    pub miqp: MiqpProblem,
    pub vehicles: Vec<u32>,
    pub horizon: usize,
    pub refs: Vec<Vec<(f64, f64, f64)>>,
}

impl IstcProblem {
    pub fn continuous_count(&self) -> usize {
        6 * self.vehicles.len() * (self.horizon + 1)
    }

    pub fn binary_count(&self) -> usize {
        self.miqp.binaries.len()
    }

    pub fn var(&self, k: usize, i: usize, c: usize) -> usize {
        var(self.vehicles.len(), k, i, c)
    }

    pub fn extract(&self, z: &[f64]) -> Vec<Corridor> {
        (0..self.vehicles.len())
            .map(|i| Corridor {
                vehicle_id: self.vehicles[i],
                cubes: (0..=self.horizon)
                    .map(|k| {
                        let pivot = (z[self.var(k, i, PX)], z[self.var(k, i, PY)]);
                        CorridorCube {
                            k,
                            pivot,
                            scale: [
                                (pivot.0 - z[self.var(k, i, XL)]).max(0.0),
                                (z[self.var(k, i, XU)] - pivot.0).max(0.0),
                                (pivot.1 - z[self.var(k, i, YL)]).max(0.0),
                                (z[self.var(k, i, YU)] - pivot.1).max(0.0),
                            ],
                        }
                    })
                    .collect(),
                refs: self.refs[i].clone(),
            })
            .collect()
    }
}

// Per-cube variables: the pivot and the four faces. The scale offsets of a
// cube are the distances from the pivot to its faces.
const PX: usize = 0;
const PY: usize = 1;
const XL: usize = 2;
const XU: usize = 3;
const YL: usize = 4;
const YU: usize = 5;

fn var(nv: usize, k: usize, i: usize, c: usize) -> usize {
    (k * nv + i) * 6 + c
}

/// Per-axis forward and backward reach for a reference heading: `(plus, minus)`
/// extents along +x and -x (or +y and -y).
fn axis_reach(v: &VehicleSpec, component: f64) -> (f64, f64) {
    let fwd = v.gamma_s_plus * component.abs();
    let back = v.gamma_s_minus * component.abs();
    if component >= 0.0 {
        (fwd, back)
    } else {
        (back, fwd)
    }
}

/// Largest gap allowed between cubes `k - 2` and `k` along each axis, so the
/// car can leave the first overlap and reach the next one within a time unit
/// at its reference speed. The car extent is the largest over the given headings.
fn transit_gap(v: &VehicleSpec, time_unit: f64, headings: &[f64]) -> (f64, f64) {
    let reach = v.v_ref * time_unit;
    let mut ex: f64 = 0.0;
    let mut ey: f64 = 0.0;
    for th in headings {
        let (sn, cs) = (th.sin().abs(), th.cos().abs());
        ex = ex.max(v.length * cs + v.width * sn);
        ey = ey.max(v.length * sn + v.width * cs);
    }
    (reach - ex, reach - ey)
}

/// Distance covered within the first time unit under the hardest braking the
/// discrete dynamics allow (acceleration can change after one step).
pub fn braking_distance(v: &VehicleSpec, cfg: &PlannerConfig) -> f64 {
    let steps = cfg.steps_per_unit();
    let (mut speed, mut acc, mut dist) = (v.v0().abs(), v.a0() * v.v0().signum(), 0.0);
    for _ in 0..steps {
        if speed <= 0.0 {
            break;
        }
        dist += speed * cfg.dt;
        speed += acc * cfg.dt;
        acc = -v.a_dec_max;
    }
    dist
}

/// Region the start cube must enclose: the start car-box and the car-box
/// after braking along the initial heading.
pub fn start_envelope(v: &VehicleSpec, cfg: &PlannerConfig) -> Aabb {
    let p = v.start_pose;
    let d = braking_distance(v, cfg) * v.v0().signum();
    let moved = Pose::new(p.x + d * p.theta.cos(), p.y + d * p.theta.sin(), p.theta);
    let a = v.footprint(&p).aabb();
    let b = v.footprint(&moved).aabb();
    Aabb::new(a.x_min.min(b.x_min), a.x_max.max(b.x_max), a.y_min.min(b.y_min), a.y_max.max(b.y_max))
}

fn pivot_step_limit(v: &VehicleSpec, eps_move: f64, component: f64) -> f64 {
    (v.gamma_s_plus * component.abs()).max(eps_move)
}

pub fn build_miqp(s: &Scenario, guidance: &[GuidanceTrajectory]) -> Result<IstcProblem, IstcError> {
    let nv = s.vehicles.len();
    if guidance.len() != nv {
        return Err(IstcError::HorizonMismatch);
    }
    let horizon = guidance.first().map(|g| g.horizon()).unwrap_or(0);
    if guidance.iter().any(|g| g.horizon() != horizon) {
        return Err(IstcError::HorizonMismatch);
    }
    if horizon == 0 {
        return Err(IstcError::DegenerateHorizon);
    }
    let cfg = &s.config;
    for a in 0..nv {
        for b in a + 1..nv {
            let ba = s.vehicles[a].footprint(&s.vehicles[a].start_pose).aabb();
            let bb = s.vehicles[b].footprint(&s.vehicles[b].start_pose).aabb();
            let (gx, gy) = ba.axis_gaps(&bb);
            if gx < cfg.gamma_x_v2v && gy < cfg.gamma_y_v2v {
                return Err(IstcError::StartOverlap(s.vehicles[a].id, s.vehicles[b].id));
            }
        }
    }

    let kk = horizon + 1;
    let n_cont = 6 * nv * kk;
    let n_pairs = nv * nv.saturating_sub(1) / 2;
    let n_obs = s.obstacles.len();
    let n_bin = 4 * kk * (n_pairs + nv * n_obs);
    let mut p = QpProblem::new(n_cont + n_bin);
    let ext = s.grid.extent();
    let big_m = cfg.big_m;

    let f_vehicle = p.family(family::VEHICLE);
    let f_obstacle = p.family(family::OBSTACLE);
    let f_size = p.family(family::SIZE);
    let f_start = p.family(family::START);
    let f_range = p.family(family::RANGE);
    let f_overlap = p.family(family::OVERLAP);
    let f_pivot = p.family(family::PIVOT);
    let f_transit = p.family(family::TRANSIT);

    let refs: Vec<Vec<(f64, f64, f64)>> = guidance
        .iter()
        .map(|g| (0..kk).map(|k| (g.samples[k].x, g.samples[k].y, g.tangents[k])).collect())
        .collect();

    let v = |k: usize, i: usize, c: usize| var(nv, k, i, c);

    for k in 0..kk {
        for (i, veh) in s.vehicles.iter().enumerate() {
            let eta = veh.priority;
            let (xr, yr, _) = refs[i][k];
            let w = eta * cfg.w_ref;
            for (c, r) in [(PX, xr), (PY, yr)] {
                let j = v(k, i, c);
                if w != 0.0 {
                    p.add_q(j, j, 2.0 * w);
                }
                p.c[j] = -2.0 * w * r;
                p.offset += w * r * r;
            }
            let (px, py, xl, xu, yl, yu) = (v(k, i, PX), v(k, i, PY), v(k, i, XL), v(k, i, XU), v(k, i, YL), v(k, i, YU));
            // Area reward on the summed scale offsets, which telescope to the face spans.
            p.c[xl] = eta * cfg.w_area;
            p.c[xu] = -eta * cfg.w_area;
            p.c[yl] = eta * cfg.w_area;
            p.c[yu] = -eta * cfg.w_area;
            // The map extent bounds every face and pivot.
            for (j, lo, hi) in [
                (px, ext.x_min, ext.x_max),
                (xl, ext.x_min, ext.x_max),
                (xu, ext.x_min, ext.x_max),
                (py, ext.y_min, ext.y_max),
                (yl, ext.y_min, ext.y_max),
                (yu, ext.y_min, ext.y_max),
            ] {
                p.lower[j] = lo;
                p.upper[j] = hi;
            }
            let gcar = veh.gamma_car();

            // Pivot inside the cube and cube size.
            p.add_row(vec![(xl, 1.0), (px, -1.0)], 0.0, f_size);
            p.add_row(vec![(px, 1.0), (xu, -1.0)], 0.0, f_size);
            p.add_row(vec![(yl, 1.0), (py, -1.0)], 0.0, f_size);
            p.add_row(vec![(py, 1.0), (yu, -1.0)], 0.0, f_size);
            p.add_row(vec![(xl, 1.0), (xu, -1.0)], -gcar, f_size);
            p.add_row(vec![(yl, 1.0), (yu, -1.0)], -gcar, f_size);

            if k == 0 {
                let d = start_envelope(veh, cfg);
                p.add_row(vec![(xl, 1.0)], d.x_min, f_start);
                p.add_row(vec![(xu, -1.0)], -d.x_max, f_start);
                p.add_row(vec![(yl, 1.0)], d.y_min, f_start);
                p.add_row(vec![(yu, -1.0)], -d.y_max, f_start);
            }

            // Driving range relative to the previous pivot (the start position at k = 0).
            let theta_prev = refs[i][k.saturating_sub(1)].2;
            let (rx_plus, rx_minus) = axis_reach(veh, theta_prev.cos());
            let (ry_plus, ry_minus) = axis_reach(veh, theta_prev.sin());
            let lim_x_min = cfg.alpha_x * rx_minus + gcar;
            let lim_x_max = cfg.alpha_x * rx_plus + gcar;
            let lim_y_min = cfg.alpha_y * ry_minus + gcar;
            let lim_y_max = cfg.alpha_y * ry_plus + gcar;
            if k == 0 {
                let (xs, ys) = (veh.start_pose.x, veh.start_pose.y);
                p.add_row(vec![(xl, -1.0)], lim_x_min - xs, f_range);
                p.add_row(vec![(xu, 1.0)], lim_x_max + xs, f_range);
                p.add_row(vec![(yl, -1.0)], lim_y_min - ys, f_range);
                p.add_row(vec![(yu, 1.0)], lim_y_max + ys, f_range);
            } else {
                let (qx, qy) = (v(k - 1, i, PX), v(k - 1, i, PY));
                p.add_row(vec![(xl, -1.0), (qx, 1.0)], lim_x_min, f_range);
                p.add_row(vec![(xu, 1.0), (qx, -1.0)], lim_x_max, f_range);
                p.add_row(vec![(yl, -1.0), (qy, 1.0)], lim_y_min, f_range);
                p.add_row(vec![(yu, 1.0), (qy, -1.0)], lim_y_max, f_range);

                // Consecutive cubes overlap by at least the car size per axis.
                let (pxl, pxu, pyl, pyu) = (v(k - 1, i, XL), v(k - 1, i, XU), v(k - 1, i, YL), v(k - 1, i, YU));
                p.add_row(vec![(pxl, 1.0), (xu, -1.0)], -gcar, f_overlap);
                p.add_row(vec![(xl, 1.0), (pxu, -1.0)], -gcar, f_overlap);
                p.add_row(vec![(pyl, 1.0), (yu, -1.0)], -gcar, f_overlap);
                p.add_row(vec![(yl, 1.0), (pyu, -1.0)], -gcar, f_overlap);

                // Pivot travel per time unit.
                let dx = pivot_step_limit(veh, cfg.eps_move, theta_prev.cos());
                let dy = pivot_step_limit(veh, cfg.eps_move, theta_prev.sin());
                p.add_row(vec![(px, 1.0), (qx, -1.0)], dx, f_pivot);
                p.add_row(vec![(px, -1.0), (qx, 1.0)], dx, f_pivot);
                p.add_row(vec![(py, 1.0), (qy, -1.0)], dy, f_pivot);
                p.add_row(vec![(py, -1.0), (qy, 1.0)], dy, f_pivot);

                if k >= 2 {
                    let (tx, ty) = transit_gap(veh, cfg.time_unit, &[refs[i][k - 2].2, refs[i][k - 1].2, refs[i][k].2]);
                    let (oxl, oxu, oyl, oyu) = (v(k - 2, i, XL), v(k - 2, i, XU), v(k - 2, i, YL), v(k - 2, i, YU));
                    p.add_row(vec![(xl, 1.0), (oxu, -1.0)], tx, f_transit);
                    p.add_row(vec![(oxl, 1.0), (xu, -1.0)], tx, f_transit);
                    p.add_row(vec![(yl, 1.0), (oyu, -1.0)], ty, f_transit);
                    p.add_row(vec![(oyl, 1.0), (yu, -1.0)], ty, f_transit);
                }
            }
        }
    }

    let mut next_bin = n_cont;
    let mut binaries = Vec::with_capacity(n_bin);
    let mut groups = Vec::new();
    let mut new_group = |p: &mut QpProblem, rows: [(Vec<(usize, f64)>, f64); 4], fam: usize| {
        let mut members = Vec::with_capacity(4);
        for (mut row, b) in rows {
            let d = next_bin;
            next_bin += 1;
            p.lower[d] = 0.0;
            p.upper[d] = 1.0;
            binaries.push(d);
            row.push((d, -big_m));
            let r = p.add_row(row, b, fam);
            members.push(IndicatorMember { var: d, row: r });
        }
        p.add_row(members.iter().map(|m| (m.var, 1.0)).collect(), 3.0, fam);
        groups.push(IndicatorGroup { members });
    };

    for k in 0..kk {
        for a in 0..nv {
            for b in a + 1..nv {
                let (gx, gy) = (cfg.gamma_x_v2v, cfg.gamma_y_v2v);
                // a left of b, b left of a, a below b, b below a.
                new_group(
                    &mut p,
                    [
                        (vec![(v(k, a, XU), 1.0), (v(k, b, XL), -1.0)], -gx),
                        (vec![(v(k, b, XU), 1.0), (v(k, a, XL), -1.0)], -gx),
                        (vec![(v(k, a, YU), 1.0), (v(k, b, YL), -1.0)], -gy),
                        (vec![(v(k, b, YU), 1.0), (v(k, a, YL), -1.0)], -gy),
                    ],
                    f_vehicle,
                );
            }
        }
        for i in 0..nv {
            for o in &s.obstacles {
                let ob = o.at(k);
                let (rx, ry) = (cfg.r_x_v2o, cfg.r_y_v2o);
                // Cube left of, right of, below or above the obstacle.
                new_group(
                    &mut p,
                    [
                        (vec![(v(k, i, XU), 1.0)], ob.x_min - rx),
                        (vec![(v(k, i, XL), -1.0)], -(ob.x_max + rx)),
                        (vec![(v(k, i, YU), 1.0)], ob.y_min - ry),
                        (vec![(v(k, i, YL), -1.0)], -(ob.y_max + ry)),
                    ],
                    f_obstacle,
                );
            }
        }
    }

    Ok(IstcProblem {
        miqp: MiqpProblem { base: p, binaries, groups },
        vehicles: s.vehicles.iter().map(|v| v.id).collect(),
        horizon,
        refs,
    })
}

#[derive(Debug, Clone)]
pub struct IstcOptions {
    pub node_budget: usize,
    pub time_budget: Option<Duration>,
    pub parallel: bool,
}

impl IstcOptions {
    /// Budgets from the scenario config. Deterministic mode drops the
    /// wall-clock limit and evaluates nodes serially.
    pub fn from_config(s: &Scenario, deterministic: bool) -> Self {
        IstcOptions {
            node_budget: s.config.node_budget,
            time_budget: (!deterministic).then(|| Duration::from_secs_f64(s.config.time_budget)),
            parallel: !deterministic,
        }
    }
}

pub fn solve_istc(s: &Scenario, guidance: &[GuidanceTrajectory], opts: &IstcOptions) -> Result<IstcSet, IstcError> {
    let prob = build_miqp(s, guidance)?;
    let mo = MiqpOptions {
        node_budget: opts.node_budget,
        time_budget: opts.time_budget,
        parallel: opts.parallel,
        ..Default::default()
    };
    let sol = match solve_miqp(&prob.miqp, &mo) {
        Ok(sol) => sol,
        Err(MiqpError::Timeout { nodes }) => return Err(IstcError::Timeout { nodes }),
        Err(e) => return Err(e.into()),
    };
    if sol.status == MiqpStatus::Infeasible {
        return Err(IstcError::Infeasible { families: sol.blocking_families });
    }
    Ok(IstcSet {
        corridors: prob.extract(&sol.z),
        horizon: prob.horizon,
        objective: sol.objective,
        stats: SolveStats {
            nodes: sol.stats.nodes,
            qp_solves: sol.stats.qp_solves,
            elapsed: sol.stats.elapsed,
            timed_out: sol.status == MiqpStatus::FeasibleTimeout,
            bound: sol.bound,
        },
    })
}

/// Objective re-evaluated directly from the cubes.
pub fn istc_objective(set: &IstcSet, s: &Scenario) -> f64 {
    let cfg = &s.config;
    let mut total = 0.0;
    for c in &set.corridors {
        let eta = s.vehicle(c.vehicle_id).map(|v| v.priority).unwrap_or(0.0);
        for (cube, r) in c.cubes.iter().zip(&c.refs) {
            let area: f64 = cube.scale.iter().sum();
            let dev = (cube.pivot.0 - r.0).powi(2) + (cube.pivot.1 - r.1).powi(2);
            total += eta * (-cfg.w_area * area + cfg.w_ref * dev);
        }
    }
    total
}

/// Summed squared pivot deviation from the guidance references.
pub fn pivot_deviation(c: &Corridor) -> f64 {
    c.cubes
        .iter()
        .zip(&c.refs)
        .map(|(cube, r)| (cube.pivot.0 - r.0).powi(2) + (cube.pivot.1 - r.1).powi(2))
        .sum()
}

/// Re-checks every corridor constraint on the cube values alone.
pub fn check_istc(set: &IstcSet, s: &Scenario) -> ValidationReport {
    let mut r = ValidationReport::default();
    let cfg = &s.config;
    let tol = CHECK_TOL;
    let ext = s.grid.extent();
    for c in &set.corridors {
        let Some(veh) = s.vehicle(c.vehicle_id) else {
            r.push(format!("vehicle {}: unknown vehicle", c.vehicle_id));
            continue;
        };
        let id = veh.id;
        if c.cubes.len() != set.horizon + 1 || c.refs.len() != c.cubes.len() {
            r.push(format!("vehicle {id}: corridor length differs from horizon"));
            continue;
        }
        let gcar = veh.gamma_car();
        for (k, cube) in c.cubes.iter().enumerate() {
            if cube.scale.iter().any(|&g| g < -tol) {
                r.push(format!("vehicle {id}, k={k}: negative scale"));
            }
            if cube.scale[0] + cube.scale[1] < gcar - tol || cube.scale[2] + cube.scale[3] < gcar - tol {
                r.push(format!("vehicle {id}, k={k}: cube smaller than the car size"));
            }
            let b = cube.aabb();
            if b.x_min < ext.x_min - tol || b.x_max > ext.x_max + tol || b.y_min < ext.y_min - tol || b.y_max > ext.y_max + tol {
                r.push(format!("vehicle {id}, k={k}: cube leaves the map"));
            }
            let (prev_x, prev_y) = if k == 0 {
                (veh.start_pose.x, veh.start_pose.y)
            } else {
                c.cubes[k - 1].pivot
            };
            let th = c.refs[k.saturating_sub(1)].2;
            let (rxp, rxm) = axis_reach(veh, th.cos());
            let (ryp, rym) = axis_reach(veh, th.sin());
            let range_ok = b.x_min >= prev_x - cfg.alpha_x * rxm - gcar - tol
                && b.x_max <= prev_x + cfg.alpha_x * rxp + gcar + tol
                && b.y_min >= prev_y - cfg.alpha_y * rym - gcar - tol
                && b.y_max <= prev_y + cfg.alpha_y * ryp + gcar + tol;
            if !range_ok {
                r.push(format!("vehicle {id}, k={k}: driving range exceeded"));
            }
            if k == 0 {
                let start = start_envelope(veh, cfg);
                if b.x_min > start.x_min + tol || b.x_max < start.x_max - tol || b.y_min > start.y_min + tol || b.y_max < start.y_max - tol {
                    r.push(format!("vehicle {id}, k=0: start cube does not enclose the start car-box"));
                }
            } else {
                let pb = c.cubes[k - 1].aabb();
                if b.x_max - pb.x_min < gcar - tol
                    || pb.x_max - b.x_min < gcar - tol
                    || b.y_max - pb.y_min < gcar - tol
                    || pb.y_max - b.y_min < gcar - tol
                {
                    r.push(format!("vehicle {id}, k={k}: overlap with cube {} below the car size", k - 1));
                }
                let dx = pivot_step_limit(veh, cfg.eps_move, th.cos());
                let dy = pivot_step_limit(veh, cfg.eps_move, th.sin());
                if (cube.pivot.0 - prev_x).abs() > dx + tol || (cube.pivot.1 - prev_y).abs() > dy + tol {
                    r.push(format!("vehicle {id}, k={k}: pivot distance exceeded"));
                }
                if k >= 2 {
                    let ob = c.cubes[k - 2].aabb();
                    let (tx, ty) = transit_gap(veh, cfg.time_unit, &[c.refs[k - 2].2, c.refs[k - 1].2, c.refs[k].2]);
                    if b.x_min - ob.x_max > tx + tol
                        || ob.x_min - b.x_max > tx + tol
                        || b.y_min - ob.y_max > ty + tol
                        || ob.y_min - b.y_max > ty + tol
                    {
                        r.push(format!("vehicle {id}, k={k}: transit gap to cube {} too large", k - 2));
                    }
                }
            }
            for o in &s.obstacles {
                let ob = o.at(k);
                let gx = (b.x_min - ob.x_max).max(ob.x_min - b.x_max);
                let gy = (b.y_min - ob.y_max).max(ob.y_min - b.y_max);
                if gx < cfg.r_x_v2o - tol && gy < cfg.r_y_v2o - tol {
                    r.push(format!("vehicle {id}, k={k}: cube too close to obstacle {}", o.id));
                }
            }
        }
    }
    for a in 0..set.corridors.len() {
        for bi in a + 1..set.corridors.len() {
            let (ca, cb) = (&set.corridors[a], &set.corridors[bi]);
            for (x, y) in ca.cubes.iter().zip(&cb.cubes) {
                let (ba, bb) = (x.aabb(), y.aabb());
                let gx = (ba.x_min - bb.x_max).max(bb.x_min - ba.x_max);
                let gy = (ba.y_min - bb.y_max).max(bb.y_min - ba.y_max);
                if gx < cfg.gamma_x_v2v - tol && gy < cfg.gamma_y_v2v - tol {
                    r.push(format!(
                        "vehicles {} and {}, k={}: cubes not separated",
                        ca.vehicle_id, cb.vehicle_id, x.k
                    ));
                }
            }
        }
    }
    r
}

/// Plain-text corridor document (no timings, so identical solves give identical text).
pub fn write_corridors(set: &IstcSet) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "horizon {}", set.horizon);
    let _ = writeln!(out, "objective {:.9}", set.objective);
    let _ = writeln!(out, "nodes {}", set.stats.nodes);
    let _ = writeln!(out, "qp_solves {}", set.stats.qp_solves);
    let _ = writeln!(out, "timed_out {}", set.stats.timed_out);
    for c in &set.corridors {
        let _ = writeln!(out, "vehicle {}", c.vehicle_id);
        let _ = writeln!(out, "k x_min x_max y_min y_max pivot_x pivot_y ref_x ref_y ref_theta");
        for (cube, r) in c.cubes.iter().zip(&c.refs) {
            let _ = writeln!(
                out,
                "{} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
                cube.k,
                cube.x_min(),
                cube.x_max(),
                cube.y_min(),
                cube.y_max(),
                cube.pivot.0,
                cube.pivot.1,
                r.0,
                r.1,
                r.2
            );
        }
    }
    out
}

pub fn read_corridors(text: &str) -> Result<IstcSet, String> {
    let mut set = IstcSet {
        corridors: Vec::new(),
        horizon: 0,
        objective: 0.0,
        stats: SolveStats::default(),
    };
    for (ln, line) in text.lines().enumerate() {
        let tok: Vec<&str> = line.split_whitespace().collect();
        let bad = || format!("line {}: cannot parse `{line}`", ln + 1);
        match tok.first().copied() {
            None | Some("k") => {}
            Some("horizon") => set.horizon = tok.get(1).and_then(|t| t.parse().ok()).ok_or_else(bad)?,
            Some("objective") => set.objective = tok.get(1).and_then(|t| t.parse().ok()).ok_or_else(bad)?,
            Some("nodes") => set.stats.nodes = tok.get(1).and_then(|t| t.parse().ok()).ok_or_else(bad)?,
            Some("qp_solves") => set.stats.qp_solves = tok.get(1).and_then(|t| t.parse().ok()).ok_or_else(bad)?,
            Some("timed_out") => set.stats.timed_out = tok.get(1) == Some(&"true"),
            Some("vehicle") => set.corridors.push(Corridor {
                vehicle_id: tok.get(1).and_then(|t| t.parse().ok()).ok_or_else(bad)?,
                cubes: Vec::new(),
                refs: Vec::new(),
            }),
            Some(_) => {
                let nums: Vec<f64> = tok.iter().map(|t| t.parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
                if nums.len() != 10 {
                    return Err(bad());
                }
                let c = set.corridors.last_mut().ok_or_else(bad)?;
                let b = Aabb::new(nums[1], nums[2], nums[3], nums[4]);
                c.cubes.push(CorridorCube::from_bounds(nums[0] as usize, (nums[5], nums[6]), &b));
                c.refs.push((nums[7], nums[8], nums[9]));
            }
        }
    }
    Ok(set)
}
