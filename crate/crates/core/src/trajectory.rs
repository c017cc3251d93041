//! Layer 2: per-vehicle trajectory optimization inside a fixed corridor.
//!
//! The decision vector is the control sequence `(beta_t, j_t)`; states follow
//! from an exact rollout of the discrete kinematic bicycle model. Corner
//! containment and the steering/acceleration bounds are handled by an
//! augmented Lagrangian whose subproblems are minimized with L-BFGS. The
//! gradient is obtained by a backward (adjoint) sweep through the rollout.

use crate::error::TrajectoryError;
use crate::istc::Corridor;
use crate::scenario::{PlannerConfig, VehicleSpec};
use crate::miqp::linalg::SymMatrix;
use std::f64::consts::FRAC_PI_2;

/// Containment and bound tolerance used by the post-solve checks.
pub const CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub delta: f64,
    pub v: f64,
    pub a: f64,
}

impl VehicleState {
    fn is_finite(&self) -> bool {
        [self.x, self.y, self.theta, self.delta, self.v, self.a].iter().all(|c| c.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub beta: f64,
    pub jerk: f64,
}

/// One step of the discrete kinematic bicycle model.
pub fn integrate_dynamics(
    s: &VehicleState,
    u: &ControlInput,
    dt: f64,
    wheelbase: f64,
) -> Result<VehicleState, TrajectoryError> {
    if s.delta.abs() >= FRAC_PI_2 {
        return Err(TrajectoryError::SingularSteering { step: 0, delta: s.delta });
    }
    let (sn, cs) = s.theta.sin_cos();
    Ok(VehicleState {
        x: s.x + s.v * cs * dt,
        y: s.y + s.v * sn * dt,
        theta: s.theta + s.v * (s.delta.tan() / wheelbase) * dt,
        delta: s.delta + u.beta * dt,
        v: s.v + s.a * dt,
        a: s.a + u.jerk * dt,
    })
}

/// States `0..=T` produced by applying `controls` from `x0`.
pub fn rollout(
    x0: &VehicleState,
    controls: &[ControlInput],
    dt: f64,
    wheelbase: f64,
) -> Result<Vec<VehicleState>, TrajectoryError> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(*x0);
    for (t, u) in controls.iter().enumerate() {
        let next = integrate_dynamics(&states[t], u, dt, wheelbase).map_err(|e| match e {
            TrajectoryError::SingularSteering { delta, .. } => TrajectoryError::SingularSteering { step: t, delta },
            other => other,
        })?;
        if !next.is_finite() {
            return Err(TrajectoryError::Numeric { step: t + 1 });
        }
        states.push(next);
    }
    Ok(states)
}

/// Body-frame corner offsets: rear-left, rear-right, front-right, front-left.
fn corner_offsets(v: &VehicleSpec) -> [(f64, f64); 4] {
    let (b, f, h) = (v.rear_overhang(), v.front_extent(), 0.5 * v.width);
    [(-b, h), (-b, -h), (f, -h), (f, h)]
}

/// Car-box corners for a rear-axle reference state.
pub fn car_corners(s: &VehicleState, v: &VehicleSpec) -> [(f64, f64); 4] {
    let (sn, cs) = s.theta.sin_cos();
    corner_offsets(v).map(|(lx, ly)| (s.x + lx * cs - ly * sn, s.y + lx * sn + ly * cs))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    /// Curvature term.
    pub smoothness: f64,
    /// Steering-rate and jerk terms.
    pub comfort: f64,
    /// Deviation from the corridor pivots.
    pub pivotal: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.smoothness + self.comfort + self.pivotal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub kappa: f64,
    pub beta: f64,
    pub jerk: f64,
    pub px: f64,
    pub py: f64,
}

impl CostWeights {
    pub fn from_config(c: &PlannerConfig) -> Self {
        CostWeights { kappa: c.w_kappa, beta: c.w_beta, jerk: c.w_j, px: c.w_px, py: c.w_py }
    }
}

/// Box the corners must stay in at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
struct StepBox {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

/// Single-shooting transcription for one vehicle.
#[derive(Debug, Clone)]
pub struct TrajectoryNlp {
    pub vehicle: VehicleSpec,
    pub x0: VehicleState,
    pub dt: f64,
    pub steps_per_unit: usize,
    pub weights: CostWeights,
    /// Pivot targeted by each state `0..=T`.
    pub pivots: Vec<(f64, f64)>,
    /// Cube index of each state `0..=T`.
    pub cube_of_step: Vec<usize>,
    boxes: Vec<Option<StepBox>>,
    /// Rear-axle waypoint per time unit used by the initial guess.
    waypoints: Vec<(f64, f64)>,
}

/// How states between unit instants are paired with pivots.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum PivotTarget {
    /// Linear interpolation between the pivots of consecutive units.
    #[default]
    Interpolated,
    /// Every state of unit k targets pivot k.
    Unit,
}

/// Constraints per step: four sides for each corner, then steering and acceleration bounds.
const PER_STEP: usize = 4 * 4 + 4;

impl TrajectoryNlp {
    pub fn new(
        corridor: &Corridor,
        vehicle: &VehicleSpec,
        config: &PlannerConfig,
    ) -> Result<Self, TrajectoryError> {
        Self::with_target(corridor, vehicle, config, PivotTarget::default())
    }

    pub fn with_target(
        corridor: &Corridor,
        vehicle: &VehicleSpec,
        config: &PlannerConfig,
        target: PivotTarget,
    ) -> Result<Self, TrajectoryError> {
        if !(config.dt > 0.0) || !(vehicle.wheelbase > 0.0) {
            return Err(TrajectoryError::Invalid("time step and wheelbase must be positive".into()));
        }
        let spu = config.steps_per_unit();
        if spu == 0 || ((spu as f64) * config.dt - config.time_unit).abs() > 1e-9 {
            return Err(TrajectoryError::Invalid(format!(
                "time unit {} is not a multiple of dt {}",
                config.time_unit, config.dt
            )));
        }
        if corridor.cubes.len() < 2 {
            return Err(TrajectoryError::Invalid("corridor needs at least two cubes".into()));
        }
        let horizon = corridor.cubes.len() - 1;
        let steps = horizon * spu;
        let mut pivots = Vec::with_capacity(steps + 1);
        let mut cube_of_step = Vec::with_capacity(steps + 1);
        let mut boxes = Vec::with_capacity(steps + 1);
        for t in 0..=steps {
            let k = t / spu;
            cube_of_step.push(k);
            let p0 = corridor.cubes[k].pivot;
            pivots.push(match (target, corridor.cubes.get(k + 1)) {
                (PivotTarget::Interpolated, Some(next)) => {
                    let f = (t % spu) as f64 / spu as f64;
                    (p0.0 + f * (next.pivot.0 - p0.0), p0.1 + f * (next.pivot.1 - p0.1))
                }
                _ => p0,
            });
            let c = &corridor.cubes[k];
            let mut b = StepBox { x_min: c.x_min(), x_max: c.x_max(), y_min: c.y_min(), y_max: c.y_max() };
            if t > 0 && t % spu == 0 {
                let p = &corridor.cubes[k - 1];
                b.x_min = b.x_min.max(p.x_min());
                b.x_max = b.x_max.min(p.x_max());
                b.y_min = b.y_min.max(p.y_min());
                b.y_max = b.y_max.min(p.y_max());
            }
            boxes.push(if t == 0 { None } else { Some(b) });
        }
        let half = 0.5 * vehicle.gamma_car();
        let mid = 0.5 * vehicle.wheelbase;
        let mut waypoints = vec![(vehicle.start_pose.x, vehicle.start_pose.y)];
        for k in 1..=horizon {
            let b = boxes[k * spu].expect("boundary step");
            let th = corridor.refs.get(k).map_or(vehicle.start_pose.theta, |r| r.2);
            let (dx, dy) = (mid * th.cos(), mid * th.sin());
            let (px, py) = corridor.cubes[k].pivot;
            let clamp = |v: f64, lo: f64, hi: f64| if lo > hi { 0.5 * (lo + hi) } else { v.clamp(lo, hi) };
            let cx = clamp(px + dx, b.x_min + half, b.x_max - half);
            let cy = clamp(py + dy, b.y_min + half, b.y_max - half);
            waypoints.push((cx - dx, cy - dy));
        }
        let p = vehicle.start_pose;
        let x0 = VehicleState {
            x: p.x,
            y: p.y,
            theta: p.theta,
            delta: vehicle.delta0(),
            v: vehicle.v0(),
            a: vehicle.a0(),
        };
        Ok(TrajectoryNlp {
            vehicle: vehicle.clone(),
            x0,
            dt: config.dt,
            steps_per_unit: spu,
            weights: CostWeights::from_config(config),
            pivots,
            cube_of_step,
            boxes,
            waypoints,
        })
    }

    /// Number of control steps `T`.
    pub fn steps(&self) -> usize {
        self.pivots.len() - 1
    }

    pub fn dimension(&self) -> usize {
        2 * self.steps()
    }

    fn constraint_count(&self) -> usize {
        self.steps() * PER_STEP
    }

    pub fn unpack(u: &[f64]) -> Vec<ControlInput> {
        u.chunks(2).map(|c| ControlInput { beta: c[0], jerk: c[1] }).collect()
    }

    pub fn pack(controls: &[ControlInput]) -> Vec<f64> {
        controls.iter().flat_map(|c| [c.beta, c.jerk]).collect()
    }

    pub fn rollout(&self, u: &[f64]) -> Result<Vec<VehicleState>, TrajectoryError> {
        rollout(&self.x0, &Self::unpack(u), self.dt, self.vehicle.wheelbase)
    }

    pub fn cost(&self, u: &[f64]) -> Result<CostBreakdown, TrajectoryError> {
        let states = self.rollout(u)?;
        Ok(self.cost_of(&states, u))
    }

    fn cost_of(&self, states: &[VehicleState], u: &[f64]) -> CostBreakdown {
        let w = &self.weights;
        let l = self.vehicle.wheelbase;
        let mut c = CostBreakdown::default();
        for (t, s) in states.iter().enumerate().skip(1) {
            let kappa = s.delta.tan() / l;
            c.smoothness += w.kappa * kappa * kappa;
            let (px, py) = self.pivots[t];
            c.pivotal += w.px * (s.x - px).powi(2) + w.py * (s.y - py).powi(2);
        }
        for uc in u.chunks(2) {
            c.comfort += w.beta * uc[0] * uc[0] + w.jerk * uc[1] * uc[1];
        }
        c
    }

    /// Constraint values `g <= 0` at state `t >= 1`, with their derivatives
    /// with respect to `(x, y, theta, delta, v, a)`.
    fn step_constraints(&self, t: usize, s: &VehicleState, margin: f64, out: &mut Vec<(f64, [f64; 6])>) {
        out.clear();
        let b = self.boxes[t].expect("constraints start at step 1");
        let (sn, cs) = s.theta.sin_cos();
        for (lx, ly) in corner_offsets(&self.vehicle) {
            let cx = s.x + lx * cs - ly * sn;
            let cy = s.y + lx * sn + ly * cs;
            let dx_dth = -lx * sn - ly * cs;
            let dy_dth = lx * cs - ly * sn;
            out.push((b.x_min + margin - cx, [-1.0, 0.0, -dx_dth, 0.0, 0.0, 0.0]));
            out.push((cx - b.x_max + margin, [1.0, 0.0, dx_dth, 0.0, 0.0, 0.0]));
            out.push((b.y_min + margin - cy, [0.0, -1.0, -dy_dth, 0.0, 0.0, 0.0]));
            out.push((cy - b.y_max + margin, [0.0, 1.0, dy_dth, 0.0, 0.0, 0.0]));
        }
        let v = &self.vehicle;
        out.push((s.delta - v.delta_max + margin, [0.0, 0.0, 0.0, 1.0, 0.0, 0.0]));
        out.push((-s.delta - v.delta_max + margin, [0.0, 0.0, 0.0, -1.0, 0.0, 0.0]));
        out.push((s.a - v.a_acc_max + margin, [0.0, 0.0, 0.0, 0.0, 0.0, 1.0]));
        out.push((-s.a - v.a_dec_max + margin, [0.0, 0.0, 0.0, 0.0, 0.0, -1.0]));
    }

    /// All constraint values, step-major, with `margin` tightening.
    fn constraints(&self, states: &[VehicleState], margin: f64) -> Vec<f64> {
        let mut buf = Vec::with_capacity(PER_STEP);
        let mut g = Vec::with_capacity(self.constraint_count());
        for (t, s) in states.iter().enumerate().skip(1) {
            self.step_constraints(t, s, margin, &mut buf);
            g.extend(buf.iter().map(|c| c.0));
        }
        g
    }

    /// Cost and its gradient with respect to the packed controls, by a
    /// backward sweep through the rollout.
    pub fn cost_and_gradient(&self, u: &[f64]) -> Result<(f64, Vec<f64>), TrajectoryError> {
        let states = self.rollout(u)?;
        let w = &self.weights;
        let l = self.vehicle.wheelbase;
        let dt = self.dt;
        let n = self.steps();
        let f = self.cost_of(&states, u).total();
        let mut gs = vec![[0.0; 6]; n + 1];
        for t in 1..=n {
            let s = &states[t];
            let tan = s.delta.tan();
            let kappa = tan / l;
            gs[t][3] += 2.0 * w.kappa * kappa * (1.0 + tan * tan) / l;
            let (px, py) = self.pivots[t];
            gs[t][0] += 2.0 * w.px * (s.x - px);
            gs[t][1] += 2.0 * w.py * (s.y - py);
        }
        let mut grad = vec![0.0; 2 * n];
        let mut p = gs[n];
        for t in (0..n).rev() {
            grad[2 * t] = 2.0 * w.beta * u[2 * t] + dt * p[3];
            grad[2 * t + 1] = 2.0 * w.jerk * u[2 * t + 1] + dt * p[5];
            if t == 0 {
                break;
            }
            let s = &states[t];
            let (sn, cs) = s.theta.sin_cos();
            let tan = s.delta.tan();
            let q = [
                p[0],
                p[1],
                p[2] + dt * s.v * (-sn * p[0] + cs * p[1]),
                p[3] + p[2] * s.v * (1.0 + tan * tan) * dt / l,
                p[4] + dt * (cs * p[0] + sn * p[1]) + p[2] * tan * dt / l,
                p[5] + dt * p[4],
            ];
            for c in 0..6 {
                p[c] = gs[t][c] + q[c];
            }
        }
        if !f.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(TrajectoryError::Numeric { step: n });
        }
        Ok((f, grad))
    }

    /// Largest violation of the untightened constraints and the step it occurs at.
    pub fn max_violation(&self, states: &[VehicleState]) -> (f64, usize) {
        let g = self.constraints(states, 0.0);
        let mut worst = (0.0, 0);
        for (i, v) in g.iter().enumerate() {
            if *v > worst.0 {
                worst = (*v, i / PER_STEP + 1);
            }
        }
        worst
    }

    /// Pure-pursuit rollout toward a point moving along the waypoint polyline.
    /// Waypoints are the pivots pulled into the boundary overlaps.
    pub fn initial_guess(&self) -> Vec<f64> {
        let lookahead = 1.0;
        let time_unit = self.dt * self.steps_per_unit as f64;
        let horizon = *self.cube_of_step.last().unwrap();
        let cube_pivot = |k: usize| self.waypoints[k];
        let target = |time: f64| {
            let tau = (time / time_unit).clamp(0.0, horizon as f64);
            let k = (tau.floor() as usize).min(horizon.saturating_sub(1));
            let f = tau - k as f64;
            let (a, b) = (cube_pivot(k), cube_pivot((k + 1).min(horizon)));
            (a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1))
        };
        let v = &self.vehicle;
        let l = v.wheelbase;
        let delta_cap = 0.9 * v.delta_max;
        let mut s = self.x0;
        let mut u = Vec::with_capacity(self.dimension());
        for t in 0..self.steps() {
            let (tx, ty) = target(t as f64 * self.dt + lookahead);
            let (dx, dy) = (tx - s.x, ty - s.y);
            let (sn, cs) = s.theta.sin_cos();
            let (fx, fy) = (dx * cs + dy * sn, -dx * sn + dy * cs);
            let ld = fx.hypot(fy);
            let delta_des = if ld > 1e-3 {
                (2.0 * l * (fy / ld) / ld).atan().clamp(-delta_cap, delta_cap)
            } else {
                s.delta
            };
            let v_des = (fx / lookahead).max(0.0);
            let a_des = (2.0 * (v_des - s.v)).clamp(-0.9 * v.a_dec_max, 0.9 * v.a_acc_max);
            let beta = ((delta_des - s.delta) / self.dt).clamp(-2.0, 2.0);
            let jerk = ((a_des - s.a) / self.dt).clamp(-20.0, 20.0);
            let c = ControlInput { beta, jerk };
            s = integrate_dynamics(&s, &c, self.dt, l).unwrap_or(s);
            u.push(beta);
            u.push(jerk);
        }
        u
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryOptions {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Constraints are tightened by this amount inside the optimizer.
    pub margin: f64,
    /// Stationarity tolerance of the final subproblem (infinity norm).
    pub grad_tol: f64,
    pub pivot_target: PivotTarget,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        TrajectoryOptions { max_outer: 30, max_inner: 200, margin: 1e-3, grad_tol: 1e-5, pivot_target: PivotTarget::Interpolated }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub vehicle_id: u32,
    pub dt: f64,
    pub states: Vec<VehicleState>,
    pub controls: Vec<ControlInput>,
    pub cube_of_step: Vec<usize>,
    pub cost: CostBreakdown,
    pub wheelbase: f64,
    /// Largest untightened constraint violation.
    pub max_violation: f64,
    /// Infinity norm of the augmented-Lagrangian gradient at the returned point.
    pub grad_norm: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

impl Trajectory {
    pub fn curvature(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.delta.tan() / self.wheelbase).collect()
    }

    /// Largest per-component difference between stored states and a fresh rollout.
    pub fn dynamics_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (t, u) in self.controls.iter().enumerate() {
            let Ok(n) = integrate_dynamics(&self.states[t], u, self.dt, self.wheelbase) else {
                return f64::INFINITY;
            };
            let s = &self.states[t + 1];
            for (a, b) in [(n.x, s.x), (n.y, s.y), (n.theta, s.theta), (n.delta, s.delta), (n.v, s.v), (n.a, s.a)] {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,theta,delta,v,a,beta,j,cube_k\n");
        for (t, s) in self.states.iter().enumerate() {
            let u = self.controls.get(t).copied().unwrap_or_default();
            out.push_str(&format!(
                "{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
                t as f64 * self.dt,
                s.x,
                s.y,
                s.theta,
                s.delta,
                s.v,
                s.a,
                u.beta,
                u.jerk,
                self.cube_of_step[t]
            ));
        }
        out
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Augmented-Lagrangian data for one subproblem.
#[derive(Clone, Copy)]
struct Penalty<'a> {
    lambda: &'a [f64],
    rho: f64,
    margin: f64,
}

impl TrajectoryNlp {
    /// Objective, gradient and Gauss-Newton Hessian (dense, row-major) of the
    /// augmented Lagrangian. Sensitivities `ds_t/du` are propagated forward.
    fn evaluate_gn(&self, u: &[f64], pen: Penalty) -> Result<(f64, Vec<f64>, Vec<f64>), TrajectoryError> {
        let states = self.rollout(u)?;
        let w = &self.weights;
        let l = self.vehicle.wheelbase;
        let dt = self.dt;
        let n = self.steps();
        let dim = 2 * n;
        let mut f = self.cost_of(&states, u).total();
        let mut grad = vec![0.0; dim];
        let mut hess = vec![0.0; dim * dim];
        for t in 0..n {
            grad[2 * t] += 2.0 * w.beta * u[2 * t];
            grad[2 * t + 1] += 2.0 * w.jerk * u[2 * t + 1];
            hess[2 * t * dim + 2 * t] += 2.0 * w.beta;
            hess[(2 * t + 1) * dim + 2 * t + 1] += 2.0 * w.jerk;
        }
        // sens[i * dim + c]: derivative of state component i at the current step.
        let mut sens = vec![0.0; 6 * dim];
        let mut next = vec![0.0; 6 * dim];
        let mut buf = Vec::with_capacity(PER_STEP);
        let mut m_row = vec![0.0; 6 * dim];
        for t in 1..=n {
            let p = &states[t - 1];
            let (sn, cs) = p.theta.sin_cos();
            let tan = p.delta.tan();
            let a = [
                [1.0, 0.0, -p.v * sn * dt, 0.0, cs * dt, 0.0],
                [0.0, 1.0, p.v * cs * dt, 0.0, sn * dt, 0.0],
                [0.0, 0.0, 1.0, p.v * (1.0 + tan * tan) * dt / l, tan * dt / l, 0.0],
                [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 0.0, 0.0, 1.0, dt],
                [0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
            ];
            let cols = 2 * t;
            for i in 0..6 {
                for c in 0..cols {
                    let mut acc = 0.0;
                    for j in 0..6 {
                        if a[i][j] != 0.0 {
                            acc += a[i][j] * sens[j * dim + c];
                        }
                    }
                    next[i * dim + c] = acc;
                }
            }
            next[3 * dim + 2 * (t - 1)] += dt;
            next[5 * dim + 2 * (t - 1) + 1] += dt;
            std::mem::swap(&mut sens, &mut next);

            // State-space gradient h and Gauss-Newton curvature g.
            let s = &states[t];
            let mut h = [0.0; 6];
            let mut g = [[0.0; 6]; 6];
            let tan = s.delta.tan();
            let dk = (1.0 + tan * tan) / l;
            h[3] += 2.0 * w.kappa * (tan / l) * dk;
            g[3][3] += 2.0 * w.kappa * dk * dk;
            let (px, py) = self.pivots[t];
            h[0] += 2.0 * w.px * (s.x - px);
            h[1] += 2.0 * w.py * (s.y - py);
            g[0][0] += 2.0 * w.px;
            g[1][1] += 2.0 * w.py;
            self.step_constraints(t, s, pen.margin, &mut buf);
            for (i, (gv, dg)) in buf.iter().enumerate() {
                let lam = pen.lambda[(t - 1) * PER_STEP + i];
                let m = (lam + pen.rho * gv).max(0.0);
                f += (m * m - lam * lam) / (2.0 * pen.rho);
                if m > 0.0 {
                    for r in 0..6 {
                        h[r] += m * dg[r];
                        for c in 0..6 {
                            g[r][c] += pen.rho * dg[r] * dg[c];
                        }
                    }
                }
            }
            for c in 0..cols {
                let mut acc = 0.0;
                for i in 0..6 {
                    acc += h[i] * sens[i * dim + c];
                }
                grad[c] += acc;
            }
            for r in 0..6 {
                for c in 0..cols {
                    let mut acc = 0.0;
                    for i in 0..6 {
                        if g[r][i] != 0.0 {
                            acc += g[r][i] * sens[i * dim + c];
                        }
                    }
                    m_row[r * dim + c] = acc;
                }
            }
            for i in 0..6 {
                let si = &sens[i * dim..i * dim + cols];
                let mi = &m_row[i * dim..i * dim + cols];
                if mi.iter().all(|v| *v == 0.0) {
                    continue;
                }
                for (ra, sa) in si.iter().enumerate() {
                    if *sa == 0.0 {
                        continue;
                    }
                    let row = &mut hess[ra * dim..ra * dim + cols];
                    for (hv, mv) in row.iter_mut().zip(mi) {
                        *hv += sa * mv;
                    }
                }
            }
        }
        if !f.is_finite() || grad.iter().any(|v| !v.is_finite()) {
            return Err(TrajectoryError::Numeric { step: n });
        }
        Ok((f, grad, hess))
    }
}

/// Solves `(H + mu I) d = -g` for a dense symmetric `H`.
fn damped_step(hess: &[f64], grad: &[f64], mu: f64) -> Option<Vec<f64>> {
    let n = grad.len();
    let mut m = SymMatrix::with_pattern(n, (0..n).map(|i| (i, 0)));
    for i in 0..n {
        for j in 0..=i {
            m.add(i, j, hess[i * n + j]);
        }
        m.add_diag(i, mu);
    }
    let ch = m.cholesky().ok()?;
    let mut d: Vec<f64> = grad.iter().map(|g| -g).collect();
    ch.solve_in_place(&mut d);
    d.iter().all(|v| v.is_finite()).then_some(d)
}

/// Levenberg-Marquardt iterations on one augmented-Lagrangian subproblem.
/// Returns the final gradient and the iteration count.
fn minimize(nlp: &TrajectoryNlp, u: &mut Vec<f64>, pen: Penalty, tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize), TrajectoryError> {
    let (mut f, mut g, mut h) = nlp.evaluate_gn(u, pen)?;
    let mut mu = 1e-6;
    let mut iters = 0;
    while iters < max_iter && inf_norm(&g) > tol {
        iters += 1;
        let mut accepted = false;
        while mu < 1e12 {
            let Some(d) = damped_step(&h, &g, mu) else {
                mu *= 10.0;
                continue;
            };
            let trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + b).collect();
            match nlp.evaluate_gn(&trial, pen) {
                Ok((ft, gt, ht)) if ft < f || (ft <= f && inf_norm(&gt) < inf_norm(&g)) => {
                    *u = trial;
                    f = ft;
                    g = gt;
                    h = ht;
                    mu = (mu / 4.0).max(1e-12);
                    accepted = true;
                    break;
                }
                _ => mu *= 10.0,
            }
        }
        if !accepted {
            break;
        }
    }
    Ok((g, iters))
}

/// Solves the trajectory NLP for one vehicle inside its corridor.
pub fn solve_trajectory(
    corridor: &Corridor,
    vehicle: &VehicleSpec,
    config: &PlannerConfig,
    opts: &TrajectoryOptions,
) -> Result<Trajectory, TrajectoryError> {
    let nlp = TrajectoryNlp::with_target(corridor, vehicle, config, opts.pivot_target)?;
    let mut u = nlp.initial_guess();
    let mut lambda = vec![0.0; nlp.constraint_count()];
    let mut rho = 10.0;
    let mut prev_primal = f64::INFINITY;
    let mut inner_total = 0;
    let mut outer = 0;
    let mut grad_norm;
    loop {
        outer += 1;
        let pen = Penalty { lambda: &lambda, rho, margin: opts.margin };
        let (g, it) = minimize(&nlp, &mut u, pen, opts.grad_tol, opts.max_inner)?;
        inner_total += it;
        grad_norm = inf_norm(&g);
        let states = nlp.rollout(&u)?;
        let gv = nlp.constraints(&states, opts.margin);
        let primal = gv.iter().fold(0.0f64, |a, b| a.max(*b));
        let comp = lambda.iter().zip(&gv).fold(0.0f64, |a, (l, gi)| a.max(gi.max(-l / rho).abs()));
        if (primal <= 0.1 * opts.margin && comp <= 0.1 * opts.margin) || outer >= opts.max_outer {
            break;
        }
        for (l, gi) in lambda.iter_mut().zip(&gv) {
            *l = (*l + rho * gi).max(0.0);
        }
        if primal > 0.25 * prev_primal {
            rho = (rho * 10.0).min(1e8);
        }
        prev_primal = primal;
    }
    let states = nlp.rollout(&u)?;
    let (max_violation, step) = nlp.max_violation(&states);
    if max_violation > CHECK_TOL {
        return Err(TrajectoryError::Infeasible { max_violation, step });
    }
    let cost = nlp.cost_of(&states, &u);
    Ok(Trajectory {
        vehicle_id: vehicle.id,
        dt: nlp.dt,
        controls: TrajectoryNlp::unpack(&u),
        states,
        cube_of_step: nlp.cube_of_step.clone(),
        cost,
        wheelbase: vehicle.wheelbase,
        max_violation,
        grad_norm,
        outer_iterations: outer,
        inner_iterations: inner_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coasting_and_rotation() {
        let s = VehicleState { v: 5.0, ..Default::default() };
        let n = integrate_dynamics(&s, &ControlInput::default(), 0.1, 2.7).unwrap();
        assert!((n.x - 0.5).abs() < 1e-15 && n.y == 0.0 && n.v == 5.0);
        let s = VehicleState { theta: FRAC_PI_2, delta: 0.2, v: 5.0, ..Default::default() };
        let n = integrate_dynamics(&s, &ControlInput::default(), 0.1, 2.7).unwrap();
        assert!((n.theta - 1.60834).abs() < 1e-5);
        let s = VehicleState { delta: FRAC_PI_2, ..Default::default() };
        assert!(matches!(
            integrate_dynamics(&s, &ControlInput::default(), 0.1, 2.7),
            Err(TrajectoryError::SingularSteering { .. })
        ));
    }

    #[test]
    fn damped_step_solves_spd_system() {
        let h = [4.0, 1.0, 1.0, 3.0];
        let d = damped_step(&h, &[1.0, 2.0], 0.0).unwrap();
        assert!((4.0 * d[0] + d[1] + 1.0).abs() < 1e-12);
        assert!((d[0] + 3.0 * d[1] + 2.0).abs() < 1e-12);
    }
}
