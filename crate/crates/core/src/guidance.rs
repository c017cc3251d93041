//! Conflict-ignorant guidance: hybrid A* on the occupancy grid followed by a
//! constant-speed time assignment at corridor time-unit resolution.

use crate::error::GuidanceError;
use crate::geometry::{angle_diff, wrap_angle, Pose};
use crate::scenario::{OccupancyGrid, Scenario, VehicleSpec};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;

pub const GOAL_POS_TOL: f64 = 0.5;
pub const GOAL_HEADING_TOL: f64 = 0.2;
const HEADING_BINS: usize = 72;

/// Dense path with cumulative arc length. Headings follow the body, so on
/// reverse segments they point against the direction of travel.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidancePath {
    pub poses: Vec<Pose>,
    pub arc_lengths: Vec<f64>,
}

impl GuidancePath {
    pub fn from_poses(poses: Vec<Pose>) -> Self {
        let mut arc_lengths = Vec::with_capacity(poses.len());
        let mut s = 0.0;
        for (i, p) in poses.iter().enumerate() {
            if i > 0 {
                s += p.distance(&poses[i - 1]);
            }
            arc_lengths.push(s);
        }
        GuidancePath { poses, arc_lengths }
    }

    pub fn length(&self) -> f64 {
        self.arc_lengths.last().copied().unwrap_or(0.0)
    }

    fn segment_at(&self, s: f64) -> usize {
        let i = self.arc_lengths.partition_point(|&a| a <= s);
        i.clamp(1, self.poses.len().max(2) - 1) - 1
    }

    /// Pose at arc length `s` (clamped), linearly interpolated.
    pub fn pose_at(&self, s: f64) -> Pose {
        if self.poses.len() == 1 {
            return self.poses[0];
        }
        let s = s.clamp(0.0, self.length());
        let i = self.segment_at(s);
        let (a, b) = (self.poses[i], self.poses[i + 1]);
        let seg = self.arc_lengths[i + 1] - self.arc_lengths[i];
        let t = if seg > 0.0 { (s - self.arc_lengths[i]) / seg } else { 0.0 };
        Pose::new(
            a.x + t * (b.x - a.x),
            a.y + t * (b.y - a.y),
            wrap_angle(a.theta + t * angle_diff(b.theta, a.theta)),
        )
    }

    /// Direction of displacement at arc length `s`.
    pub fn tangent_at(&self, s: f64) -> f64 {
        let total = self.length();
        if total <= 1e-9 {
            return self.poses[0].theta;
        }
        let h = 0.05_f64.min(0.5 * total);
        let (s0, s1) = if s + h <= total { (s.max(0.0), s.max(0.0) + h) } else { (total - h, total) };
        let (a, b) = (self.pose_at(s0), self.pose_at(s1));
        (b.y - a.y).atan2(b.x - a.x)
    }
}

/// One reference per corridor time unit `k = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceTrajectory {
    pub vehicle_id: u32,
    pub time_unit: f64,
    /// Path poses at the sample instants (body heading).
    pub samples: Vec<Pose>,
    /// Direction of travel at each sample, used as the reference heading.
    pub tangents: Vec<f64>,
    /// Arc length of the underlying path.
    pub path_length: f64,
}

impl GuidanceTrajectory {
    pub fn horizon(&self) -> usize {
        self.samples.len() - 1
    }

    /// Repeats the final sample until the horizon reaches `k`.
    pub fn extend_to(&mut self, k: usize) {
        while self.horizon() < k {
            let last = *self.samples.last().unwrap();
            let tan = *self.tangents.last().unwrap();
            self.samples.push(last);
            self.tangents.push(tan);
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,theta\n");
        for (k, p) in self.samples.iter().enumerate() {
            out.push_str(&format!("{:.3},{:.6},{:.6},{:.6}\n", k as f64 * self.time_unit, p.x, p.y, self.tangents[k]));
        }
        out
    }
}

pub fn assign_constant_speed(
    path: &GuidancePath,
    vehicle_id: u32,
    v_ref: f64,
    time_unit: f64,
) -> Result<GuidanceTrajectory, GuidanceError> {
    if path.poses.is_empty() {
        return Err(GuidanceError::EmptyPath);
    }
    if !(v_ref.is_finite() && v_ref > 0.0) {
        return Err(GuidanceError::InvalidSpeed(v_ref));
    }
    let total = path.length();
    let step = v_ref * time_unit;
    let k_max = ((total / step) - 1e-9).ceil().max(0.0) as usize;
    let mut samples = Vec::with_capacity(k_max + 1);
    let mut tangents = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let s = (k as f64 * step).min(total);
        samples.push(if k == 0 { path.poses[0] } else { path.pose_at(s) });
        tangents.push(path.tangent_at(s));
    }
    Ok(GuidanceTrajectory {
        vehicle_id,
        time_unit,
        samples,
        tangents,
        path_length: total,
    })
}

/// Stored reference `(x_ref, y_ref, theta_ref)` at time unit `k`.
pub fn sample_reference(traj: &GuidanceTrajectory, k: usize) -> Result<(f64, f64, f64), GuidanceError> {
    match traj.samples.get(k) {
        Some(p) => Ok((p.x, p.y, traj.tangents[k])),
        None => Err(GuidanceError::IndexOutOfRange { k, horizon: traj.horizon() }),
    }
}

#[derive(Debug, Clone)]
pub struct AstarOptions {
    pub node_budget: usize,
}

impl Default for AstarOptions {
    fn default() -> Self {
        AstarOptions { node_budget: 200_000 }
    }
}

struct Open {
    f: f64,
    id: usize,
}

impl PartialEq for Open {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f).then(o.id.cmp(&self.id))
    }
}

struct SearchNode {
    pose: Pose,
    g: f64,
    parent: usize,
    /// Dense poses from the parent (excluded) to this node (included).
    arc: Vec<Pose>,
}

/// 8-connected Dijkstra distance from the goal cell over free cells.
pub fn grid_distance_field(grid: &OccupancyGrid, goal: (f64, f64)) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; grid.width * grid.height];
    let Some((gc, gr)) = grid.cell_of(goal.0, goal.1) else { return dist };
    let start = grid.index(gc, gr);
    dist[start] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Open { f: 0.0, id: start });
    let diag = grid.resolution * 2f64.sqrt();
    while let Some(Open { f, id }) = heap.pop() {
        if f > dist[id] {
            continue;
        }
        let (c, r) = ((id % grid.width) as i64, (id / grid.width) as i64);
        for dr in -1..=1 {
            for dc in -1..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (nc, nr) = (c + dc, r + dr);
                if nc < 0 || nr < 0 || nc >= grid.width as i64 || nr >= grid.height as i64 {
                    continue;
                }
                let ni = grid.index(nc as usize, nr as usize);
                if grid.occupancy[ni] {
                    continue;
                }
                let nd = f + if dr != 0 && dc != 0 { diag } else { grid.resolution };
                if nd < dist[ni] {
                    dist[ni] = nd;
                    heap.push(Open { f: nd, id: ni });
                }
            }
        }
    }
    dist
}

fn reached(p: &Pose, goal: &Pose) -> bool {
    p.distance(goal) <= GOAL_POS_TOL && angle_diff(p.theta, goal.theta).abs() <= GOAL_HEADING_TOL
}

pub fn hybrid_astar(
    grid: &OccupancyGrid,
    vehicle: &VehicleSpec,
    start: Pose,
    goal: Pose,
    opts: &AstarOptions,
) -> Result<GuidancePath, GuidanceError> {
    if grid.collides(&vehicle.footprint(&start)) || grid.collides(&vehicle.footprint(&goal)) {
        return Err(GuidanceError::SearchFailed { explored: 0 });
    }
    if reached(&start, &goal) {
        return Ok(GuidancePath::from_poses(vec![start, goal]));
    }
    let field = grid_distance_field(grid, (goal.x, goal.y));
    let heuristic = |p: &Pose| {
        let euclid = ((p.x - goal.x).powi(2) + (p.y - goal.y).powi(2)).sqrt();
        let grid_d = grid.cell_of(p.x, p.y).map(|(c, r)| field[grid.index(c, r)]).unwrap_or(f64::INFINITY);
        // Cell-level distance may overshoot by a diagonal within the start and goal cells.
        let grid_d = (grid_d - 2.0 * grid.resolution * 2f64.sqrt()).max(0.0);
        euclid.max(if grid_d.is_finite() { grid_d } else { euclid })
    };
    let key = |p: &Pose| {
        let (c, r) = grid.cell_of(p.x, p.y).unwrap_or((usize::MAX, usize::MAX));
        let h = ((wrap_angle(p.theta) + PI) / (2.0 * PI) * HEADING_BINS as f64).floor() as usize % HEADING_BINS;
        (c, r, h)
    };

    let arc_len = 0.7 * vehicle.length;
    let samples = ((arc_len / (0.25 * grid.resolution)).ceil() as usize).max(2);
    let ds = arc_len / samples as f64;
    let steer = [vehicle.delta_max, 0.0, -vehicle.delta_max];

    let mut nodes = vec![SearchNode { pose: start, g: 0.0, parent: usize::MAX, arc: vec![start] }];
    let mut best_g: HashMap<(usize, usize, usize), f64> = HashMap::new();
    let mut closed: HashMap<(usize, usize, usize), ()> = HashMap::new();
    let mut open = BinaryHeap::new();
    open.push(Open { f: heuristic(&start), id: 0 });
    best_g.insert(key(&start), 0.0);
    let mut explored = 0;

    while let Some(Open { id, .. }) = open.pop() {
        let k = key(&nodes[id].pose);
        if closed.contains_key(&k) {
            continue;
        }
        closed.insert(k, ());
        explored += 1;
        if explored > opts.node_budget {
            break;
        }
        let here = nodes[id].pose;
        for dir in [1.0, -1.0] {
            for &d in &steer {
                let kappa = d.tan() / vehicle.wheelbase;
                let mut p = here;
                let mut arc = Vec::with_capacity(samples);
                let mut ok = true;
                let mut hit_goal = false;
                for _ in 0..samples {
                    let step = dir * ds;
                    if kappa.abs() < 1e-12 {
                        p = Pose::new(p.x + step * p.theta.cos(), p.y + step * p.theta.sin(), p.theta);
                    } else {
                        let th = p.theta + step * kappa;
                        p = Pose::new(
                            p.x + (th.sin() - p.theta.sin()) / kappa,
                            p.y - (th.cos() - p.theta.cos()) / kappa,
                            wrap_angle(th),
                        );
                    }
                    if grid.collides(&vehicle.footprint(&p)) {
                        ok = false;
                        break;
                    }
                    arc.push(p);
                    if reached(&p, &goal) {
                        hit_goal = true;
                        break;
                    }
                }
                if !ok {
                    continue;
                }
                let cost = arc.len() as f64 * ds * if dir < 0.0 { 2.0 } else { 1.0 };
                let g = nodes[id].g + cost;
                let end = *arc.last().unwrap();
                if hit_goal {
                    nodes.push(SearchNode { pose: end, g, parent: id, arc });
                    return Ok(reconstruct(&nodes, nodes.len() - 1));
                }
                let kk = key(&end);
                if kk.0 == usize::MAX || closed.contains_key(&kk) {
                    continue;
                }
                if best_g.get(&kk).is_some_and(|&bg| bg <= g) {
                    continue;
                }
                best_g.insert(kk, g);
                nodes.push(SearchNode { pose: end, g, parent: id, arc });
                open.push(Open { f: g + heuristic(&end), id: nodes.len() - 1 });
            }
        }
    }
    Err(GuidanceError::SearchFailed { explored })
}

fn reconstruct(nodes: &[SearchNode], mut id: usize) -> GuidancePath {
    let mut chunks = Vec::new();
    while id != usize::MAX {
        chunks.push(&nodes[id].arc);
        id = nodes[id].parent;
    }
    let poses: Vec<Pose> = chunks.into_iter().rev().flatten().copied().collect();
    GuidancePath::from_poses(poses)
}

/// Guidance path for one vehicle: the scenario override when present,
/// otherwise a hybrid A* search from start to goal.
pub fn guidance_path(s: &Scenario, v: &VehicleSpec, opts: &AstarOptions) -> Result<GuidancePath, GuidanceError> {
    match s.guidance_override(v.id) {
        Some(o) => {
            if o.poses.is_empty() {
                return Err(GuidanceError::EmptyPath);
            }
            let mut poses = o.poses.clone();
            if poses[0].distance(&v.start_pose) > 1e-9 {
                poses.insert(0, v.start_pose);
            } else {
                poses[0] = v.start_pose;
            }
            Ok(GuidancePath::from_poses(poses))
        }
        None => hybrid_astar(&s.grid, v, v.start_pose, v.goal_pose, opts),
    }
}

/// Guidance trajectories for all vehicles, padded to one shared horizon.
pub fn plan_guidance(
    s: &Scenario,
    opts: &AstarOptions,
) -> Result<(Vec<GuidancePath>, Vec<GuidanceTrajectory>), (u32, GuidanceError)> {
    let mut paths = Vec::new();
    let mut trajs = Vec::new();
    for v in &s.vehicles {
        let path = guidance_path(s, v, opts).map_err(|e| (v.id, e))?;
        let traj = assign_constant_speed(&path, v.id, v.v_ref, s.config.time_unit).map_err(|e| (v.id, e))?;
        paths.push(path);
        trajs.push(traj);
    }
    let k = trajs.iter().map(|t| t.horizon()).max().unwrap_or(0);
    trajs.iter_mut().for_each(|t| t.extend_to(k));
    Ok((paths, trajs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(len: f64) -> GuidancePath {
        let n = (len / 0.1).round() as usize;
        GuidancePath::from_poses((0..=n).map(|i| Pose::new(i as f64 * len / n as f64, 0.0, 0.0)).collect())
    }

    #[test]
    fn constant_speed_25m() {
        let t = assign_constant_speed(&straight(25.0), 1, 5.0, 1.0).unwrap();
        assert_eq!(t.horizon(), 5);
        for (k, p) in t.samples.iter().enumerate() {
            assert!((p.x - 5.0 * k as f64).abs() < 1e-9);
        }
        let (x, _, th) = sample_reference(&t, 3).unwrap();
        assert!((x - 15.0).abs() < 1e-9 && th.abs() < 1e-9);
        assert_eq!(
            sample_reference(&t, 6),
            Err(GuidanceError::IndexOutOfRange { k: 6, horizon: 5 })
        );
    }

    #[test]
    fn constant_speed_26m_and_zero() {
        let t = assign_constant_speed(&straight(26.0), 1, 5.0, 1.0).unwrap();
        assert_eq!(t.horizon(), 6);
        assert!((t.samples[6].x - 26.0).abs() < 1e-9);
        let z = GuidancePath::from_poses(vec![Pose::new(1.0, 2.0, 0.3)]);
        let t = assign_constant_speed(&z, 1, 5.0, 1.0).unwrap();
        assert_eq!(t.horizon(), 0);
        assert_eq!(t.samples[0], Pose::new(1.0, 2.0, 0.3));
        assert_eq!(assign_constant_speed(&z, 1, 0.0, 1.0).unwrap_err(), GuidanceError::InvalidSpeed(0.0));
        let empty = GuidancePath { poses: vec![], arc_lengths: vec![] };
        assert_eq!(assign_constant_speed(&empty, 1, 5.0, 1.0).unwrap_err(), GuidanceError::EmptyPath);
    }

    #[test]
    fn tangent_of_reverse_path_opposes_heading() {
        let p = GuidancePath::from_poses(vec![Pose::new(0.0, 0.0, 0.0), Pose::new(-3.0, 0.0, 0.0)]);
        assert!((p.tangent_at(1.0).abs() - PI).abs() < 1e-9);
    }

    #[test]
    fn extension_repeats_goal() {
        let mut t = assign_constant_speed(&straight(10.0), 1, 5.0, 1.0).unwrap();
        t.extend_to(5);
        assert_eq!(t.horizon(), 5);
        assert_eq!(t.samples[5], t.samples[2]);
    }
}
