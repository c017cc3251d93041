//! Scenario data model: vehicles, obstacles, the occupancy grid and planner
//! configuration, together with the TOML scenario file format.

use crate::error::ScenarioError;
use crate::geometry::{Aabb, OrientedRect, Pose};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::f64::consts::FRAC_PI_2;
use std::fmt;

/// Optional initial dynamic state of a vehicle. Missing values default to
/// `v0 = v_ref`, `delta0 = 0`, `a0 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InitialState {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub id: u32,
    /// Body length (m).
    pub length: f64,
    /// Body width (m).
    pub width: f64,
    /// Wheelbase (m).
    pub wheelbase: f64,
    pub start_pose: Pose,
    pub goal_pose: Pose,
    /// Constant guidance speed (m/s).
    pub v_ref: f64,
    /// Priority weight in the corridor objective.
    pub priority: f64,
    /// Front-wheel steering limit (rad).
    pub delta_max: f64,
    pub a_acc_max: f64,
    /// Deceleration limit, stored positive.
    pub a_dec_max: f64,
    /// Largest forward travel per time unit (m).
    pub gamma_s_plus: f64,
    /// Largest backward travel per time unit (m).
    pub gamma_s_minus: f64,
    #[serde(default, skip_serializing_if = "is_default_initial")]
    pub initial: InitialState,
}

fn is_default_initial(s: &InitialState) -> bool {
    *s == InitialState::default()
}

impl VehicleSpec {
    /// Cube size needed to hold the car-box in any orientation: the body diagonal.
    pub fn gamma_car(&self) -> f64 {
        self.length.hypot(self.width)
    }

    /// Distance from the rear axle to the rear bumper. The overhang is split
    /// evenly between front and rear.
    pub fn rear_overhang(&self) -> f64 {
        0.5 * (self.length - self.wheelbase)
    }

    /// Distance from the rear axle to the front bumper.
    pub fn front_extent(&self) -> f64 {
        self.wheelbase + self.rear_overhang()
    }

    /// Car-box of the vehicle whose rear axle center sits at `pose`.
    pub fn footprint(&self, pose: &Pose) -> OrientedRect {
        OrientedRect::from_body(pose, self.rear_overhang(), self.front_extent(), 0.5 * self.width)
    }

    pub fn v0(&self) -> f64 {
        self.initial.v0.unwrap_or(self.v_ref)
    }

    pub fn delta0(&self) -> f64 {
        self.initial.delta0.unwrap_or(0.0)
    }

    pub fn a0(&self) -> f64 {
        self.initial.a0.unwrap_or(0.0)
    }
}

/// Axis-aligned obstacle. Static obstacles use the four bounds for every time
/// unit; moving obstacles list one box per time unit in `boxes` (the last box
/// persists beyond the list).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleBox {
    pub id: u32,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boxes: Vec<[f64; 4]>,
}

impl ObstacleBox {
    pub fn new_static(id: u32, b: Aabb) -> Self {
        ObstacleBox {
            id,
            x_min: b.x_min,
            x_max: b.x_max,
            y_min: b.y_min,
            y_max: b.y_max,
            boxes: Vec::new(),
        }
    }

    pub fn is_static(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn base(&self) -> Aabb {
        Aabb::new(self.x_min, self.x_max, self.y_min, self.y_max)
    }

    /// Box occupied during time unit `k`.
    pub fn at(&self, k: usize) -> Aabb {
        match self.boxes.len() {
            0 => self.base(),
            n => {
                let b = self.boxes[k.min(n - 1)];
                Aabb::new(b[0], b[1], b[2], b[3])
            }
        }
    }
}

/// Boolean occupancy grid, row-major with row index along +y.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub origin: (f64, f64),
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub occupancy: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(origin: (f64, f64), resolution: f64, width: usize, height: usize) -> Self {
        OccupancyGrid {
            origin,
            resolution,
            width,
            height,
            occupancy: vec![false; width * height],
        }
    }

    pub fn extent(&self) -> Aabb {
        Aabb::new(
            self.origin.0,
            self.origin.0 + self.width as f64 * self.resolution,
            self.origin.1,
            self.origin.1 + self.height as f64 * self.resolution,
        )
    }

    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    pub fn is_occupied(&self, col: usize, row: usize) -> bool {
        self.occupancy[self.index(col, row)]
    }

    /// Cell containing the world point, `None` outside the map.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let cx = ((x - self.origin.0) / self.resolution).floor();
        let cy = ((y - self.origin.1) / self.resolution).floor();
        if cx < 0.0 || cy < 0.0 || cx >= self.width as f64 || cy >= self.height as f64 {
            return None;
        }
        Some((cx as usize, cy as usize))
    }

    pub fn cell_box(&self, col: usize, row: usize) -> Aabb {
        let x0 = self.origin.0 + col as f64 * self.resolution;
        let y0 = self.origin.1 + row as f64 * self.resolution;
        Aabb::new(x0, x0 + self.resolution, y0, y0 + self.resolution)
    }

    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.origin.0 + (col as f64 + 0.5) * self.resolution,
            self.origin.1 + (row as f64 + 0.5) * self.resolution,
        )
    }

    /// Cells whose squares overlap the open interior of `b`.
    pub fn cells_overlapping(&self, b: &Aabb) -> Vec<(usize, usize)> {
        let c0 = ((b.x_min - self.origin.0) / self.resolution).floor().max(0.0) as usize;
        let r0 = ((b.y_min - self.origin.1) / self.resolution).floor().max(0.0) as usize;
        let c1 = (((b.x_max - self.origin.0) / self.resolution).ceil().max(0.0) as usize).min(self.width);
        let r1 = (((b.y_max - self.origin.1) / self.resolution).ceil().max(0.0) as usize).min(self.height);
        let mut out = Vec::new();
        for row in r0..r1 {
            for col in c0..c1 {
                let cb = self.cell_box(col, row);
                if cb.x_max > b.x_min && cb.x_min < b.x_max && cb.y_max > b.y_min && cb.y_min < b.y_max {
                    out.push((col, row));
                }
            }
        }
        out
    }

    pub fn rasterize(&mut self, b: &Aabb) {
        for (col, row) in self.cells_overlapping(b) {
            let i = self.index(col, row);
            self.occupancy[i] = true;
        }
    }

    /// True when the rectangle leaves the map or overlaps an occupied cell.
    pub fn collides(&self, rect: &OrientedRect) -> bool {
        let bb = rect.aabb();
        let ext = self.extent();
        if bb.x_min < ext.x_min || bb.x_max > ext.x_max || bb.y_min < ext.y_min || bb.y_max > ext.y_max {
            return true;
        }
        self.cells_overlapping(&bb)
            .into_iter()
            .filter(|&(c, r)| self.is_occupied(c, r))
            .any(|(c, r)| rect.sat_separation(&OrientedRect::from_aabb(&self.cell_box(c, r))) < 0.0)
    }

    /// Run-length encoding over row-major cell indices: `[start, length]` pairs.
    pub fn occupied_runs(&self) -> Vec<[usize; 2]> {
        let mut runs = Vec::new();
        let mut i = 0;
        while i < self.occupancy.len() {
            if self.occupancy[i] {
                let start = i;
                while i < self.occupancy.len() && self.occupancy[i] {
                    i += 1;
                }
                runs.push([start, i - start]);
            } else {
                i += 1;
            }
        }
        runs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub w_area: f64,
    pub w_ref: f64,
    pub w_kappa: f64,
    pub w_beta: f64,
    pub w_j: f64,
    pub w_px: f64,
    pub w_py: f64,
    pub gamma_x_v2v: f64,
    pub gamma_y_v2v: f64,
    pub r_x_v2o: f64,
    pub r_y_v2o: f64,
    pub alpha_x: f64,
    pub alpha_y: f64,
    pub big_m: f64,
    /// Corridor time unit (s).
    pub time_unit: f64,
    /// Trajectory discretization step (s).
    pub dt: f64,
    /// Floor on per-axis pivot travel per time unit (m).
    pub eps_move: f64,
    /// Branch-and-bound node budget.
    pub node_budget: usize,
    /// Layer-1 wall-clock budget (s).
    pub time_budget: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            w_area: 0.5,
            w_ref: 10.0,
            w_kappa: 1.0,
            w_beta: 100.0,
            w_j: 1.0,
            w_px: 1.0,
            w_py: 1.0,
            gamma_x_v2v: 0.3,
            gamma_y_v2v: 0.3,
            r_x_v2o: 0.2,
            r_y_v2o: 0.2,
            alpha_x: 2.0,
            alpha_y: 2.0,
            big_m: 1.0e4,
            time_unit: 1.0,
            dt: 0.1,
            eps_move: 0.5,
            node_budget: 50_000,
            time_budget: 60.0,
        }
    }
}

impl PlannerConfig {
    /// Number of fine steps per corridor time unit.
    pub fn steps_per_unit(&self) -> usize {
        (self.time_unit / self.dt).round() as usize
    }
}

/// Scenario-supplied guidance path that replaces the search for one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceOverride {
    pub vehicle_id: u32,
    pub poses: Vec<Pose>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub config: PlannerConfig,
    pub grid: OccupancyGrid,
    pub vehicles: Vec<VehicleSpec>,
    pub obstacles: Vec<ObstacleBox>,
    pub guidance: Vec<GuidanceOverride>,
}

impl Scenario {
    pub fn vehicle(&self, id: u32) -> Option<&VehicleSpec> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn guidance_override(&self, id: u32) -> Option<&GuidanceOverride> {
        self.guidance.iter().find(|g| g.vehicle_id == id)
    }
}

// On-disk layout. The grid stores run-length encoded occupancy.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    origin: [f64; 2],
    resolution: f64,
    width: usize,
    height: usize,
    #[serde(default)]
    occupied: Vec<[usize; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    #[serde(default)]
    name: String,
    config: PlannerConfig,
    grid: GridFile,
    #[serde(default)]
    vehicles: Vec<VehicleSpec>,
    #[serde(default)]
    obstacles: Vec<ObstacleBox>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    guidance: Vec<GuidanceOverride>,
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let s = parse_unvalidated(text)?;
    let report = validate_scenario(&s);
    if report.is_empty() {
        Ok(s)
    } else {
        Err(ScenarioError::Validation(report))
    }
}

/// Parses without running the invariant checks.
pub fn parse_unvalidated(text: &str) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let g = file.grid;
    if !(g.resolution.is_finite() && g.resolution > 0.0) {
        return Err(ScenarioError::Parse(format!("grid.resolution must be positive, got {}", g.resolution)));
    }
    let mut grid = OccupancyGrid::new((g.origin[0], g.origin[1]), g.resolution, g.width, g.height);
    let cells = grid.occupancy.len();
    for [start, len] in g.occupied {
        if start + len > cells {
            return Err(ScenarioError::Parse(format!(
                "grid.occupied run [{start}, {len}] exceeds {cells} cells"
            )));
        }
        grid.occupancy[start..start + len].iter_mut().for_each(|c| *c = true);
    }
    Ok(Scenario {
        name: file.name,
        config: file.config,
        grid,
        vehicles: file.vehicles,
        obstacles: file.obstacles,
        guidance: file.guidance,
    })
}

pub fn serialize_scenario(s: &Scenario) -> String {
    let file = ScenarioFile {
        name: s.name.clone(),
        config: s.config.clone(),
        grid: GridFile {
            origin: [s.grid.origin.0, s.grid.origin.1],
            resolution: s.grid.resolution,
            width: s.grid.width,
            height: s.grid.height,
            occupied: s.grid.occupied_runs(),
        },
        vehicles: s.vehicles.clone(),
        obstacles: s.obstacles.clone(),
        guidance: s.guidance.clone(),
    };
    toml::to_string(&file).expect("scenario values are always representable in TOML")
}

/// List of violated invariants; empty iff the scenario is runnable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.issues.iter().any(|i| i.contains(needle))
    }

    pub fn push(&mut self, msg: impl Into<String>) {
        self.issues.push(msg.into());
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.issues.join("; "))
    }
}

fn finite_nonneg(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

fn finite_pos(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

pub fn validate_scenario(s: &Scenario) -> ValidationReport {
    let mut r = ValidationReport::default();
    validate_config(&s.config, &mut r);

    let g = &s.grid;
    if !finite_pos(g.resolution) {
        r.push("grid: resolution must be > 0");
    }
    if g.width == 0 || g.height == 0 {
        r.push("grid: empty grid");
    }
    if !(g.origin.0.is_finite() && g.origin.1.is_finite()) {
        r.push("grid: origin not finite");
    }

    if s.vehicles.is_empty() {
        r.push("no vehicles");
    }
    let mut ids = HashSet::new();
    for v in &s.vehicles {
        if !ids.insert(v.id) {
            r.push(format!("vehicle {}: duplicate vehicle id", v.id));
        }
        validate_vehicle(v, &mut r);
    }

    let geometry_ok = finite_pos(g.resolution) && g.width > 0 && g.height > 0;
    let mut obs_ids = HashSet::new();
    for o in &s.obstacles {
        if !obs_ids.insert(o.id) {
            r.push(format!("obstacle {}: duplicate obstacle id", o.id));
        }
        if !o.base().is_valid() {
            r.push(format!("obstacle {}: requires x_min < x_max and y_min < y_max", o.id));
        }
        for (k, b) in o.boxes.iter().enumerate() {
            if !Aabb::new(b[0], b[1], b[2], b[3]).is_valid() {
                r.push(format!("obstacle {}: box at time unit {k} requires min < max", o.id));
            }
        }
        if o.is_static() && o.base().is_valid() && geometry_ok {
            let missing = g
                .cells_overlapping(&o.base())
                .into_iter()
                .any(|(c, row)| !g.is_occupied(c, row));
            if missing {
                r.push(format!("obstacle {}: box not rasterized into occupied grid cells", o.id));
            }
        }
    }

    let vehicles_ok: Vec<&VehicleSpec> = s.vehicles.iter().filter(|v| vehicle_geometry_ok(v)).collect();
    if geometry_ok {
        for v in &vehicles_ok {
            if g.collides(&v.footprint(&v.start_pose)) {
                r.push(format!("vehicle {}: start pose collides with the occupancy grid", v.id));
            }
            if s.guidance_override(v.id).is_none() && g.collides(&v.footprint(&v.goal_pose)) {
                r.push(format!("vehicle {}: goal pose collides with the occupancy grid", v.id));
            }
        }
    }
    let min_sep = s.config.gamma_x_v2v.max(s.config.gamma_y_v2v);
    for (a, va) in vehicles_ok.iter().enumerate() {
        for vb in vehicles_ok.iter().skip(a + 1) {
            let d = va.footprint(&va.start_pose).distance(&vb.footprint(&vb.start_pose));
            if d < min_sep {
                r.push(format!(
                    "vehicles {} and {}: start separation {d:.3} m below {min_sep:.3} m",
                    va.id, vb.id
                ));
            }
        }
    }

    for go in &s.guidance {
        if !ids.contains(&go.vehicle_id) {
            r.push(format!("guidance: unknown vehicle id {}", go.vehicle_id));
        }
        if go.poses.is_empty() {
            r.push(format!("guidance for vehicle {}: empty pose list", go.vehicle_id));
        }
        if go.poses.iter().any(|p| !p.is_finite()) {
            r.push(format!("guidance for vehicle {}: non-finite pose", go.vehicle_id));
        }
    }
    r
}

fn vehicle_geometry_ok(v: &VehicleSpec) -> bool {
    finite_pos(v.length)
        && finite_pos(v.width)
        && finite_pos(v.wheelbase)
        && v.wheelbase < v.length
        && v.start_pose.is_finite()
        && v.goal_pose.is_finite()
}

fn validate_vehicle(v: &VehicleSpec, r: &mut ValidationReport) {
    let id = v.id;
    if !finite_pos(v.length) {
        r.push(format!("vehicle {id}: length must be > 0"));
    }
    if !finite_pos(v.width) {
        r.push(format!("vehicle {id}: width must be > 0"));
    }
    if !(finite_pos(v.wheelbase) && v.wheelbase < v.length) {
        r.push(format!("vehicle {id}: wheelbase must satisfy 0 < wheelbase < length"));
    }
    if !v.start_pose.is_finite() || !v.goal_pose.is_finite() {
        r.push(format!("vehicle {id}: non-finite start or goal pose"));
    }
    if !finite_pos(v.v_ref) {
        r.push(format!("vehicle {id}: v_ref must be > 0"));
    }
    if !finite_nonneg(v.priority) {
        r.push(format!("vehicle {id}: priority must be >= 0"));
    }
    if !(v.delta_max.is_finite() && v.delta_max > 0.0 && v.delta_max < FRAC_PI_2) {
        r.push(format!("vehicle {id}: delta_max must lie in (0, pi/2)"));
    }
    if !finite_pos(v.a_acc_max) {
        r.push(format!("vehicle {id}: a_acc_max must be > 0"));
    }
    if !finite_pos(v.a_dec_max) {
        r.push(format!("vehicle {id}: a_dec_max must be > 0"));
    }
    if !finite_pos(v.gamma_s_plus) {
        r.push(format!("vehicle {id}: gamma_s_plus must be > 0"));
    }
    if !finite_nonneg(v.gamma_s_minus) {
        r.push(format!("vehicle {id}: gamma_s_minus must be >= 0"));
    }
    let init = v.initial;
    if init.v0.is_some_and(|x| !x.is_finite()) || init.a0.is_some_and(|x| !x.is_finite()) {
        r.push(format!("vehicle {id}: non-finite initial state"));
    }
    if let Some(d) = init.delta0 {
        if !(d.is_finite() && d.abs() <= v.delta_max) {
            r.push(format!("vehicle {id}: initial steering outside [-delta_max, delta_max]"));
        }
    }
    if let Some(a) = init.a0 {
        if a.is_finite() && (a > v.a_acc_max || a < -v.a_dec_max) {
            r.push(format!("vehicle {id}: initial acceleration outside bounds"));
        }
    }
}

fn validate_config(c: &PlannerConfig, r: &mut ValidationReport) {
    let weights = [
        ("w_area", c.w_area),
        ("w_ref", c.w_ref),
        ("w_kappa", c.w_kappa),
        ("w_beta", c.w_beta),
        ("w_j", c.w_j),
        ("w_px", c.w_px),
        ("w_py", c.w_py),
    ];
    for (name, w) in weights {
        if !finite_nonneg(w) {
            r.push(format!("config: weight {name} must be >= 0"));
        }
    }
    let thresholds = [
        ("gamma_x_v2v", c.gamma_x_v2v),
        ("gamma_y_v2v", c.gamma_y_v2v),
        ("r_x_v2o", c.r_x_v2o),
        ("r_y_v2o", c.r_y_v2o),
        ("eps_move", c.eps_move),
    ];
    for (name, t) in thresholds {
        if !finite_nonneg(t) {
            r.push(format!("config: threshold {name} must be >= 0"));
        }
    }
    if !(c.alpha_x.is_finite() && c.alpha_x >= 1.0) || !(c.alpha_y.is_finite() && c.alpha_y >= 1.0) {
        r.push("config: relaxation factor < 1");
    }
    if !finite_pos(c.big_m) {
        r.push("config: big_m must be > 0");
    }
    if !finite_pos(c.time_unit) {
        r.push("config: time_unit must be > 0");
    }
    if !finite_pos(c.dt) {
        r.push("config: dt must be > 0");
    }
    if finite_pos(c.time_unit) && finite_pos(c.dt) {
        let ratio = c.time_unit / c.dt;
        if ratio < 1.0 - 1e-9 || (ratio - ratio.round()).abs() > 1e-6 {
            r.push("config: time_unit is not an integer multiple of dt");
        }
    }
    if c.node_budget == 0 {
        r.push("config: node_budget must be > 0");
    }
    if !finite_pos(c.time_budget) {
        r.push("config: time_budget must be > 0");
    }
}
