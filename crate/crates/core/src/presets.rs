//! Built-in scenarios: the four-way intersection with two priority groups and
//! the dense 50 m x 38 m map with and without central obstacles.

use crate::geometry::{Aabb, Pose};
use crate::scenario::{
    GuidanceOverride, InitialState, ObstacleBox, OccupancyGrid, PlannerConfig, Scenario, VehicleSpec,
};
use std::f64::consts::{FRAC_PI_2, PI};

/// 4 m x 2 m car with a 2.7 m wheelbase.
pub fn standard_vehicle(id: u32, start: Pose, goal: Pose, v_ref: f64, priority: f64) -> VehicleSpec {
    VehicleSpec {
        id,
        length: 4.0,
        width: 2.0,
        wheelbase: 2.7,
        start_pose: start,
        goal_pose: goal,
        v_ref,
        priority,
        delta_max: 0.6,
        a_acc_max: 3.0,
        a_dec_max: 6.0,
        gamma_s_plus: 10.0,
        gamma_s_minus: 5.0,
        initial: InitialState::default(),
    }
}

fn grid_with(extent: Aabb, resolution: f64, obstacles: &[ObstacleBox]) -> OccupancyGrid {
    let w = (extent.width() / resolution).round() as usize;
    let h = (extent.height() / resolution).round() as usize;
    let mut g = OccupancyGrid::new((extent.x_min, extent.y_min), resolution, w, h);
    for o in obstacles {
        g.rasterize(&o.base());
    }
    g
}

fn line(a: (f64, f64), b: (f64, f64), theta: f64, step: f64) -> Vec<Pose> {
    let d = (b.0 - a.0).hypot(b.1 - a.1);
    let n = (d / step).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            Pose::new(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), theta)
        })
        .collect()
}

/// Arc around `center` from angle `a0` to `a1` (polar angles, radians).
fn arc(center: (f64, f64), radius: f64, a0: f64, a1: f64, heading_offset: f64, step: f64) -> Vec<Pose> {
    let n = ((a1 - a0).abs() * radius / step).ceil().max(1.0) as usize;
    (0..=n)
        .map(|i| {
            let a = a0 + (a1 - a0) * i as f64 / n as f64;
            Pose::new(center.0 + radius * a.cos(), center.1 + radius * a.sin(), a + heading_offset)
        })
        .collect()
}

fn join(parts: Vec<Vec<Pose>>) -> Vec<Pose> {
    let mut out: Vec<Pose> = Vec::new();
    for p in parts {
        for q in p {
            if out.last().map_or(true, |l| l.distance(&q) > 1e-9) {
                out.push(q);
            }
        }
    }
    out
}

/// Priority groups for the intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorityGroup {
    I,
    II,
}

impl PriorityGroup {
    pub fn weights(self) -> [f64; 3] {
        match self {
            PriorityGroup::I => [0.20, 0.01, 0.50],
            PriorityGroup::II => [0.50, 0.40, 0.01],
        }
    }
}

/// Four-way intersection of two 10 m roads on a 50 m x 50 m map. Vehicle 1
/// drives east, vehicle 2 north, vehicle 3 comes from the east and turns left
/// to head south.
pub fn intersection(group: PriorityGroup) -> Scenario {
    let eta = group.weights();
    let half = 25.0;
    let road = 5.0;
    let obstacles: Vec<ObstacleBox> = [
        Aabb::new(-half, -road, -half, -road),
        Aabb::new(road, half, -half, -road),
        Aabb::new(-half, -road, road, half),
        Aabb::new(road, half, road, half),
    ]
    .into_iter()
    .enumerate()
    .map(|(i, b)| ObstacleBox::new_static(i as u32 + 1, b))
    .collect();
    let grid = grid_with(Aabb::new(-half, half, -half, half), 0.5, &obstacles);
    let v = 5.0;
    let lane = 2.5;
    let south = -FRAC_PI_2;
    let vehicles = vec![
        standard_vehicle(1, Pose::new(-20.0, -lane, 0.0), Pose::new(20.0, -lane, 0.0), v, eta[0]),
        standard_vehicle(2, Pose::new(lane, -20.0, FRAC_PI_2), Pose::new(lane, 20.0, FRAC_PI_2), v, eta[1]),
        standard_vehicle(3, Pose::new(20.0, lane, PI), Pose::new(-lane, -20.0, south), v, eta[2]),
    ];
    let guidance = vec![
        GuidanceOverride {
            vehicle_id: 1,
            poses: line((-20.0, -lane), (20.0, -lane), 0.0, 1.0),
        },
        GuidanceOverride {
            vehicle_id: 2,
            poses: line((lane, -20.0), (lane, 20.0), FRAC_PI_2, 1.0),
        },
        GuidanceOverride {
            vehicle_id: 3,
            poses: join(vec![
                line((20.0, lane), (lane, lane), PI, 1.0),
                arc((lane, -lane), 2.0 * lane, FRAC_PI_2, PI, FRAC_PI_2, 0.5),
                line((-lane, -lane), (-lane, -20.0), south, 1.0),
            ]),
        },
    ];
    let name = match group {
        PriorityGroup::I => "intersection_group_i",
        PriorityGroup::II => "intersection_group_ii",
    };
    Scenario {
        name: name.into(),
        config: PlannerConfig::default(),
        grid,
        vehicles,
        obstacles,
        guidance,
    }
}

/// 50 m x 38 m map with two crossing flows of two vehicles each. With
/// `obstacles`, three blocks occupy the middle of the map.
pub fn dense(obstacles: bool) -> Scenario {
    let extent = Aabb::new(0.0, 50.0, 0.0, 38.0);
    let obs: Vec<ObstacleBox> = if obstacles {
        vec![
            ObstacleBox::new_static(1, Aabb::new(21.0, 29.0, 15.0, 23.0)),
            ObstacleBox::new_static(2, Aabb::new(6.0, 10.0, 17.0, 21.0)),
            ObstacleBox::new_static(3, Aabb::new(40.0, 44.0, 17.0, 21.0)),
        ]
    } else {
        Vec::new()
    };
    let grid = grid_with(extent, 0.5, &obs);
    let v = 5.0;
    let vehicles = vec![
        standard_vehicle(1, Pose::new(4.0, 10.0, 0.0), Pose::new(44.0, 10.0, 0.0), v, 0.25),
        standard_vehicle(2, Pose::new(44.0, 28.0, PI), Pose::new(4.0, 28.0, PI), v, 0.25),
        standard_vehicle(3, Pose::new(15.0, 4.0, FRAC_PI_2), Pose::new(15.0, 32.0, FRAC_PI_2), v, 0.25),
        standard_vehicle(4, Pose::new(35.0, 32.0, -FRAC_PI_2), Pose::new(35.0, 4.0, -FRAC_PI_2), v, 0.25),
    ];
    Scenario {
        name: if obstacles { "dense_obstacles".into() } else { "dense_open".into() },
        // Node budget sized so the search stops well inside a minute.
        config: PlannerConfig { node_budget: 3000, ..PlannerConfig::default() },
        grid,
        vehicles,
        obstacles: obs,
        guidance: Vec::new(),
    }
}

/// Every named preset, in a stable order.
pub fn all() -> Vec<Scenario> {
    vec![
        intersection(PriorityGroup::I),
        intersection(PriorityGroup::II),
        dense(false),
        dense(true),
    ]
}
