#![allow(dead_code)]

pub mod fixtures;
pub mod oracles;

use istc_core::geometry::{Aabb, Pose};
use istc_core::istc::{Corridor, CorridorCube};
use istc_core::presets::standard_vehicle;
use istc_core::scenario::{OccupancyGrid, PlannerConfig, Scenario, VehicleSpec};

/// Corridor with the given cubes; pivots at the cube centres unless given.
pub fn corridor(id: u32, boxes: &[Aabb], pivots: Option<&[(f64, f64)]>) -> Corridor {
    let cubes = boxes
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let p = pivots.map_or(((b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0), |p| p[k]);
            CorridorCube::from_bounds(k, p, b)
        })
        .collect();
    let refs = boxes.iter().map(|b| ((b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0, 0.0)).collect();
    Corridor { vehicle_id: id, cubes, refs }
}

/// Eastbound lane along y = 0: cube `k` spans the stretch the car covers
/// around `x0 + v k` with room to spare.
pub fn straight_corridor(id: u32, x0: f64, v: f64, horizon: usize, half_width: f64) -> Corridor {
    let boxes: Vec<Aabb> = (0..=horizon)
        .map(|k| {
            let c = x0 + v * k as f64;
            Aabb::new(c - 8.0, c + 10.0, -half_width, half_width)
        })
        .collect();
    let pivots: Vec<(f64, f64)> = (0..=horizon).map(|k| (x0 + v * k as f64, 0.0)).collect();
    corridor(id, &boxes, Some(&pivots))
}

pub fn vehicle(id: u32, x: f64, y: f64, theta: f64, v: f64) -> VehicleSpec {
    standard_vehicle(id, Pose::new(x, y, theta), Pose::new(x, y, theta), v, 0.2)
}

/// Obstacle-free scenario over `extent` with the given vehicles.
pub fn open_scenario(extent: Aabb, vehicles: Vec<VehicleSpec>) -> Scenario {
    let res = 0.5;
    let w = (extent.width() / res).round() as usize;
    let h = (extent.height() / res).round() as usize;
    Scenario {
        name: "test".into(),
        config: PlannerConfig::default(),
        grid: OccupancyGrid::new((extent.x_min, extent.y_min), res, w, h),
        vehicles,
        obstacles: Vec::new(),
        guidance: Vec::new(),
    }
}
