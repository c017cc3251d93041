//! Corridor-layer fixtures: straight guidance and separated-lane scenarios
//! with a hand-built feasible corridor set.

use super::{open_scenario, vehicle};
use istc_core::geometry::{Aabb, Pose};
use istc_core::guidance::{assign_constant_speed, GuidancePath, GuidanceTrajectory};
use istc_core::istc::{Corridor, CorridorCube, IstcSet, SolveStats};
use istc_core::scenario::{Scenario, VehicleSpec};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Straight guidance from the vehicle's start to its goal.
pub fn straight_guidance(v: &VehicleSpec, time_unit: f64) -> GuidanceTrajectory {
    let (a, b) = (v.start_pose, v.goal_pose);
    let n = ((a.distance(&b) / 0.25).ceil() as usize).max(1);
    let poses = (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            Pose::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.theta)
        })
        .collect();
    assign_constant_speed(&GuidancePath::from_poses(poses), v.id, v.v_ref, time_unit).unwrap()
}

pub fn guidance_for(s: &Scenario) -> Vec<GuidanceTrajectory> {
    let mut g: Vec<_> = s.vehicles.iter().map(|v| straight_guidance(v, s.config.time_unit)).collect();
    let k = g.iter().map(|t| t.horizon()).max().unwrap();
    g.iter_mut().for_each(|t| t.extend_to(k));
    g
}

/// Vehicles on parallel lanes along one axis, each lane at least
/// `gamma_car + gamma_v2v` from the next, random speeds and lengths.
pub fn random_lanes(rng: &mut ChaCha8Rng) -> Scenario {
    let n = rng.gen_range(2..=3);
    let vertical = rng.gen_bool(0.5);
    let mut offset = 0.0;
    let mut vs = Vec::new();
    for i in 0..n {
        let east = rng.gen_bool(0.5);
        let along0 = rng.gen_range(0.0..10.0);
        let len = rng.gen_range(8.0..30.0);
        let (a0, a1, th) = if east { (along0, along0 + len, 0.0) } else { (along0 + len, along0, std::f64::consts::PI) };
        let speed = rng.gen_range(3.0..6.0);
        let (sx, sy, gx, gy, th) = if vertical {
            (offset, a0, offset, a1, th + std::f64::consts::FRAC_PI_2)
        } else {
            (a0, offset, a1, offset, th)
        };
        let mut v = vehicle(i + 1, sx, sy, th, speed);
        v.goal_pose = Pose::new(gx, gy, th);
        v.priority = rng.gen_range(0.01..1.0);
        vs.push(v);
        offset += 4.47214 + 0.3 + rng.gen_range(0.05..3.0);
    }
    open_scenario(Aabb::new(-20.0, 70.0, -20.0, 70.0), vs)
}

/// Cube k is the box hull of the car-size squares around the car centre at
/// samples k - 1, k and k + 1, pivot at the guidance point.
pub fn witness(s: &Scenario, g: &[GuidanceTrajectory]) -> IstcSet {
    let k_max = g[0].horizon();
    let corridors: Vec<Corridor> = s
        .vehicles
        .iter()
        .zip(g)
        .map(|(v, t)| {
            let half = 0.5 * v.gamma_car();
            let mid = 0.5 * (v.front_extent() - v.rear_overhang());
            let square = |k: usize| {
                let p = t.samples[k];
                let (cx, cy) = (p.x + mid * p.theta.cos(), p.y + mid * p.theta.sin());
                Aabb::new(cx - half, cx + half, cy - half, cy + half)
            };
            let cubes = (0..=k_max)
                .map(|k| {
                    let lo = k.saturating_sub(1);
                    let hi = (k + 1).min(k_max);
                    let boxes: Vec<Aabb> = (lo..=hi).map(square).collect();
                    let pts: Vec<(f64, f64)> = boxes.iter().flat_map(|b| b.corners()).collect();
                    let p = t.samples[k];
                    CorridorCube::from_bounds(k, (p.x, p.y), &Aabb::from_points(&pts))
                })
                .collect();
            let refs = (0..=k_max).map(|k| (t.samples[k].x, t.samples[k].y, t.tangents[k])).collect();
            Corridor { vehicle_id: v.id, cubes, refs }
        })
        .collect();
    IstcSet { corridors, horizon: k_max, objective: 0.0, stats: SolveStats::default() }
}

