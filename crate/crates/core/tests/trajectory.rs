mod common;

use common::{corridor, straight_corridor, vehicle};
use istc_core::error::TrajectoryError;
use istc_core::geometry::Aabb;
use istc_core::scenario::PlannerConfig;
use istc_core::trajectory::{
    car_corners, integrate_dynamics, solve_trajectory, ControlInput, PivotTarget, TrajectoryNlp, TrajectoryOptions, VehicleState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, PI};

fn st(x: f64, y: f64, theta: f64, delta: f64, v: f64, a: f64) -> VehicleState {
    VehicleState { x, y, theta, delta, v, a }
}

#[test]
fn dynamics_examples() {
    let n = integrate_dynamics(&st(0.0, 0.0, 0.0, 0.0, 5.0, 0.0), &ControlInput::default(), 0.1, 2.7).unwrap();
    assert_eq!(n, st(0.5, 0.0, 0.0, 0.0, 5.0, 0.0));

    let u = ControlInput { beta: 0.1, jerk: 2.0 };
    let n = integrate_dynamics(&VehicleState::default(), &u, 0.1, 2.7).unwrap();
    assert!((n.delta - 0.01).abs() < 1e-15 && (n.a - 0.2).abs() < 1e-15);
    assert_eq!((n.x, n.y, n.theta, n.v), (0.0, 0.0, 0.0, 0.0));

    let n = integrate_dynamics(&st(0.0, 0.0, FRAC_PI_2, 0.2, 5.0, 0.0), &ControlInput::default(), 0.1, 2.7).unwrap();
    assert!(n.x.abs() < 1e-12);
    assert!((n.y - 0.5).abs() < 1e-12);
    let expected = FRAC_PI_2 + 5.0 * 0.2f64.tan() / 2.7 * 0.1;
    assert!((n.theta - expected).abs() < 1e-15);
    assert!((n.theta - 1.60834).abs() < 1e-5);
}

#[test]
fn singular_steering_is_rejected() {
    for d in [FRAC_PI_2, -FRAC_PI_2, 2.0] {
        let r = integrate_dynamics(&st(0.0, 0.0, 0.0, d, 1.0, 0.0), &ControlInput::default(), 0.1, 2.7);
        assert!(matches!(r, Err(TrajectoryError::SingularSteering { .. })), "{d}");
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    v
}

#[test]
fn corners_follow_rear_axle_convention() {
    let v = vehicle(1, 0.0, 0.0, 0.0, 5.0);
    let c = car_corners(&VehicleState::default(), &v);
    let close = |a: Vec<f64>, b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
    assert!(close(sorted(c.iter().map(|p| p.0).collect()), &[-0.65, 3.35]));
    assert!(close(sorted(c.iter().map(|p| p.1).collect()), &[-1.0, 1.0]));

    let r = car_corners(&st(0.0, 0.0, FRAC_PI_2, 0.0, 0.0, 0.0), &v);
    for (p, q) in c.iter().zip(&r) {
        assert!((q.0 + p.1).abs() < 1e-12 && (q.1 - p.0).abs() < 1e-12);
    }
    let r = car_corners(&st(0.0, 0.0, PI, 0.0, 0.0, 0.0), &v);
    for (p, q) in c.iter().zip(&r) {
        assert!((q.0 + p.0).abs() < 1e-12 && (q.1 + p.1).abs() < 1e-12);
    }
}

fn stationary_nlp(cfg: &PlannerConfig, horizon: usize) -> TrajectoryNlp {
    let mut v = vehicle(1, 0.0, 0.0, 0.0, 5.0);
    v.initial.v0 = Some(0.0);
    let boxes = vec![Aabb::new(-5.0, 5.0, -5.0, 5.0); horizon + 1];
    let c = corridor(1, &boxes, Some(&vec![(0.0, 0.0); horizon + 1]));
    TrajectoryNlp::new(&c, &v, cfg).unwrap()
}

#[test]
fn cost_vanishes_when_pivots_match_the_rollout() {
    let nlp = stationary_nlp(&PlannerConfig::default(), 3);
    let c = nlp.cost(&vec![0.0; nlp.dimension()]).unwrap();
    assert_eq!(c.total(), 0.0);
}

#[test]
fn single_step_comfort_cost() {
    let cfg = PlannerConfig {
        w_kappa: 0.0,
        w_beta: 100.0,
        w_j: 0.0,
        w_px: 0.0,
        w_py: 0.0,
        time_unit: 0.1,
        dt: 0.1,
        ..PlannerConfig::default()
    };
    let nlp = stationary_nlp(&cfg, 1);
    assert_eq!(nlp.dimension(), 2);
    let c = nlp.cost(&[1.0, 0.0]).unwrap();
    assert!((c.total() - 100.0).abs() < 1e-12);
    assert!((c.comfort - 100.0).abs() < 1e-12);
}

/// Central-difference check of the backward-sweep gradient on random instances.
#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    for case in 0..120 {
        let horizon = rng.gen_range(1..=4);
        let cfg = PlannerConfig {
            w_kappa: rng.gen_range(0.0..5.0),
            w_beta: rng.gen_range(0.0..100.0),
            w_j: rng.gen_range(0.0..5.0),
            w_px: rng.gen_range(0.0..2.0),
            w_py: rng.gen_range(0.0..2.0),
            ..PlannerConfig::default()
        };
        let mut v = vehicle(1, rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-PI..PI), 5.0);
        v.initial.v0 = Some(rng.gen_range(0.0..8.0));
        v.initial.delta0 = Some(rng.gen_range(-0.3..0.3));
        v.initial.a0 = Some(rng.gen_range(-2.0..2.0));
        let boxes: Vec<Aabb> = (0..=horizon).map(|_| Aabb::new(-30.0, 30.0, -30.0, 30.0)).collect();
        let pivots: Vec<(f64, f64)> = (0..=horizon).map(|_| (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0))).collect();
        let nlp = TrajectoryNlp::new(&corridor(1, &boxes, Some(&pivots)), &v, &cfg).unwrap();
        let u: Vec<f64> = (0..nlp.dimension())
            .map(|i| if i % 2 == 0 { rng.gen_range(-0.4..0.4) } else { rng.gen_range(-3.0..3.0) })
            .collect();
        let (f, g) = nlp.cost_and_gradient(&u).unwrap();
        assert!((f - nlp.cost(&u).unwrap().total()).abs() <= 1e-12 * f.abs().max(1.0));
        let h = 1e-6;
        for i in 0..u.len() {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (nlp.cost(&up).unwrap().total() - nlp.cost(&dn).unwrap().total()) / (2.0 * h);
            let rel = (g[i] - fd).abs() / fd.abs().max(g[i].abs()).max(1.0);
            worst = worst.max(rel);
            assert!(rel <= 1e-4, "case {case}, component {i}: {} vs {fd}", g[i]);
        }
    }
    println!("worst relative gradient error {worst:e}");
}

#[test]
fn straight_corridor_gives_straight_trajectory() {
    let cfg = PlannerConfig::default();
    let horizon = 5;
    let c = straight_corridor(1, 0.0, 5.0, horizon, 3.0);
    let v = vehicle(1, 0.0, 0.0, 0.0, 5.0);
    let t = solve_trajectory(&c, &v, &cfg, &TrajectoryOptions::default()).unwrap();
    let max_kappa = t.curvature().iter().fold(0.0f64, |m, k| m.max(k.abs()));
    let end = t.states.last().unwrap();
    assert!(max_kappa <= 1e-3);
    assert!((end.x - 25.0).hypot(end.y) <= 0.5, "terminal {:?}", (end.x, end.y));
    assert_eq!(t.states.len(), horizon * 10 + 1);
    assert!(t.dynamics_residual() <= 1e-9);
    assert!(t.grad_norm <= 1e-4);
    let c = t.cost;
    assert!((c.total() - (c.smoothness + c.comfort + c.pivotal)).abs() <= 1e-10);
}

#[test]
fn unit_pivot_target_holds_each_pivot_for_a_whole_unit() {
    let cfg = PlannerConfig::default();
    let c = straight_corridor(1, 0.0, 5.0, 3, 3.0);
    let v = vehicle(1, 0.0, 0.0, 0.0, 5.0);
    let unit = TrajectoryNlp::with_target(&c, &v, &cfg, PivotTarget::Unit).unwrap();
    let lin = TrajectoryNlp::new(&c, &v, &cfg).unwrap();
    for t in 0..=30 {
        let k = t / 10;
        assert_eq!(unit.pivots[t], c.cubes[k].pivot);
        assert!((lin.pivots[t].0 - 0.5 * t as f64).abs() <= 1e-12);
    }
    // Coasting tracks the interpolated targets exactly.
    let u = vec![0.0; lin.dimension()];
    assert!(lin.cost(&u).unwrap().pivotal <= 1e-18);
    assert!(unit.cost(&u).unwrap().pivotal > 1.0);
}

#[test]
fn corridor_narrower_than_the_car_is_infeasible() {
    let cfg = PlannerConfig::default();
    let mut c = straight_corridor(1, 0.0, 5.0, 4, 3.0);
    // Cube 2 squeezed to 1.5 m across: the 2 m wide car cannot fit.
    let b = Aabb::new(2.0, 20.0, -0.75, 0.75);
    c.cubes[2] = istc_core::istc::CorridorCube::from_bounds(2, (10.0, 0.0), &b);
    let v = vehicle(1, 0.0, 0.0, 0.0, 5.0);
    match solve_trajectory(&c, &v, &cfg, &TrajectoryOptions::default()) {
        Err(TrajectoryError::Infeasible { max_violation, step }) => {
            assert!(max_violation > 1e-6);
            assert!((20..=30).contains(&step), "step {step}");
        }
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn cumulative_control_bounds_match_state_bounds() {
    let cfg = PlannerConfig::default();
    let c = straight_corridor(1, 0.0, 5.0, 3, 3.0);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut outside_steer, mut outside_acc) = (0, 0);
    for _ in 0..50 {
        let mut v = vehicle(1, 0.0, 0.0, 0.0, 5.0);
        v.initial.delta0 = Some(rng.gen_range(-0.3..0.3));
        v.initial.a0 = Some(rng.gen_range(-2.0..2.0));
        let nlp = TrajectoryNlp::new(&c, &v, &cfg).unwrap();
        let u: Vec<f64> = (0..nlp.dimension())
            .map(|i| if i % 2 == 0 { rng.gen_range(-1.0..1.0) } else { rng.gen_range(-10.0..10.0) })
            .collect();
        let states = nlp.rollout(&u).unwrap();
        let (mut sum_beta, mut sum_j) = (0.0, 0.0);
        for (t, s) in states.iter().enumerate().skip(1) {
            sum_beta += u[2 * (t - 1)];
            sum_j += u[2 * (t - 1) + 1];
            let steer_sum = (v.delta0() + cfg.dt * sum_beta).abs() <= v.delta_max;
            let acc = v.a0() + cfg.dt * sum_j;
            let acc_sum = acc <= v.a_acc_max && acc >= -v.a_dec_max;
            // Compare away from the boundary where rounding could differ.
            if ((v.delta0() + cfg.dt * sum_beta).abs() - v.delta_max).abs() > 1e-9 {
                assert_eq!(steer_sum, s.delta.abs() <= v.delta_max, "t={t}");
            }
            if (acc - v.a_acc_max).abs() > 1e-9 && (acc + v.a_dec_max).abs() > 1e-9 {
                assert_eq!(acc_sum, s.a <= v.a_acc_max && s.a >= -v.a_dec_max, "t={t}");
            }
            outside_steer += usize::from(!steer_sum);
            outside_acc += usize::from(!acc_sum);
        }
    }
    assert!(outside_steer > 0 && outside_acc > 0);
}

#[test]
fn reported_cost_is_the_sum_of_its_parts() {
    let cfg = PlannerConfig::default();
    let c = straight_corridor(1, 0.0, 5.0, 3, 3.0);
    let v = vehicle(1, 0.0, 0.0, 0.0, 5.0);
    let nlp = TrajectoryNlp::new(&c, &v, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let u: Vec<f64> = (0..nlp.dimension()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let b = nlp.cost(&u).unwrap();
        let (f, _) = nlp.cost_and_gradient(&u).unwrap();
        assert!((b.total() - (b.smoothness + b.comfort + b.pivotal)).abs() <= 1e-10);
        assert!((f - b.total()).abs() <= 1e-10 * f.abs().max(1.0));
    }
}
