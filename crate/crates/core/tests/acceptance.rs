//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use common::fixtures::{guidance_for, random_lanes, witness};
use common::oracles::{brute_force_qp, enumerate_miqp, random_miqp, random_qp, DenseQp};
use common::{corridor, vehicle};
use istc_core::geometry::Aabb;
use istc_core::istc::check_istc;
use istc_core::miqp::{solve_miqp, solve_qp, MiqpOptions, MiqpStatus, QpOptions, QpStatus};
use istc_core::pipeline::{run_pipeline, PipelineOptions, PlanOutput};
use istc_core::presets::{self, PriorityGroup};
use istc_core::scenario::{PlannerConfig, Scenario};
use istc_core::trajectory::TrajectoryNlp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

const QP_CASES: usize = 200;
const QP_TOL: f64 = 1e-6;
const QP_TIME: Duration = Duration::from_secs(5);
const MIQP_CASES: usize = 100;
const MIQP_REL_TOL: f64 = 1e-5;
const MIQP_TIME: Duration = Duration::from_secs(60);
const LAYER1_LIMIT: f64 = 30.0;
const LAYER2_LIMIT: f64 = 10.0;
const DENSE_LIMIT: f64 = 120.0;
const DENSE_LENGTH_RATIO: f64 = 1.4;
const GRADIENT_CASES: usize = 100;
const GRADIENT_TOL: f64 = 1e-4;
const GRADIENT_STEP: f64 = 1e-6;
const DYNAMICS_TOL: f64 = 1e-9;
const WITNESS_CASES: usize = 50;

struct Board {
    failed: usize,
}

impl Board {
    fn check(&mut self, name: &str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed += 1;
        }
    }
}

fn qp_oracle(b: &mut Board) {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut spent, mut worst, mut bad) = (Duration::ZERO, 0.0f64, 0);
    for _ in 0..QP_CASES {
        let n = rng.gen_range(1..=10);
        let m = rng.gen_range(0..=12);
        let p = random_qp(&mut rng, n, m, 15 - m);
        let t = Instant::now();
        let s = solve_qp(&p, &QpOptions::default());
        spent += t.elapsed();
        let oracle = brute_force_qp(&DenseQp::from_sparse(&p));
        match (s, oracle) {
            (Ok(s), Some((_, obj))) if s.status == QpStatus::Optimal => {
                let err = (s.objective - obj).abs() / (1.0 + obj.abs());
                worst = worst.max(err);
                bad += usize::from(err > QP_TOL);
            }
            _ => bad += 1,
        }
    }
    b.check(
        "qp oracle",
        bad == 0 && spent < QP_TIME,
        format!("{QP_CASES} QPs, {bad} mismatches, worst objective error {worst:.1e} (tol {QP_TOL:e}), {:.2} s (limit {} s)", spent.as_secs_f64(), QP_TIME.as_secs()),
    );
}

fn miqp_oracle(b: &mut Board) {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let (mut spent, mut worst, mut bad) = (Duration::ZERO, 0.0f64, 0);
    for _ in 0..MIQP_CASES {
        let nc = rng.gen_range(1..=4);
        let nb = rng.gen_range(1..=8);
        let m = rng.gen_range(1..=6);
        let p = random_miqp(&mut rng, nc, nb, m);
        let t = Instant::now();
        let s = solve_miqp(&p, &MiqpOptions::default());
        spent += t.elapsed();
        match (s, enumerate_miqp(&p)) {
            (Ok(s), Some((_, obj))) if s.status == MiqpStatus::Optimal => {
                let rel = (s.objective - obj).abs() / obj.abs().max(1.0);
                worst = worst.max(rel);
                bad += usize::from(rel > MIQP_REL_TOL);
            }
            (Ok(s), None) if s.status == MiqpStatus::Infeasible => {}
            _ => bad += 1,
        }
    }
    b.check(
        "miqp oracle",
        bad == 0 && spent < MIQP_TIME,
        format!("{MIQP_CASES} MIQPs, {bad} mismatches, worst relative gap {worst:.1e} (tol {MIQP_REL_TOL:e}), {:.2} s (limit {} s)", spent.as_secs_f64(), MIQP_TIME.as_secs()),
    );
}

fn plan(s: &Scenario, deterministic: bool, out: Option<&Path>) -> Result<(PlanOutput, f64), String> {
    let t = Instant::now();
    let o = run_pipeline(s, &PipelineOptions { deterministic, layer1_only: false }, out).map_err(|e| e.to_string())?;
    Ok((o, t.elapsed().as_secs_f64()))
}

fn clean(o: &PlanOutput, s: &Scenario) -> (bool, String) {
    let r = o.report.as_ref().unwrap();
    let istc = check_istc(&o.istc, s);
    let ok = r.passed() && istc.is_empty() && o.trajectories.len() == s.vehicles.len();
    (ok, format!("{} violations, {} corridor issues", r.violations.len(), istc.issues.len()))
}

fn intersection(b: &mut Board, residual: &mut f64) {
    let mut dev = Vec::new();
    for (name, g) in [("group I", PriorityGroup::I), ("group II", PriorityGroup::II)] {
        let s = presets::intersection(g);
        match plan(&s, false, None) {
            Ok((o, _)) => {
                let (ok, d) = clean(&o, &s);
                b.check(&format!("intersection {name} feasible"), ok, d);
                let l2 = o.timings.layer2.iter().copied().fold(0.0, f64::max);
                b.check(
                    &format!("intersection {name} timing"),
                    o.timings.layer1 <= LAYER1_LIMIT && l2 <= LAYER2_LIMIT,
                    format!("layer 1 {:.2} s (limit {LAYER1_LIMIT}), slowest layer 2 {l2:.2} s (limit {LAYER2_LIMIT})", o.timings.layer1),
                );
                let r = o.report.unwrap();
                dev.push([r.vehicle(1).unwrap().pivot_deviation, r.vehicle(3).unwrap().pivot_deviation]);
                for t in &o.trajectories {
                    *residual = residual.max(t.dynamics_residual());
                }
            }
            Err(e) => {
                b.check(&format!("intersection {name} feasible"), false, e);
                dev.push([f64::NAN; 2]);
            }
        }
    }
    b.check(
        "intersection priority: vehicle 3 deviation group I < group II",
        dev[0][1] < dev[1][1],
        format!("{:.4} vs {:.4}", dev[0][1], dev[1][1]),
    );
    b.check(
        "intersection priority: vehicle 1 deviation group II < group I",
        dev[1][0] < dev[0][0],
        format!("{:.4} vs {:.4}", dev[1][0], dev[0][0]),
    );
}

fn dense(b: &mut Board, residual: &mut f64) {
    for obstacles in [false, true] {
        let s = presets::dense(obstacles);
        let name = &s.name;
        match plan(&s, false, None) {
            Ok((o, secs)) => {
                let (ok, d) = clean(&o, &s);
                b.check(&format!("{name} feasible"), ok && secs <= DENSE_LIMIT, format!("{d}, {secs:.1} s (limit {DENSE_LIMIT} s)"));
                let r = o.report.as_ref().unwrap();
                b.check(
                    &format!("{name} length"),
                    r.l_total <= DENSE_LENGTH_RATIO * r.guidance_total,
                    format!("L_total {:.2} m vs {DENSE_LENGTH_RATIO} x guidance {:.2} m", r.l_total, r.guidance_total),
                );
                for t in &o.trajectories {
                    *residual = residual.max(t.dynamics_residual());
                }
            }
            Err(e) => b.check(&format!("{name} feasible"), false, e),
        }
    }
}

fn gradients(b: &mut Board) {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst: f64 = 0.0;
    let mut components = 0;
    for _ in 0..GRADIENT_CASES {
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
        let boxes: Vec<Aabb> = (0..=horizon).map(|_| Aabb::new(-30.0, 30.0, -30.0, 30.0)).collect();
        let pivots: Vec<(f64, f64)> = (0..=horizon).map(|_| (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0))).collect();
        let nlp = TrajectoryNlp::new(&corridor(1, &boxes, Some(&pivots)), &v, &cfg).unwrap();
        let u: Vec<f64> = (0..nlp.dimension())
            .map(|i| if i % 2 == 0 { rng.gen_range(-0.4..0.4) } else { rng.gen_range(-3.0..3.0) })
            .collect();
        let (_, g) = nlp.cost_and_gradient(&u).unwrap();
        let f = |x: &[f64]| nlp.cost(x).unwrap().total();
        for i in 0..u.len() {
            let (mut up, mut dn) = (u.clone(), u.clone());
            up[i] += GRADIENT_STEP;
            dn[i] -= GRADIENT_STEP;
            let fd = (f(&up) - f(&dn)) / (2.0 * GRADIENT_STEP);
            worst = worst.max((g[i] - fd).abs() / fd.abs().max(g[i].abs()).max(1.0));
            components += 1;
        }
    }
    b.check(
        "gradient check",
        worst <= GRADIENT_TOL,
        format!("{GRADIENT_CASES} instances, {components} components, worst |g - fd| / max(|fd|, |g|, 1) = {worst:.1e} (tol {GRADIENT_TOL:e})"),
    );
}

fn witnesses(b: &mut Board) {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut rejected = 0;
    for _ in 0..WITNESS_CASES {
        let s = random_lanes(&mut rng);
        let w = witness(&s, &guidance_for(&s));
        rejected += usize::from(!check_istc(&w, &s).is_empty());
    }
    b.check("corridor re-check on witnesses", rejected == 0, format!("{WITNESS_CASES} scenarios, {rejected} rejected"));
}

fn determinism(b: &mut Board) {
    let s = presets::intersection(PriorityGroup::I);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        if let Err(e) = plan(&s, true, Some(d.path())) {
            b.check("deterministic output", false, e);
            return;
        }
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let differing: Vec<String> = names
        .iter()
        .filter(|n| std::fs::read(dirs[0].path().join(n)).ok() != std::fs::read(dirs[1].path().join(n)).ok())
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    b.check(
        "deterministic output",
        differing.is_empty(),
        format!("{} files compared, differing: {differing:?}", names.len()),
    );
}

fn main() {
    let mut b = Board { failed: 0 };
    qp_oracle(&mut b);
    miqp_oracle(&mut b);
    let mut residual: f64 = 0.0;
    intersection(&mut b, &mut residual);
    dense(&mut b, &mut residual);
    gradients(&mut b);
    b.check("dynamics residual", residual <= DYNAMICS_TOL, format!("worst {residual:.1e} over all planned trajectories (tol {DYNAMICS_TOL:e})"));
    witnesses(&mut b);
    determinism(&mut b);
    if b.failed > 0 {
        println!("{} criteria failed", b.failed);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
