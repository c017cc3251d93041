//! End-to-end planning run: validation, guidance, corridors, trajectories,
//! report. Output files are written as soon as each stage finishes so a
//! failing run keeps what it produced.

use crate::error::PipelineError;
use crate::guidance::{plan_guidance, AstarOptions, GuidancePath, GuidanceTrajectory};
use crate::istc::{solve_istc, write_corridors, IstcOptions, IstcSet};
use crate::metrics::{summarize, PlanReport, Timings};
use crate::plot;
use crate::scenario::{validate_scenario, Scenario};
use crate::trajectory::{solve_trajectory, Trajectory, TrajectoryOptions};
use rayon::prelude::*;
use std::path::Path;
use std::time::Instant;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PipelineOptions {
    pub deterministic: bool,
    pub layer1_only: bool,
}

#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub paths: Vec<GuidancePath>,
    pub guidance: Vec<GuidanceTrajectory>,
    pub istc: IstcSet,
    pub trajectories: Vec<Trajectory>,
    pub report: Option<PlanReport>,
    pub timings: Timings,
}

fn write(dir: Option<&Path>, name: &str, content: &str) -> Result<(), PipelineError> {
    if let Some(d) = dir {
        std::fs::write(d.join(name), content)?;
    }
    Ok(())
}

/// Runs the planner on `s`. When `out_dir` is given, every artifact is
/// written there.
pub fn run_pipeline(s: &Scenario, opts: &PipelineOptions, out_dir: Option<&Path>) -> Result<PlanOutput, PipelineError> {
    if let Some(d) = out_dir {
        std::fs::create_dir_all(d)?;
    }
    let report = validate_scenario(s);
    if !report.is_empty() {
        return Err(PipelineError::Validation(report));
    }

    let (paths, guidance) =
        plan_guidance(s, &AstarOptions::default()).map_err(|(vehicle, source)| PipelineError::Guidance { vehicle, source })?;
    for g in &guidance {
        write(out_dir, &format!("guidance_{}.csv", g.vehicle_id), &g.to_csv())?;
    }

    let t1 = Instant::now();
    let istc = solve_istc(s, &guidance, &IstcOptions::from_config(s, opts.deterministic))?;
    let mut timings = Timings { layer1: t1.elapsed().as_secs_f64(), layer2: Vec::new() };
    write(out_dir, "corridors.txt", &write_corridors(&istc))?;
    for c in &istc.corridors {
        write(out_dir, &format!("plot_corridor_{}.svg", c.vehicle_id), &plot::corridor_svg(s, c))?;
    }
    if opts.layer1_only {
        return Ok(PlanOutput { paths, guidance, istc, trajectories: Vec::new(), report: None, timings });
    }

    let topts = TrajectoryOptions::default();
    let solved: Vec<_> = istc
        .corridors
        .par_iter()
        .map(|c| {
            let v = s.vehicle(c.vehicle_id).expect("corridor vehicle in scenario");
            let t = Instant::now();
            let r = solve_trajectory(c, v, &s.config, &topts);
            (c.vehicle_id, r, t.elapsed().as_secs_f64())
        })
        .collect();
    let mut trajectories = Vec::with_capacity(solved.len());
    let mut failure = None;
    for (vehicle, r, secs) in solved {
        timings.layer2.push(secs);
        match r {
            Ok(t) => {
                write(out_dir, &format!("trajectory_{vehicle}.csv"), &t.to_csv())?;
                trajectories.push(t);
            }
            Err(source) => {
                failure.get_or_insert(PipelineError::Trajectory { vehicle, source });
            }
        }
    }
    if let Some(e) = failure {
        return Err(e);
    }

    let lengths: Vec<f64> = paths.iter().map(|p| p.length()).collect();
    let shown = (!opts.deterministic).then(|| timings.clone());
    let report = summarize(s, &istc, &trajectories, &lengths, shown)?;
    write(out_dir, "report.txt", &report.to_text())?;
    write(out_dir, "summary.json", &report.to_json())?;
    write(out_dir, "plot_xy.svg", &plot::xy_svg(s, &paths, &trajectories))?;
    write(out_dir, "plot_va.svg", &plot::va_svg(&trajectories))?;
    Ok(PlanOutput { paths, guidance, istc, trajectories, report: Some(report), timings })
}
