//! Static SVG views of a plan: x-y overlay, per-vehicle corridor stacks and
//! speed/acceleration charts.

use crate::geometry::{Aabb, Pose};
use crate::guidance::GuidancePath;
use crate::istc::Corridor;
use crate::scenario::Scenario;
use crate::trajectory::Trajectory;
use std::fmt::Write;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

/// Maps world coordinates onto a canvas with y pointing up.
struct Frame {
    ext: Aabb,
    scale: f64,
    pad: f64,
}

impl Frame {
    fn new(ext: Aabb, width: f64) -> Self {
        let pad = 20.0;
        Frame { scale: (width - 2.0 * pad) / ext.width(), ext, pad }
    }

    fn width(&self) -> f64 {
        self.ext.width() * self.scale + 2.0 * self.pad
    }

    fn height(&self) -> f64 {
        self.ext.height() * self.scale + 2.0 * self.pad
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (self.pad + (x - self.ext.x_min) * self.scale, self.pad + (self.ext.y_max - y) * self.scale)
    }

    fn rect(&self, b: &Aabb, style: &str) -> String {
        let (x0, y0) = self.px(b.x_min, b.y_max);
        format!(
            "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{:.2}\" {style}/>\n",
            b.width() * self.scale,
            b.height() * self.scale
        )
    }

    fn polyline(&self, pts: impl Iterator<Item = (f64, f64)>, style: &str) -> String {
        let mut d = String::new();
        for (x, y) in pts {
            let (a, b) = self.px(x, y);
            let _ = write!(d, "{a:.2},{b:.2} ");
        }
        format!("<polyline points=\"{}\" fill=\"none\" {style}/>\n", d.trim_end())
    }
}

fn header(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn map_layer(s: &Scenario, f: &Frame) -> String {
    let mut o = f.rect(&s.grid.extent(), "fill=\"#f7f7f7\" stroke=\"#999\"");
    for ob in &s.obstacles {
        o += &f.rect(&ob.base(), "fill=\"#555\" fill-opacity=\"0.8\"");
    }
    o
}

/// Trajectories over the map, with guidance paths dashed and car-boxes drawn
/// once per second.
pub fn xy_svg(s: &Scenario, paths: &[GuidancePath], trajs: &[Trajectory]) -> String {
    let f = Frame::new(s.grid.extent(), 800.0);
    let mut o = header(f.width(), f.height());
    o += &map_layer(s, &f);
    for (i, p) in paths.iter().enumerate() {
        let style = format!("stroke=\"{}\" stroke-width=\"1\" stroke-dasharray=\"4 3\" stroke-opacity=\"0.6\"", color(i));
        o += &f.polyline(p.poses.iter().map(|q| (q.x, q.y)), &style);
    }
    for (i, t) in trajs.iter().enumerate() {
        let c = color(i);
        let v = s.vehicle(t.vehicle_id).expect("trajectory vehicle in scenario");
        let every = (1.0 / t.dt).round().max(1.0) as usize;
        for st in t.states.iter().step_by(every) {
            let r = v.footprint(&Pose::new(st.x, st.y, st.theta));
            let corners: Vec<(f64, f64)> = r.corners.iter().chain(r.corners.first()).copied().collect();
            o += &f.polyline(corners.into_iter(), &format!("stroke=\"{c}\" stroke-width=\"0.8\" stroke-opacity=\"0.5\""));
        }
        o += &f.polyline(t.states.iter().map(|st| (st.x, st.y)), &format!("stroke=\"{c}\" stroke-width=\"2\""));
        if let Some(st) = t.states.first() {
            let (x, y) = f.px(st.x, st.y);
            let _ = writeln!(o, "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" fill=\"{c}\">V{}</text>", x + 4.0, y - 4.0, t.vehicle_id);
        }
    }
    o + "</svg>\n"
}

/// Corridor cubes of one vehicle stacked over time; later cubes are darker.
pub fn corridor_svg(s: &Scenario, c: &Corridor) -> String {
    let f = Frame::new(s.grid.extent(), 800.0);
    let mut o = header(f.width(), f.height());
    o += &map_layer(s, &f);
    let n = c.cubes.len().max(1) as f64;
    for cube in &c.cubes {
        let shade = 0.08 + 0.25 * cube.k as f64 / n;
        o += &f.rect(
            &cube.aabb(),
            &format!("fill=\"#1f77b4\" fill-opacity=\"{shade:.3}\" stroke=\"#1f77b4\" stroke-opacity=\"0.7\""),
        );
        let (x, y) = f.px(cube.pivot.0, cube.pivot.1);
        let _ = writeln!(o, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"#d62728\"/>");
        let _ = writeln!(o, "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{}</text>", x + 4.0, y - 4.0, cube.k);
    }
    o += &f.polyline(c.refs.iter().map(|r| (r.0, r.1)), "stroke=\"#333\" stroke-width=\"1\" stroke-dasharray=\"3 3\"");
    let _ = writeln!(o, "<text x=\"24\" y=\"16\" font-size=\"13\">vehicle {} corridor</text>", c.vehicle_id);
    o + "</svg>\n"
}

fn chart(o: &mut String, top: f64, h: f64, w: f64, label: &str, series: &[(usize, Vec<(f64, f64)>)]) {
    let (left, right) = (50.0, 20.0);
    let t_max = series.iter().flat_map(|s| s.1.iter().map(|p| p.0)).fold(1e-9, f64::max);
    let mut lo = series.iter().flat_map(|s| s.1.iter().map(|p| p.1)).fold(f64::INFINITY, f64::min);
    let mut hi = series.iter().flat_map(|s| s.1.iter().map(|p| p.1)).fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-6 {
        lo -= 0.5;
        hi += 0.5;
    }
    let sx = |t: f64| left + t / t_max * (w - left - right);
    let sy = |v: f64| top + h - (v - lo) / (hi - lo) * h;
    let _ = writeln!(o, "<rect x=\"{left:.2}\" y=\"{top:.2}\" width=\"{:.2}\" height=\"{h:.2}\" fill=\"none\" stroke=\"#999\"/>", w - left - right);
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(o, "<text x=\"4\" y=\"{:.2}\" font-size=\"10\">{v:.2}</text>", sy(v) + 3.0);
    }
    let _ = writeln!(o, "<text x=\"{left:.2}\" y=\"{:.2}\" font-size=\"12\">{label}</text>", top - 6.0);
    let _ = writeln!(o, "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\">{t_max:.1} s</text>", w - right - 30.0, top + h + 12.0);
    for (i, pts) in series {
        let mut d = String::new();
        for (t, v) in pts {
            let _ = write!(d, "{:.2},{:.2} ", sx(*t), sy(*v));
        }
        let _ = writeln!(o, "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>", d.trim_end(), color(*i));
    }
}

/// Speed and acceleration over time for every vehicle.
pub fn va_svg(trajs: &[Trajectory]) -> String {
    let (w, h) = (800.0, 560.0);
    let mut o = header(w, h);
    let speed: Vec<(usize, Vec<(f64, f64)>)> = trajs
        .iter()
        .enumerate()
        .map(|(i, t)| (i, t.states.iter().enumerate().map(|(k, s)| (k as f64 * t.dt, s.v)).collect()))
        .collect();
    let accel: Vec<(usize, Vec<(f64, f64)>)> = trajs
        .iter()
        .enumerate()
        .map(|(i, t)| (i, t.states.iter().enumerate().map(|(k, s)| (k as f64 * t.dt, s.a)).collect()))
        .collect();
    chart(&mut o, 30.0, 220.0, w, "v [m/s]", &speed);
    chart(&mut o, 310.0, 220.0, w, "a [m/s^2]", &accel);
    for (i, t) in trajs.iter().enumerate() {
        let _ = writeln!(
            o,
            "<text x=\"{:.0}\" y=\"16\" font-size=\"12\" fill=\"{}\">V{}</text>",
            w - 200.0 + 40.0 * i as f64,
            color(i),
            t.vehicle_id
        );
    }
    o + "</svg>\n"
}
