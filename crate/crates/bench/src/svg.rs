//! SVG rendering of planar navigation episodes.

use std::fmt::Write as _;

use bcevo::mpc::{Dynamics, Episode, RolloutEnv};

use crate::error::{BenchError, Result};

const SIZE: f64 = 600.0;
const PAD: f64 = 20.0;
const WORKER_COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

struct Frame {
    min: [f64; 2],
    scale: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = [f64; 2]>, circles: impl Iterator<Item = ([f64; 2], f64)>) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        let mut grow = |p: [f64; 2], r: f64| {
            for k in 0..2 {
                if p[k].is_finite() {
                    lo[k] = lo[k].min(p[k] - r);
                    hi[k] = hi[k].max(p[k] + r);
                }
            }
        };
        points.for_each(|p| grow(p, 0.0));
        circles.for_each(|(c, r)| grow(c, r));
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
        let scale = (SIZE - 2.0 * PAD) / span;
        Self {
            min: lo,
            scale,
            width: (hi[0] - lo[0]) * scale + 2.0 * PAD,
            height: (hi[1] - lo[1]) * scale + 2.0 * PAD,
        }
    }

    /// SVG's y axis points down.
    fn map(&self, p: &[f64]) -> (f64, f64) {
        (
            PAD + (p[0] - self.min[0]) * self.scale,
            self.height - PAD - (p[1] - self.min[1]) * self.scale,
        )
    }
}

fn points_attr(frame: &Frame, states: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for (i, p) in states.iter().enumerate() {
        let (x, y) = frame.map(p);
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x:.3},{y:.3}");
    }
    s
}

/// Renders obstacles, start and goal, every snapshot's worker plans, the
/// dashed centroid plan and the executed path.
pub fn emit_trajectory_svg<D: Dynamics>(episode: &Episode, env: &RolloutEnv<D>) -> Result<String> {
    if env.dynamics.state_dim() != 2 {
        return Err(BenchError::Unsupported(format!(
            "trajectory plots need a planar state, got dimension {}",
            env.dynamics.state_dim()
        )));
    }
    let planned = episode
        .snapshots
        .iter()
        .flat_map(|s| s.workers.iter().chain(std::iter::once(&s.centroid)))
        .flatten();
    let points = [env.start.as_slice(), env.goal.as_slice()]
        .into_iter()
        .chain(episode.states.iter().map(Vec::as_slice))
        .chain(planned.map(Vec::as_slice))
        .map(|p| [p[0], p[1]]);
    let frame = Frame::fit(points, env.obstacles.iter().map(|o| (o.center, o.radius)));

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.3} {h:.3}">"#,
        w = frame.width,
        h = frame.height
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let _ = writeln!(s, r##"<g id="obstacles" fill="#bbbbbb" stroke="#555555">"##);
    for o in &env.obstacles {
        let (cx, cy) = frame.map(&o.center);
        let _ = writeln!(s, r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="{:.3}"/>"#, o.radius * frame.scale);
    }
    let _ = writeln!(s, "</g>");

    for snap in &episode.snapshots {
        let _ = writeln!(s, r#"<g class="snapshot" data-step="{}" fill="none" stroke-width="1" opacity="0.6">"#, snap.step);
        for (i, plan) in snap.workers.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<polyline class="worker-plan" stroke="{}" points="{}"/>"#,
                WORKER_COLORS[i % WORKER_COLORS.len()],
                points_attr(&frame, plan)
            );
        }
        let _ = writeln!(
            s,
            r##"<polyline class="centroid-plan" stroke="#2ca02c" stroke-width="2" stroke-dasharray="6,4" points="{}"/>"##,
            points_attr(&frame, &snap.centroid)
        );
        let _ = writeln!(s, "</g>");
    }

    if !episode.states.is_empty() {
        let _ = writeln!(
            s,
            r##"<polyline id="executed" fill="none" stroke="#d62728" stroke-width="2.5" points="{}"/>"##,
            points_attr(&frame, &episode.states)
        );
    }

    let (sx, sy) = frame.map(&env.start);
    let (gx, gy) = frame.map(&env.goal);
    let _ = writeln!(s, r##"<circle id="start" cx="{sx:.3}" cy="{sy:.3}" r="6" fill="#000000"/>"##);
    let _ = writeln!(s, r##"<circle id="goal" cx="{gx:.3}" cy="{gy:.3}" r="7" fill="none" stroke="#2ca02c" stroke-width="3"/>"##);
    let _ = writeln!(s, "</svg>");
    Ok(s)
}
