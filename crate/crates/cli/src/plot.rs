//! Minimal SVG rendering of one scene.

use std::fmt::Write;

use scenealign::geometry::{Point2, Trajectory};
use scenealign::Scene;

const SIZE: f64 = 800.0;
const PAD: f64 = 40.0;

fn polyline(out: &mut String, pts: &[Point2], to_px: &impl Fn(&Point2) -> (f64, f64), style: &str) {
    let coords: Vec<String> = pts
        .iter()
        .map(|p| {
            let (x, y) = to_px(p);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    let _ = writeln!(out, "<polyline points=\"{}\" fill=\"none\" {style}/>", coords.join(" "));
}

/// History in blue, ground truth in green, samples dashed red; black rings mark
/// same-timestep pairs closer than `threshold`.
pub fn render_svg(scene: &Scene, preds: &[Vec<Trajectory>], threshold: f64, seed: u64) -> String {
    let futures = scene.futures.as_deref().unwrap_or(&[]);
    let all = scene
        .histories
        .iter()
        .chain(futures)
        .chain(preds.iter().flatten())
        .flat_map(|t| t.points().iter());
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in all {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    if !x0.is_finite() {
        (x0, y0, x1, y1) = (0.0, 0.0, 1.0, 1.0);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-6);
    let scale = (SIZE - 2.0 * PAD) / span;
    let to_px = |p: &Point2| (PAD + (p.x - x0) * scale, SIZE - PAD - (p.y - y0) * scale);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">"
    );
    let _ = writeln!(out, "<!-- scene {} seed {seed} samples {} -->", scene.id, preds.len());
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    for sample in preds {
        for t in sample {
            polyline(&mut out, t.points(), &to_px, "stroke=\"#d62728\" stroke-width=\"1\" stroke-dasharray=\"4 3\" opacity=\"0.6\"");
        }
    }
    for (a, h) in scene.histories.iter().enumerate() {
        polyline(&mut out, h.points(), &to_px, "stroke=\"#1f77b4\" stroke-width=\"2\"");
        if let Some(f) = futures.get(a) {
            let mut pts = vec![h.last()];
            pts.extend_from_slice(f.points());
            polyline(&mut out, &pts, &to_px, "stroke=\"#2ca02c\" stroke-width=\"2\"");
        }
        let (x, y) = to_px(&h.last());
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\">{}</text>", x + 4.0, y - 4.0, scene.agent_ids[a]);
    }
    for sample in preds {
        for i in 0..sample.len() {
            for j in i + 1..sample.len() {
                for (p, q) in sample[i].points().iter().zip(sample[j].points()) {
                    if p.distance(q) < threshold {
                        let (x, y) = to_px(&Point2 {
                            x: 0.5 * (p.x + q.x),
                            y: 0.5 * (p.y + q.y),
                        });
                        let _ = writeln!(out, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"5\" fill=\"none\" stroke=\"black\"/>");
                    }
                }
            }
        }
    }
    out.push_str("</svg>\n");
    out
}
