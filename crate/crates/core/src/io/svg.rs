//! SVG rendering of scenes with predicted mixtures and their σ ellipses.

use std::fmt::Write;

use crate::gaussian::Gmm2;
use crate::linalg::{eigen_sym2, Mat2, Vec2};
use crate::scene::Scene;

/// Predicted position mixtures for one agent, one per future step.
#[derive(Debug, Clone)]
pub struct AgentPrediction {
    pub agent: usize,
    /// Scene step at which the forecast was issued.
    pub origin_step: i64,
    pub steps: Vec<Gmm2>,
}

/// Semi-axes `(a, b)` and rotation (degrees) of the `level`-σ ellipse of `cov`.
pub fn ellipse_axes(cov: &Mat2, level: f64) -> (f64, f64, f64) {
    let ((l1, l2), v) = eigen_sym2(cov);
    let angle = v.y.atan2(v.x).to_degrees();
    (level * l1.max(0.0).sqrt(), level * l2.max(0.0).sqrt(), angle)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Bounds {
    lo: Vec2,
    hi: Vec2,
}

impl Bounds {
    fn add(&mut self, p: Vec2) {
        self.lo = self.lo.inf(&p);
        self.hi = self.hi.sup(&p);
    }
}

/// Render GT tracks, per-mode predicted means and σ ellipses.
///
/// Coordinates stay in meters; the y axis is flipped by the outer group so
/// north points up. Mode opacity equals its weight and zero-weight modes are
/// omitted.
pub fn plot_scene(scene: &Scene, predictions: &[AgentPrediction], levels: &[usize]) -> String {
    let mut b = Bounds { lo: Vec2::repeat(f64::INFINITY), hi: Vec2::repeat(f64::NEG_INFINITY) };
    for a in &scene.agents {
        for g in &a.gt {
            b.add(g.pos);
        }
    }
    let max_level = levels.iter().copied().max().unwrap_or(0) as f64;
    for p in predictions {
        for g in &p.steps {
            for (_, c) in g.iter() {
                let (ax, _, _) = ellipse_axes(&c.cov, max_level);
                b.add(c.mean - Vec2::repeat(ax));
                b.add(c.mean + Vec2::repeat(ax));
            }
        }
    }
    if !b.lo.x.is_finite() {
        b = Bounds { lo: Vec2::repeat(-1.0), hi: Vec2::repeat(1.0) };
    }
    let margin = 0.05 * (b.hi - b.lo).max().max(1.0);
    let (x0, y0) = (b.lo.x - margin, b.lo.y - margin);
    let (w, h) = (b.hi.x - b.lo.x + 2.0 * margin, b.hi.y - b.lo.y + 2.0 * margin);
    let stroke = 0.004 * w.max(h);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{x0:.4} {:.4} {w:.4} {h:.4}" width="800" height="{:.0}">"#,
        -(y0 + h),
        800.0 * h / w
    );
    let _ = writeln!(s, r#"<g transform="scale(1,-1)" fill="none" stroke-width="{stroke:.5}">"#);
    for (i, a) in scene.agents.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = a.gt.iter().map(|g| format!("{:.4},{:.4}", g.pos.x, g.pos.y)).collect();
        let _ = writeln!(s, r#"<polyline class="gt" stroke="{color}" points="{}"/>"#, pts.join(" "));
    }
    for p in predictions {
        let color = PALETTE[p.agent % PALETTE.len()];
        let Some(first) = p.steps.first() else { continue };
        let start = scene.agents.get(p.agent).and_then(|a| a.gt_at(p.origin_step)).map(|g| g.pos);
        for k in 0..first.len() {
            let w = first.weights()[k];
            if w <= 0.0 {
                continue;
            }
            let mut pts: Vec<String> = start.iter().map(|q| format!("{:.4},{:.4}", q.x, q.y)).collect();
            pts.extend(p.steps.iter().map(|g| {
                let m = g.components()[k].mean;
                format!("{:.4},{:.4}", m.x, m.y)
            }));
            let _ = writeln!(
                s,
                r#"<polyline class="mode" stroke="{color}" stroke-dasharray="{:.4}" opacity="{w:.4}" points="{}"/>"#,
                3.0 * stroke,
                pts.join(" ")
            );
            for g in &p.steps {
                let wk = g.weights()[k];
                if wk <= 0.0 {
                    continue;
                }
                let c = &g.components()[k];
                for &lvl in levels {
                    let (rx, ry, angle) = ellipse_axes(&c.cov, lvl as f64);
                    let _ = writeln!(
                        s,
                        r#"<ellipse class="sigma{lvl}" stroke="{color}" opacity="{wk:.4}" cx="{:.4}" cy="{:.4}" rx="{rx:.4}" ry="{ry:.4}" transform="rotate({angle:.3} {:.4} {:.4})"/>"#,
                        c.mean.x, c.mean.y, c.mean.x, c.mean.y
                    );
                }
            }
        }
    }
    s.push_str("</g>\n</svg>\n");
    s
}
