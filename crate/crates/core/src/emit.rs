//! Artifact writers: zero-locus SVG and `I(ε)` diagnostics as CSV.
//! The DOT writer lives with the graph in [`crate::arrange`].

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::geometry::{DomainKind, Point, QuadGrid};
use crate::invariants::{Analysis, VolumeDiagnostics};
use crate::zerolocus::{nearest_vertex, Sign};

const PLUS_FILL: &str = "#f2c29b";
const MINUS_FILL: &str = "#a7c4ea";

/// Chart coordinates of an ambient point, scaled to `[0, 1)` per axis.
fn unit_chart(kind: DomainKind, p: &Point) -> [f64; 2] {
    match kind {
        DomainKind::Sphere2 => {
            let theta = p[2].clamp(-1.0, 1.0).acos();
            let phi = p[1].atan2(p[0]).rem_euclid(2.0 * PI);
            [phi / (2.0 * PI), theta / PI]
        }
        _ => [p[0].rem_euclid(1.0), p[1].rem_euclid(1.0)],
    }
}

/// SVG of the zero locus over the region map; `None` for 3-D domains.
///
/// Each region is one `<g class="region">` of raster runs filled by sign;
/// each component is one `<path class="contour">`.
pub fn zero_locus_svg(analysis: &Analysis, grid: &QuadGrid) -> Option<String> {
    let kind = analysis.domain;
    let (w, h, cols, rows) = match kind {
        DomainKind::Sphere2 => (720.0, 360.0, 240usize, 120usize),
        DomainKind::Torus2 => (480.0, 480.0, 160, 160),
        DomainKind::Torus3 => return None,
    };
    let (cw, ch) = (w / cols as f64, h / rows as f64);
    let regions = &analysis.regions;
    let mut runs: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); regions.len()];
    for row in 0..rows {
        let mut start = 0;
        let mut current = usize::MAX;
        for col in 0..=cols {
            let r = if col < cols {
                let u = (col as f64 + 0.5) / cols as f64;
                let v = (row as f64 + 0.5) / rows as f64;
                let chart = match kind {
                    DomainKind::Sphere2 => [v * PI, u * 2.0 * PI, 0.0],
                    _ => [u, v, 0.0],
                };
                regions.vertex_region[nearest_vertex(grid, chart)]
            } else {
                usize::MAX
            };
            if r != current {
                if current != usize::MAX {
                    runs[current].push((row, start, col));
                }
                start = col;
                current = r;
            }
        }
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(s, "<title>{} f = {}</title>", kind, escape(&analysis.f));
    for (id, region_runs) in runs.iter().enumerate() {
        let sign = regions.signs[id];
        let fill = if sign == Sign::Plus {
            PLUS_FILL
        } else {
            MINUS_FILL
        };
        let _ = writeln!(
            s,
            "<g class=\"region\" data-region=\"{id}\" data-sign=\"{sign}\" fill=\"{fill}\">"
        );
        for &(row, a, b) in region_runs {
            let _ = writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\"/>",
                a as f64 * cw,
                row as f64 * ch,
                (b - a) as f64 * cw,
                ch
            );
        }
        s.push_str("</g>\n");
    }
    for comp in &analysis.components {
        let pts: Vec<[f64; 2]> = comp
            .polyline()
            .iter()
            .map(|p| unit_chart(kind, p))
            .collect();
        let mut d = String::new();
        let mut broken = false;
        for (i, p) in pts.iter().enumerate() {
            let jump = i > 0 && {
                let q = pts[i - 1];
                (p[0] - q[0]).abs() > 0.5 || (p[1] - q[1]).abs() > 0.5
            };
            broken |= jump;
            let cmd = if i == 0 || jump { 'M' } else { 'L' };
            let _ = write!(d, "{cmd}{:.2} {:.2} ", p[0] * w, p[1] * h);
        }
        if !broken {
            d.push('Z');
        }
        let _ = writeln!(
            s,
            "<path class=\"contour\" data-component=\"{}\" d=\"{}\" fill=\"none\" stroke=\"#202020\" stroke-width=\"1.5\"/>",
            comp.id,
            d.trim_end()
        );
    }
    s.push_str("</svg>\n");
    Some(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// `eps,cutoff,integral` rows for each schedule entry.
pub fn diagnostics_csv(d: &VolumeDiagnostics) -> String {
    let mut s = String::from("eps,cutoff,integral\n");
    for (e, i) in d.schedule.iter().zip(&d.samples) {
        let _ = writeln!(s, "{e},{},{i}", e * d.scale);
    }
    s
}
