//! Deterministic SVG output: trajectory replays and ladder bar charts.

use std::fmt::Write as _;

use crate::error::HarnessError;
use crate::geometry::Point2;
use crate::sim::OccupancyGrid;

use super::eval::ScoreReport;

const PX_PER_M: f64 = 100.0;

/// Reads the `x,y` columns of a control trace CSV.
pub fn parse_trace_points(text: &str) -> Result<Vec<Point2>, HarnessError> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").trim().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let (ix, iy) = match (col("x"), col("y")) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(HarnessError::Format("trace csv needs x and y columns".into())),
    };
    let mut pts = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        let get = |i: usize| -> Result<f64, HarnessError> {
            f.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| HarnessError::Format(format!("trace line {}: bad coordinate", n + 2)))
        };
        pts.push(Point2::new(get(ix)?, get(iy)?));
    }
    Ok(pts)
}

fn polyline(out: &mut String, pts: &[Point2], to_px: impl Fn(Point2) -> (f64, f64), class: &str, stroke: &str) {
    if pts.is_empty() {
        return;
    }
    let coords: Vec<String> = pts
        .iter()
        .map(|&p| {
            let (x, y) = to_px(p);
            format!("{x:.1},{y:.1}")
        })
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline class="{class}" fill="none" stroke="{stroke}" stroke-width="2" points="{}"/>"#,
        coords.join(" ")
    );
}

/// Occupied cells as rectangles, the global path and the executed
/// trajectory as polylines, start and goal as circles.
pub fn trajectory_svg(grid: &OccupancyGrid, path: &[Point2], trajectory: &[Point2], start: Point2, goal: Point2) -> String {
    let res = grid.resolution();
    let o = grid.origin();
    let w = grid.world_width() * PX_PER_M;
    let h = grid.world_height() * PX_PER_M;
    // SVG y grows downward.
    let to_px = |p: Point2| ((p.x - o.x) * PX_PER_M, h - (p.y - o.y) * PX_PER_M);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#);
    let _ = writeln!(s, r##"<rect width="{w:.0}" height="{h:.0}" fill="#ffffff"/>"##);
    let cell = res * PX_PER_M;
    let _ = writeln!(s, r##"<g class="grid" fill="#404040">"##);
    for j in 0..grid.height() {
        for i in 0..grid.width() {
            if grid.occupied(i as isize, j as isize) {
                let x = i as f64 * cell;
                let y = h - (j + 1) as f64 * cell;
                let _ = writeln!(s, r#"<rect x="{x:.1}" y="{y:.1}" width="{cell:.1}" height="{cell:.1}"/>"#);
            }
        }
    }
    let _ = writeln!(s, "</g>");
    polyline(&mut s, path, to_px, "path", "#2060d0");
    polyline(&mut s, trajectory, to_px, "trajectory", "#d03020");
    for (p, class, fill) in [(start, "start", "#20a040"), (goal, "goal", "#e0a000")] {
        let (x, y) = to_px(p);
        let _ = writeln!(s, r#"<circle class="{class}" cx="{x:.1}" cy="{y:.1}" r="6" fill="{fill}"/>"#);
    }
    s.push_str("</svg>\n");
    s
}

/// Success-rate bars per variant, each labelled with its mean completion time.
pub fn ladder_svg(reports: &[ScoreReport]) -> String {
    let bar = 80.0;
    let gap = 30.0;
    let plot_h = 200.0;
    let top = 30.0;
    let w = gap + reports.len() as f64 * (bar + gap);
    let h = top + plot_h + 50.0;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#);
    let _ = writeln!(s, r##"<rect width="{w:.0}" height="{h:.0}" fill="#ffffff"/>"##);
    let base = top + plot_h;
    let _ = writeln!(s, r##"<line x1="0" y1="{base:.1}" x2="{w:.0}" y2="{base:.1}" stroke="#000000"/>"##);
    for (k, r) in reports.iter().enumerate() {
        let x = gap + k as f64 * (bar + gap);
        let bh = r.success_rate.clamp(0.0, 1.0) * plot_h;
        let time = r.mean_completion_time.map(|t| format!("{t:.1} s")).unwrap_or_else(|| "n/a".into());
        let _ = writeln!(
            s,
            r##"<rect class="bar" x="{x:.1}" y="{:.1}" width="{bar:.1}" height="{bh:.1}" fill="#2060d0"/>"##,
            base - bh
        );
        let cx = x + bar / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" font-size="12" text-anchor="middle">{:.0}% / {time}</text>"#,
            base - bh - 6.0,
            r.success_rate * 100.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#,
            base + 18.0,
            escape(&r.variant)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_points_by_header() {
        let pts = parse_trace_points("t,x,y,theta\n0,1,2,0\n0.02,1.5,2.5,0\n").unwrap();
        assert_eq!(pts, vec![Point2::new(1.0, 2.0), Point2::new(1.5, 2.5)]);
        assert!(parse_trace_points("t,a\n0,1\n").is_err());
    }

    #[test]
    fn trajectory_has_one_rect_per_occupied_cell() {
        let g = OccupancyGrid::new(6, 5, 0.5, Point2::default()).unwrap();
        let svg = trajectory_svg(&g, &[Point2::new(1.0, 1.0), Point2::new(2.0, 1.0)], &[Point2::new(1.0, 1.0)], Point2::new(1.0, 1.0), Point2::new(2.0, 1.0));
        let cells = svg.split(r#"<g class="grid""#).nth(1).unwrap().split("</g>").next().unwrap();
        assert_eq!(cells.matches("<rect").count(), g.occupied_count());
        assert!(svg.contains(r#"class="trajectory""#) && svg.contains(r#"class="path""#));
    }
}
