//! SVG overlay: unit outlines, fitted side tetragons, back-projected package
//! rows and columns, and a count label per unit.

use packstruct::geometry::{GeometryError, Homography, Point2, Polygon};
use packstruct::pipeline::{ImageRecognition, ResultDocument, SideAnalysis, UnitStatus};
use std::fmt::Write as _;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn points(ps: &[Point2]) -> String {
    ps.iter()
        .map(|p| format!("{:.2},{:.2}", p.x, p.y))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Interior grid lines of a side in image coordinates: `n_h - 1` verticals
/// and `n_v - 1` horizontals.
pub fn grid_lines(side: &SideAnalysis, n_h: u32, n_v: u32) -> Result<Vec<(Point2, Point2)>, GeometryError> {
    let inv: Homography = side.homography.inverse()?;
    let (w, h) = (side.rect.s_h, side.rect.s_v);
    let mut out = Vec::new();
    for k in 1..n_h {
        let x = k as f64 * w / n_h as f64;
        out.push((inv.apply(Point2::new(x, 0.0))?, inv.apply(Point2::new(x, h))?));
    }
    for k in 1..n_v {
        let y = k as f64 * h / n_v as f64;
        out.push((inv.apply(Point2::new(0.0, y))?, inv.apply(Point2::new(w, y))?));
    }
    Ok(out)
}

fn polygon(out: &mut String, class: &str, stroke: &str, poly: &[Point2]) {
    let _ = writeln!(
        out,
        r#"  <polygon class="{class}" points="{}" fill="none" stroke="{stroke}" stroke-width="2"/>"#,
        points(poly)
    );
}

/// Renders the overlay. `rec` supplies the fitted geometry, `res` the counts.
pub fn render(
    width: u32,
    height: u32,
    res: &ResultDocument,
    rec: &ImageRecognition,
) -> Result<String, GeometryError> {
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(out, "  <title>{}</title>", escape(&res.image_id));
    for unit in &res.units {
        if let Some(poly) = &unit.polygon {
            polygon(&mut out, "unit", "#00a0ff", poly.vertices());
        }
        let (Some(l), Some(r), Some(v), Some(total)) = (unit.n_h_left, unit.n_h_right, unit.n_v, unit.total)
        else {
            continue;
        };
        if unit.status != UnitStatus::Ok {
            continue;
        }
        let fitted = rec
            .units
            .iter()
            .find(|u| Some(&u.unit_id) == unit.unit_id.as_ref())
            .and_then(|u| u.result.as_ref().ok());
        if let Some(f) = fitted {
            for (side, n_h) in [(&f.left, l), (&f.right, r)] {
                polygon(&mut out, "tetragon", "red", &side.tetragon.corners());
                for (a, b) in grid_lines(side, n_h, v)? {
                    let _ = writeln!(
                        out,
                        r#"  <line class="grid" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="yellow" stroke-width="2"/>"#,
                        a.x, a.y, b.x, b.y
                    );
                }
            }
        }
        let anchor = unit
            .polygon
            .as_ref()
            .map(Polygon::bbox)
            .map(|(lo, _)| Point2::new(lo.x, (lo.y - 6.0).max(12.0)))
            .unwrap_or(Point2::new(4.0, 16.0));
        let _ = writeln!(
            out,
            r#"  <text class="label" x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="16" fill="yellow">{}</text>"#,
            anchor.x,
            anchor.y,
            escape(&format!("{l} × {r} × {v} = {total}"))
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
