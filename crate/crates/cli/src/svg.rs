//! Minimal SVG emitters: a presentation layer over the CSV artifacts.

use std::fmt::Write;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Bounds {
    pub fn of(points: impl Iterator<Item = (f64, f64)>) -> Bounds {
        let mut b = Bounds { x_min: f64::MAX, x_max: f64::MIN, y_min: f64::MAX, y_max: f64::MIN };
        for (x, y) in points {
            b.x_min = b.x_min.min(x);
            b.x_max = b.x_max.max(x);
            b.y_min = b.y_min.min(y);
            b.y_max = b.y_max.max(y);
        }
        let pad_x = 0.05 * (b.x_max - b.x_min).max(1.0);
        let pad_y = 0.05 * (b.y_max - b.y_min).max(1.0);
        b.x_min -= pad_x;
        b.x_max += pad_x;
        b.y_min -= pad_y;
        b.y_max += pad_y;
        b
    }

    fn to_px(&self, x: f64, y: f64, size: f64) -> (f64, f64) {
        let px = (x - self.x_min) / (self.x_max - self.x_min) * size;
        // SVG y grows downward.
        let py = (1.0 - (y - self.y_min) / (self.y_max - self.y_min)) * size;
        (px, py)
    }
}

/// Scatter of (x, y, class) points, colored per class, plus optional
/// polyline overlays (one per class).
pub fn scatter_svg(
    points: &[(f64, f64, usize)],
    polylines: &[Vec<(f64, f64)>],
    title: &str,
) -> String {
    let size = 640.0;
    let bounds = Bounds::of(
        points
            .iter()
            .map(|(x, y, _)| (*x, *y))
            .chain(polylines.iter().flatten().copied()),
    );
    let mut svg = svg_header(size, title);
    for (x, y, class) in points {
        let (px, py) = bounds.to_px(*x, *y, size);
        let color = PALETTE[class % PALETTE.len()];
        let _ = write!(
            svg,
            r#"<circle cx="{px:.2}" cy="{py:.2}" r="1.5" fill="{color}" fill-opacity="0.5"/>"#
        );
    }
    for (i, line) in polylines.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = line
            .iter()
            .map(|(x, y)| {
                let (px, py) = bounds.to_px(*x, *y, size);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        let _ = write!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2.5"/>"#,
            path.join(" ")
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Grayscale heatmap of a density grid (row-major values).
pub fn heatmap_svg(values: &[Vec<f64>], title: &str) -> String {
    let size = 640.0;
    let rows = values.len();
    let cols = values.first().map_or(0, Vec::len);
    let peak = values.iter().flatten().cloned().fold(f64::MIN, f64::max).max(1e-300);
    let mut svg = svg_header(size, title);
    let (w, h) = (size / cols as f64, size / rows as f64);
    for (r, row) in values.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            let level = (255.0 * (1.0 - (v / peak).clamp(0.0, 1.0))) as u8;
            let x = c as f64 * w;
            // Row 0 is the lowest y value; flip vertically.
            let y = size - (r + 1) as f64 * h;
            let _ = write!(
                svg,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="rgb({level},{level},{level})"/>"#
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn svg_header(size: f64, title: &str) -> String {
    format!(
        concat!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {s} {s}" width="{s}" height="{s}">"#,
            r#"<title>{t}</title><rect width="{s}" height="{s}" fill="white"/>"#
        ),
        s = size,
        t = title
    )
}
