//! Minimal SVG scatter plots of 2D completions.

use std::fmt::Write;

use imle_complete::geometry::PointCloud;

const CELL: f64 = 160.0;
const PAD: f64 = 8.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// One row per entry: the partial input in black, then each completion.
pub fn render(rows: &[(PointCloud<f64>, Vec<PointCloud<f64>>)]) -> String {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for (partial, samples) in rows {
        for p in std::iter::once(partial)
            .chain(samples)
            .flat_map(|c| c.points())
        {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
    }
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9);
    let scale = (CELL - 2.0 * PAD) / extent;
    let columns = 1 + rows.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
    let (width, height) = (columns as f64 * CELL, rows.len() as f64 * CELL);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let cloud = |out: &mut String, c: &PointCloud<f64>, row: usize, col: usize, color: &str| {
        let (ox, oy) = (col as f64 * CELL + PAD, row as f64 * CELL + PAD);
        let _ = writeln!(out, r#"<g fill="{color}">"#);
        for p in c.points() {
            let x = ox + (p[0] - lo[0]) * scale;
            let y = oy + (hi[1] - p[1]) * scale;
            let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.5"/>"#);
        }
        let _ = writeln!(out, "</g>");
    };
    for (r, (partial, samples)) in rows.iter().enumerate() {
        cloud(&mut out, partial, r, 0, "black");
        for (j, s) in samples.iter().enumerate() {
            cloud(&mut out, s, r, j + 1, PALETTE[j % PALETTE.len()]);
        }
    }
    out.push_str("</svg>\n");
    out
}
