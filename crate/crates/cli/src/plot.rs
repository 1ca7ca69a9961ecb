//! Static SVG scatter of an embedding. Points are coloured by cluster,
//! medoids drawn as stars and anchors as triangles. No axes.

use std::fmt::Write;

use clmds::{ClmdsResult, Point2};

const SIZE: f64 = 640.0;
const MARGIN: f64 = 24.0;

fn colour(k: usize) -> String {
    // golden-angle hues keep neighbouring cluster indices apart
    let hue = (k as f64 * 137.507_764) % 360.0;
    format!("hsl({hue:.1},65%,45%)")
}

fn star(c: Point2, r: f64) -> String {
    let mut pts = String::new();
    for i in 0..10 {
        let rad = if i % 2 == 0 { r } else { 0.45 * r };
        let a = std::f64::consts::PI * (i as f64 / 5.0 - 0.5);
        let _ = write!(pts, "{:.2},{:.2} ", c[0] + rad * a.cos(), c[1] + rad * a.sin());
    }
    pts.trim_end().to_string()
}

fn triangle(c: Point2, r: f64) -> String {
    format!(
        "{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}",
        c[0],
        c[1] - r,
        c[0] + 0.87 * r,
        c[1] + 0.5 * r,
        c[0] - 0.87 * r,
        c[1] + 0.5 * r
    )
}

pub fn render_svg(result: &ClmdsResult) -> String {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &result.coords {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let scale = (SIZE - 2.0 * MARGIN) / span;
    let offset = [
        MARGIN + 0.5 * (SIZE - 2.0 * MARGIN - scale * (hi[0] - lo[0])),
        MARGIN + 0.5 * (SIZE - 2.0 * MARGIN - scale * (hi[1] - lo[1])),
    ];
    // SVG y grows downwards
    let map = |p: Point2| [offset[0] + scale * (p[0] - lo[0]), SIZE - offset[1] - scale * (p[1] - lo[1])];

    let medoid = result.medoid_mask();
    let anchor = result.anchor_mask();
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    // plain points first so markers stay on top
    for (i, &p) in result.coords.iter().enumerate() {
        if medoid[i] || anchor[i] {
            continue;
        }
        let q = map(p);
        let opacity = if result.estimated_mask[i] { 0.45 } else { 0.85 };
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}" fill-opacity="{opacity}"/>"#,
            q[0],
            q[1],
            colour(result.clustering.cluster_of(i))
        );
    }
    for (i, &p) in result.coords.iter().enumerate() {
        let fill = colour(result.clustering.cluster_of(i));
        if anchor[i] && !medoid[i] {
            let _ = writeln!(out, r#"<polygon points="{}" fill="{fill}" stroke="black" stroke-width="0.6"/>"#, triangle(map(p), 5.0));
        }
    }
    for (i, &p) in result.coords.iter().enumerate() {
        if medoid[i] {
            let fill = colour(result.clustering.cluster_of(i));
            let _ = writeln!(out, r#"<polygon points="{}" fill="{fill}" stroke="black" stroke-width="0.8"/>"#, star(map(p), 9.0));
        }
    }
    out.push_str("</svg>\n");
    out
}
