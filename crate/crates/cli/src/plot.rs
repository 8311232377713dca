//! Static SVG scatter plots.

use std::fmt::Write as _;
use std::path::Path;

use llekit::dataset::write_atomic;
use llekit::Result;
use nalgebra::DMatrix;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 48.0;

// viridis sampled at five points
const RAMP: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

/// Colour for `t` in `[0, 1]`.
pub fn ramp(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (RAMP.len() - 1) as f64;
    let i = (x.floor() as usize).min(RAMP.len() - 2);
    let f = x - i as f64;
    let (a, b) = (RAMP[i], RAMP[i + 1]);
    let mix = |u: f64, v: f64| (u + (v - u) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn range(v: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    v.filter(|x| x.is_finite()).fold(None, |acc, x| match acc {
        None => Some((x, x)),
        Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
    })
}

/// SVG text for an `n x p` point set; columns beyond the second are ignored and a one-column
/// input is drawn on a horizontal line.
pub fn scatter_svg(points: &DMatrix<f64>, colors: Option<&[f64]>) -> String {
    let n = points.nrows();
    let xs = |i: usize| points[(i, 0)];
    let ys = |i: usize| if points.ncols() > 1 { points[(i, 1)] } else { 0.0 };
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
    if points.ncols() > 2 {
        let _ = writeln!(s, "<!-- {} columns given; plotting the first two -->", points.ncols());
    }
    let _ = writeln!(s, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let (lo, hi) = (MARGIN, SIZE - MARGIN);
    let _ = writeln!(s, r#"<line x1="{lo}" y1="{hi}" x2="{hi}" y2="{hi}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{lo}" y1="{hi}" x2="{lo}" y2="{lo}" stroke="black"/>"#);
    let (Some(rx), Some(ry)) = (range((0..n).map(xs)), range((0..n).map(ys))) else {
        s.push_str("</svg>\n");
        return s;
    };
    let label = |v: f64| format!("{v:.3}");
    let _ = writeln!(s, r#"<text x="{lo}" y="{}" font-size="11" text-anchor="start">{}</text>"#, hi + 16.0, label(rx.0));
    let _ = writeln!(s, r#"<text x="{hi}" y="{}" font-size="11" text-anchor="end">{}</text>"#, hi + 16.0, label(rx.1));
    let _ = writeln!(s, r#"<text x="{}" y="{hi}" font-size="11" text-anchor="end">{}</text>"#, lo - 4.0, label(ry.0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{}</text>"#, lo - 4.0, lo + 4.0, label(ry.1));

    let span = |r: (f64, f64)| if r.1 > r.0 { r.1 - r.0 } else { 1.0 };
    let inner = hi - lo - 16.0;
    let px = |v: f64| lo + 8.0 + if rx.1 > rx.0 { (v - rx.0) / span(rx) * inner } else { inner / 2.0 };
    let py = |v: f64| hi - 8.0 - if ry.1 > ry.0 { (v - ry.0) / span(ry) * inner } else { inner / 2.0 };
    let crange = colors.and_then(|c| range(c.iter().copied()));
    for i in 0..n {
        let fill = match (colors, crange) {
            (Some(c), Some((a, b))) if b > a => ramp((c[i] - a) / (b - a)),
            _ => ramp(0.5),
        };
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{fill}"/>"#, px(xs(i)), py(ys(i)));
    }
    s.push_str("</svg>\n");
    s
}

/// Write a scatter plot of the first two columns of `points` to `path`.
pub fn render_scatter(points: &DMatrix<f64>, colors: Option<&[f64]>, path: impl AsRef<Path>) -> Result<()> {
    if let Some(c) = colors {
        if c.len() != points.nrows() {
            return Err(llekit::LleError::ShapeMismatch(format!("{} colour values for {} points", c.len(), points.nrows())));
        }
    }
    if points.ncols() > 2 {
        log::info!("plotting the first two of {} embedding columns", points.ncols());
    }
    write_atomic(path, scatter_svg(points, colors).as_bytes())
}
