//! Minimal SVG / PGM figures: loss curves, PMF overlays, image grids.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::angledist::Pmf;
use crate::error::{Error, Result};
use crate::image::Image;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// One named polyline.
#[derive(Clone, Debug)]
pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Line chart of several series on shared axes. Non-finite points are
/// skipped.
pub fn line_chart_svg(title: &str, x_label: &str, series: &[Series<'_>]) -> String {
    let finite = || series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<path d="M{m} {t} V{b} H{r}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    for (v, anchor, x, y) in [
        (x0, "start", MARGIN, HEIGHT - MARGIN + 16.0),
        (x1, "end", WIDTH - MARGIN, HEIGHT - MARGIN + 16.0),
    ] {
        let _ = writeln!(out, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{}</text>"#, fmt_tick(v));
    }
    for (v, y) in [(y0, HEIGHT - MARGIN), (y1, MARGIN)] {
        let _ = writeln!(out, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, MARGIN - 4.0, fmt_tick(v));
    }
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline class="series" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = MARGIN + 14.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{}</text>"#,
            WIDTH - MARGIN,
            escape(s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Critic and generator loss against epoch.
pub fn loss_curves_svg(history: &[crate::trainer::EpochRecord]) -> String {
    let critic = history.iter().map(|r| (r.epoch as f64, r.critic_loss)).collect();
    let gen = history.iter().map(|r| (r.epoch as f64, r.gen_loss)).collect();
    line_chart_svg(
        "Training losses",
        "epoch",
        &[
            Series {
                label: "critic",
                points: critic,
            },
            Series {
                label: "generator",
                points: gen,
            },
        ],
    )
}

/// Ground-truth and recovered PMFs against angle in degrees.
pub fn pmf_overlay_svg(truth: &Pmf, recovered: &Pmf) -> Result<String> {
    if truth.len() != recovered.len() {
        return Err(Error::shape(format!("PMFs with {} and {} bins", truth.len(), recovered.len())));
    }
    let pts = |p: &Pmf| {
        let n = p.len() as f64;
        p.probs().iter().enumerate().map(|(i, &v)| ((i as f64 + 0.5) * 180.0 / n, v)).collect()
    };
    Ok(line_chart_svg(
        "Angle distribution",
        "angle (degrees)",
        &[
            Series {
                label: "ground truth",
                points: pts(truth),
            },
            Series {
                label: "recovered",
                points: pts(recovered),
            },
        ],
    ))
}

/// Tile same-sized images into one 8-bit PGM, `cols` per row, each tile
/// min-max scaled on its own, separated by a 2-pixel white border.
pub fn image_grid_pgm(images: &[&Image], cols: usize) -> Result<Vec<u8>> {
    let first = images.first().ok_or_else(|| Error::InvalidArgument("no images to tile".into()))?;
    let d = first.d();
    if images.iter().any(|img| img.d() != d) {
        return Err(Error::shape("images in a grid must share a size"));
    }
    let cols = cols.clamp(1, images.len());
    let rows = images.len().div_ceil(cols);
    let gap = 2;
    let w = cols * d + (cols + 1) * gap;
    let h = rows * d + (rows + 1) * gap;
    let mut px = vec![255u8; w * h];
    for (k, img) in images.iter().enumerate() {
        let (lo, hi) = (img.min(), img.max());
        let span = if hi > lo { hi - lo } else { 1.0 };
        let oy = gap + (k / cols) * (d + gap);
        let ox = gap + (k % cols) * (d + gap);
        for r in 0..d {
            for c in 0..d {
                let v = ((img.get(r, c) - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8;
                px[(oy + r) * w + ox + c] = v;
            }
        }
    }
    let mut buf = format!("P5\n{w} {h}\n255\n").into_bytes();
    buf.extend(px);
    Ok(buf)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmf_overlay_has_two_curves() {
        let a = Pmf::uniform(8);
        let b = Pmf::one_hot(8, 3);
        let svg = pmf_overlay_svg(&a, &b).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(pmf_overlay_svg(&a, &Pmf::uniform(4)).is_err());
    }

    #[test]
    fn chart_survives_nan_and_flat_series() {
        let svg = line_chart_svg(
            "t",
            "x",
            &[Series {
                label: "a<b",
                points: vec![(1.0, 2.0), (2.0, f64::NAN), (3.0, 2.0)],
            }],
        );
        assert!(!svg.contains("NaN"));
        assert!(svg.contains("a&lt;b"));
    }

    #[test]
    fn grid_dimensions() {
        let a = Image::zeros(4);
        let b = Image::from_fn(4, |x, _| x);
        let buf = image_grid_pgm(&[&a, &b, &a], 2).unwrap();
        let header = b"P5\n14 14\n255\n";
        assert!(buf.starts_with(header));
        assert_eq!(buf.len(), header.len() + 14 * 14);
    }
}
