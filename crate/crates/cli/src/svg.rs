//! Standalone SVG scatter plots with byte-stable output.
//!
//! Continuous values are colored by linear interpolation between eight
//! viridis stops over the value range; categories cycle through ten fixed
//! colors.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
/// Extra room for the legend on the right.
const LEGEND: f64 = 110.0;

pub const VIRIDIS: [[u8; 3]; 8] = [
    [0x44, 0x01, 0x54],
    [0x46, 0x32, 0x7e],
    [0x36, 0x5c, 0x8d],
    [0x27, 0x7f, 0x8e],
    [0x1f, 0xa1, 0x87],
    [0x4a, 0xc1, 0x6d],
    [0xa0, 0xda, 0x39],
    [0xfd, 0xe7, 0x25],
];

pub const CATEGORICAL: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, Copy)]
pub enum Coloring<'a> {
    Uniform,
    Continuous(&'a [f64]),
    Categorical(&'a [usize]),
}

#[derive(Debug, Clone, Default)]
pub struct PlotText {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub legend_title: String,
}

/// Viridis color at `t` in `[0, 1]` (clamped).
pub fn viridis(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (VIRIDIS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(VIRIDIS.len() - 2);
    let f = pos - i as f64;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    let mix = |c: usize| (a[c] as f64 + f * (b[c] as f64 - a[c] as f64)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(0), mix(1), mix(2))
}

pub fn category_color(c: usize) -> &'static str {
    CATEGORICAL[c % CATEGORICAL.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Padded data range; a zero-width range becomes a unit interval around it.
fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Renders `points` as a scatter plot. Non-finite points are skipped;
/// `labels`, when given, become per-marker tooltips.
pub fn emit_svg_scatter(points: &[[f64; 2]], colors: Coloring<'_>, labels: Option<&[String]>, text: &PlotText) -> String {
    let finite: Vec<usize> = (0..points.len())
        .filter(|&i| points[i].iter().all(|v| v.is_finite()))
        .collect();
    let (x0, x1) = range(finite.iter().map(|&i| points[i][0]));
    let (y0, y1) = range(finite.iter().map(|&i| points[i][1]));
    let (left, right) = (MARGIN, WIDTH - MARGIN - LEGEND);
    let (top, bottom) = (MARGIN, HEIGHT - MARGIN);
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
    let sy = |y: f64| bottom - (y - y0) / (y1 - y0) * (bottom - top);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        (left + right) / 2.0,
        escape(&text.title)
    );

    // Axes and ticks.
    let _ = writeln!(
        s,
        r#"<path d="M{left:.1},{top:.1} V{bottom:.1} H{right:.1}" fill="none" stroke="black"/>"#
    );
    for t in 0..=4 {
        let f = t as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.1}" y1="{bottom:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{xv:.3}</text>"#,
            bottom + 5.0,
            bottom + 18.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{left:.1}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#,
            left - 5.0,
            left - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        HEIGHT - 18.0,
        escape(&text.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(&text.y_label)
    );

    let (c0, c1) = match colors {
        Coloring::Continuous(v) => {
            let (lo, hi) = finite
                .iter()
                .map(|&i| v[i])
                .filter(|x| x.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
            (lo, hi)
        }
        _ => (0.0, 0.0),
    };
    let fill = |i: usize| -> String {
        match colors {
            Coloring::Uniform => CATEGORICAL[0].to_string(),
            Coloring::Categorical(c) => category_color(c[i]).to_string(),
            Coloring::Continuous(v) => viridis(if c1 > c0 { (v[i] - c0) / (c1 - c0) } else { 0.5 }),
        }
    };

    let _ = writeln!(s, r#"<g stroke="none" fill-opacity="0.8">"#);
    for &i in &finite {
        let (px, py) = (sx(points[i][0]), sy(points[i][1]));
        match labels.and_then(|l| l.get(i)) {
            Some(label) => {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="{}"><title>{}</title></circle>"#,
                    fill(i),
                    escape(label)
                );
            }
            None => {
                let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="{}"/>"#, fill(i));
            }
        }
    }
    let _ = writeln!(s, "</g>");

    // Legend.
    let lx = WIDTH - LEGEND - MARGIN + 20.0;
    let _ = writeln!(s, r#"<text x="{lx:.1}" y="{:.1}">{}</text>"#, top, escape(&text.legend_title));
    match colors {
        Coloring::Uniform => {}
        Coloring::Categorical(c) => {
            let mut present: Vec<usize> = finite.iter().map(|&i| c[i]).collect();
            present.sort_unstable();
            present.dedup();
            for (row, cat) in present.iter().enumerate() {
                let y = top + 16.0 + 16.0 * row as f64;
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{}"/><text x="{:.1}" y="{:.1}">{cat}</text>"#,
                    lx + 4.0,
                    y - 4.0,
                    category_color(*cat),
                    lx + 14.0,
                    y
                );
            }
        }
        Coloring::Continuous(_) if c0.is_finite() => {
            for (row, stop) in (0..VIRIDIS.len()).rev().enumerate() {
                let t = stop as f64 / (VIRIDIS.len() - 1) as f64;
                let _ = writeln!(
                    s,
                    r#"<rect x="{lx:.1}" y="{:.1}" width="14" height="14" fill="{}"/>"#,
                    top + 8.0 + 14.0 * row as f64,
                    viridis(t)
                );
            }
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}">{c1:.3}</text><text x="{:.1}" y="{:.1}">{c0:.3}</text>"#,
                lx + 20.0,
                top + 19.0,
                lx + 20.0,
                top + 8.0 + 14.0 * VIRIDIS.len() as f64 - 3.0
            );
        }
        Coloring::Continuous(_) => {}
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain() -> PlotText {
        PlotText {
            title: "t".into(),
            ..Default::default()
        }
    }

    #[test]
    fn empty_plot_has_axes_only() {
        let s = emit_svg_scatter(&[], Coloring::Uniform, None, &plain());
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("<path"));
        assert!(!s.contains("<circle"));
    }

    #[test]
    fn single_point_lands_in_the_centre() {
        let s = emit_svg_scatter(&[[0.0, 0.0]], Coloring::Uniform, None, &plain());
        let cx = (MARGIN + WIDTH - MARGIN - LEGEND) / 2.0;
        let cy = HEIGHT / 2.0;
        assert!(s.contains(&format!(r#"<circle cx="{cx:.2}" cy="{cy:.2}""#)), "{s}");
    }

    #[test]
    fn output_is_deterministic_and_escaped() {
        let pts = [[1.0, 2.0], [3.0, -1.0], [f64::NAN, 0.0]];
        let labels = vec!["a<b".to_string(), "c".into(), "d".into()];
        let a = emit_svg_scatter(&pts, Coloring::Continuous(&[0.0, 1.0, 2.0]), Some(&labels), &plain());
        let b = emit_svg_scatter(&pts, Coloring::Continuous(&[0.0, 1.0, 2.0]), Some(&labels), &plain());
        assert_eq!(a, b);
        assert!(a.contains("a&lt;b"));
        assert_eq!(a.matches("<circle").count(), 2);
    }

    #[test]
    fn color_scales() {
        assert_eq!(viridis(0.0), "#440154");
        assert_eq!(viridis(1.0), "#fde725");
        assert_eq!(viridis(-3.0), "#440154");
        // halfway between stops 3 and 4
        assert_eq!(viridis(0.5), "#23908b");
        assert_eq!(category_color(12), "#2ca02c");
    }
}
