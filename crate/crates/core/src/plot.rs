//! Minimal line-plot writer. Emits self-describing SVG so curves can be
//! inspected without a plotting stack; artifacts stay deterministic.

use std::fmt::Write as _;

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 16.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 44.0;

/// Render one or more (x, y) series as an SVG line plot. With `log_y` the
/// vertical axis is base-10 logarithmic; non-positive values are dropped
/// from the plot (but keep their place on the x axis).
pub fn line_plot_svg(title: &str, series: &[Series<'_>], log_y: bool) -> String {
    let transform = |y: f64| -> Option<f64> {
        if log_y {
            (y > 0.0).then(|| y.log10())
        } else {
            Some(y)
        }
    };

    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            if let Some(ty) = transform(y) {
                xs.push(x);
                ys.push(ty);
            }
        }
    }
    let (x_min, x_max) = bounds(&xs);
    let (y_min, y_max) = bounds(&ys);
    let x_span = (x_max - x_min).max(f64::MIN_POSITIVE);
    let y_span = (y_max - y_min).max(f64::MIN_POSITIVE);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + (x - x_min) / x_span * plot_w;
    let py = |ty: f64| MARGIN_TOP + (y_max - ty) / y_span * plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="18" font-family="monospace" font-size="13">{}</text>"#,
        MARGIN_LEFT,
        escape(title)
    );
    // Axes.
    let _ = writeln!(
        out,
        r#"<path d="M {l} {t} L {l} {b} L {r} {b}" stroke="black" fill="none"/>"#,
        l = MARGIN_LEFT,
        t = MARGIN_TOP,
        b = MARGIN_TOP + plot_h,
        r = MARGIN_LEFT + plot_w
    );
    let ylab = |v: f64| -> String {
        if log_y {
            format!("1e{v:.1}")
        } else {
            format!("{v:.3}")
        }
    };
    let _ = writeln!(
        out,
        r#"<text x="4" y="{}" font-family="monospace" font-size="11">{}</text>"#,
        MARGIN_TOP + 4.0,
        ylab(y_max)
    );
    let _ = writeln!(
        out,
        r#"<text x="4" y="{}" font-family="monospace" font-size="11">{}</text>"#,
        MARGIN_TOP + plot_h,
        ylab(y_min)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="monospace" font-size="11">{x_min}</text>"#,
        MARGIN_LEFT,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="monospace" font-size="11" text-anchor="end">{x_max}</text>"#,
        MARGIN_LEFT + plot_w,
        HEIGHT - 20.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = String::new();
        let mut pen_down = false;
        for &(x, y) in &s.points {
            match transform(y) {
                Some(ty) => {
                    let cmd = if pen_down { 'L' } else { 'M' };
                    let _ = write!(path, "{cmd} {} {} ", px(x), py(ty));
                    pen_down = true;
                }
                None => pen_down = false,
            }
        }
        let _ = writeln!(
            out,
            r#"<path d="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#,
            path.trim_end()
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="monospace" font-size="11" fill="{color}">{}</text>"#,
            MARGIN_LEFT + plot_w - 150.0,
            MARGIN_TOP + 16.0 * (i as f64 + 1.0),
            escape(s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 1.0);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn emits_one_polyline_per_series() {
        let svg = line_plot_svg(
            "test",
            &[
                Series {
                    label: "a",
                    points: vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.25)],
                },
                Series {
                    label: "b",
                    points: vec![(0.0, 0.9), (1.0, 0.8)],
                },
            ],
            true,
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("stroke-width").count(), 2);
        assert!(svg.contains(">a<"));
        assert!(svg.contains(">b<"));
    }

    #[test]
    fn log_scale_drops_non_positive_points() {
        let svg = line_plot_svg(
            "log",
            &[Series {
                label: "curve",
                points: vec![(0.0, 1.0), (1.0, 0.0), (2.0, 0.1)],
            }],
            true,
        );
        // The zero breaks the path into two pen-down segments.
        let path_line = svg
            .lines()
            .find(|l| l.contains("stroke-width"))
            .unwrap()
            .to_string();
        assert_eq!(path_line.matches('M').count(), 2);
    }

    #[test]
    fn output_is_deterministic() {
        let make = || {
            line_plot_svg(
                "det",
                &[Series {
                    label: "x",
                    points: vec![(0.0, 0.3), (5.0, 0.001)],
                }],
                false,
            )
        };
        assert_eq!(make(), make());
    }
}
