//! Minimal SVG line chart with error bars; no external dependencies.

use std::fmt::Write;

pub struct Series<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    /// Half-height of each error bar (same length as `y`), if any.
    pub err: Option<&'a [f64]>,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 60.0;

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let m = 0.05 * (hi - lo);
        (lo - m, hi + m)
    }
}

/// Render `s` as a standalone SVG document.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, s: &Series<'_>) -> String {
    let err = |i: usize| s.err.map_or(0.0, |e| e[i]);
    let (x0, x1) = range(s.x.iter().copied());
    let (y0, y1) = range((0..s.y.len()).flat_map(|i| [s.y[i] - err(i), s.y[i] + err(i)]));
    let px = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let (l, r, t, b) = (PAD, W - PAD, PAD, H - PAD);
    let _ = writeln!(out, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="black"/>"#);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{}" text-anchor="middle">{xv:.2}</text>"#, px(xv), b + 18.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#, l - 6.0, py(yv) + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );

    let pts: Vec<String> = s.x.iter().zip(s.y).map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
    let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, pts.join(" "));
    for i in 0..s.x.len() {
        let (cx, cy) = (px(s.x[i]), py(s.y[i]));
        if err(i) > 0.0 {
            let _ = writeln!(
                out,
                r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="steelblue"/>"#,
                py(s.y[i] - err(i)),
                py(s.y[i] + err(i))
            );
        }
        let _ = writeln!(out, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="steelblue"/>"#);
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_one_marker_per_point() {
        let x = [0.0, 0.5, 0.9];
        let y = [4.0, 3.9, 3.7];
        let svg = line_chart("t", "gamma", "RW", &Series { x: &x, y: &y, err: None });
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<circle").count(), 3);
    }

    #[test]
    fn constant_series_does_not_divide_by_zero() {
        let svg = line_chart("t", "x", "y", &Series { x: &[1.0], y: &[2.0], err: Some(&[0.0]) });
        assert!(!svg.contains("NaN"));
    }
}
