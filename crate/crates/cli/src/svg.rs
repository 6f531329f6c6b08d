//! Minimal line plots written as SVG text.

use std::fmt::Write;

pub struct Series<'a> {
    pub name: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 820.0;
const H: f64 = 420.0;
const ML: f64 = 70.0;
const MR: f64 = 20.0;
const MT: f64 = 40.0;
const MB: f64 = 50.0;
const MAX_POINTS: usize = 4000;

fn thin(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let stride = points.len().div_ceil(MAX_POINTS).max(1);
    let mut out: Vec<_> = points.iter().step_by(stride).copied().collect();
    if let Some(&last) = points.last() {
        if out.last() != Some(&last) {
            out.push(last);
        }
    }
    out
}

/// Plots the series against a shared x axis. With `log_y`, nonpositive
/// values are dropped. `marks` draws thin vertical lines (e.g. jumps).
pub fn line_plot(title: &str, y_label: &str, series: &[Series], log_y: bool, marks: &[f64]) -> String {
    let ty = |y: f64| if log_y { y.log10() } else { y };
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            thin(&s.points)
                .into_iter()
                .filter(|&(x, y)| x.is_finite() && y.is_finite() && (!log_y || y > 0.0))
                .map(|(x, y)| (x, ty(y)))
                .collect()
        })
        .collect();
    let all = pts.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
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
    let px = |x: f64| ML + (x - x0) / (x1 - x0) * (W - ML - MR);
    let py = |y: f64| H - MB - (y - y0) / (y1 - y0) * (H - MT - MB);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
    for &m in marks {
        if m >= x0 && m <= x1 {
            let x = px(m);
            let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{MT}" x2="{x:.2}" y2="{}" stroke="#bbb" stroke-width="0.5"/>"##, H - MB);
        }
    }
    let _ = writeln!(
        s,
        r#"<polyline points="{ML},{MT} {ML},{b} {r},{b}" fill="none" stroke="black"/>"#,
        b = H - MB,
        r = W - MR
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let ylab = if log_y { format!("1e{fy:.1}") } else { format!("{fy:.3e}") };
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{fx:.3}</text>"#, px(fx), H - MB + 18.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{ylab}</text>"#, ML - 6.0, py(fy) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">t</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{y}" text-anchor="middle" transform="rotate(-90 16 {y})">{}</text>"#,
        escape(y_label),
        y = H / 2.0
    );
    for (i, (ser, p)) in series.iter().zip(&pts).enumerate() {
        let mut line = String::new();
        for &(x, y) in p {
            let _ = write!(line, "{:.2},{:.2} ", px(x), py(y));
        }
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.2"/>"#, line.trim_end(), ser.color);
        let ly = MT + 14.0 * i as f64 + 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{}">{}</text>"#, W - MR - 160.0, ser.color, escape(ser.name));
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
    fn well_formed() {
        let s = line_plot(
            "U <t>",
            "U",
            &[Series { name: "U", color: "black", points: vec![(0.0, 1.0), (1.0, 0.1), (2.0, 0.0)] }],
            true,
            &[0.5],
        );
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("U &lt;t&gt;"));
        assert_eq!(s.matches("<polyline").count(), 2);
    }

    #[test]
    fn empty_series() {
        let s = line_plot("empty", "y", &[], false, &[]);
        assert!(s.contains("</svg>"));
    }
}
