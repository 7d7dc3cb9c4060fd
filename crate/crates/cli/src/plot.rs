//! Static SVG line plot of quantile curves against rank.

use std::fmt::Write;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 720.0;
const H: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;

/// Ranks outside `[lo, hi]` are left out so unbounded tails do not flatten the picture.
pub fn render(series: &[Series], (lo, hi): (f64, f64)) -> String {
    let visible = |&(s, v): &(f64, f64)| s >= lo && s <= hi && v.is_finite();
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in series.iter().flat_map(|s| s.points.iter()).filter(|p| visible(p)) {
        y0 = y0.min(p.1);
        y1 = y1.max(p.1);
    }
    if !(y0 < y1) {
        let c = if y0.is_finite() { y0 } else { 0.0 };
        (y0, y1) = (c - 1.0, c + 1.0);
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let px = |s: f64| LEFT + s * (W - LEFT - RIGHT);
    let py = |v: f64| TOP + (y1 - v) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<g stroke="black" fill="none"><line x1="{LEFT}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{b}"/></g>"#,
        b = H - BOTTOM,
        r = W - RIGHT
    );
    out.push_str(r#"<g font-family="sans-serif" font-size="12">"#);
    out.push('\n');
    for i in 0..=5 {
        let s = i as f64 / 5.0;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{s:.1}</text>"#, px(s), H - BOTTOM + 18.0);
        let v = y0 + (y1 - y0) * i as f64 / 5.0;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, LEFT - 6.0, py(v) + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">rank</text>"#, px(0.5), H - 10.0);
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">wealth</text>"#,
        py(0.5 * (y0 + y1)),
        py(0.5 * (y0 + y1))
    );
    for (i, s) in series.iter().enumerate() {
        let y = TOP + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            LEFT + 12.0,
            LEFT + 36.0,
            s.color,
            LEFT + 42.0,
            y + 4.0,
            s.label
        );
    }
    out.push_str("</g>\n");
    for s in series {
        let pts: Vec<String> =
            s.points.iter().filter(|p| visible(p)).map(|&(r, v)| format!("{:.2},{:.2}", px(r), py(v))).collect();
        if pts.is_empty() {
            continue;
        }
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            s.color,
            pts.join(" ")
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_polyline_per_nonempty_series() {
        let a = Series { label: "a", color: "red", points: vec![(0.1, 1.0), (0.9, 2.0)] };
        let b = Series { label: "b", color: "blue", points: vec![] };
        let svg = render(&[a, b], (0.0, 1.0));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }
}
