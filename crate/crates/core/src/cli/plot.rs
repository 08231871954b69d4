//! Minimal SVG charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = write!(
        out,
        r##"<path d="M{PAD} {PAD} V{} H{}" stroke="#333" fill="none"/>"##,
        H - PAD,
        W - PAD
    );
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn axis_labels(out: &mut String, lo: f64, hi: f64) {
    for (v, y) in [(hi, PAD), (lo, H - PAD)] {
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{v:.4}</text>"#,
            PAD - 4.0,
            y + 4.0
        );
    }
}

/// One polyline per series over a shared step axis; non-finite points are skipped.
pub fn line_chart(title: &str, series: &[(String, Vec<f64>)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (lo, hi) = range(series.iter().flat_map(|(_, v)| v.iter().copied()));
    let n = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max(2);
    axis_labels(&mut out, lo, hi);
    for (i, (name, values)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(k, v)| {
                let x = PAD + (W - 2.0 * PAD) * k as f64 / (n - 1) as f64;
                let y = H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let _ = write!(
            out,
            r#"<polyline points="{}" stroke="{color}" fill="none" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" fill="{color}" font-family="sans-serif" font-size="12">{}</text>"#,
            W - PAD - 120.0,
            PAD + 16.0 * (i as f64 + 1.0),
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Vertical bars from zero (or the minimum, if negative).
pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (lo, hi) = range(bars.iter().map(|(_, v)| *v).chain([0.0]));
    axis_labels(&mut out, lo, hi);
    let slot = (W - 2.0 * PAD) / bars.len().max(1) as f64;
    let y_of = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = PAD + slot * i as f64 + slot * 0.15;
        let (top, bottom) = (y_of(v.max(0.0)), y_of(v.min(0.0)));
        if v.is_finite() {
            let _ = write!(
                out,
                r#"<rect x="{x:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                slot * 0.7,
                (bottom - top).max(0.5),
                COLORS[i % COLORS.len()]
            );
        }
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            x + slot * 0.35,
            H - PAD + 16.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_has_one_polyline_per_series() {
        let svg = line_chart("loss", &[("a".into(), vec![3.0, 2.0, 1.0]), ("b<c".into(), vec![1.0, f64::NAN])]);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b&lt;c"));
    }

    #[test]
    fn bar_chart_handles_constant_and_empty_input() {
        let svg = bar_chart("fd", &[("x".into(), 0.0), ("y".into(), 0.0)]);
        assert_eq!(svg.matches("<rect").count(), 3);
        assert!(bar_chart("none", &[]).ends_with("</svg>\n"));
    }
}
