//! Minimal SVG charts for the analysis reports.

use std::collections::BTreeMap;
use std::fmt::Write;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(width: f64, height: f64, title: &str, stamp: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, "<desc>spec_hash={}</desc>", escape(stamp));
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    s
}

fn y_axis(s: &mut String, left: f64, top: f64, h: f64, right: f64) {
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let y = top + h * (1.0 - v);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y}" x2="{right}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{:.0}%</text>"##,
            left - 4.0,
            y + 4.0,
            v * 100.0
        );
    }
}

/// One bar per label with values in `[0, 1]`; optional symmetric error bars.
pub fn bar_chart(title: &str, stamp: &str, bars: &[(String, f64, Option<f64>)]) -> String {
    let (left, top, h) = (50.0, 30.0, 220.0);
    let bw = 36.0;
    let width = left + 20.0 + bw * 1.5 * bars.len().max(1) as f64;
    let mut s = open(width, top + h + 80.0, title, stamp);
    y_axis(&mut s, left, top, h, width - 10.0);
    for (i, (label, v, err)) in bars.iter().enumerate() {
        let x = left + 10.0 + i as f64 * bw * 1.5;
        let bh = h * v.clamp(0.0, 1.0);
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{}" width="{bw}" height="{bh}" fill="{}"/>"#,
            top + h - bh,
            PALETTE[0]
        );
        if let Some(e) = err {
            let cx = x + bw / 2.0;
            let (y0, y1) = (top + h * (1.0 - (v - e)), top + h * (1.0 - (v + e)));
            let _ = writeln!(s, r#"<line x1="{cx}" y1="{y0}" x2="{cx}" y2="{y1}" stroke="black"/>"#);
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" transform="rotate(45 {} {})">{}</text>"#,
            x + 4.0,
            top + h + 14.0,
            x + 4.0,
            top + h + 14.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grouped bars: one group per training combination, one bar per test set.
/// Faded bars are out of distribution.
pub fn grouped_bars(title: &str, stamp: &str, groups: &[(String, Vec<(String, f64, bool)>)]) -> String {
    let (left, top, h) = (50.0, 30.0, 220.0);
    let bw = 18.0;
    let per_group: usize = groups.iter().map(|g| g.1.len()).max().unwrap_or(1);
    let gw = bw * per_group as f64 + 24.0;
    let width = left + 20.0 + gw * groups.len().max(1) as f64 + 120.0;
    let mut s = open(width, top + h + 60.0, title, stamp);
    y_axis(&mut s, left, top, h, width - 130.0);
    let mut colors: BTreeMap<String, &str> = BTreeMap::new();
    for (_, bars) in groups {
        for (test, _, _) in bars {
            let n = colors.len();
            colors.entry(test.clone()).or_insert(PALETTE[n % PALETTE.len()]);
        }
    }
    for (gi, (label, bars)) in groups.iter().enumerate() {
        let x0 = left + 10.0 + gi as f64 * gw;
        for (bi, (test, v, in_dist)) in bars.iter().enumerate() {
            let x = x0 + bi as f64 * bw;
            let bh = h * v.clamp(0.0, 1.0);
            let opacity = if *in_dist { 1.0 } else { 0.35 };
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{}" width="{}" height="{bh}" fill="{}" fill-opacity="{opacity}"/>"#,
                top + h - bh,
                bw - 2.0,
                colors[test]
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            x0 + bw * bars.len() as f64 / 2.0,
            top + h + 16.0,
            escape(label)
        );
    }
    legend(&mut s, width - 110.0, top, &colors);
    s.push_str("</svg>\n");
    s
}

fn legend(s: &mut String, x: f64, y: f64, colors: &BTreeMap<String, &str>) {
    for (i, (name, c)) in colors.iter().enumerate() {
        let yy = y + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{yy}" width="10" height="10" fill="{c}"/><text x="{}" y="{}">{}</text>"#,
            x + 14.0,
            yy + 9.0,
            escape(name)
        );
    }
}

/// Square heatmap. `cells[row][col]` holds the printed value and a color
/// scalar in `[-1, 1]` (negative red, positive blue).
pub fn heatmap(title: &str, stamp: &str, cells: &[Vec<Option<(String, f64)>>]) -> String {
    let k = cells.len().max(1);
    let cs = 240.0 / k as f64;
    let (left, top) = (20.0, 30.0);
    let mut s = open(left * 2.0 + cs * k as f64, top + cs * k as f64 + 20.0, title, stamp);
    for (r, row) in cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            let (x, y) = (left + c as f64 * cs, top + r as f64 * cs);
            let (fill, text) = match cell {
                Some((text, t)) => {
                    let t = t.clamp(-1.0, 1.0);
                    let a = (t.abs() * 200.0) as u8;
                    let fill = if t >= 0.0 {
                        format!("rgb({},{},255)", 255 - a, 255 - a)
                    } else {
                        format!("rgb(255,{},{})", 255 - a, 255 - a)
                    };
                    (fill, text.clone())
                }
                None => ("#eee".to_string(), "n/a".to_string()),
            };
            let _ = writeln!(
                s,
                r#"<rect x="{x}" y="{y}" width="{cs}" height="{cs}" fill="{fill}" stroke="white"/><text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                x + cs / 2.0,
                y + cs / 2.0 + 4.0,
                escape(&text)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Dots per category along x (bins), values in `[0, 1]`, plus a mean tick.
pub fn strip_plot(title: &str, stamp: &str, columns: &[(String, Vec<f64>, Option<f64>)]) -> String {
    let (left, top, h) = (50.0, 30.0, 220.0);
    let cw = 80.0;
    let width = left + 20.0 + cw * columns.len().max(1) as f64;
    let mut s = open(width, top + h + 40.0, title, stamp);
    y_axis(&mut s, left, top, h, width - 10.0);
    for (i, (label, values, mean)) in columns.iter().enumerate() {
        let cx = left + 10.0 + cw * (i as f64 + 0.5);
        for (j, v) in values.iter().enumerate() {
            let jitter = ((j * 37) % 21) as f64 - 10.0;
            let _ = writeln!(
                s,
                r#"<circle cx="{}" cy="{}" r="3" fill="{}" fill-opacity="0.6"/>"#,
                cx + jitter,
                top + h * (1.0 - v.clamp(0.0, 1.0)),
                PALETTE[0]
            );
        }
        if let Some(m) = mean {
            let y = top + h * (1.0 - m.clamp(0.0, 1.0));
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/>"#,
                cx - 25.0,
                cx + 25.0,
                PALETTE[3]
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{cx}" y="{}" text-anchor="middle">{}</text>"#,
            top + h + 16.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// 2-D scatter colored by category.
pub fn scatter(title: &str, stamp: &str, points: &[([f64; 2], String)]) -> String {
    let size = 400.0;
    let (left, top) = (20.0, 30.0);
    let mut s = open(size + 160.0, size + top + 20.0, title, stamp);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for (p, _) in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let span = |d: usize| (hi[d] - lo[d]).max(1e-12);
    let mut colors: BTreeMap<String, &str> = BTreeMap::new();
    for (_, c) in points {
        let n = colors.len();
        colors.entry(c.clone()).or_insert(PALETTE[n % PALETTE.len()]);
    }
    for (p, c) in points {
        let x = left + size * (p[0] - lo[0]) / span(0);
        let y = top + size * (1.0 - (p[1] - lo[1]) / span(1));
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{}"/>"#, colors[c]);
    }
    legend(&mut s, left + size + 20.0, top, &colors);
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_closed_svg_with_stamp() {
        let charts = [
            bar_chart("t", "abc", &[("A&B".into(), 0.5, Some(0.1))]),
            grouped_bars("t", "abc", &[("x".into(), vec![("y".into(), 0.3, false)])]),
            heatmap("t", "abc", &[vec![Some(("1".into(), -0.5)), None]]),
            strip_plot("t", "abc", &[("20-40".into(), vec![0.1, 0.9], Some(0.5))]),
            scatter("t", "abc", &[([0.0, 1.0], "G00".into()), ([2.0, 3.0], "G01".into())]),
        ];
        for c in charts {
            assert!(c.starts_with("<svg"));
            assert!(c.trim_end().ends_with("</svg>"));
            assert!(c.contains("spec_hash=abc"));
        }
        assert!(bar_chart("t", "s", &[("A&B".into(), 0.5, None)]).contains("A&amp;B"));
    }
}
