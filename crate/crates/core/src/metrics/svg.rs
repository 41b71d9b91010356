use std::fmt::Write;

use super::report::BoxStats;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 50.0;

/// Static box plot, one box per labelled group; missing groups are left blank.
pub fn box_plot_svg(title: &str, boxes: &[(String, Option<BoxStats>)]) -> String {
    let present: Vec<&BoxStats> = boxes.iter().filter_map(|(_, b)| b.as_ref()).collect();
    let (mut lo, mut hi) = present
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| (lo.min(b.min), hi.max(b.max)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let y = |v: f64| MARGIN + plot_h * (1.0 - (v - lo) / (hi - lo));
    let slot = (WIDTH - 2.0 * MARGIN) / boxes.len().max(1) as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{}" stroke="black"/>"#,
        HEIGHT - MARGIN
    );
    for (v, label) in [(lo, lo), (hi, hi)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="10">{label:.3}</text>"#,
            MARGIN - 4.0,
            y(v) + 3.0
        );
    }
    for (i, (label, b)) in boxes.iter().enumerate() {
        let cx = MARGIN + slot * (i as f64 + 0.5);
        let half = slot * 0.3;
        let _ = writeln!(
            s,
            r#"<text x="{cx:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10">{}</text>"#,
            HEIGHT - MARGIN + 16.0,
            escape(label)
        );
        let Some(b) = b else { continue };
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
            y(b.max),
            y(b.min)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#9ecae1" stroke="black"/>"##,
            cx - half,
            y(b.q3),
            2.0 * half,
            (y(b.q1) - y(b.q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y(b.median),
            cx + half,
            y(b.median)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
