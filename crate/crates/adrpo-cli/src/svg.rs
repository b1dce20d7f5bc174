//! Static SVG 1.1 emission for trade-off trajectories, no plotting framework.
//!
//! Each series draws one `<g class="trajectory">` group: per-iteration
//! circles with an opacity ramp from early (transparent) to late (solid),
//! and a star polygon at the final checkpoint.

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 58.0;

/// One run-seed trajectory in (x = secondary metric, y = reward) space.
#[derive(Debug, Clone)]
pub struct TrajectorySeries {
    pub label: String,
    pub rgb: (u8, u8, u8),
    pub points: Vec<(f64, f64)>,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn nice_ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return vec![lo];
    }
    (0..=count)
        .map(|i| lo + (hi - lo) * i as f64 / count as f64)
        .collect()
}

fn star_points(cx: f64, cy: f64, r: f64) -> String {
    let mut pts = Vec::with_capacity(10);
    for i in 0..10 {
        let angle = std::f64::consts::PI * (i as f64 / 5.0) - std::f64::consts::FRAC_PI_2;
        let radius = if i % 2 == 0 { r } else { r * 0.45 };
        pts.push(format!(
            "{:.2},{:.2}",
            cx + radius * angle.cos(),
            cy + radius * angle.sin()
        ));
    }
    pts.join(" ")
}

/// Renders the trajectories into a standalone SVG document.
pub fn trajectory_svg(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[TrajectorySeries],
) -> String {
    let all_points: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .collect();
    let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &all_points {
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y);
        y_hi = y_hi.max(y);
    }
    if all_points.is_empty() {
        x_lo = 0.0;
        x_hi = 1.0;
        y_lo = 0.0;
        y_hi = 1.0;
    }
    // Pad degenerate ranges so points do not land on the frame.
    let x_pad = ((x_hi - x_lo) * 0.08).max(1e-9);
    let y_pad = ((y_hi - y_lo) * 0.08).max(1e-9);
    x_lo -= x_pad;
    x_hi += x_pad;
    y_lo -= y_pad;
    y_hi += y_pad;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = move |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = move |y: f64| MARGIN_TOP + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;

    let mut out = String::with_capacity(16 * 1024);
    out.push_str(r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    out.push('\n');
    out.push_str(&format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    ));
    out.push('\n');
    out.push_str(&format!(
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    ));
    out.push('\n');
    out.push_str(&format!(
        r#"<text x="{:.1}" y="26" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        escape(title)
    ));
    out.push('\n');

    // Frame.
    out.push_str(&format!(
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="black" stroke-width="1"/>"#
    ));
    out.push('\n');

    // Ticks and grid.
    for tx in nice_ticks(x_lo, x_hi, 5) {
        let px = sx(tx);
        out.push_str(&format!(
            r#"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="black" stroke-width="1"/>"#,
            MARGIN_TOP + plot_h,
            MARGIN_TOP + plot_h + 6.0
        ));
        out.push_str(&format!(
            r#"<text x="{px:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{tx:.3}</text>"#,
            MARGIN_TOP + plot_h + 20.0
        ));
        out.push('\n');
    }
    for ty in nice_ticks(y_lo, y_hi, 5) {
        let py = sy(ty);
        out.push_str(&format!(
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{MARGIN_LEFT}" y2="{py:.1}" stroke="black" stroke-width="1"/>"#,
            MARGIN_LEFT - 6.0
        ));
        out.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{ty:.3}</text>"#,
            MARGIN_LEFT - 10.0,
            py + 4.0
        ));
        out.push('\n');
    }
    out.push_str(&format!(
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 14.0,
        escape(x_label)
    ));
    out.push('\n');
    out.push_str(&format!(
        r#"<text x="18" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    ));
    out.push('\n');

    // Trajectories.
    for s in series {
        let (r, g, b) = s.rgb;
        let color = format!("rgb({r},{g},{b})");
        out.push_str(&format!(
            r#"<g class="trajectory" data-label="{}">"#,
            escape(&s.label)
        ));
        out.push('\n');
        let n = s.points.len();
        for (i, &(x, y)) in s.points.iter().enumerate() {
            let alpha = if n <= 1 {
                1.0
            } else {
                0.12 + 0.88 * i as f64 / (n - 1) as f64
            };
            out.push_str(&format!(
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.6" fill="{color}" fill-opacity="{alpha:.3}"/>"#,
                sx(x),
                sy(y)
            ));
            out.push('\n');
        }
        if let Some(&(x, y)) = s.points.last() {
            out.push_str(&format!(
                r#"<polygon points="{}" fill="{color}" stroke="black" stroke-width="0.8"/>"#,
                star_points(sx(x), sy(y), 8.0)
            ));
            out.push('\n');
        }
        out.push_str("</g>\n");
    }

    // Legend.
    let legend_x = MARGIN_LEFT + plot_w + 16.0;
    for (i, s) in series.iter().enumerate() {
        let y = MARGIN_TOP + 12.0 + i as f64 * 20.0;
        let (r, g, b) = s.rgb;
        out.push_str(&format!(
            r#"<circle cx="{legend_x:.1}" cy="{y:.1}" r="4" fill="rgb({r},{g},{b})"/>"#
        ));
        out.push_str(&format!(
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
            legend_x + 10.0,
            y + 4.0,
            escape(&s.label)
        ));
        out.push('\n');
    }

    out.push_str("</svg>\n");
    out
}
