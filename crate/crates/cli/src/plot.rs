//! SVG regret plots.
//!
//! Each series draws its mean average regret as a line over a shaded band of
//! one standard deviation. The output depends only on the input values.

use std::fmt::Write;

use fedpne::harness::RegretBand;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
/// Points per drawn curve; longer series are thinned evenly.
const MAX_POINTS: usize = 400;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub band: RegretBand,
}

fn thin(len: usize) -> Vec<usize> {
    if len <= MAX_POINTS {
        return (0..len).collect();
    }
    let mut idx: Vec<usize> = (0..MAX_POINTS)
        .map(|j| j * (len - 1) / (MAX_POINTS - 1))
        .collect();
    idx.dedup();
    idx
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Renders the series as an SVG document.
pub fn render_svg(series: &[Series], title: &str) -> String {
    let x_max = series
        .iter()
        .filter_map(|s| s.band.rounds.last().copied())
        .max()
        .unwrap_or(1)
        .max(2) as f64;
    let y_max = series
        .iter()
        .flat_map(|s| s.band.mean.iter().zip(&s.band.std).map(|(m, d)| m + d))
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let y_max = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - 1.0) / (x_max - 1.0) * plot_w;
    let py = |y: f64| TOP + plot_h - y / y_max * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );

    // axes and ticks
    let _ = writeln!(
        svg,
        r#"<path d="M{LEFT:.1},{TOP:.1} V{:.1} H{:.1}" fill="none" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w
    );
    for j in 0..=5 {
        let xv = 1.0 + (x_max - 1.0) * j as f64 / 5.0;
        let x = px(xv);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 20.0,
            tick_label(xv.round())
        );
        let yv = y_max * j as f64 / 5.0;
        let y = py(yv);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{LEFT:.1}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">round</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(20,{:.1}) rotate(-90)" text-anchor="middle">average cumulative regret</text>"#,
        TOP + plot_h / 2.0
    );

    for (n, s) in series.iter().enumerate() {
        let color = PALETTE[n % PALETTE.len()];
        let idx = thin(s.band.rounds.len());
        if idx.is_empty() {
            continue;
        }
        let at = |j: usize| px(s.band.rounds[j] as f64);
        let mut band = String::new();
        for &j in &idx {
            let _ = write!(band, "{:.2},{:.2} ", at(j), py(s.band.mean[j] + s.band.std[j]));
        }
        for &j in idx.iter().rev() {
            let lower = (s.band.mean[j] - s.band.std[j]).max(0.0);
            let _ = write!(band, "{:.2},{:.2} ", at(j), py(lower));
        }
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.trim_end()
        );
        let line: Vec<String> = idx
            .iter()
            .map(|&j| format!("{:.2},{:.2}", at(j), py(s.band.mean[j])))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * n as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
