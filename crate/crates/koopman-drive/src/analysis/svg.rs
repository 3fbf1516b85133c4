//! Minimal deterministic SVG line plots for the comparison reports.
//!
//! Coordinates are formatted with fixed precision so identical inputs always
//! produce byte-identical files.

use std::fmt::Write as _;

pub const WIDTH: f64 = 960.0;
pub const HEIGHT: f64 = 560.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 58.0;

pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f",
];

/// One polyline on the chart.
pub struct Series {
    pub label: String,
    pub color: String,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / target as f64;
    let mag = 10.0_f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    } * mag;
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-12 * step.abs() {
        // Avoid "-0".
        out.push(if t.abs() < 1e-12 { 0.0 } else { t });
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if !(0.01..10000.0).contains(&a) {
        format!("{v:.1e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

impl Chart {
    pub fn render(&self) -> String {
        let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for &(x, y) in &s.points {
                x_lo = x_lo.min(x);
                x_hi = x_hi.max(x);
                y_lo = y_lo.min(y);
                y_hi = y_hi.max(y);
            }
        }
        if !x_lo.is_finite() {
            x_lo = 0.0;
            x_hi = 1.0;
            y_lo = 0.0;
            y_hi = 1.0;
        }
        if y_hi - y_lo < 1e-12 {
            y_lo -= 1.0;
            y_hi += 1.0;
        }
        let y_pad = 0.05 * (y_hi - y_lo);
        y_lo -= y_pad;
        y_hi += y_pad;

        let plot_w = WIDTH - MARGIN_L - MARGIN_R;
        let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
        let to_px = |x: f64, y: f64| {
            (
                MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w,
                MARGIN_T + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h,
            )
        };

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">"
        );
        let _ = writeln!(
            svg,
            "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
            MARGIN_L + plot_w / 2.0,
            xml_escape(&self.title)
        );

        // Grid and ticks.
        for t in nice_ticks(x_lo, x_hi, 8) {
            let (px, _) = to_px(t, y_lo);
            let _ = writeln!(
                svg,
                "<line x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"#dddddd\"/>",
                MARGIN_T,
                MARGIN_T + plot_h
            );
            let _ = writeln!(
                svg,
                "<text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"12\">{}</text>",
                MARGIN_T + plot_h + 18.0,
                fmt_tick(t)
            );
        }
        for t in nice_ticks(y_lo, y_hi, 6) {
            let (_, py) = to_px(x_lo, t);
            let _ = writeln!(
                svg,
                "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{:.2}\" y2=\"{py:.2}\" stroke=\"#dddddd\"/>",
                MARGIN_L,
                MARGIN_L + plot_w
            );
            let _ = writeln!(
                svg,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-size=\"12\">{}</text>",
                MARGIN_L - 6.0,
                py + 4.0,
                fmt_tick(t)
            );
        }
        // Axes.
        let _ = writeln!(
            svg,
            "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" \
             fill=\"none\" stroke=\"black\"/>"
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
            MARGIN_L + plot_w / 2.0,
            HEIGHT - 14.0,
            xml_escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            "<text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\" \
             transform=\"rotate(-90 18 {:.1})\">{}</text>",
            MARGIN_T + plot_h / 2.0,
            MARGIN_T + plot_h / 2.0,
            xml_escape(&self.y_label)
        );

        // Series.
        for s in &self.series {
            if s.points.is_empty() {
                continue;
            }
            let dash = if s.dashed {
                " stroke-dasharray=\"6 4\""
            } else {
                ""
            };
            let mut d = String::new();
            for (i, &(x, y)) in s.points.iter().enumerate() {
                let (px, py) = to_px(x.clamp(x_lo, x_hi), y.clamp(y_lo, y_hi));
                let _ = write!(d, "{}{px:.2},{py:.2}", if i == 0 { "" } else { " " });
            }
            let _ = writeln!(
                svg,
                "<polyline points=\"{d}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.3\"{dash}/>",
                s.color
            );
        }

        // Legend.
        let mut ly = MARGIN_T + 14.0;
        for s in &self.series {
            let lx = MARGIN_L + plot_w - 190.0;
            let dash = if s.dashed {
                " stroke-dasharray=\"6 4\""
            } else {
                ""
            };
            let _ = writeln!(
                svg,
                "<line x1=\"{lx:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{}\" \
                 stroke-width=\"1.6\"{dash}/>",
                ly - 4.0,
                lx + 26.0,
                ly - 4.0,
                s.color
            );
            let _ = writeln!(
                svg,
                "<text x=\"{:.1}\" y=\"{ly:.1}\" font-size=\"12\">{}</text>",
                lx + 32.0,
                xml_escape(&s.label)
            );
            ly += 16.0;
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Thins a series to at most `max_points` by striding, keeping endpoints.
pub fn decimate(points: &[(f64, f64)], max_points: usize) -> Vec<(f64, f64)> {
    if points.len() <= max_points || max_points < 2 {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(max_points);
    let mut out: Vec<(f64, f64)> = points.iter().copied().step_by(stride).collect();
    if let (Some(&last_in), Some(&last_out)) = (points.last(), out.last()) {
        if last_in != last_out {
            out.push(last_in);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_deterministic_and_well_formed() {
        let chart = Chart {
            title: "demo".to_string(),
            x_label: "t".to_string(),
            y_label: "y".to_string(),
            series: vec![Series {
                label: "s1".to_string(),
                color: PALETTE[0].to_string(),
                dashed: false,
                points: (0..100)
                    .map(|i| (i as f64, (i as f64 * 0.1).sin()))
                    .collect(),
            }],
        };
        let a = chart.render();
        let b = chart.render();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.ends_with("</svg>\n"));
        assert!(a.contains("<polyline"));
        assert!(a.contains("demo"));
    }

    #[test]
    fn decimation_keeps_endpoints_and_bound() {
        let pts: Vec<(f64, f64)> = (0..10_000).map(|i| (i as f64, i as f64)).collect();
        let thin = decimate(&pts, 1500);
        assert!(thin.len() <= 1501);
        assert_eq!(thin.first(), pts.first());
        assert_eq!(thin.last(), pts.last());
    }

    #[test]
    fn empty_chart_still_renders() {
        let chart = Chart {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            series: vec![],
        };
        assert!(chart.render().contains("</svg>"));
    }
}
