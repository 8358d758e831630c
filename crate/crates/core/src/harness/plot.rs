use std::fmt::Write as _;

use thiserror::Error;

use super::metrics::AggregateRow;

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("no curves to plot")]
    Empty,
    #[error("curve `{0}` has no rows")]
    EmptyCurve(String),
    #[error("step grid of `{0}` differs from `{1}`")]
    MismatchedSteps(String, String),
}

/// One labelled aggregate curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub rows: Vec<AggregateRow>,
}

const PALETTE: [&str; 8] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666"];
const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_T: f64 = 36.0;
const GAP: f64 = 70.0;

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Two panels (main-goal and random-goal success) with a mean line and a
/// ±1 standard error band per curve.
pub fn curves_svg(curves: &[Curve]) -> Result<String, PlotError> {
    let first = curves.first().ok_or(PlotError::Empty)?;
    for c in curves {
        if c.rows.is_empty() {
            return Err(PlotError::EmptyCurve(c.label.clone()));
        }
        let same = c.rows.len() == first.rows.len() && c.rows.iter().zip(&first.rows).all(|(a, b)| a.step == b.step);
        if !same {
            return Err(PlotError::MismatchedSteps(c.label.clone(), first.label.clone()));
        }
    }
    let steps: Vec<u64> = first.rows.iter().map(|r| r.step).collect();
    let (lo, hi) = (steps[0] as f64, *steps.last().unwrap() as f64);
    let span = if hi > lo { hi - lo } else { 1.0 };

    let legend_h = 18.0 * curves.len() as f64;
    let width = MARGIN_L + 2.0 * PANEL_W + GAP + 20.0;
    let height = MARGIN_T + PANEL_H + 50.0 + legend_h;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">"#,
        fmt(width),
        fmt(height),
        fmt(width),
        fmt(height)
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    type Pick = fn(&AggregateRow) -> (f64, f64);
    let panels: [(&str, Pick); 2] = [
        ("main-goal success", |r| (r.main_mean, r.main_se)),
        ("random-goal success", |r| (r.random_mean, r.random_se)),
    ];
    for (p, (title, pick)) in panels.iter().enumerate() {
        let x0 = MARGIN_L + p as f64 * (PANEL_W + GAP);
        let y0 = MARGIN_T;
        let px = |step: u64| x0 + (step as f64 - lo) / span * PANEL_W;
        let py = |v: f64| y0 + (1.0 - v.clamp(0.0, 1.0)) * PANEL_H;

        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{title}</text>"#,
            fmt(x0 + PANEL_W / 2.0),
            fmt(y0 - 12.0)
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
            fmt(x0),
            fmt(y0),
            fmt(PANEL_W),
            fmt(PANEL_H)
        );
        for v in [0.0, 0.5, 1.0] {
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                fmt(x0 - 6.0),
                fmt(py(v) + 4.0),
                fmt(v)
            );
        }
        for s in [steps[0], steps[steps.len() / 2], *steps.last().unwrap()] {
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle">{s}</text>"#,
                fmt(px(s)),
                fmt(y0 + PANEL_H + 16.0)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">environment steps</text>"#,
            fmt(x0 + PANEL_W / 2.0),
            fmt(y0 + PANEL_H + 34.0)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">success rate</text>"#,
            fmt(x0 - 36.0),
            fmt(y0 + PANEL_H / 2.0),
            fmt(x0 - 36.0),
            fmt(y0 + PANEL_H / 2.0)
        );

        for (i, c) in curves.iter().enumerate() {
            let colour = PALETTE[i % PALETTE.len()];
            let upper: Vec<String> = c
                .rows
                .iter()
                .map(|r| {
                    let (m, se) = pick(r);
                    format!("{},{}", fmt(px(r.step)), fmt(py(m + se)))
                })
                .collect();
            let lower: Vec<String> = c
                .rows
                .iter()
                .rev()
                .map(|r| {
                    let (m, se) = pick(r);
                    format!("{},{}", fmt(px(r.step)), fmt(py(m - se)))
                })
                .collect();
            let _ = writeln!(
                svg,
                r#"<polygon points="{} {}" fill="{colour}" fill-opacity="0.2" stroke="none"/>"#,
                upper.join(" "),
                lower.join(" ")
            );
            let line: Vec<String> =
                c.rows.iter().map(|r| format!("{},{}", fmt(px(r.step)), fmt(py(pick(r).0)))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
                line.join(" ")
            );
        }
    }

    let ly = MARGIN_T + PANEL_H + 56.0;
    for (i, c) in curves.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let y = ly + 18.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="14" height="10" fill="{colour}"/><text x="{}" y="{}">{}</text>"#,
            fmt(MARGIN_L),
            fmt(y - 9.0),
            fmt(MARGIN_L + 20.0),
            fmt(y),
            escape(&c.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
