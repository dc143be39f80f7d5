//! Static SVG line charts for the benchmark figures. Pure string
//! generation, so identical aggregates produce identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::{AggregateRow, Metric};
use crate::solvers::Algorithm;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;

/// Floor applied to nonpositive values before a log transform.
const LOG_FLOOR: f64 = 1e-300;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

#[derive(Debug, Clone)]
struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

#[derive(Clone, Copy)]
enum Statistic {
    Mean,
    Std,
}

struct ChartSpec {
    file_name: &'static str,
    title: &'static str,
    algorithms: &'static [Algorithm],
    metric: Metric,
    statistic: Statistic,
    log_y: bool,
    max_iteration: Option<usize>,
}

const VI_FAMILY: &[Algorithm] = &[Algorithm::Vi, Algorithm::AndersonVi];
const RELATIVE_FAMILY: &[Algorithm] = &[Algorithm::RelativeVi, Algorithm::AndersonRelativeVi];

const CHARTS: &[ChartSpec] = &[
    ChartSpec {
        file_name: "fig1a_normalized_error.svg",
        title: "Normalized error (value iteration family)",
        algorithms: VI_FAMILY,
        metric: Metric::NormError,
        statistic: Statistic::Mean,
        log_y: false,
        max_iteration: None,
    },
    ChartSpec {
        file_name: "fig1b_normalized_error_log_mean.svg",
        title: "Normalized error, mean (log scale)",
        algorithms: VI_FAMILY,
        metric: Metric::NormError,
        statistic: Statistic::Mean,
        log_y: true,
        max_iteration: None,
    },
    ChartSpec {
        file_name: "fig1c_normalized_error_log_std.svg",
        title: "Normalized error, std (log scale)",
        algorithms: VI_FAMILY,
        metric: Metric::NormError,
        statistic: Statistic::Std,
        log_y: true,
        max_iteration: None,
    },
    ChartSpec {
        file_name: "fig2a_greedy_error_first10.svg",
        title: "Greedy-policy error, first 10 iterations",
        algorithms: VI_FAMILY,
        metric: Metric::GreedyError,
        statistic: Statistic::Mean,
        log_y: false,
        max_iteration: Some(10),
    },
    ChartSpec {
        file_name: "fig2b_relative_normalized_error_log_mean.svg",
        title: "Normalized error, mean (relative family, log scale)",
        algorithms: RELATIVE_FAMILY,
        metric: Metric::NormError,
        statistic: Statistic::Mean,
        log_y: true,
        max_iteration: None,
    },
    ChartSpec {
        file_name: "fig2c_relative_greedy_error.svg",
        title: "Greedy-policy error (relative family)",
        algorithms: RELATIVE_FAMILY,
        metric: Metric::GreedyError,
        statistic: Statistic::Mean,
        log_y: false,
        max_iteration: None,
    },
];

/// Write the six benchmark charts into `output_dir`; charts whose family is
/// absent from the aggregates are skipped. Returns the written paths.
pub fn emit_plots(aggregates: &[AggregateRow], output_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for chart in CHARTS {
        let series = collect_series(aggregates, chart);
        if series.is_empty() {
            continue;
        }
        let svg = render_chart(chart, &series);
        let path = output_dir.join(chart.file_name);
        std::fs::write(&path, svg).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        written.push(path);
    }
    Ok(written)
}

fn collect_series(aggregates: &[AggregateRow], chart: &ChartSpec) -> Vec<Series> {
    // One series per (algorithm, m), ordered by m so legend colors line up
    // with memory size.
    let mut keys: Vec<(usize, Algorithm)> = aggregates
        .iter()
        .filter(|r| chart.algorithms.contains(&r.algorithm) && r.metric == chart.metric)
        .map(|r| (r.m, r.algorithm))
        .collect();
    keys.sort_unstable();
    keys.dedup();

    keys.into_iter()
        .map(|(m, algorithm)| {
            let mut points: Vec<(f64, f64)> = aggregates
                .iter()
                .filter(|r| {
                    r.algorithm == algorithm
                        && r.m == m
                        && r.metric == chart.metric
                        && chart
                            .max_iteration
                            .is_none_or(|cap| r.iteration <= cap)
                })
                .map(|r| {
                    let y = match chart.statistic {
                        Statistic::Mean => r.mean,
                        Statistic::Std => r.std,
                    };
                    (r.iteration as f64, y)
                })
                .collect();
            points.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            Series {
                label: format!("m={m}"),
                points,
            }
        })
        .collect()
}

fn render_chart(chart: &ChartSpec, series: &[Series]) -> String {
    let mut floored = false;
    let transformed: Vec<Series> = series
        .iter()
        .map(|s| Series {
            label: s.label.clone(),
            points: s
                .points
                .iter()
                .map(|&(x, y)| {
                    if chart.log_y {
                        let clamped = if y <= 0.0 || y < LOG_FLOOR {
                            floored = true;
                            LOG_FLOOR
                        } else {
                            y
                        };
                        (x, clamped.log10())
                    } else {
                        (x, y)
                    }
                })
                .collect(),
        })
        .collect();

    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &transformed {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if x_min >= x_max {
        x_max = x_min + 1.0;
    }
    if y_min >= y_max {
        y_min -= 0.5;
        y_max += 0.5;
    }

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let to_px = |x: f64, y: f64| {
        let px = MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
        let py = MARGIN_TOP + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;
        (px, py)
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>",
        MARGIN_LEFT + plot_w / 2.0,
        chart.title
    );

    // Axes.
    let _ = writeln!(
        svg,
        "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" fill=\"none\" stroke=\"black\"/>"
    );

    // Ticks and labels.
    let ticks = 5usize;
    for i in 0..=ticks {
        let frac = i as f64 / ticks as f64;
        let x = x_min + frac * (x_max - x_min);
        let (px, _) = to_px(x, y_min);
        let _ = writeln!(
            svg,
            "<line x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
            MARGIN_TOP + plot_h,
            MARGIN_TOP + plot_h + 5.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{px:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{:.0}</text>",
            MARGIN_TOP + plot_h + 18.0,
            x
        );

        let y = y_min + frac * (y_max - y_min);
        let (_, py) = to_px(x_min, y);
        let _ = writeln!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{MARGIN_LEFT}\" y2=\"{py:.2}\" stroke=\"black\"/>",
            MARGIN_LEFT - 5.0
        );
        let label = if chart.log_y {
            format!("1e{y:.1}")
        } else {
            format!("{y:.3}")
        };
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{label}</text>",
            MARGIN_LEFT - 8.0,
            py + 4.0
        );
    }

    // Axis titles.
    let _ = writeln!(
        svg,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">iteration</text>",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 14.0
    );

    // Series polylines.
    for (i, s) in transformed.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        for &(x, y) in &s.points {
            let (px, py) = to_px(x, y);
            let _ = write!(points, "{px:.2},{py:.2} ");
        }
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            points.trim_end()
        );
    }

    // Legend.
    for (i, s) in transformed.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let ly = MARGIN_TOP + 10.0 + i as f64 * 18.0;
        let lx = WIDTH - MARGIN_RIGHT + 15.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            lx + 22.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            lx + 28.0,
            ly + 4.0,
            s.label
        );
    }

    if floored {
        let _ = writeln!(
            svg,
            "<text x=\"{MARGIN_LEFT}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" fill=\"#666666\">nonpositive values floored at 1e-300 for the log scale</text>",
            HEIGHT - 2.0
        );
    }

    svg.push_str("</svg>\n");
    svg
}
