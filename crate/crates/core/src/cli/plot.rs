//! Minimal SVG line plots for eyeballing shapes.

use plotters::coord::ranged1d::{AsRangedCoord, ValueFormatter};
use plotters::prelude::*;

use super::{CliError, CliResult};

pub struct Series {
    pub label: String,
    /// Non-finite points break the line.
    pub points: Vec<(f64, f64)>,
    pub markers: bool,
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

fn plot_err<E: std::fmt::Debug>(e: E) -> CliError {
    CliError::Runtime(format!("plot: {e:?}"))
}

fn range(values: impl Iterator<Item = f64>, log: bool) -> (f64, f64) {
    let v: Vec<f64> = values
        .filter(|v| v.is_finite() && (!log || *v > 0.0))
        .collect();
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return if log { (0.1, 10.0) } else { (0.0, 1.0) };
    }
    if log {
        let (a, b) = (lo.log10(), hi.log10());
        let pad = ((b - a) * 0.05).max(0.05);
        (10f64.powf(a - pad), 10f64.powf(b + pad))
    } else {
        let pad = ((hi - lo) * 0.05).max(1e-12 * hi.abs().max(1.0));
        (lo - pad, hi + pad)
    }
}

/// Split a series into runs of plottable points.
fn runs(points: &[(f64, f64)], log_x: bool, log_y: bool) -> Vec<Vec<(f64, f64)>> {
    let ok = |&(x, y): &(f64, f64)| {
        x.is_finite() && y.is_finite() && (!log_x || x > 0.0) && (!log_y || y > 0.0)
    };
    let mut out = vec![Vec::new()];
    for p in points {
        if ok(p) {
            out.last_mut().unwrap().push(*p);
        } else if !out.last().unwrap().is_empty() {
            out.push(Vec::new());
        }
    }
    out.retain(|r| !r.is_empty());
    out
}

fn draw<X, Y>(out: &mut String, plot: &Plot, x: X, y: Y) -> CliResult<()>
where
    X: AsRangedCoord<Value = f64>,
    Y: AsRangedCoord<Value = f64>,
    X::CoordDescType: ValueFormatter<f64>,
    Y::CoordDescType: ValueFormatter<f64>,
{
    let root = SVGBackend::with_string(out, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(&plot.title, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(64)
        .build_cartesian_2d(x, y)
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc(plot.x_label.as_str())
        .y_desc(plot.y_label.as_str())
        .draw()
        .map_err(plot_err)?;
    for (k, s) in plot.series.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        let mut labelled = false;
        for run in runs(&s.points, plot.log_x, plot.log_y) {
            let ann = chart
                .draw_series(LineSeries::new(run.clone(), color.stroke_width(2)))
                .map_err(plot_err)?;
            if !labelled {
                ann.label(s.label.as_str()).legend(move |(x, y)| {
                    PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2))
                });
                labelled = true;
            }
            if s.markers {
                chart
                    .draw_series(run.iter().map(|&p| Circle::new(p, 3, color.filled())))
                    .map_err(plot_err)?;
            }
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

pub fn render(plot: &Plot) -> CliResult<String> {
    let xs = || {
        plot.series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.0))
    };
    let ys = || {
        plot.series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.1))
    };
    let (x0, x1) = range(xs(), plot.log_x);
    let (y0, y1) = range(ys(), plot.log_y);
    let mut out = String::new();
    match (plot.log_x, plot.log_y) {
        (false, false) => draw(&mut out, plot, x0..x1, y0..y1)?,
        (true, false) => draw(&mut out, plot, (x0..x1).log_scale(), y0..y1)?,
        (false, true) => draw(&mut out, plot, x0..x1, (y0..y1).log_scale())?,
        (true, true) => draw(&mut out, plot, (x0..x1).log_scale(), (y0..y1).log_scale())?,
    }
    Ok(out)
}
