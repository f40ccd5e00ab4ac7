//! SVG time-series plots of an episode.

use std::path::Path;

use anyhow::{anyhow, Result};
use plotters::prelude::*;

use sol_core::EpisodeTrace;

/// Beyond this many basis functions only the diagonal of `P` is drawn.
const FULL_P_LIMIT: usize = 8;

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

pub fn write_all(trace: &EpisodeTrace, dir: &Path) -> Result<()> {
    let t: Vec<f64> = trace.records.iter().map(|r| r.t).collect();
    let column = |label: String, f: &dyn Fn(usize) -> f64| Series {
        label,
        points: t.iter().enumerate().map(|(k, &tk)| (tk, f(k))).filter(|(_, y)| y.is_finite()).collect(),
    };

    let states = (0..trace.state_dim())
        .map(|i| column(format!("x{}", i + 1), &|k| trace.records[k].x[i]))
        .collect();
    chart(&dir.join("state.svg"), "state", states)?;

    let inputs = (0..trace.input_dim())
        .map(|j| column(format!("u{}", j + 1), &|k| trace.records[k].u[j]))
        .collect();
    chart(&dir.join("input.svg"), "control input", inputs)?;

    chart(&dir.join("value.svg"), "V(x)", vec![column("V".into(), &|k| trace.records[k].value)])?;
    chart(
        &dir.join("pred_err.svg"),
        "prediction error",
        vec![column("‖ẋ − Ŵθ‖".into(), &|k| trace.records[k].pred_err)],
    )?;

    let p = trace.basis.len();
    let mut comps = Vec::new();
    let mut idx = 0;
    for i in 0..p {
        for j in i..p {
            if i == j || p <= FULL_P_LIMIT {
                let points = trace.p_snapshots.iter().map(|s| (s.t, s.upper[idx])).collect();
                comps.push(Series { label: format!("P[{i},{j}]"), points });
            }
            idx += 1;
        }
    }
    chart(&dir.join("p.svg"), "components of P", comps)
}

fn chart(path: &Path, title: &str, series: Vec<Series>) -> Result<()> {
    let flat = || series.iter().flat_map(|s| s.points.iter().copied());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in flat() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let pad = if y1 > y0 { 0.05 * (y1 - y0) } else { 1.0 };

    let root = SVGBackend::new(path, (960, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(64)
        .build_cartesian_2d(x0..x1, (y0 - pad)..(y1 + pad))
        .map_err(|e| anyhow!("{e}"))?;
    chart
        .configure_mesh()
        .x_desc("t [s]")
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    for (k, s) in series.iter().enumerate() {
        let color = Palette99::pick(k).to_rgba();
        chart
            .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
            .map_err(|e| anyhow!("{e}"))?
            .label(s.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
    }
    if series.len() > 1 || series.first().is_some_and(|s| !s.label.is_empty()) {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| anyhow!("{e}"))?;
    }
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(())
}
