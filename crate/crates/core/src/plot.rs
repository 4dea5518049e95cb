//! Static SVG charts: displacement-error envelopes and loss curves.

use std::collections::BTreeMap;
use std::path::Path;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::losses::LossRecord;
use crate::metrics::DisplacementCurve;

fn draw_err(e: impl std::fmt::Display) -> Error {
    Error::Format(format!("plot: {e}"))
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

/// Shaded min/max band with the mean drawn on top, one chart per curve.
pub fn displacement_envelope(path: &Path, title: &str, curve: &DisplacementCurve) -> Result<()> {
    let n = curve.mean.len();
    if n == 0 || curve.min.len() != n || curve.max.len() != n {
        return Err(Error::shape("displacement curve is empty or ragged"));
    }
    let root = SVGBackend::new(path, (720, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let (_, hi) = bounds(curve.max.iter().copied());
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(52)
        .build_cartesian_2d(0f64..(n - 1).max(1) as f64, 0f64..hi.max(1e-6))
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc("frame")
        .y_desc("displacement error")
        .draw()
        .map_err(draw_err)?;
    let band: Vec<(f64, f64)> = (0..n)
        .map(|t| (t as f64, curve.max[t]))
        .chain((0..n).rev().map(|t| (t as f64, curve.min[t])))
        .collect();
    chart
        .draw_series(std::iter::once(Polygon::new(band, BLUE.mix(0.2).filled())))
        .map_err(draw_err)?;
    chart
        .draw_series(LineSeries::new((0..n).map(|t| (t as f64, curve.mean[t])), BLUE.stroke_width(2)))
        .map_err(draw_err)?
        .label("mean")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], BLUE));
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)
}

/// One line per loss name against the training step.
pub fn loss_curves(path: &Path, records: &[LossRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::invalid("no loss records to plot"));
    }
    let mut series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        series.entry(&r.loss_name).or_default().push((r.step as f64, r.value));
    }
    let (x0, x1) = bounds(records.iter().map(|r| r.step as f64));
    let (y0, y1) = bounds(records.iter().map(|r| r.value));
    let root = SVGBackend::new(path, (820, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("training losses", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc("step")
        .y_desc("loss")
        .draw()
        .map_err(draw_err)?;
    for (i, (name, points)) in series.into_iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(points, color.stroke_width(1)))
            .map_err(draw_err)?
            .label(name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_svg_files() {
        let dir = tempfile::tempdir().unwrap();
        let curve = DisplacementCurve {
            min: vec![0.0, 1.0, 2.0, 0.0],
            max: vec![0.0, 2.0, 3.0, 0.0],
            mean: vec![0.0, 1.5, 2.5, 0.0],
        };
        let p = dir.path().join("env.svg");
        displacement_envelope(&p, "L = 2", &curve).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().starts_with("<svg"));
        let records: Vec<LossRecord> = (0..10)
            .flat_map(|s| {
                ["total", "kl"].map(|n| LossRecord {
                    step: s,
                    loss_name: n.into(),
                    value: 1.0 / (s + 1) as f64,
                })
            })
            .collect();
        let q = dir.path().join("loss.svg");
        loss_curves(&q, &records).unwrap();
        assert!(std::fs::read_to_string(&q).unwrap().contains("total"));
        assert!(loss_curves(&q, &[]).is_err());
    }
}
