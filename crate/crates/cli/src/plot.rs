//! Training curves: mean with a standard-error band per agent, or one line per seed.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use plotters::prelude::*;

use topohrl::train::MetricsRow;

use crate::PlotArgs;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    MeanLength,
    MeanReturn,
    ValMeanLength,
}

impl Metric {
    fn get(self, r: &MetricsRow) -> Option<f64> {
        match self {
            Metric::MeanLength => r.mean_length,
            Metric::MeanReturn => r.mean_return,
            Metric::ValMeanLength => r.val_mean_length,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::MeanLength => "mean episode length",
            Metric::MeanReturn => "mean episode return",
            Metric::ValMeanLength => "validation mean episode length",
        }
    }
}

/// One seed's curve: (interactions, value) sorted by interactions.
pub type Curve = Vec<(f64, f64)>;

pub fn read_stream(path: &Path) -> Result<Vec<MetricsRow>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(rows)
}

fn find_streams(p: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if p.is_file() {
        out.push(p.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(p)
        .with_context(|| format!("reading {}", p.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for e in entries {
        if e.is_dir() {
            find_streams(&e, out)?;
        } else if e.file_name().is_some_and(|n| n == "metrics.jsonl") {
            out.push(e);
        }
    }
    Ok(())
}

pub fn curve(rows: &[MetricsRow], metric: Metric) -> Curve {
    let mut c: Curve = rows.iter().filter_map(|r| metric.get(r).map(|y| (r.env_interactions as f64, y))).collect();
    c.sort_by(|a, b| a.0.total_cmp(&b.0));
    c
}

fn interpolate(c: &[(f64, f64)], x: f64) -> f64 {
    match c.iter().position(|p| p.0 >= x) {
        Some(0) => c[0].1,
        Some(i) => {
            let (x0, y0) = c[i - 1];
            let (x1, y1) = c[i];
            if x1 == x0 {
                y1
            } else {
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        }
        None => c[c.len() - 1].1,
    }
}

/// Mean and standard error across seeds at `points` interaction counts spanning
/// the range every seed covers. A single seed gives a zero-width band.
pub fn band(curves: &[Curve], points: usize) -> Vec<(f64, f64, f64)> {
    let curves: Vec<&Curve> = curves.iter().filter(|c| !c.is_empty()).collect();
    if curves.is_empty() {
        return Vec::new();
    }
    let lo = curves.iter().map(|c| c[0].0).fold(f64::NEG_INFINITY, f64::max);
    let hi = curves.iter().map(|c| c[c.len() - 1].0).fold(f64::INFINITY, f64::min);
    if hi < lo {
        return Vec::new();
    }
    let points = points.max(2);
    let n = curves.len() as f64;
    (0..points)
        .map(|i| {
            let x = if hi == lo { lo } else { lo + (hi - lo) * i as f64 / (points - 1) as f64 };
            let ys: Vec<f64> = curves.iter().map(|c| interpolate(c, x)).collect();
            let mean = ys.iter().sum::<f64>() / n;
            let se = if curves.len() < 2 {
                0.0
            } else {
                let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            };
            (x, mean, se)
        })
        .collect()
}

pub fn cmd_plot(a: PlotArgs) -> Result<()> {
    let mut files = Vec::new();
    for p in &a.streams {
        find_streams(p, &mut files)?;
    }
    let mut groups: BTreeMap<String, Vec<Curve>> = BTreeMap::new();
    for f in &files {
        let rows = read_stream(f)?;
        let Some(first) = rows.first() else { continue };
        let c = curve(&rows, a.metric);
        if !c.is_empty() {
            groups.entry(first.kind.name().to_string()).or_default().push(c);
        }
    }
    if groups.is_empty() {
        return Err(crate::UsageError(format!("no {} values in the given streams", a.metric.label())).into());
    }
    render(&a.out, &groups, a.metric, a.per_seed, a.points)?;
    println!("wrote {} ({} streams)", a.out.display(), groups.values().map(Vec::len).sum::<usize>());
    Ok(())
}

pub fn render(out: &Path, groups: &BTreeMap<String, Vec<Curve>>, metric: Metric, per_seed: bool, points: usize) -> Result<()> {
    let all = groups.values().flatten().flatten();
    let x_max = all.clone().map(|p| p.0).fold(1.0, f64::max);
    let y_max = all.map(|p| p.1).fold(1.0, f64::max) * 1.05;
    let root = SVGBackend::new(out, (900, 560)).into_drawing_area();
    let draw = |e: &dyn std::fmt::Display| anyhow::anyhow!("drawing {}: {e}", out.display());
    root.fill(&WHITE).map_err(|e| draw(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .margin(16)
        .x_label_area_size(42)
        .y_label_area_size(64)
        .build_cartesian_2d(0.0..x_max, 0.0..y_max)
        .map_err(|e| draw(&e))?;
    chart
        .configure_mesh()
        .x_desc("environment interactions")
        .y_desc(metric.label())
        .draw()
        .map_err(|e| draw(&e))?;
    for (gi, (name, curves)) in groups.iter().enumerate() {
        let color = Palette99::pick(gi).to_rgba();
        if per_seed {
            for (si, c) in curves.iter().enumerate() {
                let s = chart
                    .draw_series(LineSeries::new(c.iter().copied(), color.stroke_width(1)))
                    .map_err(|e| draw(&e))?;
                if si == 0 {
                    s.label(name.as_str()).legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color));
                }
            }
            continue;
        }
        let b = band(curves, points);
        let mut poly: Vec<(f64, f64)> = b.iter().map(|p| (p.0, p.1 + p.2)).collect();
        poly.extend(b.iter().rev().map(|p| (p.0, p.1 - p.2)));
        chart.draw_series([Polygon::new(poly, color.mix(0.2).filled())]).map_err(|e| draw(&e))?;
        chart
            .draw_series(LineSeries::new(b.iter().map(|p| (p.0, p.1)), color.stroke_width(2)))
            .map_err(|e| draw(&e))?
            .label(format!("{name} (n={})", curves.len()))
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerRight)
        .draw()
        .map_err(|e| draw(&e))?;
    root.present().map_err(|e| draw(&e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_seed_band_has_zero_width() {
        let c = vec![(0.0, 1.0), (10.0, 3.0)];
        let b = band(&[c], 3);
        assert_eq!(b, vec![(0.0, 1.0, 0.0), (5.0, 2.0, 0.0), (10.0, 3.0, 0.0)]);
    }

    #[test]
    fn two_seed_standard_error() {
        let b = band(&[vec![(0.0, 0.0), (1.0, 0.0)], vec![(0.0, 2.0), (1.0, 2.0)]], 2);
        // sample sd sqrt(2), stderr sqrt(2)/sqrt(2) = 1
        assert!(b.iter().all(|p| (p.1 - 1.0).abs() < 1e-12 && (p.2 - 1.0).abs() < 1e-12));
    }
}
