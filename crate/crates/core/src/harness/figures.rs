//! Figure reproduction: SB-vs-CR regret curves and VaR curves.
//!
//! The CSV next to each plot is the artifact of record; the SVG is a thin
//! rendering of it.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use plotters::prelude::*;
use serde::Serialize;

use super::config::{NRule, PolicyName, RunConfig};
use super::experiment::{ensure_dir, simulate, write_outputs, write_rows, ExperimentOutput};
use crate::error::{Error, Result};
use crate::metrics::quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureId {
    NEqT2,
    NEqT3,
    VarCurves,
}

impl FigureId {
    pub fn as_str(&self) -> &'static str {
        match self {
            FigureId::NEqT2 => "n-eq-t2",
            FigureId::NEqT3 => "n-eq-t3",
            FigureId::VarCurves => "var-curves",
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n-eq-t2" => Ok(FigureId::NEqT2),
            "n-eq-t3" => Ok(FigureId::NEqT3),
            "var-curves" => Ok(FigureId::VarCurves),
            other => Err(Error::Config(format!(
                "unknown figure `{other}`; expected n-eq-t2, n-eq-t3 or var-curves"
            ))),
        }
    }
}

/// Full-scale counts.
pub const FULL_INSTANCES: usize = 100;
pub const FULL_REPS: usize = 200;
pub const FULL_HORIZONS: [usize; 5] = [10, 20, 30, 40, 50];
pub const DESK_HORIZONS: [usize; 3] = [10, 20, 30];

/// Shrinks instance and replication counts by `√scale` each, so the total
/// work shrinks by `scale`; `0.25` gives 50 instances × 100 replications.
pub fn scaled_counts(scale: f64) -> Result<(usize, usize)> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::Config(format!("scale must lie in (0, 1], got {scale}")));
    }
    let f = scale.sqrt();
    let n = |base: usize| ((base as f64 * f).round() as usize).max(1);
    Ok((n(FULL_INSTANCES), n(FULL_REPS)))
}

fn figure_config(base: &RunConfig, scale: f64, horizons: Option<&[usize]>, n_rule: NRule) -> Result<RunConfig> {
    let (instances, reps) = scaled_counts(scale)?;
    let default_grid: &[usize] = if scale >= 1.0 { &FULL_HORIZONS } else { &DESK_HORIZONS };
    let config = RunConfig {
        instances,
        reps,
        n_rule,
        horizons: horizons.unwrap_or(default_grid).to_vec(),
        policies: vec![PolicyName::SwitchbackExp3ix, PolicyName::Exp3HtIx],
        ..base.clone()
    };
    config.validate()?;
    Ok(config)
}

/// Files written for one figure.
#[derive(Debug, Clone)]
pub struct FigureFiles {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub dir: PathBuf,
}

/// One VaR curve point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarPoint {
    pub policy: String,
    pub n_rule: String,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "N")]
    pub units: usize,
    pub delta: f64,
    pub var: f64,
}

/// `δ` grid for VaR curves: a few fixed levels plus `e^{-T^{2/3}}`.
pub fn delta_grid(horizon: usize) -> Vec<f64> {
    let mut grid = vec![0.5, 0.2, 0.1, 0.05, 0.02, (-(horizon as f64).powf(2.0 / 3.0)).exp()];
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();
    grid
}

/// Per-instance `(1-δ)`-quantiles averaged over instances.
pub fn var_curve(output: &ExperimentOutput, n_rule: NRule) -> Result<Vec<VarPoint>> {
    let mut points = Vec::new();
    for ((policy, horizon), batch) in &output.batches {
        let units = output.rows.iter().find(|r| r.horizon == *horizon).map_or(0, |r| r.units);
        for delta in delta_grid(*horizon) {
            let per_instance = batch.iter().map(|b| quantile(b, 1.0 - delta)).collect::<Result<Vec<_>>>()?;
            points.push(VarPoint {
                policy: policy.to_string(),
                n_rule: n_rule.label(),
                horizon: *horizon,
                units,
                delta,
                var: per_instance.iter().sum::<f64>() / per_instance.len() as f64,
            });
        }
    }
    Ok(points)
}

/// Runs the experiments behind `which` and writes CSV, SVG and manifests
/// under `base.out/<figure>`.
pub fn reproduce_figure(
    which: FigureId,
    scale: f64,
    base: &RunConfig,
    horizons: Option<&[usize]>,
) -> Result<FigureFiles> {
    let dir = base.out.join(which.as_str());
    ensure_dir(&dir)?;
    match which {
        FigureId::NEqT2 | FigureId::NEqT3 => {
            let rule = if which == FigureId::NEqT2 { NRule::SQUARE } else { NRule::CUBE };
            let config = figure_config(base, scale, horizons, rule)?;
            let output = simulate(&config)?;
            let files = write_outputs(&output, &dir)?;
            let svg = dir.join(format!("{which}.svg"));
            let mut series = Vec::new();
            for policy in &config.policies {
                let rows: Vec<_> = output.rows.iter().filter(|r| r.policy == policy.as_str()).collect();
                series.push((
                    format!("{policy} mean"),
                    rows.iter().map(|r| (r.horizon as f64, r.mean_regret)).collect(),
                ));
                series.push((
                    format!("{policy} q95"),
                    rows.iter().map(|r| (r.horizon as f64, r.q95_regret)).collect(),
                ));
            }
            let title = if which == FigureId::NEqT2 { "Regret, N = T^2" } else { "Regret, N = T^3" };
            render_lines(&svg, title, "T", "regret", &series)?;
            Ok(FigureFiles { csv: files.results, svg, dir })
        }
        FigureId::VarCurves => {
            let grid: Vec<usize> = horizons.map_or_else(|| vec![10], <[usize]>::to_vec);
            let mut points = Vec::new();
            for rule in [NRule::SQUARE, NRule::CUBE] {
                let config = figure_config(base, scale, Some(&grid), rule)?;
                let output = simulate(&config)?;
                write_outputs(&output, &dir.join(rule.label()))?;
                points.extend(var_curve(&output, rule)?);
            }
            let csv = dir.join("var_curves.csv");
            write_rows(&csv, &points)?;
            let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
            for p in &points {
                let name = format!("{} N={} T={}", p.policy, p.units, p.horizon);
                let xy = (-p.delta.ln(), p.var);
                match series.iter_mut().find(|(n, _)| *n == name) {
                    Some((_, pts)) => pts.push(xy),
                    None => series.push((name, vec![xy])),
                }
            }
            let svg = dir.join("var-curves.svg");
            render_lines(&svg, "VaR of regret", "-ln(delta)", "VaR", &series)?;
            Ok(FigureFiles { csv, svg, dir })
        }
    }
}

fn plot_error<E: std::error::Error>(path: &Path, e: E) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Line chart with one series per entry.
pub fn render_lines(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> Result<()> {
    let all = series.iter().flat_map(|(_, pts)| pts.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let pad_x = ((x1 - x0) * 0.05).max(0.5);
    let pad_y = ((y1 - y0) * 0.1).max(0.1);
    let root = SVGBackend::new(path, (800, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_error(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d((x0 - pad_x)..(x1 + pad_x), (y0 - pad_y).min(0.0)..(y1 + pad_y))
        .map_err(|e| plot_error(path, e))?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .draw()
        .map_err(|e| plot_error(path, e))?;
    for (idx, (name, pts)) in series.iter().enumerate() {
        let color = Palette99::pick(idx).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(|e| plot_error(path, e))?
            .label(name.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_error(path, e))?;
    root.present().map_err(|e| plot_error(path, e))?;
    Ok(())
}
