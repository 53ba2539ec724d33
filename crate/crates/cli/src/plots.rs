//! Static SVG figures for a finished run.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bitespeed::metrics::{episode_match, EPISODE_THRESHOLD};
use bitespeed::pipeline::DayArtifacts;
use plotters::prelude::*;

const SIZE: (u32, u32) = (900, 540);
const FONT: &str = "sans-serif";
const GT_COLOR: RGBColor = RGBColor(60, 110, 180);
const PRED_COLOR: RGBColor = RGBColor(220, 120, 40);
const FP_COLOR: RGBColor = RGBColor(200, 40, 40);
const FN_COLOR: RGBColor = RGBColor(40, 150, 70);

/// A matched episode's reference and predicted speed, in bites/min.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedPair {
    pub gt: f64,
    pub pred: f64,
}

/// Episode speeds of every day, split by match outcome.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpeedSummary {
    pub gt: Vec<f64>,
    pub pred: Vec<f64>,
    pub tp: Vec<SpeedPair>,
    pub fp: Vec<f64>,
    pub fn_: Vec<f64>,
}

impl SpeedSummary {
    pub fn from_days(days: &[DayArtifacts]) -> Self {
        let mut s = Self::default();
        for day in days {
            let speed = |e: &bitespeed::EatingEpisode| e.speed_bites_per_min;
            s.pred.extend(day.episodes.iter().filter_map(speed));
            let Some(gt) = &day.episodes_gt else { continue };
            s.gt.extend(gt.iter().filter_map(speed));
            let m = episode_match(&day.episodes, gt, EPISODE_THRESHOLD);
            let mut pred_hit = vec![false; day.episodes.len()];
            let mut gt_hit = vec![false; gt.len()];
            for &(g, p, _) in &m.matches {
                pred_hit[p] = true;
                gt_hit[g] = true;
                if let (Some(gs), Some(ps)) = (speed(&gt[g]), speed(&day.episodes[p])) {
                    s.tp.push(SpeedPair { gt: gs, pred: ps });
                }
            }
            s.fp.extend(
                day.episodes
                    .iter()
                    .zip(&pred_hit)
                    .filter(|(_, hit)| !**hit)
                    .filter_map(|(e, _)| speed(e)),
            );
            s.fn_.extend(
                gt.iter()
                    .zip(&gt_hit)
                    .filter(|(_, hit)| !**hit)
                    .filter_map(|(e, _)| speed(e)),
            );
        }
        s
    }

    fn max_speed(&self) -> f64 {
        self.gt.iter().chain(&self.pred).copied().fold(0.0, f64::max).max(1.0)
    }
}

/// Gaussian kernel density on `grid` with Silverman's bandwidth.
pub fn kde(values: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    if values.is_empty() {
        return vec![0.0; grid.len()];
    }
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let h = (1.06 * sd * n.powf(-0.2)).max(0.1);
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    grid.iter()
        .map(|&x| values.iter().map(|v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum::<f64>() * norm)
        .collect()
}

fn violin(values: &[f64], center: f64, top: f64) -> Vec<(f64, f64)> {
    let grid: Vec<f64> = (0..=200).map(|i| top * i as f64 / 200.0).collect();
    let density = kde(values, &grid);
    let peak = density.iter().copied().fold(0.0, f64::max);
    let scale = if peak > 0.0 { 0.4 / peak } else { 0.0 };
    let right = grid.iter().zip(&density).map(|(&y, &d)| (center + d * scale, y));
    let left = grid.iter().zip(&density).rev().map(|(&y, &d)| (center - d * scale, y));
    right.chain(left).collect()
}

/// Distribution of reference and predicted episode speeds.
pub fn speed_violin(path: &Path, s: &SpeedSummary) -> Result<()> {
    let top = s.max_speed() * 1.2;
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Episode eating speed", (FONT, 22))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(0.0..2.0, 0.0..top)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(5)
        .x_label_formatter(&|x: &f64| {
            if (x - 0.5).abs() < 0.05 {
                "ground truth".into()
            } else if (x - 1.5).abs() < 0.05 {
                "predicted".into()
            } else {
                String::new()
            }
        })
        .y_desc("bites/min")
        .draw()?;
    for (values, center, color) in [(&s.gt, 0.5, GT_COLOR), (&s.pred, 1.5, PRED_COLOR)] {
        if values.is_empty() {
            continue;
        }
        chart.draw_series(std::iter::once(Polygon::new(
            violin(values, center, top),
            color.mix(0.45),
        )))?;
        chart.draw_series(values.iter().map(|&v| Circle::new((center, v), 3, color.filled())))?;
    }
    root.present()?;
    Ok(())
}

/// Predicted against reference speed; unmatched episodes sit on the axes.
pub fn speed_scatter(path: &Path, s: &SpeedSummary) -> Result<()> {
    let top = s.max_speed() * 1.1;
    let root = SVGBackend::new(path, (640, 600)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Predicted vs ground-truth speed", (FONT, 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(0.0..top, 0.0..top)?;
    chart
        .configure_mesh()
        .x_desc("ground truth (bites/min)")
        .y_desc("predicted (bites/min)")
        .draw()?;
    chart.draw_series(LineSeries::new([(0.0, 0.0), (top, top)], BLACK.mix(0.3)))?;
    chart
        .draw_series(s.tp.iter().map(|p| Circle::new((p.gt, p.pred), 4, BLACK.filled())))?
        .label("TP")
        .legend(|(x, y)| Circle::new((x, y), 4, BLACK.filled()));
    chart
        .draw_series(s.fp.iter().map(|&v| Circle::new((0.0, v), 4, FP_COLOR.filled())))?
        .label("FP")
        .legend(|(x, y)| Circle::new((x, y), 4, FP_COLOR.filled()));
    chart
        .draw_series(s.fn_.iter().map(|&v| Circle::new((v, 0.0), 4, FN_COLOR.filled())))?
        .label("FN")
        .legend(|(x, y)| Circle::new((x, y), 4, FN_COLOR.filled()));
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::UpperLeft)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}

/// Reference and predicted speed side by side for every matched episode.
pub fn episode_bars(path: &Path, s: &SpeedSummary) -> Result<()> {
    let n = s.tp.len().max(1);
    let top = s.max_speed() * 1.2;
    let root = SVGBackend::new(path, (SIZE.0.max(24 * n as u32 + 120), SIZE.1)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Per-episode eating speed", (FONT, 22))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(0.0..n as f64, 0.0..top)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_desc("matched episode")
        .y_desc("bites/min")
        .draw()?;
    let bar = |i: usize, v: f64, lo: f64, color: RGBColor| {
        Rectangle::new([(i as f64 + lo, 0.0), (i as f64 + lo + 0.4, v)], color.filled())
    };
    chart
        .draw_series(s.tp.iter().enumerate().map(|(i, p)| bar(i, p.gt, 0.1, GT_COLOR)))?
        .label("ground truth")
        .legend(|(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], GT_COLOR.filled()));
    chart
        .draw_series(s.tp.iter().enumerate().map(|(i, p)| bar(i, p.pred, 0.5, PRED_COLOR)))?
        .label("predicted")
        .legend(|(x, y)| Rectangle::new([(x, y - 5), (x + 10, y + 5)], PRED_COLOR.filled()));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}

/// Bites per minute over one day.
pub fn minute_timeline(path: &Path, day: &DayArtifacts) -> Result<()> {
    let pred = day.minutes.counts();
    let gt = day.minutes_gt.as_ref().map(|m| m.counts()).unwrap_or_default();
    let len = pred.len().max(gt.len()).max(1);
    let top = pred.iter().chain(gt).copied().max().unwrap_or(0).max(1) as f64 * 1.2;
    let title = day
        .dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let root = SVGBackend::new(path, (1200, 360)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("Minute-level eating speed {title}"), (FONT, 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(0.0..len as f64, 0.0..top)?;
    chart.configure_mesh().x_desc("minute").y_desc("bites").draw()?;
    let steps = |counts: &[u32]| -> Vec<(f64, f64)> {
        counts
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| [(i as f64, c as f64), (i as f64 + 1.0, c as f64)])
            .collect()
    };
    if !gt.is_empty() {
        chart
            .draw_series(LineSeries::new(steps(gt), GT_COLOR.stroke_width(2)))?
            .label("ground truth")
            .legend(|(x, y)| PathElement::new([(x, y), (x + 16, y)], GT_COLOR.stroke_width(2)));
    }
    chart
        .draw_series(LineSeries::new(steps(pred), PRED_COLOR.stroke_width(2)))?
        .label("predicted")
        .legend(|(x, y)| PathElement::new([(x, y), (x + 16, y)], PRED_COLOR.stroke_width(2)));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}

type Figure = fn(&Path, &SpeedSummary) -> Result<()>;

/// Writes every figure for `days` into `dir` and returns their paths.
pub fn render_all(dir: &Path, days: &[DayArtifacts]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let summary = SpeedSummary::from_days(days);
    let mut written = Vec::new();
    let figures: [(&str, Figure); 3] = [
        ("speed_violin.svg", speed_violin),
        ("speed_scatter.svg", speed_scatter),
        ("episode_bars.svg", episode_bars),
    ];
    for (name, draw) in figures {
        let path = dir.join(name);
        draw(&path, &summary).with_context(|| format!("drawing {}", path.display()))?;
        written.push(path);
    }
    for day in days {
        let stem = day_stem(&day.dir);
        let path = dir.join(format!("minutes_{stem}.svg"));
        minute_timeline(&path, day).with_context(|| format!("drawing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

/// `fold_2/P03_d1` becomes `fold_2_P03_d1` so names stay unique across folds.
fn day_stem(dir: &Path) -> String {
    let parts: Vec<String> = dir
        .components()
        .rev()
        .take(2)
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect();
    match parts.as_slice() {
        [day, parent] if parent.starts_with("fold_") => format!("{parent}_{day}"),
        [day, ..] => day.clone(),
        [] => "day".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kde_integrates_to_one() {
        let values = [2.0, 3.0, 3.5, 5.0];
        let grid: Vec<f64> = (0..=4000).map(|i| -5.0 + i as f64 * 0.005).collect();
        let total: f64 = kde(&values, &grid).iter().sum::<f64>() * 0.005;
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn day_stem_keeps_fold() {
        assert_eq!(day_stem(Path::new("out/fold_2/P03_d1")), "fold_2_P03_d1");
        assert_eq!(day_stem(Path::new("out/P03_d1")), "P03_d1");
    }
}
