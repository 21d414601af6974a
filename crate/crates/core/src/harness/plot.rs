use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use super::commands::write_csv;
use super::runlog::{LogRecord, RunLog};
use crate::error::{Error, Result};

/// Savitzky–Golay filter parameters. `window` must be odd and larger than `order`;
/// `window = 1` disables smoothing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSpec {
    pub window: usize,
    pub order: usize,
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        SmoothingSpec { window: 1, order: 0 }
    }
}

impl SmoothingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.window % 2 == 0 {
            return Err(Error::Usage(format!("smoothing window must be odd and positive, got {}", self.window)));
        }
        if self.window > 1 && self.order >= self.window {
            return Err(Error::Usage(format!(
                "polynomial order {} must be below the window {}",
                self.order, self.window
            )));
        }
        Ok(())
    }
}

/// Savitzky–Golay smoothing: each point is replaced by the value at that point of a
/// least-squares polynomial of degree `order` fitted over `window` samples. Near the ends
/// the window is shifted inside the series and the fit is evaluated off-center. Series
/// shorter than the window use the largest odd window that fits.
pub fn savitzky_golay(series: &[f64], spec: SmoothingSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n = series.len();
    let mut w = spec.window.min(n);
    if w % 2 == 0 {
        w -= 1;
    }
    if w <= 1 {
        return Ok(series.to_vec());
    }
    let order = spec.order.min(w - 1);
    let h = w / 2;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let start = i.saturating_sub(h).min(n - w);
        let a = DMatrix::from_fn(w, order + 1, |r, c| ((start + r) as f64 - i as f64).powi(c as i32));
        let y = DVector::from_column_slice(&series[start..start + w]);
        let coef = a
            .svd(true, true)
            .solve(&y, 1e-12)
            .map_err(|e| Error::Numeric(format!("Savitzky-Golay fit failed: {e}")))?;
        out.push(coef[0]);
    }
    Ok(out)
}

/// One CSV row per log record, unsmoothed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub log: String,
    pub record: String,
    pub cycle: Option<usize>,
    pub step: Option<u64>,
    pub env_steps: Option<usize>,
    pub updates: Option<usize>,
    pub m_used: Option<usize>,
    pub mean_return: Option<f64>,
    pub success_rate: Option<f64>,
    pub il_loss: Option<f64>,
    pub value_loss: Option<f64>,
    pub rho: Option<f64>,
    pub grad_norm_il: Option<f64>,
    pub grad_norm_rl: Option<f64>,
    pub eval_return: Option<f64>,
    pub eval_success: Option<f64>,
    pub pretrain_loss: Option<f64>,
}

fn rows_of(label: &str, log: &RunLog) -> Vec<CurveRow> {
    log.records
        .iter()
        .map(|r| {
            let base = CurveRow {
                log: label.to_string(),
                ..Default::default()
            };
            match r {
                LogRecord::Cycle(c) => CurveRow {
                    record: "cycle".into(),
                    cycle: Some(c.cycle),
                    env_steps: Some(c.env_steps),
                    updates: Some(c.updates),
                    m_used: Some(c.m_used),
                    mean_return: Some(c.mean_return),
                    success_rate: Some(c.success_rate),
                    il_loss: Some(c.il_loss),
                    value_loss: Some(c.value_loss),
                    rho: c.rho,
                    grad_norm_il: c.grad_norm_il,
                    grad_norm_rl: c.grad_norm_rl,
                    eval_return: c.eval_return,
                    eval_success: c.eval_success,
                    ..base
                },
                LogRecord::PretrainStep { step, loss } => CurveRow {
                    record: "pretrain_step".into(),
                    step: Some(*step),
                    pretrain_loss: Some(*loss),
                    ..base
                },
                LogRecord::PretrainEval {
                    step,
                    mean_return,
                    success_rate,
                } => CurveRow {
                    record: "pretrain_eval".into(),
                    step: Some(*step),
                    eval_return: Some(*mean_return),
                    eval_success: Some(*success_rate),
                    ..base
                },
            }
        })
        .collect()
}

/// Label of a log in legends and the CSV: its parent directory name, or the file stem.
fn label_of(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .or_else(|| path.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotOutputs {
    pub csv: PathBuf,
    pub images: Vec<PathBuf>,
    pub rows: usize,
}

type Series = (String, Vec<(f64, f64)>);

/// Write `curves.csv` (raw) plus `reward.svg` and `il_loss.svg` against env steps for the
/// logs' cycle records, and `pretrain_loss.svg` when any log holds pretraining steps.
pub fn cmd_plot(logs: &[PathBuf], out_dir: &Path, smoothing: SmoothingSpec) -> Result<PlotOutputs> {
    smoothing.validate()?;
    if logs.is_empty() {
        return Err(Error::Usage("plot needs at least one log file".into()));
    }
    let parsed: Vec<(String, RunLog)> = logs
        .iter()
        .map(|p| Ok((label_of(p), RunLog::read(p)?)))
        .collect::<Result<_>>()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let rows: Vec<CurveRow> = parsed.iter().flat_map(|(l, log)| rows_of(l, log)).collect();
    let csv = out_dir.join("curves.csv");
    write_csv(&csv, &rows)?;

    let mut reward: Vec<Series> = Vec::new();
    let mut il: Vec<Series> = Vec::new();
    let mut pre: Vec<Series> = Vec::new();
    for (label, log) in &parsed {
        let cycles = log.cycles();
        if !cycles.is_empty() {
            let x: Vec<f64> = cycles.iter().map(|c| c.env_steps as f64).collect();
            let r = savitzky_golay(&cycles.iter().map(|c| c.mean_return).collect::<Vec<_>>(), smoothing)?;
            let l = savitzky_golay(&cycles.iter().map(|c| c.il_loss).collect::<Vec<_>>(), smoothing)?;
            reward.push((label.clone(), x.iter().copied().zip(r).collect()));
            il.push((label.clone(), x.into_iter().zip(l).collect()));
        }
        let steps = log.pretrain_steps();
        if !steps.is_empty() {
            let y = savitzky_golay(&steps.iter().map(|s| s.1).collect::<Vec<_>>(), smoothing)?;
            pre.push((label.clone(), steps.iter().map(|s| s.0 as f64).zip(y).collect()));
        }
    }
    let mut images = Vec::new();
    for (name, series, x_label, y_label) in [
        ("reward.svg", &reward, "env steps", "mean return"),
        ("il_loss.svg", &il, "env steps", "IL loss"),
        ("pretrain_loss.svg", &pre, "step", "IL loss"),
    ] {
        if series.is_empty() {
            continue;
        }
        let path = out_dir.join(name);
        draw(&path, series, x_label, y_label).map_err(|e| Error::Numeric(format!("{}: {e}", path.display())))?;
        images.push(path);
    }
    Ok(PlotOutputs {
        csv,
        images,
        rows: rows.len(),
    })
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };
    (lo - pad, hi + pad)
}

fn draw(path: &Path, series: &[Series], x_label: &str, y_label: &str) -> std::result::Result<(), Box<dyn std::error::Error>> {
    let root = SVGBackend::new(path, (900, 540)).into_drawing_area();
    root.fill(&WHITE)?;
    let (x0, x1) = range(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let (y0, y1) = range(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let mut chart = ChartBuilder::on(&root)
        .margin(20)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)?;
    chart.configure_mesh().x_desc(x_label).y_desc(y_label).draw()?;
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))?
            .label(label.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_one_is_identity() {
        let xs = [1.0, 5.0, -2.0, 0.25];
        assert_eq!(savitzky_golay(&xs, SmoothingSpec { window: 1, order: 0 }).unwrap(), xs);
    }

    #[test]
    fn polynomials_of_the_fit_order_pass_through() {
        let xs: Vec<f64> = (0..30).map(|i| 0.5 * (i * i) as f64 - 3.0 * i as f64 + 1.0).collect();
        let ys = savitzky_golay(&xs, SmoothingSpec { window: 7, order: 2 }).unwrap();
        for (a, b) in xs.iter().zip(&ys) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn order_zero_is_a_moving_average() {
        let xs = [0.0, 3.0, 6.0, 0.0, 3.0];
        let ys = savitzky_golay(&xs, SmoothingSpec { window: 3, order: 0 }).unwrap();
        assert!((ys[2] - 3.0).abs() < 1e-12);
        assert!((ys[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn bad_windows() {
        assert!(savitzky_golay(&[1.0], SmoothingSpec { window: 4, order: 1 }).is_err());
        assert!(savitzky_golay(&[1.0], SmoothingSpec { window: 5, order: 5 }).is_err());
    }
}
