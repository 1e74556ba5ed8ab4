use std::path::{Path, PathBuf};

use super::run::{create_dir, write_text, EVAL_FILE, LOG_FILE};
use super::svg::{line_chart, Series};
use crate::error::{Error, Result};
use crate::eval::{read_eval_csv, EvalTable};
use crate::train::TrainingLog;

pub const REPORT_FILE: &str = "report.csv";
pub const MAP_PLOT_FILE: &str = "map_vs_threshold.svg";
pub const LOSS_PLOT_FILE: &str = "training_curves.svg";

#[derive(Debug, Clone)]
pub struct ReportOutput {
    pub table: String,
    pub files: Vec<PathBuf>,
}

fn run_label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Merges the `eval.csv` of each run into one table (one row per run, one mAP
/// column per threshold) and draws mAP-vs-threshold and training-loss plots.
pub fn cmd_report(run_dirs: &[PathBuf], out: &Path) -> Result<ReportOutput> {
    if run_dirs.is_empty() {
        return Err(Error::Config("report needs at least one run directory".into()));
    }
    let mut tables: Vec<(String, EvalTable)> = Vec::new();
    for dir in run_dirs {
        if !dir.is_dir() {
            return Err(Error::Format {
                path: dir.clone(),
                detail: "not a run directory".into(),
            });
        }
        let path = dir.join(EVAL_FILE);
        if !path.exists() {
            return Err(Error::Format {
                path: dir.clone(),
                detail: format!("run directory has no {EVAL_FILE}"),
            });
        }
        tables.push((run_label(dir), read_eval_csv(&path)?));
    }
    let thresholds = tables[0].1.thresholds.clone();
    if let Some((i, _)) = tables.iter().enumerate().find(|(_, (_, t))| t.thresholds != thresholds) {
        return Err(Error::Format {
            path: run_dirs[i].join(EVAL_FILE),
            detail: "thresholds differ from the first run".into(),
        });
    }

    let mut csv = String::from("run");
    for t in &thresholds {
        csv.push_str(&format!(",{t}"));
    }
    csv.push('\n');
    let mut map_series = Vec::new();
    for (label, table) in &tables {
        let maps = table.map_row().expect("parsed tables have an mAP row");
        csv.push_str(label);
        for m in maps {
            csv.push_str(&format!(",{m:.6}"));
        }
        csv.push('\n');
        let mut points: Vec<(f64, f64)> = thresholds.iter().copied().zip(maps.iter().copied()).collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        map_series.push(Series {
            label: label.clone(),
            points,
        });
    }

    let mut loss_series = Vec::new();
    for (dir, (label, _)) in run_dirs.iter().zip(&tables) {
        let log_path = dir.join(LOG_FILE);
        if log_path.exists() {
            let log = TrainingLog::read_csv(&log_path)?;
            loss_series.push(Series {
                label: label.clone(),
                points: log.rows.iter().map(|r| (r.iteration as f64, r.total)).collect(),
            });
        }
    }

    create_dir(out)?;
    let mut files = Vec::new();
    for (name, body) in [
        (REPORT_FILE, csv.clone()),
        (MAP_PLOT_FILE, line_chart("mAP vs IoU threshold", "IoU threshold", "mAP", &map_series)),
        (LOSS_PLOT_FILE, line_chart("Training loss", "iteration", "L", &loss_series)),
    ] {
        let path = out.join(name);
        write_text(&path, &body)?;
        files.push(path);
    }
    Ok(ReportOutput { table: csv, files })
}
