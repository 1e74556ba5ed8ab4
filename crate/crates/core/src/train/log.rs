use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const TRAINING_LOG_HEADER: &str = "iteration,L_I1,L_I2,L_V,L,pair_accuracy";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub ident_1: f64,
    pub ident_2: f64,
    /// Verification loss, or the contrastive loss for that baseline.
    pub pair: f64,
    pub total: f64,
    /// Over the trailing accuracy window.
    pub pair_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAINING_LOG_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.iteration, r.ident_1, r.ident_2, r.pair, r.total, r.pair_accuracy
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        if lines.next() != Some(TRAINING_LOG_HEADER) {
            return Err(Error::format(path, "unexpected training log header"));
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let bad = |detail: String| Error::format(path, format!("line {}: {detail}", n + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(format!("{} fields", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
            rows.push(LogRow {
                iteration: f[0].parse().map_err(|e| bad(format!("{:?}: {e}", f[0])))?,
                ident_1: num(f[1])?,
                ident_2: num(f[2])?,
                pair: num(f[3])?,
                total: num(f[4])?,
                pair_accuracy: num(f[5])?,
            });
        }
        Ok(TrainingLog { rows })
    }
}
