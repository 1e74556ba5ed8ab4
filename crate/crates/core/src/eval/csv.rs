use std::fs;
use std::path::Path;

use super::EvalResult;
use crate::error::{Error, Result};

/// A parsed result table: one row per class plus a trailing `mAP` row,
/// one column per threshold (highest threshold first).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTable {
    pub thresholds: Vec<f64>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl EvalTable {
    pub fn from_result(result: &EvalResult) -> Self {
        let mut order: Vec<usize> = (0..result.per_threshold.len()).collect();
        order.sort_by(|&a, &b| {
            result.per_threshold[b]
                .threshold
                .total_cmp(&result.per_threshold[a].threshold)
        });
        let thresholds = order.iter().map(|&i| result.per_threshold[i].threshold).collect();
        let mut rows: Vec<(String, Vec<f64>)> = result
            .classes()
            .into_iter()
            .map(|c| {
                let values = order
                    .iter()
                    .map(|&i| result.per_threshold[i].ap.get(&c).copied().unwrap_or(0.0))
                    .collect();
                (c.to_string(), values)
            })
            .collect();
        rows.push((
            "mAP".into(),
            order.iter().map(|&i| result.per_threshold[i].map).collect(),
        ));
        EvalTable { thresholds, rows }
    }

    pub fn map_row(&self) -> Option<&[f64]> {
        self.rows
            .iter()
            .rev()
            .find(|(label, _)| label == "mAP")
            .map(|(_, v)| v.as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class");
        for t in &self.thresholds {
            out.push_str(&format!(",{t}"));
        }
        out.push('\n');
        for (label, values) in &self.rows {
            out.push_str(label);
            for v in values {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::format(path, "empty file"))?;
        let mut cols = header.split(',');
        if cols.next() != Some("class") {
            return Err(Error::format(path, "header must start with `class`"));
        }
        let thresholds = cols
            .map(|c| c.trim().parse::<f64>().map_err(|e| Error::format(path, format!("{c:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if thresholds.is_empty() {
            return Err(Error::format(path, "no threshold columns"));
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let mut fields = line.split(',');
            let label = fields.next().unwrap_or_default().to_string();
            let values = fields
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::format(path, format!("row {}: {f:?}: {e}", n + 2)))
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() != thresholds.len() {
                return Err(Error::format(path, format!("row {} has {} values", n + 2, values.len())));
            }
            rows.push((label, values));
        }
        let table = EvalTable { thresholds, rows };
        if table.map_row().is_none() {
            return Err(Error::format(path, "missing mAP row"));
        }
        Ok(table)
    }
}

pub fn write_eval_csv(path: &Path, result: &EvalResult) -> Result<()> {
    fs::write(path, EvalTable::from_result(result).to_csv()).map_err(|e| Error::io(path, e))
}

pub fn read_eval_csv(path: &Path) -> Result<EvalTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EvalTable::parse(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::types::{Detection, GroundTruthInstance};
    use crate::eval::{evaluate, DEFAULT_THRESHOLDS};

    fn sample() -> EvalResult {
        let g = vec![
            GroundTruthInstance {
                video_id: "v".into(),
                start: 0,
                end: 10,
                class_id: 1,
            },
            GroundTruthInstance {
                video_id: "v".into(),
                start: 30,
                end: 40,
                class_id: 2,
            },
        ];
        let d = vec![Detection {
            video_id: "v".into(),
            start: 2,
            end: 10,
            class_id: 1,
            score: 0.7,
        }];
        evaluate(&d, &g, &DEFAULT_THRESHOLDS).unwrap()
    }

    #[test]
    fn layout() {
        let csv = EvalTable::from_result(&sample()).to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "class,0.5,0.4,0.3,0.2,0.1");
        assert_eq!(lines[1], "1,1.000000,1.000000,1.000000,1.000000,1.000000");
        assert_eq!(lines[2], "2,0.000000,0.000000,0.000000,0.000000,0.000000");
        assert_eq!(lines[3], "mAP,0.500000,0.500000,0.500000,0.500000,0.500000");
    }

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eval.csv");
        let r = sample();
        write_eval_csv(&path, &r).unwrap();
        let t = read_eval_csv(&path).unwrap();
        assert_eq!(t, EvalTable::from_result(&r));
        assert_eq!(t.map_row().unwrap(), &[0.5; 5]);
    }

    #[test]
    fn malformed_is_rejected() {
        let p = Path::new("x.csv");
        assert!(EvalTable::parse(p, "").is_err());
        assert!(EvalTable::parse(p, "class,0.5\n1,0.3\n").is_err());
        assert!(EvalTable::parse(p, "class,0.5\nmAP,abc\n").is_err());
        assert!(EvalTable::parse(p, "class,0.5\nmAP,0.1,0.2\n").is_err());
    }
}
