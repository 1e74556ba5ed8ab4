//! JSON-lines files: one detection or ground-truth record per line.

use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Serialize};

use super::types::{Detection, GroundTruthInstance};
use crate::error::{Error, Result};

fn write_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).expect("record serializes"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::format(path, format!("line {}: {e}", n + 1))))
        .collect()
}

pub fn write_detections(path: &Path, detections: &[Detection]) -> Result<()> {
    write_lines(path, detections)
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>> {
    let dets: Vec<Detection> = read_lines(path)?;
    for d in &dets {
        d.validate().map_err(|e| Error::format(path, e))?;
    }
    Ok(dets)
}

pub fn write_ground_truth(path: &Path, instances: &[GroundTruthInstance]) -> Result<()> {
    write_lines(path, instances)
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<GroundTruthInstance>> {
    let gt: Vec<GroundTruthInstance> = read_lines(path)?;
    for g in &gt {
        g.validate().map_err(|e| Error::format(path, e))?;
    }
    Ok(gt)
}
