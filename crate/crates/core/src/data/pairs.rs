use std::collections::BTreeMap;

use rand::Rng;

use super::dataset::Clip;
use crate::error::{Error, Result};
use crate::losses::VerificationSignal;

/// Two clips (by index into the sampled slice) and their verification signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairSample {
    pub first: usize,
    pub second: usize,
    pub signal: VerificationSignal,
}

/// Draws `batch` pairs with replacement: `ceil(batch * same_ratio)`
/// same-class pairs first, then different-class pairs.
pub fn sample_pairs<R: Rng + ?Sized>(
    clips: &[&Clip],
    batch: usize,
    same_ratio: f64,
    rng: &mut R,
) -> Result<Vec<PairSample>> {
    if !(0.0..=1.0).contains(&same_ratio) {
        return Err(Error::Config(format!("same_ratio {same_ratio} outside [0, 1]")));
    }
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, c) in clips.iter().enumerate() {
        by_label.entry(c.label).or_default().push(i);
    }
    let n_same = (batch as f64 * same_ratio).ceil() as usize;
    let n_diff = batch - n_same.min(batch);
    let n_same = n_same.min(batch);

    let pairable: Vec<&Vec<usize>> = by_label.values().filter(|v| v.len() >= 2).collect();
    if n_same > 0 && pairable.is_empty() {
        return Err(Error::InvalidArgument(
            "no class has two clips; cannot draw same-class pairs".into(),
        ));
    }
    let labels: Vec<&Vec<usize>> = by_label.values().collect();
    if n_diff > 0 && labels.len() < 2 {
        return Err(Error::InvalidArgument(
            "fewer than two classes; cannot draw different-class pairs".into(),
        ));
    }

    let mut pairs = Vec::with_capacity(batch);
    for _ in 0..n_same {
        let members = pairable[rng.random_range(0..pairable.len())];
        let a = rng.random_range(0..members.len());
        let mut b = rng.random_range(0..members.len() - 1);
        if b >= a {
            b += 1;
        }
        pairs.push(PairSample {
            first: members[a],
            second: members[b],
            signal: VerificationSignal::Same,
        });
    }
    for _ in 0..n_diff {
        let la = rng.random_range(0..labels.len());
        let mut lb = rng.random_range(0..labels.len() - 1);
        if lb >= la {
            lb += 1;
        }
        let (ma, mb) = (labels[la], labels[lb]);
        pairs.push(PairSample {
            first: ma[rng.random_range(0..ma.len())],
            second: mb[rng.random_range(0..mb.len())],
            signal: VerificationSignal::Different,
        });
    }
    Ok(pairs)
}
