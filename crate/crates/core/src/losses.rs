//! Identification, verification and contrastive losses on plain tensors.
//!
//! The tape records the same quantities through [`crate::tensor::tape::Tape::nll`]
//! and [`crate::tensor::tape::Tape::contrastive`]; the functions here are the
//! value-level definitions and double as an independent recomputation path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::tape::PROB_CLAMP;
use crate::tensor::Tensor;

/// Whether two clips share an action category.
///
/// One-hot over `(different, same)`: `Same` is `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerificationSignal {
    Different,
    Same,
}

impl VerificationSignal {
    pub fn from_labels(a: usize, b: usize) -> Self {
        if a == b {
            VerificationSignal::Same
        } else {
            VerificationSignal::Different
        }
    }

    /// Position of the 1 in the one-hot pair.
    pub fn index(self) -> usize {
        match self {
            VerificationSignal::Different => 0,
            VerificationSignal::Same => 1,
        }
    }

    pub fn one_hot(self) -> [f64; 2] {
        match self {
            VerificationSignal::Different => [1.0, 0.0],
            VerificationSignal::Same => [0.0, 1.0],
        }
    }

    pub fn is_same(self) -> bool {
        self == VerificationSignal::Same
    }
}

/// Weight on the pair term of the joint objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda: f64,
}

impl LossWeights {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be a finite value >= 0, got {lambda}")));
        }
        Ok(LossWeights { lambda })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda: 1.0 }
    }
}

/// Which pair loss joins the two identification terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PairLoss {
    /// Cross-entropy of the 2-way verification head.
    Verification,
    /// Squared-hinge contrastive loss on the feature distance.
    Contrastive { margin: f64 },
}

impl Default for PairLoss {
    fn default() -> Self {
        PairLoss::Verification
    }
}

pub const DEFAULT_CONTRASTIVE_MARGIN: f64 = 1.0;

fn check_distribution(p: &Tensor, what: &str) -> Result<()> {
    let total = p.sum();
    if (total - 1.0).abs() > 1e-6 || p.data().iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{what} is not a probability distribution (sum {total})"
        )));
    }
    Ok(())
}

/// Cross-entropy against a one-hot class label.
pub fn identification_loss(probs: &Tensor, label: usize) -> Result<f64> {
    if label >= probs.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            probs.len()
        )));
    }
    check_distribution(probs, "identification output")?;
    Ok(-probs.data()[label].max(PROB_CLAMP).ln())
}

/// Cross-entropy of the 2-way similarity distribution against `s`.
pub fn verification_loss(probs: &Tensor, s: VerificationSignal) -> Result<f64> {
    if probs.len() != 2 {
        return Err(Error::shape("verification_loss", format!("{:?}", probs.shape())));
    }
    check_distribution(probs, "verification output")?;
    let total = s
        .one_hot()
        .iter()
        .zip(probs.data())
        .map(|(&si, &pi)| -si * pi.max(PROB_CLAMP).ln())
        .sum::<f64>();
    Ok(total)
}

fn distance(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "contrastive_loss",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// `d^2` for a same-class pair, `max(0, margin - d)^2` otherwise.
pub fn contrastive_loss(a: &Tensor, b: &Tensor, same: bool, margin: f64) -> Result<f64> {
    if !(margin > 0.0) {
        return Err(Error::InvalidArgument(format!("margin must be > 0, got {margin}")));
    }
    let d = distance(a, b)?;
    Ok(if same {
        d * d
    } else {
        let h = (margin - d).max(0.0);
        h * h
    })
}

/// Gradients of [`contrastive_loss`] wrt `(a, b)`. At `d == 0` on a
/// different-class pair the direction is undefined and the gradient is zero.
pub fn contrastive_grad(a: &Tensor, b: &Tensor, same: bool, margin: f64) -> Result<(Tensor, Tensor)> {
    let d = distance(a, b)?;
    let coeff = if same {
        2.0
    } else if d < margin && d > 0.0 {
        -2.0 * (margin - d) / d
    } else {
        0.0
    };
    let ga: Vec<f64> = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| coeff * (x - y))
        .collect();
    let gb = ga.iter().map(|&v| -v).collect();
    Ok((
        Tensor::new(a.shape().to_vec(), ga)?,
        Tensor::new(a.shape().to_vec(), gb)?,
    ))
}

/// `L_I1 + L_I2 + lambda * L_pair`.
pub fn overall_loss(id_loss_1: f64, id_loss_2: f64, pair_loss: f64, weights: LossWeights) -> f64 {
    id_loss_1 + id_loss_2 + weights.lambda * pair_loss
}
