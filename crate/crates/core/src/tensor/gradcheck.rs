//! Central finite-difference checks of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Fault, Tape, Var};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Check at most this many coordinates per input, chosen with `seed`.
    /// `None` checks every coordinate.
    pub max_coords_per_input: Option<usize>,
    pub seed: u64,
    #[doc(hidden)]
    pub fault: Option<Fault>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-5,
            max_coords_per_input: None,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Max relative error over all checked coordinates.
    pub max_rel_error: f64,
    /// Max relative error per input, in input order.
    pub per_input: Vec<f64>,
    pub coords_checked: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn evaluate<F>(f: &F, inputs: &[Tensor], fault: Option<Fault>) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    if let Some(fault) = fault {
        tape.inject_fault(fault);
    }
    let vars = inputs
        .iter()
        .map(|t| tape.variable(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    if !tape.value(out).is_scalar() {
        return Err(Error::InvalidArgument(format!(
            "grad_check needs a scalar function, got shape {:?}",
            tape.value(out).shape()
        )));
    }
    Ok((tape, vars, out))
}

/// Compares reverse-mode gradients of the scalar function `f` against
/// central differences at `inputs`.
pub fn grad_check<F>(f: F, inputs: &[Tensor], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(opts.epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {}", opts.epsilon)));
    }
    let (tape, vars, out) = evaluate(&f, inputs, opts.fault)?;
    let grads = tape.backward(out)?;
    drop(tape);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut per_input = Vec::with_capacity(inputs.len());
    let mut coords_checked = 0;
    let mut probe = inputs.to_vec();
    for (i, &var) in vars.iter().enumerate() {
        let analytic = grads.wrt(var);
        let n = inputs[i].len();
        let coords: Vec<usize> = match opts.max_coords_per_input {
            Some(k) if k < n => {
                let mut c = sample(&mut rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        let mut worst: f64 = 0.0;
        for j in coords {
            let orig = inputs[i].data()[j];
            probe[i].data_mut()[j] = orig + opts.epsilon;
            let (t_plus, _, o_plus) = evaluate(&f, &probe, None)?;
            let plus = t_plus.scalar(o_plus)?;
            probe[i].data_mut()[j] = orig - opts.epsilon;
            let (t_minus, _, o_minus) = evaluate(&f, &probe, None)?;
            let minus = t_minus.scalar(o_minus)?;
            probe[i].data_mut()[j] = orig;

            let numeric = (plus - minus) / (2.0 * opts.epsilon);
            worst = worst.max(relative_error(analytic.data()[j], numeric));
            coords_checked += 1;
        }
        per_input.push(worst);
    }
    Ok(GradCheckReport {
        max_rel_error: per_input.iter().copied().fold(0.0, f64::max),
        per_input,
        coords_checked,
    })
}
