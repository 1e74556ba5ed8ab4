use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub velocity: Vec<Tensor>,
}

impl SgdState {
    pub fn zeros_like(params: &[Tensor]) -> Self {
        SgdState {
            velocity: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }
}

/// `v <- momentum * v + g; w <- w - lr * v`, elementwise.
pub fn sgd_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut SgdState,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(Error::shape(
            "sgd_step",
            format!(
                "{} parameters, {} gradients, {} velocity buffers",
                params.len(),
                grads.len(),
                state.velocity.len()
            ),
        ));
    }
    for (i, ((w, g), v)) in params.iter().zip(grads).zip(&state.velocity).enumerate() {
        if w.shape() != g.shape() || w.shape() != v.shape() {
            return Err(Error::shape(
                "sgd_step",
                format!("tensor {i}: w {:?}, g {:?}, v {:?}", w.shape(), g.shape(), v.shape()),
            ));
        }
    }
    for ((w, g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        for ((wi, &gi), vi) in w.data_mut().iter_mut().zip(g.data()).zip(v.data_mut().iter_mut()) {
            *vi = momentum * *vi + gi;
            *wi -= lr * *vi;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_momentum_is_plain_gradient_descent() {
        let mut w = vec![Tensor::from_vec(vec![1.0, -2.0])];
        let g = vec![Tensor::from_vec(vec![0.5, 0.25])];
        let mut st = SgdState::zeros_like(&w);
        sgd_step(&mut w, &g, &mut st, 0.1, 0.0).unwrap();
        assert_eq!(w[0].data(), &[1.0 - 0.05, -2.0 - 0.025]);
    }

    #[test]
    fn two_momentum_steps_by_hand() {
        let mut w = vec![Tensor::from_vec(vec![0.0])];
        let g = vec![Tensor::from_vec(vec![1.0])];
        let mut st = SgdState::zeros_like(&w);
        sgd_step(&mut w, &g, &mut st, 0.1, 0.9).unwrap();
        assert!((w[0].data()[0] + 0.1).abs() < 1e-15);
        sgd_step(&mut w, &g, &mut st, 0.1, 0.9).unwrap();
        assert!((w[0].data()[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let mut w = vec![Tensor::from_vec(vec![0.0, 1.0])];
        let mut st = SgdState::zeros_like(&w);
        let g = vec![Tensor::from_vec(vec![1.0])];
        assert!(sgd_step(&mut w, &g, &mut st, 0.1, 0.9).is_err());
        assert!(sgd_step(&mut w, &[], &mut st, 0.1, 0.9).is_err());
    }
}
