use serde::{Deserialize, Serialize};

use super::init::{uniform_matrix, uniform_vec, ParamRng};
use super::params::{Params, TensorRef};
use super::Matrix;
use crate::error::{Error, Result};

/// Affine map `y = W x + b` with `W` of shape `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl LinearParams {
    pub fn zeros(input: usize, output: usize) -> Self {
        LinearParams {
            weight: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    pub fn init(rng: &mut ParamRng, input: usize, output: usize) -> Self {
        LinearParams {
            weight: uniform_matrix(rng, output, input, input),
            bias: uniform_vec(rng, output, input),
        }
    }

    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weight.rows() != bias.len() {
            return Err(Error::dim("linear bias", weight.rows(), bias.len()));
        }
        Ok(LinearParams { weight, bias })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    /// Forward without the dimension check; callers validate once per sample.
    pub(crate) fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.clone();
        self.weight.matvec_acc(x, &mut y);
        y
    }

    /// Accumulates parameter gradients for input `x` and upstream `dy` into
    /// `grad`; adds `Wᵀ dy` into `dx` when provided.
    pub(crate) fn backward(
        &self,
        x: &[f64],
        dy: &[f64],
        grad: &mut LinearParams,
        dx: Option<&mut [f64]>,
    ) {
        grad.weight.add_outer(dy, x);
        for (b, d) in grad.bias.iter_mut().zip(dy) {
            *b += d;
        }
        if let Some(dx) = dx {
            self.weight.matvec_t_acc(dy, dx);
        }
    }
}

pub fn linear_apply(p: &LinearParams, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != p.input_dim() {
        return Err(Error::dim("linear input", p.input_dim(), x.len()));
    }
    Ok(p.forward(x))
}

impl Params for LinearParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        vec![
            TensorRef {
                name: "weight".into(),
                shape: vec![self.weight.rows(), self.weight.cols()],
                data: self.weight.as_slice(),
            },
            TensorRef {
                name: "bias".into(),
                shape: vec![self.bias.len()],
                data: &self.bias,
            },
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weight.as_mut_slice(), &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weight_zero_bias_is_identity() {
        let p = LinearParams::new(Matrix::identity(3), vec![0.0; 3]).unwrap();
        assert_eq!(linear_apply(&p, &[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn zero_weight_returns_bias() {
        let p = LinearParams::new(Matrix::zeros(2, 3), vec![4.0, -1.0]).unwrap();
        assert_eq!(linear_apply(&p, &[9.0, 9.0, 9.0]).unwrap(), vec![4.0, -1.0]);
    }

    #[test]
    fn two_by_two_product() {
        let p = LinearParams::new(Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]), vec![0.0, 0.0])
            .unwrap();
        assert_eq!(linear_apply(&p, &[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn rejects_wrong_input_dim() {
        let p = LinearParams::zeros(3, 2);
        assert!(matches!(
            linear_apply(&p, &[1.0, 2.0]),
            Err(Error::DimMismatch { expected: 3, found: 2, .. })
        ));
        assert!(LinearParams::new(Matrix::zeros(2, 2), vec![0.0; 3]).is_err());
    }
}
