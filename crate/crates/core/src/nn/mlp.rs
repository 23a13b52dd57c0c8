use serde::{Deserialize, Serialize};

use super::init::ParamRng;
use super::linear::LinearParams;
use super::params::{prefixed, Params, TensorRef};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    /// Derivative evaluated at the pre-activation `v`; ReLU uses 0 at the kink.
    fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Two fully-connected layers; the output is raw logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: LinearParams,
    pub output: LinearParams,
}

pub(crate) struct MlpCache {
    pre: Vec<f64>,
    act: Vec<f64>,
}

impl MlpParams {
    pub fn init(rng: &mut ParamRng, input: usize, hidden: usize, output: usize) -> Self {
        let hidden_layer = LinearParams::init(rng, input, hidden);
        let output_layer = LinearParams::init(rng, hidden, output);
        MlpParams {
            hidden: hidden_layer,
            output: output_layer,
        }
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        MlpParams {
            hidden: LinearParams::zeros(input, hidden),
            output: LinearParams::zeros(hidden, output),
        }
    }

    pub fn from_layers(layers: Vec<LinearParams>) -> Result<Self> {
        let [hidden, output]: [LinearParams; 2] = layers.try_into().map_err(|v: Vec<_>| {
            Error::InvalidArgument(format!("mlp needs exactly 2 layers, got {}", v.len()))
        })?;
        if hidden.output_dim() != output.input_dim() {
            return Err(Error::dim(
                "mlp layer chaining",
                hidden.output_dim(),
                output.input_dim(),
            ));
        }
        Ok(MlpParams { hidden, output })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.output.output_dim()
    }

    pub(crate) fn forward(&self, x: &[f64], act: Activation) -> (Vec<f64>, MlpCache) {
        let pre = self.hidden.forward(x);
        let a: Vec<f64> = pre.iter().map(|&v| act.apply(v)).collect();
        let out = self.output.forward(&a);
        (out, MlpCache { pre, act: a })
    }

    pub(crate) fn backward(
        &self,
        x: &[f64],
        cache: &MlpCache,
        d_out: &[f64],
        act: Activation,
        grad: &mut MlpParams,
        dx: &mut [f64],
    ) {
        let mut d_act = vec![0.0; cache.act.len()];
        self.output
            .backward(&cache.act, d_out, &mut grad.output, Some(&mut d_act));
        for (d, &p) in d_act.iter_mut().zip(&cache.pre) {
            *d *= act.derivative(p);
        }
        self.hidden.backward(x, &d_act, &mut grad.hidden, Some(dx));
    }
}

pub fn mlp_apply(layers: &[LinearParams], x: &[f64], act: Activation) -> Result<Vec<f64>> {
    let mlp = MlpParams::from_layers(layers.to_vec())?;
    if x.len() != mlp.input_dim() {
        return Err(Error::dim("mlp input", mlp.input_dim(), x.len()));
    }
    Ok(mlp.forward(x, act).0)
}

impl Params for MlpParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = prefixed("hidden", self.hidden.tensors());
        out.extend(prefixed("output", self.output.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.hidden.tensors_mut();
        out.extend(self.output.tensors_mut());
        out
    }
}
