//! Bidirectional single-layer GRU.
//!
//! Gate convention (fixed so that oracle recursions are unambiguous):
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! h̃  = tanh(W_h x + U_h (r ⊙ h) + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ h̃
//! ```
//!
//! Both directions start from a zero hidden state. The encoder output is the
//! forward direction's state after the last element concatenated with the
//! backward direction's state after the first element.

use serde::{Deserialize, Serialize};

use super::init::{uniform_matrix, uniform_vec, ParamRng};
use super::params::{prefixed, Params, TensorRef};
use super::{sigmoid, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruDirection {
    pub w_z: Matrix,
    pub w_r: Matrix,
    pub w_h: Matrix,
    pub u_z: Matrix,
    pub u_r: Matrix,
    pub u_h: Matrix,
    pub b_z: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_h: Vec<f64>,
}

impl GruDirection {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruDirection {
            w_z: Matrix::zeros(hidden, input),
            w_r: Matrix::zeros(hidden, input),
            w_h: Matrix::zeros(hidden, input),
            u_z: Matrix::zeros(hidden, hidden),
            u_r: Matrix::zeros(hidden, hidden),
            u_h: Matrix::zeros(hidden, hidden),
            b_z: vec![0.0; hidden],
            b_r: vec![0.0; hidden],
            b_h: vec![0.0; hidden],
        }
    }

    // Gate biases use the recurrent width as fan-in.
    pub fn init(rng: &mut ParamRng, input: usize, hidden: usize) -> Self {
        GruDirection {
            w_z: uniform_matrix(rng, hidden, input, input),
            w_r: uniform_matrix(rng, hidden, input, input),
            w_h: uniform_matrix(rng, hidden, input, input),
            u_z: uniform_matrix(rng, hidden, hidden, hidden),
            u_r: uniform_matrix(rng, hidden, hidden, hidden),
            u_h: uniform_matrix(rng, hidden, hidden, hidden),
            b_z: uniform_vec(rng, hidden, hidden),
            b_r: uniform_vec(rng, hidden, hidden),
            b_h: uniform_vec(rng, hidden, hidden),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.rows()
    }

    fn step(&self, x: &[f64], h: &[f64]) -> StepCache {
        let n_h = self.hidden_dim();
        let mut z = self.b_z.clone();
        self.w_z.matvec_acc(x, &mut z);
        self.u_z.matvec_acc(h, &mut z);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));

        let mut r = self.b_r.clone();
        self.w_r.matvec_acc(x, &mut r);
        self.u_r.matvec_acc(h, &mut r);
        r.iter_mut().for_each(|v| *v = sigmoid(*v));

        let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
        let mut cand = self.b_h.clone();
        self.w_h.matvec_acc(x, &mut cand);
        self.u_h.matvec_acc(&rh, &mut cand);
        cand.iter_mut().for_each(|v| *v = v.tanh());

        let mut h_next = vec![0.0; n_h];
        for k in 0..n_h {
            h_next[k] = (1.0 - z[k]) * h[k] + z[k] * cand[k];
        }
        StepCache {
            h_prev: h.to_vec(),
            z,
            r,
            rh,
            cand,
            h_next,
        }
    }

    /// Runs the recurrence over `seq` in the given order of indices.
    fn run(&self, seq: &[Vec<f64>], order: impl Iterator<Item = usize>) -> DirectionCache {
        let mut h = vec![0.0; self.hidden_dim()];
        let mut steps = Vec::with_capacity(seq.len());
        let mut indices = Vec::with_capacity(seq.len());
        for idx in order {
            let s = self.step(&seq[idx], &h);
            h.clone_from(&s.h_next);
            steps.push(s);
            indices.push(idx);
        }
        DirectionCache {
            steps,
            indices,
            last: h,
        }
    }

    /// Backpropagates `d_last` through the cached recurrence, accumulating
    /// parameter gradients and adding input gradients into `d_seq`.
    fn backprop(
        &self,
        seq: &[Vec<f64>],
        cache: &DirectionCache,
        d_last: &[f64],
        grad: &mut GruDirection,
        d_seq: &mut [Vec<f64>],
    ) {
        let n_h = self.hidden_dim();
        let mut dh = d_last.to_vec();
        let mut da_z = vec![0.0; n_h];
        let mut da_r = vec![0.0; n_h];
        let mut da_h = vec![0.0; n_h];
        let mut d_rh = vec![0.0; n_h];
        for (s, &idx) in cache.steps.iter().zip(&cache.indices).rev() {
            let x = &seq[idx];
            let mut dh_prev = vec![0.0; n_h];
            for k in 0..n_h {
                let dz = dh[k] * (s.cand[k] - s.h_prev[k]);
                let dc = dh[k] * s.z[k];
                dh_prev[k] = dh[k] * (1.0 - s.z[k]);
                da_z[k] = dz * s.z[k] * (1.0 - s.z[k]);
                da_h[k] = dc * (1.0 - s.cand[k] * s.cand[k]);
            }

            d_rh.iter_mut().for_each(|v| *v = 0.0);
            self.u_h.matvec_t_acc(&da_h, &mut d_rh);
            for k in 0..n_h {
                let dr = d_rh[k] * s.h_prev[k];
                dh_prev[k] += d_rh[k] * s.r[k];
                da_r[k] = dr * s.r[k] * (1.0 - s.r[k]);
            }

            grad.w_z.add_outer(&da_z, x);
            grad.w_r.add_outer(&da_r, x);
            grad.w_h.add_outer(&da_h, x);
            grad.u_z.add_outer(&da_z, &s.h_prev);
            grad.u_r.add_outer(&da_r, &s.h_prev);
            grad.u_h.add_outer(&da_h, &s.rh);
            for k in 0..n_h {
                grad.b_z[k] += da_z[k];
                grad.b_r[k] += da_r[k];
                grad.b_h[k] += da_h[k];
            }

            let dx = &mut d_seq[idx];
            self.w_z.matvec_t_acc(&da_z, dx);
            self.w_r.matvec_t_acc(&da_r, dx);
            self.w_h.matvec_t_acc(&da_h, dx);

            self.u_z.matvec_t_acc(&da_z, &mut dh_prev);
            self.u_r.matvec_t_acc(&da_r, &mut dh_prev);
            dh = dh_prev;
        }
    }
}

struct StepCache {
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    rh: Vec<f64>,
    cand: Vec<f64>,
    h_next: Vec<f64>,
}

struct DirectionCache {
    steps: Vec<StepCache>,
    indices: Vec<usize>,
    last: Vec<f64>,
}

/// Saved activations of one [`GruParams::forward`] call.
pub struct BiGruCache {
    fwd: DirectionCache,
    bwd: DirectionCache,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub forward: GruDirection,
    pub backward: GruDirection,
}

impl GruParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruParams {
            forward: GruDirection::zeros(input, hidden),
            backward: GruDirection::zeros(input, hidden),
        }
    }

    pub fn init(rng: &mut ParamRng, input: usize, hidden: usize) -> Self {
        let forward = GruDirection::init(rng, input, hidden);
        let backward = GruDirection::init(rng, input, hidden);
        GruParams { forward, backward }
    }

    pub fn input_dim(&self) -> usize {
        self.forward.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.forward.hidden_dim()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.forward.hidden_dim() != self.backward.hidden_dim() {
            return Err(Error::dim(
                "gru backward hidden",
                self.forward.hidden_dim(),
                self.backward.hidden_dim(),
            ));
        }
        if self.forward.input_dim() != self.backward.input_dim() {
            return Err(Error::dim(
                "gru backward input",
                self.forward.input_dim(),
                self.backward.input_dim(),
            ));
        }
        Ok(())
    }

    fn check_seq(&self, seq: &[Vec<f64>]) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::Empty("gru input sequence".into()));
        }
        if let Some(bad) = seq.iter().find(|x| x.len() != self.input_dim()) {
            return Err(Error::dim("gru input", self.input_dim(), bad.len()));
        }
        Ok(())
    }

    /// Returns `[h_fwd ‖ h_bwd]` (length `2h`) and the backward cache.
    pub(crate) fn forward(&self, seq: &[Vec<f64>]) -> (Vec<f64>, BiGruCache) {
        let fwd = self.forward.run(seq, 0..seq.len());
        let bwd = self.backward.run(seq, (0..seq.len()).rev());
        let mut out = fwd.last.clone();
        out.extend_from_slice(&bwd.last);
        (out, BiGruCache { fwd, bwd })
    }

    /// Accumulates gradients for upstream `d_out` (length `2h`); returns the
    /// gradient with respect to each input element.
    pub(crate) fn backward(
        &self,
        seq: &[Vec<f64>],
        cache: &BiGruCache,
        d_out: &[f64],
        grad: &mut GruParams,
    ) -> Vec<Vec<f64>> {
        let h = self.hidden_dim();
        let mut d_seq = vec![vec![0.0; self.input_dim()]; seq.len()];
        self.forward
            .backprop(seq, &cache.fwd, &d_out[..h], &mut grad.forward, &mut d_seq);
        self.backward
            .backprop(seq, &cache.bwd, &d_out[h..], &mut grad.backward, &mut d_seq);
        d_seq
    }
}

pub fn bigru_encode(p: &GruParams, seq: &[Vec<f64>]) -> Result<Vec<f64>> {
    p.validate()?;
    p.check_seq(seq)?;
    Ok(p.forward(seq).0)
}

fn mat<'a>(name: &str, m: &'a Matrix) -> TensorRef<'a> {
    TensorRef {
        name: name.to_string(),
        shape: vec![m.rows(), m.cols()],
        data: m.as_slice(),
    }
}

fn vec<'a>(name: &str, v: &'a [f64]) -> TensorRef<'a> {
    TensorRef {
        name: name.to_string(),
        shape: vec![v.len()],
        data: v,
    }
}

impl Params for GruDirection {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        vec![
            mat("w_z", &self.w_z),
            mat("w_r", &self.w_r),
            mat("w_h", &self.w_h),
            mat("u_z", &self.u_z),
            mat("u_r", &self.u_r),
            mat("u_h", &self.u_h),
            vec("b_z", &self.b_z),
            vec("b_r", &self.b_r),
            vec("b_h", &self.b_h),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_z.as_mut_slice(),
            self.w_r.as_mut_slice(),
            self.w_h.as_mut_slice(),
            self.u_z.as_mut_slice(),
            self.u_r.as_mut_slice(),
            self.u_h.as_mut_slice(),
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }
}

impl Params for GruParams {
    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = prefixed("fwd", self.forward.tensors());
        out.extend(prefixed("bwd", self.backward.tensors()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.forward.tensors_mut();
        out.extend(self.backward.tensors_mut());
        out
    }
}
