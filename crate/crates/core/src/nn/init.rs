use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Matrix;

pub type ParamRng = ChaCha8Rng;

pub fn rng(seed: u64) -> ParamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn uniform_fill(rng: &mut ParamRng, fan_in: usize, buf: &mut [f64]) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for v in buf {
        *v = rng.random_range(-bound..bound);
    }
}

pub fn uniform_matrix(rng: &mut ParamRng, rows: usize, cols: usize, fan_in: usize) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    uniform_fill(rng, fan_in, m.as_mut_slice());
    m
}

pub fn uniform_vec(rng: &mut ParamRng, len: usize, fan_in: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    uniform_fill(rng, fan_in, &mut v);
    v
}
