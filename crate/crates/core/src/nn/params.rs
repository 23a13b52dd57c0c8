/// Borrowed view of one named parameter tensor.
#[derive(Debug, Clone)]
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// A collection of parameter tensors with a fixed, deterministic order.
///
/// `tensors` and `tensors_mut` must enumerate the same tensors in the same
/// order; the provided methods zip over them. Gradients use the same type as
/// the parameters they belong to.
pub trait Params: Clone {
    fn tensors(&self) -> Vec<TensorRef<'_>>;

    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }

    fn add_assign(&mut self, other: &Self) {
        let src = other.tensors();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            debug_assert_eq!(dst.len(), s.data.len());
            dst.iter_mut().zip(s.data).for_each(|(d, v)| *d += v);
        }
    }

    fn sq_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum()
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            out.extend_from_slice(t.data);
        }
        out
    }

    /// Panics if `flat` is not exactly `num_params` long.
    fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params(), "flat parameter length");
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }

    /// True when both sides enumerate identical names and shapes.
    fn congruent(&self, other: &Self) -> bool {
        let a = self.tensors();
        let b = other.tensors();
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|(x, y)| x.name == y.name && x.shape == y.shape)
    }
}

/// Prefixes every tensor name with `prefix.`.
pub(crate) fn prefixed<'a>(prefix: &str, tensors: Vec<TensorRef<'a>>) -> Vec<TensorRef<'a>> {
    tensors
        .into_iter()
        .map(|mut t| {
            t.name = format!("{prefix}.{}", t.name);
            t
        })
        .collect()
}
