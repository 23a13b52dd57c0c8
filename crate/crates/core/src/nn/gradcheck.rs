//! Central finite-difference gradient checking.

use super::params::Params;

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Denominator floor for the relative error, so entries whose true gradient
/// is ~0 are judged on absolute error at this scale.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `analytic` against `(L(θ+h) − L(θ−h)) / 2h` entry by entry.
pub fn grad_check<P, L>(params: &P, analytic: &P, loss: L, step: f64, tolerance: f64) -> GradCheckReport
where
    P: Params,
    L: Fn(&P) -> f64,
{
    let base = params.to_flat();
    let grads = analytic.to_flat();
    assert_eq!(base.len(), grads.len(), "analytic gradient shape");
    let mut probe = params.clone();
    let mut flat = base.clone();
    let mut tensors = Vec::new();
    let mut offset = 0;
    for t in params.tensors() {
        let mut check = TensorCheck {
            name: t.name.clone(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        for i in offset..offset + t.data.len() {
            flat[i] = base[i] + step;
            probe.assign_flat(&flat);
            let up = loss(&probe);
            flat[i] = base[i] - step;
            probe.assign_flat(&flat);
            let down = loss(&probe);
            flat[i] = base[i];
            let numeric = (up - down) / (2.0 * step);
            check.max_rel_error = check.max_rel_error.max(relative_error(grads[i], numeric));
            check.max_abs_error = check.max_abs_error.max((grads[i] - numeric).abs());
        }
        offset += t.data.len();
        tensors.push(check);
    }
    let max_rel_error = tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max);
    GradCheckReport {
        passed: max_rel_error < tolerance,
        tensors,
        max_rel_error,
        tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init::rng;
    use crate::nn::LinearParams;

    // L = Σ_k c_k (W x + b)_k
    fn linear_loss(p: &LinearParams, x: &[f64], c: &[f64]) -> f64 {
        p.forward(x).iter().zip(c).map(|(y, c)| y * c).sum()
    }

    fn linear_setup() -> (LinearParams, LinearParams, Vec<f64>, Vec<f64>) {
        let p = LinearParams::init(&mut rng(1), 3, 2);
        let x = vec![0.3, -1.2, 2.0];
        let c = vec![1.5, -0.5];
        let mut g = p.zeros_like();
        p.backward(&x, &c, &mut g, None);
        (p, g, x, c)
    }

    #[test]
    fn linear_model_passes_tightly() {
        let (p, g, x, c) = linear_setup();
        let report = grad_check(&p, &g, |q| linear_loss(q, &x, &c), 1e-5, 1e-6);
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn corrupted_entry_fails() {
        let (p, mut g, x, c) = linear_setup();
        g.weight.as_mut_slice()[4] += 0.1;
        let report = grad_check(&p, &g, |q| linear_loss(q, &x, &c), 1e-5, 1e-4);
        assert!(!report.passed);
        assert_eq!(report.worst().unwrap().name, "weight");
    }
}
