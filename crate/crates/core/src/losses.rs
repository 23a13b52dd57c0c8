//! Composite training objective: weighted BCE plus weighted multi-label
//! soft-margin loss, both over logits.
//!
//! For a batch of `B` samples and the 12 AUs the two terms are
//!
//! ```text
//! L_bce   = 1/(12B) Σ_i Σ_j w_bce_j   · ℓ(x_ij, y_ij)
//! L_multi = 1/B     Σ_i (1/12) Σ_j w_multi_j · ℓ(x_ij, y_ij)
//! ℓ(x, y) = max(x, 0) − x·y + ln(1 + e^{−|x|})
//! ```
//!
//! so they share the per-element term and differ only through their weight
//! vectors. `ℓ` is the overflow-free form of `−y ln σ(x) − (1−y) ln σ(−x)`.

use serde::{Deserialize, Serialize};

use crate::au::{DEFAULT_W_BCE, DEFAULT_W_MULTI, NUM_AUS};
use crate::error::{Error, Result};
use crate::nn::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_bce: [f64; NUM_AUS],
    pub w_multi: [f64; NUM_AUS],
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_bce: DEFAULT_W_BCE,
            w_multi: DEFAULT_W_MULTI,
        }
    }
}

impl LossWeights {
    pub fn unit() -> Self {
        LossWeights {
            w_bce: [1.0; NUM_AUS],
            w_multi: [1.0; NUM_AUS],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.w_bce.iter().chain(&self.w_multi);
        if all.into_iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(
                "loss weights must be positive and finite".into(),
            ));
        }
        Ok(())
    }

    /// Weight multiplying `ℓ` for AU `j` in the summed objective.
    pub fn combined(&self, j: usize) -> f64 {
        self.w_bce[j] + self.w_multi[j]
    }
}

/// Stable `−y ln σ(x) − (1−y) ln σ(−x)`.
#[inline]
pub fn bce_with_logits(x: f64, y: f64) -> f64 {
    x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()
}

fn check(logits: &[[f64; NUM_AUS]], labels: &[[u8; NUM_AUS]]) -> Result<()> {
    if logits.len() != labels.len() {
        return Err(Error::dim("loss batch", logits.len(), labels.len()));
    }
    if logits.is_empty() {
        return Err(Error::Empty("loss batch".into()));
    }
    for (i, row) in labels.iter().enumerate() {
        if let Some(j) = row.iter().position(|&v| v > 1) {
            return Err(Error::InvalidLabel {
                sample: i,
                au: j,
                value: row[j] as i64,
            });
        }
    }
    Ok(())
}

fn weighted_sum(logits: &[[f64; NUM_AUS]], labels: &[[u8; NUM_AUS]], w: &[f64; NUM_AUS]) -> f64 {
    logits
        .iter()
        .zip(labels)
        .map(|(x, y)| {
            (0..NUM_AUS)
                .map(|j| w[j] * bce_with_logits(x[j], y[j] as f64))
                .sum::<f64>()
        })
        .sum()
}

/// Mean over batch and AUs of the per-AU weighted BCE.
pub fn weighted_bce(
    logits: &[[f64; NUM_AUS]],
    labels: &[[u8; NUM_AUS]],
    w: &[f64; NUM_AUS],
) -> Result<f64> {
    check(logits, labels)?;
    Ok(weighted_sum(logits, labels, w) / (logits.len() * NUM_AUS) as f64)
}

/// Per-sample `(1/12) Σ_j w_j ℓ_j`, averaged over the batch.
pub fn weighted_multilabel_softmargin(
    logits: &[[f64; NUM_AUS]],
    labels: &[[u8; NUM_AUS]],
    w: &[f64; NUM_AUS],
) -> Result<f64> {
    check(logits, labels)?;
    let per_sample: f64 = logits
        .iter()
        .zip(labels)
        .map(|(x, y)| {
            let s: f64 = (0..NUM_AUS)
                .map(|j| w[j] * bce_with_logits(x[j], y[j] as f64))
                .sum();
            s / NUM_AUS as f64
        })
        .sum();
    Ok(per_sample / logits.len() as f64)
}

pub fn total_loss(
    logits: &[[f64; NUM_AUS]],
    labels: &[[u8; NUM_AUS]],
    weights: &LossWeights,
) -> Result<f64> {
    Ok(weighted_bce(logits, labels, &weights.w_bce)?
        + weighted_multilabel_softmargin(logits, labels, &weights.w_multi)?)
}

/// `∂ total_loss / ∂ logits` for one sample of a batch of size `batch_len`,
/// scaled by that sample's weight.
pub(crate) fn total_loss_grad_row(
    logits: &[f64; NUM_AUS],
    labels: &[u8; NUM_AUS],
    weights: &LossWeights,
    batch_len: usize,
    sample_weight: f64,
) -> [f64; NUM_AUS] {
    let scale = sample_weight / (batch_len * NUM_AUS) as f64;
    let mut out = [0.0; NUM_AUS];
    for j in 0..NUM_AUS {
        out[j] = scale * weights.combined(j) * (sigmoid(logits[j]) - labels[j] as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn zero_logits_cost_ln2() {
        let x = vec![[0.0; NUM_AUS]; 3];
        let y = vec![[1u8; NUM_AUS], [0u8; NUM_AUS], [1u8; NUM_AUS]];
        let l = weighted_bce(&x, &y, &[1.0; NUM_AUS]).unwrap();
        assert!((l - LN_2).abs() < 1e-15);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn saturated_logits_do_not_overflow() {
        let x = vec![[50.0; NUM_AUS]];
        let y = vec![[1u8; NUM_AUS]];
        let l = weighted_bce(&x, &y, &[1.0; NUM_AUS]).unwrap();
        assert!(l.is_finite() && l < 1e-20);
        let extreme = vec![[500.0; NUM_AUS], [-500.0; NUM_AUS]];
        let wrong = vec![[0u8; NUM_AUS], [1u8; NUM_AUS]];
        let l = weighted_bce(&extreme, &wrong, &[1.0; NUM_AUS]).unwrap();
        assert!((l - 500.0).abs() < 1e-9);
    }

    #[test]
    fn doubling_one_weight_doubles_that_contribution() {
        let mut row = [0.0; NUM_AUS];
        row[3] = 1.3;
        let x = vec![row];
        let y = vec![[0u8; NUM_AUS]];
        let mut only3 = [0.0; NUM_AUS];
        only3[3] = 1.0;
        let a = weighted_bce(&x, &y, &only3).unwrap();
        only3[3] = 2.0;
        let b = weighted_bce(&x, &y, &only3).unwrap();
        assert_eq!(b, 2.0 * a);
    }

    #[test]
    fn multilabel_equals_bce_at_unit_weights() {
        let x = vec![[0.3, -1.0, 2.0, 0.0, 5.0, -3.0, 0.1, 0.2, -0.2, 1.1, -1.1, 0.7]];
        let y = vec![[1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 0, 0]];
        let a = weighted_bce(&x, &y, &[1.0; NUM_AUS]).unwrap();
        let b = weighted_multilabel_softmargin(&x, &y, &[1.0; NUM_AUS]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn single_class_arithmetic() {
        // Only AU j=5 carries weight 3 at logit 0.
        let x = vec![[0.0; NUM_AUS]];
        let y = vec![[1u8; NUM_AUS]];
        let mut w = [0.0; NUM_AUS];
        w[5] = 3.0;
        let l = weighted_multilabel_softmargin(&x, &y, &w).unwrap();
        assert!((l - 3.0 * LN_2 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions_cost_nothing() {
        let y = vec![[1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 0, 0]];
        let x = vec![y[0].map(|v| if v == 1 { 50.0 } else { -50.0 })];
        assert!(total_loss(&x, &y, &LossWeights::default()).unwrap() < 1e-18);
    }

    #[test]
    fn unit_weights_total_is_twice_bce() {
        let x = vec![[0.4; NUM_AUS], [-0.9; NUM_AUS]];
        let y = vec![[1u8; NUM_AUS], [1u8; NUM_AUS]];
        let bce = weighted_bce(&x, &y, &[1.0; NUM_AUS]).unwrap();
        let total = total_loss(&x, &y, &LossWeights::unit()).unwrap();
        assert!((total - 2.0 * bce).abs() < 1e-15);
    }

    #[test]
    fn default_weights_differ_only_on_au24_au26() {
        let w = LossWeights::default();
        let x = vec![[0.0; NUM_AUS]];
        let y = vec![[0u8; NUM_AUS]];
        let mut diff = [0.0; NUM_AUS];
        for j in 0..NUM_AUS {
            let mut mask = [0.0; NUM_AUS];
            mask[j] = w.w_bce[j];
            let a = weighted_bce(&x, &y, &mask).unwrap();
            mask[j] = w.w_multi[j];
            let b = weighted_multilabel_softmargin(&x, &y, &mask).unwrap();
            diff[j] = a - b;
        }
        for (j, d) in diff.iter().enumerate() {
            if j == 9 || j == 11 {
                assert!(d.abs() > 1e-6);
            } else {
                assert!(d.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_bad_labels_and_weights() {
        let x = vec![[0.0; NUM_AUS]];
        let mut y = vec![[0u8; NUM_AUS]];
        y[0][7] = 2;
        assert!(matches!(
            weighted_bce(&x, &y, &[1.0; NUM_AUS]),
            Err(Error::InvalidLabel { au: 7, .. })
        ));
        let mut w = LossWeights::default();
        w.w_multi[0] = 0.0;
        assert!(w.validate().is_err());
        assert!(LossWeights::default().validate().is_ok());
    }

    #[test]
    fn logit_gradient_matches_finite_differences() {
        let x = [0.3, -1.0, 2.0, 0.0, 5.0, -3.0, 0.1, 0.2, -0.2, 1.1, -1.1, 0.7];
        let y = [1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 0, 0];
        let other = [[0.5; NUM_AUS]];
        let w = LossWeights::default();
        let g = total_loss_grad_row(&x, &y, &w, 2, 1.0);
        let h = 1e-6;
        for j in 0..NUM_AUS {
            let f = |d: f64| {
                let mut xx = x;
                xx[j] += d;
                total_loss(&[xx, other[0]], &[y, [1u8; NUM_AUS]], &w).unwrap()
            };
            let num = (f(h) - f(-h)) / (2.0 * h);
            let rel = (g[j] - num).abs() / g[j].abs().max(1e-8);
            assert!(rel < 1e-6, "AU {j}: {} vs {num}", g[j]);
        }
    }
}
