//! The fixed 12-AU label space and the default hyperparameter vectors.

pub const NUM_AUS: usize = 12;

pub const AU_NAMES: [&str; NUM_AUS] = [
    "AU1", "AU2", "AU4", "AU6", "AU7", "AU10", "AU12", "AU15", "AU23", "AU24", "AU25", "AU26",
];

/// Per-AU decision thresholds used as the shipped default.
pub const DEFAULT_THRESHOLDS: [f64; NUM_AUS] =
    [0.5, 0.55, 0.5, 0.4, 0.45, 0.45, 0.45, 0.5, 0.5, 0.55, 0.4, 0.5];

/// Per-AU weights of the BCE term.
pub const DEFAULT_W_BCE: [f64; NUM_AUS] = [1., 2., 1., 1., 1., 1., 1., 6., 6., 5., 1., 5.];

/// Per-AU weights of the multi-label soft-margin term.
pub const DEFAULT_W_MULTI: [f64; NUM_AUS] = [1., 2., 1., 1., 1., 1., 1., 6., 6., 6., 1., 2.];

/// One frame's raw labels: each entry is -1 (unlabeled), 0 or 1.
pub type AuLabels = [i8; NUM_AUS];

/// Index of an AU name such as `"AU24"` (or bare `"24"`).
pub fn au_index(name: &str) -> Option<usize> {
    let trimmed = name.trim();
    let canonical = if trimmed.to_ascii_uppercase().starts_with("AU") {
        trimmed.to_ascii_uppercase()
    } else {
        format!("AU{trimmed}")
    };
    AU_NAMES.iter().position(|n| *n == canonical)
}

pub fn is_valid(labels: &AuLabels) -> bool {
    labels.iter().all(|&v| v == 0 || v == 1)
}
