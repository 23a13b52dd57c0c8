//! F1 metrics, Pearson correlation matrices, correlation-rule mining and
//! ablation tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::au::{AU_NAMES, NUM_AUS};
use crate::error::{Error, Result};
use crate::postprocess::AuCorrRule;

/// Per-AU F1 in percent: `200·TP / (2·TP + FP + FN)`, 0 when nothing is
/// positive in either `pred` or `truth`.
pub fn f1_per_au(pred: &[[u8; NUM_AUS]], truth: &[[u8; NUM_AUS]]) -> Result<[f64; NUM_AUS]> {
    if pred.len() != truth.len() {
        return Err(Error::dim("f1 rows", truth.len(), pred.len()));
    }
    let mut counts = [[0usize; 3]; NUM_AUS];
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        for j in 0..NUM_AUS {
            if p[j] > 1 || t[j] > 1 {
                let value = p[j].max(t[j]) as i64;
                return Err(Error::InvalidLabel { sample: i, au: j, value });
            }
            match (p[j], t[j]) {
                (1, 1) => counts[j][0] += 1,
                (1, 0) => counts[j][1] += 1,
                (0, 1) => counts[j][2] += 1,
                _ => {}
            }
        }
    }
    Ok(counts.map(|[tp, fp, fn_]| f1_from_counts(tp, fp, fn_)))
}

pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        100.0 * (2 * tp) as f64 / denom as f64
    }
}

pub fn macro_f1(per_au: &[f64; NUM_AUS]) -> f64 {
    per_au.iter().sum::<f64>() / NUM_AUS as f64
}

/// Post-processing stages, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Base,
    Smooth,
    Threshold,
    AuCorr,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Base, Stage::Smooth, Stage::Threshold, Stage::AuCorr];

    pub fn label(self) -> &'static str {
        match self {
            Stage::Base => "Base",
            Stage::Smooth => "+ Smooth",
            Stage::Threshold => "+ Smooth + Threshold",
            Stage::AuCorr => "+ Smooth + Threshold + AUcorr",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    /// Percent.
    pub per_au: [f64; NUM_AUS],
    pub macro_f1: f64,
}

impl ReportRow {
    pub fn new(name: impl Into<String>, per_au: [f64; NUM_AUS]) -> Self {
        ReportRow {
            name: name.into(),
            macro_f1: macro_f1(&per_au),
            per_au,
        }
    }
}

/// Rows of per-AU F1 with a macro average, laid out as `Method, AU1 … AU26, Avg.`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn single(name: impl Into<String>, per_au: [f64; NUM_AUS]) -> Self {
        EvalReport {
            rows: vec![ReportRow::new(name, per_au)],
        }
    }

    pub fn row(&self, name: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    fn header() -> Vec<String> {
        let mut h = vec!["Method".to_string()];
        h.extend(AU_NAMES.iter().map(|s| s.to_string()));
        h.push("Avg.".into());
        h
    }

    fn cells(row: &ReportRow) -> Vec<String> {
        let mut c = vec![row.name.clone()];
        c.extend(row.per_au.iter().map(|v| format!("{v:.1}")));
        c.push(format!("{:.1}", row.macro_f1));
        c
    }

    pub fn to_csv(&self) -> String {
        let mut s = Self::header().join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&Self::cells(r).join(","));
            s.push('\n');
        }
        s
    }

    /// Parses the CSV written by [`EvalReport::to_csv`]; `Avg.` is recomputed.
    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Csv {
            path: "<report>".into(),
            message: m,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty report".into()))?;
        if header.split(',').map(str::trim).collect::<Vec<_>>() != Self::header() {
            return Err(bad("unexpected header".into()));
        }
        let mut rows = Vec::new();
        for line in lines {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != NUM_AUS + 2 {
                return Err(bad(format!("row has {} cells", cells.len())));
            }
            let mut per_au = [0.0; NUM_AUS];
            for (j, c) in cells[1..=NUM_AUS].iter().enumerate() {
                per_au[j] = c.parse().map_err(|_| bad(format!("bad number {c:?}")))?;
            }
            rows.push(ReportRow::new(cells[0], per_au));
        }
        Ok(EvalReport { rows })
    }

    /// Whitespace-aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut grid = vec![Self::header()];
        grid.extend(self.rows.iter().map(Self::cells));
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|c| grid.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for row in &grid {
            for (c, cell) in row.iter().enumerate() {
                if c == 0 {
                    let _ = write!(s, "{cell:<w$}", w = widths[c]);
                } else {
                    let _ = write!(s, "  {cell:>w$}", w = widths[c]);
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Orders stage rows as Base, + Smooth, + Smooth + Threshold, + … + AUcorr.
pub fn ablation_table(stages: Vec<(Stage, [f64; NUM_AUS])>) -> Result<EvalReport> {
    if stages.is_empty() {
        return Err(Error::Empty("ablation stages".into()));
    }
    let ordered: BTreeMap<Stage, [f64; NUM_AUS]> = stages.into_iter().collect();
    Ok(EvalReport {
        rows: ordered
            .into_iter()
            .map(|(s, v)| ReportRow::new(s.label(), v))
            .collect(),
    })
}

/// Pearson correlations between the columns of two aligned tables.
///
/// A constant column has no defined correlation; its entries are 0 and it is
/// flagged in `row_valid`/`col_valid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PccMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    pub row_valid: Vec<bool>,
    pub col_valid: Vec<bool>,
}

impl PccMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.row_valid[i] && self.col_valid[j]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("");
        s.push_str(&std::iter::once(String::new()).chain(self.col_labels.iter().cloned()).collect::<Vec<_>>().join(","));
        s.push('\n');
        for (i, row) in self.values.iter().enumerate() {
            s.push_str(&self.row_labels[i]);
            for (j, v) in row.iter().enumerate() {
                if self.is_valid(i, j) {
                    let _ = write!(s, ",{v:.6}");
                } else {
                    s.push_str(",NA");
                }
            }
            s.push('\n');
        }
        s
    }
}

struct ColumnStats {
    centered: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

fn column_stats(rows: &[Vec<f64>], k: usize) -> ColumnStats {
    let n = rows.len() as f64;
    let mut centered = Vec::with_capacity(k);
    let mut norms = Vec::with_capacity(k);
    for c in 0..k {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        let col: Vec<f64> = rows.iter().map(|r| r[c] - mean).collect();
        norms.push(col.iter().map(|v| v * v).sum::<f64>().sqrt());
        centered.push(col);
    }
    ColumnStats { centered, norms }
}

fn check_rows(rows: &[Vec<f64>], k: usize, what: &str) -> Result<()> {
    if rows.len() < 2 {
        return Err(Error::InvalidArgument(format!("{what}: need at least 2 rows, got {}", rows.len())));
    }
    if let Some(r) = rows.iter().find(|r| r.len() != k) {
        return Err(Error::dim(what, k, r.len()));
    }
    Ok(())
}

fn cross(a: &ColumnStats, b: &ColumnStats, i: usize, j: usize) -> f64 {
    let cov: f64 = a.centered[i].iter().zip(&b.centered[j]).map(|(x, y)| x * y).sum();
    (cov / (a.norms[i] * b.norms[j])).clamp(-1.0, 1.0)
}

// A column counts as constant when its centred norm vanishes relative to n.
fn valid_columns(s: &ColumnStats, n: usize) -> Vec<bool> {
    s.norms.iter().map(|&v| v > 1e-12 * (n as f64).sqrt()).collect()
}

/// Symmetric `K × K` Pearson matrix of the columns of an `N × K` table.
pub fn pcc_matrix(rows: &[Vec<f64>], labels: &[String]) -> Result<PccMatrix> {
    let k = labels.len();
    check_rows(rows, k, "pcc table")?;
    let stats = column_stats(rows, k);
    let valid = valid_columns(&stats, rows.len());
    let mut values = vec![vec![0.0; k]; k];
    for i in 0..k {
        if !valid[i] {
            continue;
        }
        values[i][i] = 1.0;
        for j in i + 1..k {
            if valid[j] {
                let r = cross(&stats, &stats, i, j);
                values[i][j] = r;
                values[j][i] = r;
            }
        }
    }
    Ok(PccMatrix {
        row_labels: labels.to_vec(),
        col_labels: labels.to_vec(),
        values,
        row_valid: valid.clone(),
        col_valid: valid,
    })
}

/// Rectangular Pearson block between the columns of two row-aligned tables.
pub fn cross_pcc(a: &[Vec<f64>], a_labels: &[String], b: &[Vec<f64>], b_labels: &[String]) -> Result<PccMatrix> {
    if a.len() != b.len() {
        return Err(Error::dim("row-aligned tables", a.len(), b.len()));
    }
    check_rows(a, a_labels.len(), "left table")?;
    check_rows(b, b_labels.len(), "right table")?;
    let sa = column_stats(a, a_labels.len());
    let sb = column_stats(b, b_labels.len());
    let va = valid_columns(&sa, a.len());
    let vb = valid_columns(&sb, b.len());
    let values = (0..a_labels.len())
        .map(|i| {
            (0..b_labels.len())
                .map(|j| if va[i] && vb[j] { cross(&sa, &sb, i, j) } else { 0.0 })
                .collect()
        })
        .collect();
    Ok(PccMatrix {
        row_labels: a_labels.to_vec(),
        col_labels: b_labels.to_vec(),
        values,
        row_valid: va,
        col_valid: vb,
    })
}

fn au_labels() -> Vec<String> {
    AU_NAMES.iter().map(|s| s.to_string()).collect()
}

fn au_rows(labels: &[[u8; NUM_AUS]]) -> Vec<Vec<f64>> {
    labels.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect()
}

/// AU–AU correlation of binary labels (the phi coefficient per pair).
pub fn au_pcc(labels: &[[u8; NUM_AUS]]) -> Result<PccMatrix> {
    pcc_matrix(&au_rows(labels), &au_labels())
}

/// `12 × E` correlation between AU labels and expression indicator columns.
pub fn au_expr_pcc(au: &[[u8; NUM_AUS]], expr: &[Vec<f64>], expr_labels: &[String]) -> Result<PccMatrix> {
    cross_pcc(&au_rows(au), &au_labels(), expr, expr_labels)
}

/// Proposes AU-correlation rules from a 12×12 AU matrix.
///
/// For every valid AU pair with `ρ ≥ threshold` whose F1 values differ by
/// more than `min_gap` points, the lower-F1 AU becomes a target and the
/// higher-F1 AU one of its sources. Pairs sharing a target merge into one
/// rule. Equal F1 never yields a rule.
pub fn mine_rules(pcc: &PccMatrix, per_au_f1: &[f64; NUM_AUS], threshold: f64, min_gap: f64) -> Result<Vec<AuCorrRule>> {
    if pcc.values.len() != NUM_AUS || pcc.values.iter().any(|r| r.len() != NUM_AUS) {
        return Err(Error::dim("AU correlation matrix", NUM_AUS, pcc.values.len()));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..NUM_AUS {
        for j in i + 1..NUM_AUS {
            if !pcc.is_valid(i, j) || pcc.get(i, j) < threshold {
                continue;
            }
            let gap = per_au_f1[i] - per_au_f1[j];
            if gap.abs() <= min_gap {
                continue;
            }
            let (target, source) = if gap < 0.0 { (i, j) } else { (j, i) };
            groups.entry(target).or_default().push(source);
        }
    }
    groups
        .into_iter()
        .map(|(target, mut sources)| {
            sources.sort_unstable();
            AuCorrRule::new(target, sources)
        })
        .collect()
}
