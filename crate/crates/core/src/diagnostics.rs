//! Balance and weight diagnostics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::Matrix;
use crate::panel::{PathStrata, TreatmentPath};
use crate::scalar::Real;
use crate::stats;

/// Post-weighting ASMD above which a balance warning is raised.
pub const ASMD_WARNING: f64 = 0.2;

/// Slack allowed when checking a balance row against its tolerance.
pub const BALANCE_SLACK: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightSummary<T> {
    /// Standard deviation over mean, with the `1/m` variance.
    pub cv: T,
    /// `(Σω)² / Σω²`
    pub ess: T,
    pub max_weight: T,
}

pub fn weight_summary<T: Real>(weights: &[T]) -> WeightSummary<T> {
    if weights.is_empty() {
        return WeightSummary { cv: T::nan(), ess: T::zero(), max_weight: T::nan() };
    }
    let m = T::from_count(weights.len());
    let total: T = weights.iter().copied().sum();
    let sq: T = weights.iter().map(|&w| w * w).sum();
    let mean = total / m;
    let var = weights.iter().map(|&w| (w - mean) * (w - mean)).sum::<T>() / m;
    WeightSummary { cv: var.sqrt() / mean, ess: total * total / sq, max_weight: weights.iter().copied().fold(T::neg_infinity(), T::max) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    /// 1-based period.
    pub t: usize,
    pub feature: String,
    pub path: TreatmentPath,
    pub pre_asmd: f64,
    pub post_asmd: f64,
    /// Weighted path mean minus the reference mean.
    pub mean_difference: f64,
    /// Raw tolerance; `NaN` when the row carries no constraint.
    pub tolerance: f64,
    /// The standardizer was zero or undefined; ASMDs are raw differences.
    pub degenerate: bool,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BalanceTable {
    pub rows: Vec<BalanceRow>,
}

impl BalanceTable {
    pub fn mean_pre_asmd(&self) -> f64 {
        stats::mean(&self.rows.iter().map(|r| r.pre_asmd).collect::<Vec<_>>())
    }

    pub fn mean_post_asmd(&self) -> f64 {
        stats::mean(&self.rows.iter().map(|r| r.post_asmd).collect::<Vec<_>>())
    }

    pub fn max_post_asmd(&self) -> f64 {
        self.rows.iter().map(|r| r.post_asmd).fold(0.0, f64::max)
    }

    /// Rows whose post-weighting ASMD exceeds `threshold`.
    pub fn above(&self, threshold: f64) -> impl Iterator<Item = &BalanceRow> {
        self.rows.iter().filter(move |r| r.post_asmd > threshold)
    }

    /// Attaches raw tolerances and recomputes the satisfied flags.
    pub fn with_tolerances(mut self, tolerance: impl Fn(&TreatmentPath, usize, usize) -> f64) -> Self {
        let mut feature_index = 0;
        let mut last_key: Option<(TreatmentPath, usize)> = None;
        for row in &mut self.rows {
            let key = (row.path.clone(), row.t);
            if last_key.as_ref() == Some(&key) {
                feature_index += 1;
            } else {
                feature_index = 0;
                last_key = Some(key);
            }
            row.tolerance = tolerance(&row.path, row.t - 1, feature_index);
            row.satisfied = row.mean_difference.abs() <= row.tolerance + BALANCE_SLACK;
        }
        self
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let to_io = |e: csv::Error| std::io::Error::other(e);
        w.write_record(["t", "feature", "path", "pre_asmd", "post_asmd", "mean_difference", "tolerance", "degenerate", "satisfied"])
            .map_err(to_io)?;
        for r in &self.rows {
            w.write_record([
                r.t.to_string(),
                r.feature.clone(),
                r.path.to_string(),
                r.pre_asmd.to_string(),
                r.post_asmd.to_string(),
                r.mean_difference.to_string(),
                r.tolerance.to_string(),
                r.degenerate.to_string(),
                r.satisfied.to_string(),
            ])
            .map_err(to_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn weighted_mean(col: &Matrix<f64>, j: usize, rows: &[usize], weights: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for &i in rows {
        num += weights[i] * col[(i, j)];
        den += weights[i];
    }
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

/// Mean to which each path's weighted mean is compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// Unweighted mean over `I_{z̄_{t-1}}`.
    Unweighted,
    /// Mean over `I_{z̄_{t-1}}` under the same unit weights.
    Weighted,
}

/// Balance of every column of every period along every realized path.
///
/// `unit_weights` are nonnegative per-unit weights; only their ratios within a
/// path (and within a stratum, for the weighted reference) matter. The
/// standardizer is the unweighted SD over `I_{z̄_{t-1}}`. A path whose weights
/// sum to zero falls back to its unweighted mean.
pub fn asmd_table(
    blocks: &[Matrix<f64>],
    labels: &[Vec<String>],
    strata: &PathStrata,
    unit_weights: &[f64],
    reference: Reference,
) -> BalanceTable {
    let ones = vec![1.0; unit_weights.len()];
    let mut rows = Vec::new();
    for path in strata.realized_paths() {
        let members = strata.members(&path);
        let path_w = if members.iter().any(|&i| unit_weights[i] > 0.0) { unit_weights } else { &ones[..] };
        for (t, block) in blocks.iter().enumerate() {
            let parent = strata.members(&path.prefix(t));
            for j in 0..block.cols() {
                let col: Vec<f64> = parent.iter().map(|&i| block[(i, j)]).collect();
                let sd = stats::sample_sd(&col);
                let degenerate = !(sd > 0.0);
                let denom = if degenerate { 1.0 } else { sd };
                let base = stats::mean(&col);
                let reference_mean = match reference {
                    Reference::Unweighted => base,
                    Reference::Weighted => weighted_mean(block, j, parent, unit_weights),
                };
                let pre = (weighted_mean(block, j, members, &ones) - base).abs() / denom;
                let diff = weighted_mean(block, j, members, path_w) - reference_mean;
                rows.push(BalanceRow {
                    t: t + 1,
                    feature: labels[t][j].clone(),
                    path: path.clone(),
                    pre_asmd: pre,
                    post_asmd: diff.abs() / denom,
                    mean_difference: diff,
                    tolerance: f64::NAN,
                    degenerate,
                    satisfied: true,
                });
            }
        }
    }
    BalanceTable { rows }
}
