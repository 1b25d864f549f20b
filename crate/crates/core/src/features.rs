//! Covariate feature maps `g_t{X_t}` and tolerance schedules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::panel::{PanelDataset, PathStrata, TreatmentPath};
use crate::stats;

/// One feature column over `X_t`. Columns are 1-based within the period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Transform {
    Identity {
        col: usize,
    },
    Square {
        col: usize,
    },
    Interaction {
        a: usize,
        b: usize,
    },
    /// `1{x > threshold}`
    Indicator {
        col: usize,
        threshold: f64,
    },
}

impl Transform {
    fn columns(&self) -> Vec<usize> {
        match *self {
            Self::Identity { col } | Self::Square { col } | Self::Indicator { col, .. } => vec![col],
            Self::Interaction { a, b } => vec![a, b],
        }
    }

    #[inline]
    pub fn eval(&self, row: &[f64]) -> f64 {
        match *self {
            Self::Identity { col } => row[col - 1],
            Self::Square { col } => row[col - 1] * row[col - 1],
            Self::Interaction { a, b } => row[a - 1] * row[b - 1],
            Self::Indicator { col, threshold } => {
                let x = row[col - 1];
                if x.is_nan() {
                    f64::NAN
                } else if x > threshold {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn label(&self, names: &[String]) -> String {
        match self {
            Self::Identity { col } => names[col - 1].clone(),
            Self::Square { col } => format!("{}^2", names[col - 1]),
            Self::Interaction { a, b } => format!("{}*{}", names[a - 1], names[b - 1]),
            Self::Indicator { col, threshold } => format!("1[{}>{threshold}]", names[col - 1]),
        }
    }
}

/// Per-period standardized tolerance: one value for all features or one per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tolerance {
    Uniform(f64),
    PerFeature(Vec<f64>),
}

impl Tolerance {
    fn expand(&self, k: usize) -> Vec<f64> {
        match self {
            Self::Uniform(d) => vec![*d; k],
            Self::PerFeature(v) => v.clone(),
        }
    }
}

fn default_true() -> bool {
    true
}

/// Feature maps per period plus the standardized tolerance schedule.
///
/// Periods are keyed `t1`, `t2`, ... in the serialized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceSpec {
    pub transforms: BTreeMap<String, Vec<Transform>>,
    /// Absent when the tolerance is to be tuned.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub delta_std: BTreeMap<String, Tolerance>,
    #[serde(default = "default_true")]
    pub intercept: bool,
    /// Share projection coefficients across prefixes ending in the same treatment.
    #[serde(default)]
    pub pool_on_last_treatment: bool,
}

fn period_key(t: usize) -> String {
    format!("t{}", t + 1)
}

impl BalanceSpec {
    /// Identity features on every raw covariate with a common tolerance.
    pub fn identity(data: &PanelDataset, delta: Option<f64>) -> Self {
        let transforms: BTreeMap<String, Vec<Transform>> = (0..data.periods())
            .map(|t| (period_key(t), (1..=data.covariate_count(t)).map(|col| Transform::Identity { col }).collect()))
            .collect();
        let mut spec = Self { transforms, delta_std: BTreeMap::new(), intercept: true, pool_on_last_treatment: false };
        if let Some(d) = delta {
            spec = spec.with_uniform_delta(d);
        }
        spec
    }

    pub fn periods(&self) -> usize {
        self.transforms.len()
    }

    pub fn transforms_at(&self, t: usize) -> &[Transform] {
        self.transforms.get(&period_key(t)).map_or(&[], Vec::as_slice)
    }

    /// Copy with every tolerance replaced by `delta`.
    pub fn with_uniform_delta(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.delta_std = (0..self.periods()).map(|t| (period_key(t), Tolerance::Uniform(delta))).collect();
        out
    }

    pub fn has_delta(&self) -> bool {
        !self.delta_std.is_empty()
    }

    /// Tolerances per period, expanded to one value per feature.
    pub fn delta_schedule(&self) -> Result<Vec<Vec<f64>>> {
        (0..self.periods())
            .map(|t| {
                let k = self.transforms_at(t).len();
                let d = self
                    .delta_std
                    .get(&period_key(t))
                    .ok_or_else(|| Error::Spec(format!("no tolerance given for period {}", period_key(t))))?
                    .expand(k);
                if d.len() != k {
                    return Err(Error::Spec(format!("{} tolerances given for {k} features at {}", d.len(), period_key(t))));
                }
                if d.iter().any(|v| v.is_nan() || *v < 0.0) {
                    return Err(Error::Spec(format!("tolerances at {} must be nonnegative", period_key(t))));
                }
                Ok(d)
            })
            .collect()
    }

    /// Checks the balance spec against a dataset's shape. Tolerances are checked only when present.
    pub fn validate(&self, data: &PanelDataset) -> Result<()> {
        if self.periods() != data.periods() {
            return Err(Error::Spec(format!("spec has {} periods, data has {}", self.periods(), data.periods())));
        }
        for t in 0..self.periods() {
            let key = period_key(t);
            let list = self.transforms.get(&key).ok_or_else(|| Error::Spec(format!("missing transforms for {key}")))?;
            if list.is_empty() {
                return Err(Error::Spec(format!("empty transform list for {key}")));
            }
            let p = data.covariate_count(t);
            for tr in list {
                if let Some(bad) = tr.columns().into_iter().find(|&c| c == 0 || c > p) {
                    return Err(Error::Spec(format!("{key} transform references column {bad}, but X_{} has {p} columns", t + 1)));
                }
            }
        }
        for key in self.delta_std.keys() {
            if !self.transforms.contains_key(key) {
                return Err(Error::Spec(format!("tolerance given for unknown period {key}")));
            }
        }
        if self.has_delta() {
            self.delta_schedule()?;
        }
        Ok(())
    }
}

/// Materialized feature blocks `g_t{X_t}`, one `n × P_{g_t}` matrix per period.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub blocks: Vec<Matrix<f64>>,
    pub labels: Vec<Vec<String>>,
}

impl FeatureSet {
    pub fn periods(&self) -> usize {
        self.blocks.len()
    }

    /// Feature counts per period.
    pub fn widths(&self) -> Vec<usize> {
        self.blocks.iter().map(Matrix::cols).collect()
    }

    /// History design `[1?, ḡ_1, ..., ḡ_{t-1}]` for the given rows; `t` is 0-based.
    pub fn history_design(&self, t: usize, rows: &[usize], intercept: bool) -> Matrix<f64> {
        let width: usize = usize::from(intercept) + self.blocks[..t].iter().map(Matrix::cols).sum::<usize>();
        let mut out = Matrix::zeros(rows.len(), width);
        for (r, &i) in rows.iter().enumerate() {
            let dst = out.row_mut(r);
            let mut c = 0;
            if intercept {
                dst[0] = 1.0;
                c = 1;
            }
            for block in &self.blocks[..t] {
                let src = block.row(i);
                dst[c..c + src.len()].copy_from_slice(src);
                c += src.len();
            }
        }
        out
    }
}

/// Evaluates the balance spec's feature maps on every unit.
pub fn apply_features(data: &PanelDataset, spec: &BalanceSpec) -> Result<FeatureSet> {
    spec.validate(data)?;
    let mut blocks = Vec::with_capacity(data.periods());
    let mut labels = Vec::with_capacity(data.periods());
    for t in 0..data.periods() {
        let x = data.covariates(t);
        let list = spec.transforms_at(t);
        blocks.push(Matrix::from_fn(data.n(), list.len(), |i, j| list[j].eval(x.row(i))));
        labels.push(list.iter().map(|tr| tr.label(data.covariate_names(t))).collect());
    }
    Ok(FeatureSet { blocks, labels })
}

/// Location and spread of one column within one stratum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub sd: f64,
    /// Zero spread or fewer than two members.
    pub degenerate: bool,
}

impl ColumnScale {
    pub fn of(values: &[f64]) -> Self {
        let mean = if values.is_empty() { 0.0 } else { stats::mean(values) };
        let sd = stats::sample_sd(values);
        let degenerate = !(sd > 0.0);
        Self { mean, sd: if sd.is_nan() { 0.0 } else { sd }, degenerate }
    }

    /// Converts a standardized tolerance to raw units.
    pub fn raw_tolerance(&self, delta_std: f64) -> f64 {
        if delta_std.is_infinite() {
            return f64::INFINITY;
        }
        if self.degenerate {
            delta_std * self.mean.abs().max(1.0)
        } else {
            delta_std * self.sd
        }
    }
}

/// Column scales per period `t` (0-based) and per prefix `z̄_t`, computed over
/// the level-`t` stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleTable {
    pub levels: Vec<BTreeMap<TreatmentPath, Vec<ColumnScale>>>,
}

impl ScaleTable {
    pub fn get(&self, t: usize, prefix: &TreatmentPath) -> Option<&[ColumnScale]> {
        self.levels.get(t)?.get(prefix).map(Vec::as_slice)
    }
}

/// Within-stratum SDs of each period's columns. `blocks` may be raw features or
/// residuals; block `t` is summarized over every prefix stratum at level `t`.
pub fn feature_scales(blocks: &[Matrix<f64>], strata: &PathStrata) -> ScaleTable {
    let levels = blocks
        .iter()
        .enumerate()
        .map(|(t, block)| {
            strata
                .level(t)
                .iter()
                .map(|(prefix, members)| {
                    let scales = (0..block.cols())
                        .map(|j| {
                            let col: Vec<f64> = members.iter().map(|&i| block[(i, j)]).collect();
                            ColumnScale::of(&col)
                        })
                        .collect();
                    (prefix.clone(), scales)
                })
                .collect()
        })
        .collect();
    ScaleTable { levels }
}
