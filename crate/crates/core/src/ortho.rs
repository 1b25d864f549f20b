//! Sequential orthogonalization of feature blocks within treatment-history strata.
//!
//! For each period `t ≥ 2` the block `g_t` is regressed on `[1, ḡ_{t-1}]`
//! separately within every prefix stratum `I_{z̄_{t-1}}`; the residuals `R̂_t`
//! and their stratum means are the balance targets.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::linalg::{LeastSquares, Matrix};
use crate::panel::{PathStrata, TreatmentPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ProjectionOptions {
    pub intercept: bool,
    pub pool_on_last_treatment: bool,
}

/// Least-squares fit of one period's block within one stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumFit {
    /// `(intercept + Σ_{s<t} P_{g_s}) × P_{g_t}`
    pub beta: Matrix<f64>,
    pub rank: usize,
    /// Units used in the fit.
    pub size: usize,
    /// Residual sum of squares per feature.
    pub rss: Vec<f64>,
    /// The stratum was too small to fit; coefficients are zero.
    pub fallback: bool,
    /// Dataset rows of the fit, ascending.
    pub rows: Vec<usize>,
    /// `g_t` minus its projection, one row per entry of `rows`.
    pub residuals: Matrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionFit {
    pub options: ProjectionOptions,
    /// Indexed by 0-based period; entry 0 is empty.
    pub fits: Vec<BTreeMap<TreatmentPath, StratumFit>>,
}

impl ProjectionFit {
    pub fn get(&self, t: usize, prefix: &TreatmentPath) -> Option<&StratumFit> {
        self.fits.get(t)?.get(prefix)
    }
}

/// Units regressed together for prefix `prefix` at 0-based period `t`.
fn fitting_group(strata: &PathStrata, t: usize, prefix: &TreatmentPath, pool: bool) -> Vec<usize> {
    if !pool || t == 0 {
        return strata.members(prefix).to_vec();
    }
    let last = prefix.bits()[t - 1];
    let mut rows: Vec<usize> =
        strata.level(t).iter().filter(|(p, _)| p.bits()[t - 1] == last).flat_map(|(_, m)| m.iter().copied()).collect();
    rows.sort_unstable();
    rows
}

fn fit_group(features: &FeatureSet, t: usize, rows: &[usize], intercept: bool) -> StratumFit {
    let design = features.history_design(t, rows, intercept);
    let width = features.blocks[t].cols();
    let response = features.blocks[t].select_rows(rows);
    if rows.len() < 2 {
        return StratumFit {
            beta: Matrix::zeros(design.cols(), width),
            rank: 0,
            size: rows.len(),
            rss: vec![f64::NAN; width],
            fallback: true,
            rows: rows.to_vec(),
            residuals: response,
        };
    }
    let ls = LeastSquares::new(&design);
    let beta = ls.solve_many(&response);
    // Residuals come from the orthogonal projection rather than `g - Hβ`,
    // which loses orthogonality when the history is nearly collinear.
    let mut residuals = Matrix::zeros(rows.len(), width);
    for j in 0..width {
        for (r, v) in ls.residual(&response.column(j)).into_iter().enumerate() {
            residuals[(r, j)] = v;
        }
    }
    let rss = (0..width).map(|j| residuals.column(j).iter().map(|v| v * v).sum()).collect();
    StratumFit { beta, rank: ls.rank(), size: rows.len(), rss, fallback: false, rows: rows.to_vec(), residuals }
}

/// Fits every period `t ≥ 2` within every non-empty prefix stratum.
pub fn fit_projections(features: &FeatureSet, strata: &PathStrata, options: ProjectionOptions) -> Result<ProjectionFit> {
    if features.periods() != strata.periods() {
        return Err(Error::Structural(format!("features cover {} periods, strata {}", features.periods(), strata.periods())));
    }
    let mut fits = vec![BTreeMap::new()];
    for t in 1..features.periods() {
        let mut level = BTreeMap::new();
        let mut pooled: BTreeMap<u8, StratumFit> = BTreeMap::new();
        for (prefix, members) in strata.level(t) {
            if members.is_empty() {
                continue;
            }
            let fit = if options.pool_on_last_treatment {
                let last = prefix.bits()[t - 1];
                pooled
                    .entry(last)
                    .or_insert_with(|| {
                        let rows = fitting_group(strata, t, prefix, true);
                        fit_group(features, t, &rows, options.intercept)
                    })
                    .clone()
            } else {
                fit_group(features, t, members, options.intercept)
            };
            if fit.fallback {
                log::warn!("stratum {prefix} at t={} has {} unit(s); projection skipped", t + 1, fit.size);
            }
            level.insert(prefix.clone(), fit);
        }
        fits.push(level);
    }
    Ok(ProjectionFit { options, fits })
}

/// Orthogonalized features and their per-prefix balance targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSet {
    /// Per period, `n × P_{g_t}`. Rows of units not followed into the period are `NaN`.
    pub residuals: Vec<Matrix<f64>>,
    pub labels: Vec<Vec<String>>,
    /// Per period `t` (0-based), the mean of `R̂_t` over each non-empty level-`t` stratum.
    pub targets: Vec<BTreeMap<TreatmentPath, Vec<f64>>>,
}

impl ResidualSet {
    pub fn periods(&self) -> usize {
        self.residuals.len()
    }

    /// Target for period `t` along a full path.
    pub fn target(&self, t: usize, path: &TreatmentPath) -> Option<&[f64]> {
        self.targets[t].get(&path.prefix(t)).map(Vec::as_slice)
    }

    /// Long-format export: `id, t, feature, residual`.
    pub fn write_csv<W: Write>(&self, ids: &[String], mut sink: W) -> Result<()> {
        writeln!(sink, "id,t,feature,residual")?;
        for (i, id) in ids.iter().enumerate() {
            for (t, block) in self.residuals.iter().enumerate() {
                for (j, label) in self.labels[t].iter().enumerate() {
                    let v = block[(i, j)];
                    if v.is_finite() {
                        writeln!(sink, "{id},{},{label},{v}", t + 1)?;
                    }
                }
            }
        }
        Ok(())
    }
}

fn column_means(block: &Matrix<f64>, rows: &[usize]) -> Vec<f64> {
    let inv = 1.0 / rows.len() as f64;
    (0..block.cols()).map(|j| rows.iter().map(|&i| block[(i, j)]).sum::<f64>() * inv).collect()
}

/// Gathers each unit's residuals from the fit of its own stratum.
pub fn compute_residuals(features: &FeatureSet, fits: &ProjectionFit, strata: &PathStrata) -> Result<ResidualSet> {
    let n = features.blocks[0].rows();
    let mut residuals = Vec::with_capacity(features.periods());
    let mut targets = Vec::with_capacity(features.periods());
    for t in 0..features.periods() {
        let block = &features.blocks[t];
        let mut r = Matrix::from_fn(n, block.cols(), |_, _| f64::NAN);
        let mut level_targets = BTreeMap::new();
        for (prefix, members) in strata.level(t) {
            if members.is_empty() {
                continue;
            }
            if t == 0 {
                for &i in members {
                    r.row_mut(i).copy_from_slice(block.row(i));
                }
            } else {
                let fit = fits
                    .get(t, prefix)
                    .ok_or_else(|| Error::Structural(format!("no projection fit for prefix {prefix} at t={}", t + 1)))?;
                for &i in members {
                    let k = fit.rows.binary_search(&i).map_err(|_| {
                        Error::Structural(format!("unit row {i} missing from the fit for prefix {prefix} at t={}", t + 1))
                    })?;
                    r.row_mut(i).copy_from_slice(fit.residuals.row(k));
                }
            }
            level_targets.insert(prefix.clone(), column_means(&r, members));
        }
        residuals.push(r);
        targets.push(level_targets);
    }
    Ok(ResidualSet { residuals, labels: features.labels.clone(), targets })
}

/// Fits projections and evaluates residuals in one step.
pub fn orthogonalize(features: &FeatureSet, strata: &PathStrata, options: ProjectionOptions) -> Result<(ProjectionFit, ResidualSet)> {
    let fits = fit_projections(features, strata, options)?;
    let residuals = compute_residuals(features, &fits, strata)?;
    Ok((fits, residuals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::PanelDataset;

    fn two_period(prev: &[f64], cur: &[f64], z: &[[u8; 2]]) -> (FeatureSet, PathStrata) {
        let n = prev.len();
        let x1 = Matrix::from_vec(n, 1, prev.to_vec());
        let x2 = Matrix::from_vec(n, 1, cur.to_vec());
        let data = PanelDataset::complete(vec![x1.clone(), x2.clone()], z.iter().map(|r| r.to_vec()).collect(), vec![0.0; n]).unwrap();
        let features = FeatureSet { blocks: vec![x1, x2], labels: vec![vec!["a".into()], vec!["b".into()]] };
        (features, PathStrata::build(&data))
    }

    #[test]
    fn perfect_linear_fit() {
        let (f, s) = two_period(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0], &[[0, 0], [0, 1], [0, 0]]);
        let opts = ProjectionOptions { intercept: true, pool_on_last_treatment: false };
        let (fits, res) = orthogonalize(&f, &s, opts).unwrap();
        let beta = &fits.get(1, &"0".parse().unwrap()).unwrap().beta;
        assert!(beta[(0, 0)].abs() < 1e-12 && (beta[(1, 0)] - 1.0).abs() < 1e-12);
        assert!(res.residuals[1].as_slice().iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn three_point_fit() {
        let (f, s) = two_period(&[0.0, 1.0, 2.0], &[0.0, 1.0, 3.0], &[[1, 0], [1, 1], [1, 0]]);
        let opts = ProjectionOptions { intercept: true, pool_on_last_treatment: false };
        let (fits, res) = orthogonalize(&f, &s, opts).unwrap();
        let beta = &fits.get(1, &"1".parse().unwrap()).unwrap().beta;
        assert!((beta[(0, 0)] + 1.0 / 6.0).abs() < 1e-12);
        assert!((beta[(1, 0)] - 1.5).abs() < 1e-12);
        let r = res.residuals[1].column(0);
        for (a, b) in r.iter().zip([1.0 / 6.0, -1.0 / 3.0, 1.0 / 6.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(res.targets[1][&"1".parse::<TreatmentPath>().unwrap()][0].abs() < 1e-12);
        assert_eq!(res.targets[0][&TreatmentPath::root()], vec![1.0]);
    }

    #[test]
    fn singleton_stratum_falls_back() {
        let (f, s) = two_period(&[0.0, 1.0, 2.0], &[5.0, 1.0, 3.0], &[[1, 0], [0, 1], [0, 0]]);
        let opts = ProjectionOptions { intercept: true, pool_on_last_treatment: false };
        let (fits, res) = orthogonalize(&f, &s, opts).unwrap();
        assert!(fits.get(1, &"1".parse().unwrap()).unwrap().fallback);
        assert_eq!(res.residuals[1][(0, 0)], 5.0);
    }
}
