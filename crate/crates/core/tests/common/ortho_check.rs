//! Checks on orthogonalized residuals computed directly from the definitions.

use bao::features::{apply_features, BalanceSpec, FeatureSet};
use bao::ortho::{fit_projections, orthogonalize, ProjectionOptions, ResidualSet};
use bao::panel::{PanelDataset, PathStrata};

#[derive(Debug, Default, Clone, Copy)]
pub struct OrthoReport {
    /// max |stratum mean of R̂| / stratum SD of the feature
    pub mean_ratio: f64,
    /// max |hᵀR̂| / (‖h‖‖R̂‖ + ε); ε = 1e-6‖h‖‖g‖ keeps exactly fitted strata,
    /// where R̂ is rounding noise, from dividing by zero
    pub orthogonality: f64,
    /// max |β| when R̂ is projected again on the same history
    pub reprojection_beta: f64,
    /// max |R̂ − re-projected R̂|
    pub reprojection_change: f64,
    pub strata_checked: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sd(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

pub fn residuals(data: &PanelDataset, spec: &BalanceSpec) -> (FeatureSet, PathStrata, ResidualSet) {
    let features = apply_features(data, spec).expect("features");
    let strata = PathStrata::build(data);
    let options = ProjectionOptions { intercept: spec.intercept, pool_on_last_treatment: false };
    let (_, res) = orthogonalize(&features, &strata, options).expect("orthogonalize");
    (features, strata, res)
}

pub fn check(data: &PanelDataset, spec: &BalanceSpec) -> OrthoReport {
    let (features, strata, res) = residuals(data, spec);
    let mut report = OrthoReport::default();
    for t in 1..features.periods() {
        // Replace period t's block with its residuals and project again.
        let mut again = features.clone();
        again.blocks[t] = res.residuals[t].clone();
        let options = ProjectionOptions { intercept: spec.intercept, pool_on_last_treatment: false };
        let refit = fit_projections(&again, &strata, options).expect("refit");

        for (prefix, members) in strata.level(t) {
            if members.len() < 2 {
                continue;
            }
            report.strata_checked += 1;
            let x = features.history_design(t, members, spec.intercept);
            let beta = &refit.get(t, prefix).expect("stratum fit").beta;
            for p in 0..features.blocks[t].cols() {
                let r: Vec<f64> = members.iter().map(|&i| res.residuals[t][(i, p)]).collect();
                let g: Vec<f64> = members.iter().map(|&i| features.blocks[t][(i, p)]).collect();
                if spec.intercept {
                    let scale = match sd(&g) {
                        s if s > 0.0 => s,
                        _ => 1.0,
                    };
                    let mean = r.iter().sum::<f64>() / r.len() as f64;
                    report.mean_ratio = report.mean_ratio.max(mean.abs() / scale);
                }
                for c in 0..x.cols() {
                    let h = x.column(c);
                    let dot: f64 = h.iter().zip(&r).map(|(a, b)| a * b).sum();
                    let denom = norm(&h) * norm(&r) + 1e-6 * norm(&h) * norm(&g);
                    if denom > 0.0 {
                        report.orthogonality = report.orthogonality.max(dot.abs() / denom);
                    }
                    report.reprojection_beta = report.reprojection_beta.max(beta[(c, p)].abs());
                }
                let fitted = x.mul_vec(&beta.column(p));
                let change = fitted.iter().map(|f| f.abs()).fold(0.0, f64::max);
                report.reprojection_change = report.reprojection_change.max(change);
            }
        }
    }
    report
}

/// Largest change in R̂_t (t ≥ 2) after adding `shift` to covariate `(t, p)`.
pub fn affine_shift_change(data: &PanelDataset, spec: &BalanceSpec, t: usize, p: usize, shift: f64) -> f64 {
    let (_, _, base) = residuals(data, spec);
    let (_, _, moved) = residuals(&data.map_covariate(t, p, |x| x + shift), spec);
    let mut worst: f64 = 0.0;
    for s in 1..base.residuals.len() {
        for (a, b) in base.residuals[s].as_slice().iter().zip(moved.residuals[s].as_slice()) {
            if a.is_finite() || b.is_finite() {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}
