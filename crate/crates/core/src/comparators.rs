//! Reference estimators: unadjusted means, inverse probability weighting with
//! logistic propensity models, and g-computation by iterated conditional
//! expectations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{MsmDesign, PathMean};
use crate::features::FeatureSet;
use crate::linalg::{cholesky, cholesky_solve, weighted_least_squares, LeastSquares, Matrix};
use crate::panel::{PanelDataset, PathStrata, TreatmentPath};
use crate::scalar::{max_abs, Real};
use crate::stats;

/// Coefficient magnitude beyond which a logistic fit is declared separated.
pub const SEPARATION_CAP: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit<T> {
    pub coefficients: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Some coefficient ran past the cap and was clamped.
    pub separated: bool,
    pub gradient_norm: T,
    /// Negative log-likelihood at the returned coefficients.
    pub nll: T,
}

fn log1p_exp<T: Real>(v: T) -> T {
    if v > T::zero() {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

pub fn expit<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn nll<T: Real>(x: &Matrix<T>, y: &[u8], beta: &[T]) -> T {
    let eta = x.mul_vec(beta);
    eta.iter().zip(y).map(|(&e, &yi)| log1p_exp(e) - if yi == 1 { e } else { T::zero() }).sum()
}

/// Logistic regression by Newton–Raphson (IRLS) with step halving.
///
/// Converges when the gradient max-norm is below `1e-8` and the Newton step
/// has stalled; stops after 100 iterations. A coefficient leaving
/// `[-30, 30]` is clamped and the fit flagged as separated.
pub fn fit_logistic<T: Real>(design: &Matrix<T>, response: &[u8]) -> Result<LogisticFit<T>> {
    let (n, p) = (design.rows(), design.cols());
    if response.len() != n {
        return Err(Error::Argument("response length does not match design rows".into()));
    }
    if n < p {
        return Err(Error::Fit(format!("{n} observations for {p} logistic coefficients")));
    }
    if response.iter().any(|&v| v > 1) {
        return Err(Error::Argument("logistic response must be 0/1".into()));
    }
    let cap = T::lit(SEPARATION_CAP);
    let mut beta = vec![T::zero(); p];
    let mut current = nll(design, response, &beta);
    let mut out = LogisticFit {
        coefficients: Vec::new(),
        iterations: 0,
        converged: false,
        separated: false,
        gradient_norm: T::infinity(),
        nll: current,
    };
    for iter in 0..100 {
        let eta = design.mul_vec(&beta);
        let prob: Vec<T> = eta.iter().map(|&e| expit(e)).collect();
        let resid: Vec<T> = response.iter().zip(&prob).map(|(&yi, &pi)| T::lit(f64::from(yi)) - pi).collect();
        let grad = design.tr_mul_vec(&resid);
        let mut info = Matrix::zeros(p, p);
        for i in 0..n {
            let w = prob[i] * (T::one() - prob[i]);
            let row = design.row(i);
            for a in 0..p {
                let wa = w * row[a];
                for b in 0..=a {
                    info[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                info[(b, a)] = info[(a, b)];
            }
        }
        let chol = cholesky(&info).ok_or_else(|| Error::Fit("singular information matrix in logistic fit".into()))?;
        let step = cholesky_solve(&chol, &grad);
        out.iterations = iter;
        out.gradient_norm = max_abs(&grad);
        if out.gradient_norm < T::lit(1e-8) && max_abs(&step) < T::lit(1e-6) {
            out.converged = true;
            break;
        }
        let mut scale = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<T> = beta.iter().zip(&step).map(|(&b, &s)| b + scale * s).collect();
            let value = nll(design, response, &trial);
            if value <= current {
                beta = trial;
                current = value;
                accepted = true;
                break;
            }
            scale = scale * T::half();
        }
        out.iterations = iter + 1;
        if !accepted {
            // No decrease available at machine precision.
            out.converged = out.gradient_norm < T::lit(1e-6);
            break;
        }
        if beta.iter().any(|b| b.abs() > cap) {
            for b in &mut beta {
                *b = b.max(-cap).min(cap);
            }
            out.separated = true;
            current = nll(design, response, &beta);
            log::warn!("logistic fit separated; coefficients clamped at ±{SEPARATION_CAP}");
            break;
        }
    }
    out.coefficients = beta;
    out.nll = current;
    Ok(out)
}

fn require_uncensored(data: &PanelDataset) -> Result<()> {
    if (0..data.n()).any(|i| !data.uncensored_through(i, data.periods())) {
        return Err(Error::Argument("this estimator needs fully observed units".into()));
    }
    Ok(())
}

/// Regressors of the treatment model at 0-based period `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityForm {
    /// `1, Z_{t-1}, X_t`
    #[default]
    LastTreatmentAndCurrent,
    /// `1, Z̄_{t-1}, X̄_t`
    FullHistory,
}

fn propensity_design(data: &PanelDataset, t: usize, form: PropensityForm) -> Matrix<f64> {
    let n = data.n();
    let lags: Vec<usize> = match form {
        PropensityForm::LastTreatmentAndCurrent if t > 0 => vec![t - 1],
        PropensityForm::LastTreatmentAndCurrent => Vec::new(),
        PropensityForm::FullHistory => (0..t).collect(),
    };
    let blocks: Vec<usize> = match form {
        PropensityForm::LastTreatmentAndCurrent => vec![t],
        PropensityForm::FullHistory => (0..=t).collect(),
    };
    let width = 1 + lags.len() + blocks.iter().map(|&s| data.covariate_count(s)).sum::<usize>();
    let mut x = Matrix::zeros(n, width);
    for i in 0..n {
        let row = x.row_mut(i);
        row[0] = 1.0;
        let mut c = 1;
        for &s in &lags {
            row[c] = f64::from(data.z(i, s).unwrap_or(0));
            c += 1;
        }
        for &s in &blocks {
            let src = data.covariates(s).row(i);
            row[c..c + src.len()].copy_from_slice(src);
            c += src.len();
        }
    }
    x
}

/// `1, Z̄_{t-1}`
fn numerator_design(data: &PanelDataset, t: usize) -> Matrix<f64> {
    Matrix::from_fn(data.n(), 1 + t, |i, j| if j == 0 { 1.0 } else { f64::from(data.z(i, j - 1).unwrap_or(0)) })
}

/// Treatment models for every period, with the stabilizing numerators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub form: PropensityForm,
    pub denominators: Vec<LogisticFit<f64>>,
    pub numerators: Vec<LogisticFit<f64>>,
}

fn treatments_at(data: &PanelDataset, t: usize) -> Vec<u8> {
    (0..data.n()).map(|i| data.z(i, t).unwrap_or(0)).collect()
}

pub fn fit_propensity(data: &PanelDataset, form: PropensityForm) -> Result<PropensityModel> {
    require_uncensored(data)?;
    let mut denominators = Vec::new();
    let mut numerators = Vec::new();
    for t in 0..data.periods() {
        let z = treatments_at(data, t);
        denominators.push(fit_logistic(&propensity_design(data, t, form), &z)?);
        numerators.push(fit_logistic(&numerator_design(data, t), &z)?);
    }
    Ok(PropensityModel { form, denominators, numerators })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum IpwMode {
    Standard,
    Stabilized,
    /// Stabilized weights capped at their type-7 empirical `q` quantile.
    Truncated {
        q: f64,
    },
}

fn probability_of_observed(x: &Matrix<f64>, fit: &LogisticFit<f64>, z: &[u8]) -> Vec<f64> {
    x.mul_vec(&fit.coefficients)
        .into_iter()
        .zip(z)
        .map(|(e, &zi)| {
            let p = expit(e);
            let p = if zi == 1 { p } else { 1.0 - p };
            p.clamp(1e-12, 1.0 - 1e-12)
        })
        .collect()
}

/// Per-unit inverse probability weights.
pub fn ipw_weights(data: &PanelDataset, model: &PropensityModel, mode: IpwMode) -> Result<Vec<f64>> {
    require_uncensored(data)?;
    let n = data.n();
    let mut standard = vec![1.0; n];
    let mut factor = vec![1.0; n];
    for t in 0..data.periods() {
        let z = treatments_at(data, t);
        let den = probability_of_observed(&propensity_design(data, t, model.form), &model.denominators[t], &z);
        let num = probability_of_observed(&numerator_design(data, t), &model.numerators[t], &z);
        for i in 0..n {
            standard[i] /= den[i];
            factor[i] *= num[i];
        }
    }
    Ok(match mode {
        IpwMode::Standard => standard,
        IpwMode::Stabilized => standard.iter().zip(&factor).map(|(s, f)| s * f).collect(),
        IpwMode::Truncated { q } => {
            let stab: Vec<f64> = standard.iter().zip(&factor).map(|(s, f)| s * f).collect();
            truncate_weights(&stab, q)
        }
    })
}

/// `min(ω_i, q-quantile of ω)` with the type-7 quantile.
pub fn truncate_weights(weights: &[f64], q: f64) -> Vec<f64> {
    let cap = stats::quantile_type7(weights, q);
    weights.iter().map(|&w| w.min(cap)).collect()
}

fn unit_paths(data: &PanelDataset) -> Vec<TreatmentPath> {
    (0..data.n()).filter_map(|i| data.path_prefix(i, data.periods())).collect()
}

/// Weighted least squares of `Y` on the MSM row of each unit's observed path.
pub fn ipw_msm(data: &PanelDataset, weights: &[f64], design: &MsmDesign) -> Result<Vec<f64>> {
    require_uncensored(data)?;
    if weights.len() != data.n() {
        return Err(Error::Argument("one weight per unit required".into()));
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::Argument("IPW weights must be positive and finite".into()));
    }
    let x = design.matrix(&unit_paths(data));
    let y: Vec<f64> = (0..data.n()).map(|i| data.outcome(i).unwrap_or(f64::NAN)).collect();
    let (beta, rank) = weighted_least_squares(&x, &y, weights);
    if rank < design.columns() {
        return Err(Error::Fit(format!("MSM design has rank {rank} < {} on the observed paths", design.columns())));
    }
    Ok(beta)
}

/// Plain outcome means per realized full path, among units followed to the end.
pub fn unadjusted_means(data: &PanelDataset) -> Vec<PathMean> {
    let strata = PathStrata::build(data);
    strata
        .realized_paths()
        .into_iter()
        .map(|path| {
            let ys: Vec<f64> = strata.members(&path).iter().filter_map(|&i| data.outcome(i)).collect();
            PathMean { count: ys.len(), mean: stats::mean(&ys), path }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IceMode {
    /// One regression per period over all units with treatment terms.
    Pooled,
    /// One regression per period within the target path's prefix stratum.
    Stratified,
}

/// Fitted recursion for one target path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IceFit {
    pub path: TreatmentPath,
    pub mode: IceMode,
    /// Coefficients per period, first period first.
    pub coefficients: Vec<Vec<f64>>,
    pub estimate: f64,
}

/// `[1, ḡ_1..ḡ_{t+1}]` plus, when `z` is given, `z_1..z_{t+1}`.
fn ice_design(features: &FeatureSet, t: usize, rows: &[usize], z: Option<&dyn Fn(usize, usize) -> f64>) -> Matrix<f64> {
    let base = features.history_design(t + 1, rows, true);
    match z {
        None => base,
        Some(zf) => {
            let w = base.cols();
            Matrix::from_fn(rows.len(), w + t + 1, |r, c| if c < w { base[(r, c)] } else { zf(rows[r], c - w) })
        }
    }
}

/// G-computation of `E[Y(z̄_T)]` by iterated conditional expectations.
///
/// `Q_T = Y`; for `t = T..1` regress `Q_{t}` on `[1, ḡ_t]` (plus `z̄_t` in
/// pooled mode) and predict at the target prefix. Stratified mode fits among
/// units whose observed `z̄_t` matches the target; pooled mode fits on all
/// units. The estimate is the average of the last predictions over all units.
pub fn gcomp_ice(data: &PanelDataset, features: &FeatureSet, path: &TreatmentPath, mode: IceMode) -> Result<IceFit> {
    require_uncensored(data)?;
    let periods = data.periods();
    if path.len() != periods || features.periods() != periods {
        return Err(Error::Argument("target path and features must cover every period".into()));
    }
    let n = data.n();
    let all: Vec<usize> = (0..n).collect();
    let strata = PathStrata::build(data);
    let mut q: Vec<f64> = (0..n).map(|i| data.outcome(i).unwrap_or(f64::NAN)).collect();
    let mut coefficients = vec![Vec::new(); periods];
    let observed = |i: usize, s: usize| f64::from(data.z(i, s).unwrap_or(0));
    let target = |_: usize, s: usize| f64::from(path.bits()[s]);
    for t in (0..periods).rev() {
        let (fit_rows, fit_x) = match mode {
            IceMode::Stratified => {
                let rows = strata.members(&path.prefix(t + 1)).to_vec();
                if rows.is_empty() {
                    return Err(Error::Fit(format!("no units follow {} through t={}", path.prefix(t + 1), t + 1)));
                }
                let x = ice_design(features, t, &rows, None);
                (rows, x)
            }
            IceMode::Pooled => (all.clone(), ice_design(features, t, &all, Some(&observed))),
        };
        let y: Vec<f64> = fit_rows.iter().map(|&i| q[i]).collect();
        let beta = LeastSquares::new(&fit_x).solve(&y);
        let predict_x = match mode {
            IceMode::Stratified => ice_design(features, t, &all, None),
            IceMode::Pooled => ice_design(features, t, &all, Some(&target)),
        };
        q = predict_x.mul_vec(&beta);
        coefficients[t] = beta;
    }
    Ok(IceFit { path: path.clone(), mode, coefficients, estimate: stats::mean(&q) })
}
