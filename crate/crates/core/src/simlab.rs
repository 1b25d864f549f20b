//! Simulation studies: data generating processes, true MSM parameters, the
//! replication harness and its metrics.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparators::{self, expit, IceMode, IpwMode, PropensityForm};
use crate::diagnostics::{asmd_table, weight_summary, Reference};
use crate::error::{Error, Result};
use crate::estimate::{fit_msm, run_bao, BaoConfig, MsmDesign, PathMean};
use crate::features::{apply_features, BalanceSpec};
use crate::linalg::{LeastSquares, Matrix};
use crate::panel::{PanelDataset, PanelParts, PathStrata, TreatmentPath};
use crate::rng::{self, tag, StreamRng};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Study {
    One,
    Two,
    Three,
}

impl TryFrom<u8> for Study {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Self::One),
            2 => Ok(Self::Two),
            3 => Ok(Self::Three),
            _ => Err(Error::Argument(format!("unknown study {v} (expected 1, 2 or 3)"))),
        }
    }
}

impl From<Study> for u8 {
    fn from(s: Study) -> u8 {
        s.number()
    }
}

impl Study {
    pub fn number(self) -> u8 {
        match self {
            Self::One => 1,
            Self::Two => 2,
            Self::Three => 3,
        }
    }

    pub fn periods(self) -> usize {
        match self {
            Self::Two => 3,
            _ => 2,
        }
    }

    /// Design of the true MSM.
    pub fn design(self) -> MsmDesign {
        match self {
            Self::Two => MsmDesign::cumulative(),
            _ => MsmDesign::additive(2),
        }
    }

    /// Outcome noise SD: Normal(0, 25) read as variance 25.
    pub fn noise_sd(self) -> f64 {
        match self {
            Self::Three => 1.0,
            _ => 5.0,
        }
    }
}

/// One study's generating process; `noise_sd = 0` makes outcomes deterministic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dgp {
    pub study: Study,
    pub noise_sd: f64,
}

struct Unit {
    x: Vec<[f64; 4]>,
    z: Vec<u8>,
    y: f64,
}

fn normal(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}

fn normals4(rng: &mut StreamRng) -> [f64; 4] {
    [normal(rng), normal(rng), normal(rng), normal(rng)]
}

/// Treatment draw, or the forced bit. Forced draws consume no randomness.
fn assign(rng: &mut StreamRng, p: f64, forced: Option<u8>) -> u8 {
    match forced {
        Some(z) => z,
        None => u8::from(rng.random::<f64>() < p),
    }
}

/// `min{a, max(-a, x)}`
#[inline]
pub fn clamp_innovation(a: f64, x: f64) -> f64 {
    a.min((-a).max(x))
}

impl Dgp {
    pub fn new(study: Study) -> Self {
        Self { study, noise_sd: study.noise_sd() }
    }

    fn unit(&self, rng: &mut StreamRng, forced: Option<&TreatmentPath>) -> Unit {
        let f = |t: usize| forced.map(|p| p.bits()[t]);
        match self.study {
            Study::One => self.unit1(rng, f),
            Study::Two => self.unit2(rng, f),
            Study::Three => self.unit3(rng, f),
        }
    }

    fn unit1(&self, rng: &mut StreamRng, forced: impl Fn(usize) -> Option<u8>) -> Unit {
        let mut x = Vec::with_capacity(2);
        let mut z: Vec<u8> = Vec::with_capacity(2);
        let mut prev = 0.0;
        for t in 0..2 {
            let u = if t == 0 { 1.0 } else { (2.0 * f64::from(z[0]) + 5.0) / 3.0 };
            let e = normals4(rng);
            let xt = [u * e[0], u * e[1], (u * e[2]).abs(), (u * e[3]).abs()];
            let lin = -prev + xt[0] - 0.5 * xt[1] + 0.25 * xt[2] + 0.1 * xt[3] + (-0.5f64).powi(t as i32 + 1);
            let zt = assign(rng, expit(lin), forced(t));
            prev = f64::from(zt);
            x.push(xt);
            z.push(zt);
        }
        let signal: f64 = x.iter().map(|v| 27.4 * v[0] + 13.7 * (v[1] + v[2] + v[3])).sum();
        let y = 250.0 - 10.0 * f64::from(z[0] + z[1]) + signal + self.noise_sd * normal(rng);
        Unit { x, z, y }
    }

    fn unit2(&self, rng: &mut StreamRng, forced: impl Fn(usize) -> Option<u8>) -> Unit {
        let u: f64 = rng.random_range(1.0..5.0);
        let mut x: Vec<[f64; 4]> = Vec::with_capacity(3);
        let mut z: Vec<u8> = Vec::with_capacity(3);
        for t in 0..3 {
            let e = normals4(rng).map(|v| v / u);
            let xt = if t == 0 {
                [e[0], e[1], e[2].abs(), e[3].abs()]
            } else {
                let (p, zl) = (x[t - 1], f64::from(z[t - 1]));
                [p[0] + e[0] + zl, p[1] + e[1] + zl, p[2] + clamp_innovation(p[2], e[2]) + zl, p[3] + clamp_innovation(p[3], e[3]) + zl]
            };
            let prev = if t == 0 { 0.0 } else { f64::from(z[t - 1]) };
            let lin = -prev + xt[0] - 0.5 * xt[1] + 0.25 * xt[2] + 0.1 * xt[3] + (-0.5f64).powi(t as i32 + 1);
            z.push(assign(rng, expit(lin), forced(t)));
            x.push(xt);
        }
        let x3 = x[2];
        let y = 250.0 - 10.0 * f64::from(z[0] + z[1])
            + 58.5 * f64::from(z[2])
            + (27.4 * x3[0] + 13.7 * x3[1] + 13.7 * x3[2] + 13.7 * x3[3])
            + u
            + self.noise_sd * normal(rng);
        Unit { x, z, y }
    }

    fn unit3(&self, rng: &mut StreamRng, forced: impl Fn(usize) -> Option<u8>) -> Unit {
        let (a, b) = (normal(rng), normal(rng));
        let x11 = std::f64::consts::SQRT_2 * a;
        let x12 = (a + b) / std::f64::consts::SQRT_2;
        let x13 = normal(rng).powi(2);
        let x14 = f64::from(u8::from(rng.random::<f64>() < 0.5));
        let z1 = assign(rng, expit(x11 + 2.0 * x12 - 0.5 * x13 + x14), forced(0));
        let x21 = x11 + 0.1 + normal(rng);
        let x22 = x12 + 0.1 + normal(rng);
        let x23 = (normal(rng) + x13.sqrt()).powi(2);
        let x24 = f64::from(u8::from(rng.random::<f64>() < expit(x14)));
        let z2 = assign(rng, expit(2.0 * f64::from(z1) + x21 + 2.0 * x22 - 0.5 * x23 + x24), forced(1));
        let y = (x11 + x12 + x13).powi(2) + (x21 + x22 + x23).powi(2) + self.noise_sd * normal(rng);
        Unit { x: vec![[x11, x12, x13, x14], [x21, x22, x23, x24]], z: vec![z1, z2], y }
    }

    /// `n` units drawn from one stream.
    pub fn generate(&self, n: usize, rng: &mut StreamRng) -> Result<PanelDataset> {
        if n == 0 {
            return Err(Error::Argument("n must be positive".into()));
        }
        let periods = self.study.periods();
        let units: Vec<Unit> = (0..n).map(|_| self.unit(rng, None)).collect();
        let covariates = (0..periods).map(|t| Matrix::from_fn(n, 4, |i, p| units[i].x[t][p])).collect();
        let treatments = units.iter().map(|u| u.z.clone()).collect();
        PanelDataset::complete(covariates, treatments, units.iter().map(|u| u.y).collect())
    }

    /// Mean outcome under a forced treatment path over `draws` units.
    fn forced_mean(&self, path: &TreatmentPath, draws: usize, rng: &mut StreamRng) -> f64 {
        (0..draws).map(|_| self.unit(rng, Some(path)).y).sum::<f64>() / draws as f64
    }
}

pub fn gen_study1(n: usize, rng: &mut StreamRng) -> Result<PanelDataset> {
    Dgp::new(Study::One).generate(n, rng)
}

pub fn gen_study2(n: usize, rng: &mut StreamRng) -> Result<PanelDataset> {
    Dgp::new(Study::Two).generate(n, rng)
}

pub fn gen_study3(n: usize, rng: &mut StreamRng) -> Result<PanelDataset> {
    Dgp::new(Study::Three).generate(n, rng)
}

/// Adds monotone censoring: a unit still followed at period `t` is lost with
/// probability `expit(intercept + X_{t1})`; later covariates, treatments and
/// the outcome become missing.
pub fn apply_mar_censoring(data: &PanelDataset, intercept: f64, rng: &mut StreamRng) -> Result<PanelDataset> {
    let (n, periods) = (data.n(), data.periods());
    let mut censoring = vec![vec![0u8; periods]; n];
    for (i, c) in censoring.iter_mut().enumerate() {
        for t in 0..periods {
            let lost = t > 0 && c[t - 1] == 1;
            c[t] = if lost || rng.random::<f64>() < expit(intercept + data.covariates(t)[(i, 0)]) { 1 } else { 0 };
        }
    }
    let followed = |i: usize, t: usize| t == 0 || censoring[i][t - 1] == 0;
    let covariates = (0..periods)
        .map(|t| {
            let x = data.covariates(t);
            Matrix::from_fn(n, x.cols(), |i, p| if followed(i, t) { x[(i, p)] } else { f64::NAN })
        })
        .collect();
    PanelDataset::new(PanelParts {
        ids: data.ids().to_vec(),
        covariate_names: (0..periods).map(|t| data.covariate_names(t).to_vec()).collect(),
        covariates,
        treatments: (0..n).map(|i| (0..periods).map(|t| if followed(i, t) { data.z(i, t) } else { None }).collect()).collect(),
        outcome: (0..n).map(|i| if followed(i, periods) { data.outcome(i) } else { None }).collect(),
        censoring: Some(censoring.clone()),
    })
}

/// True MSM parameters of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthOracle {
    pub study: Study,
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Monte Carlo standard errors; absent for closed forms.
    pub mc_se: Option<Vec<f64>>,
    /// `E[Y(z̄_T)]` for every path.
    pub path_means: Vec<(TreatmentPath, f64)>,
}

fn half_normal_mean() -> f64 {
    (2.0 / std::f64::consts::PI).sqrt()
}

/// Closed-form path means.
///
/// Study 1: `E|U X⁰| = U √(2/π)` with `U_2 = (2z_1 + 5)/3`. Study 2: the
/// clamped innovations are symmetric, so every `X_{3p}` has mean
/// `E[X_{1p}] + z_1 + z_2` and `E[1/U] = ln 5 / 4`. Study 3: outcomes ignore
/// treatment; `E[(X_{11}+X_{12}+X_{13})²] = 5 + 3` and the second period adds
/// `7.04 + 0.8 + 12`.
fn closed_form_mean(study: Study, path: &TreatmentPath) -> f64 {
    let z: Vec<f64> = path.bits().iter().map(|&b| f64::from(b)).collect();
    let h = half_normal_mean();
    match study {
        Study::One => {
            let u2 = (2.0 * z[0] + 5.0) / 3.0;
            250.0 - 10.0 * (z[0] + z[1]) + 27.4 * h * (1.0 + u2)
        }
        Study::Two => {
            let inv_u = 5f64.ln() / 4.0;
            250.0 - 10.0 * (z[0] + z[1]) + 58.5 * z[2] + 68.5 * (z[0] + z[1]) + 27.4 * h * inv_u + 3.0
        }
        Study::Three => 8.0 + 19.84,
    }
}

fn msm_from_means(study: Study, means: &[(TreatmentPath, f64)]) -> Vec<f64> {
    let paths: Vec<TreatmentPath> = means.iter().map(|m| m.0.clone()).collect();
    let x = study.design().matrix(&paths);
    let y: Vec<f64> = means.iter().map(|m| m.1).collect();
    LeastSquares::new(&x).solve(&y)
}

/// Closed-form truth for every study.
pub fn true_params(study: Study) -> TruthOracle {
    let path_means: Vec<(TreatmentPath, f64)> = TreatmentPath::all(study.periods())
        .into_iter()
        .map(|p| {
            let m = closed_form_mean(study, &p);
            (p, m)
        })
        .collect();
    TruthOracle { study, labels: study.design().labels(), coefficients: msm_from_means(study, &path_means), mc_se: None, path_means }
}

/// Forced-path Monte Carlo truth with `draws` units per path.
///
/// Every path reuses the same streams (common random numbers), so contrasts
/// are estimated far more precisely than levels. Draws are split into 100
/// chunks; standard errors come from the spread of per-chunk coefficients.
pub fn monte_carlo_truth(study: Study, draws: usize, seed: u64) -> TruthOracle {
    const CHUNKS: usize = 100;
    let dgp = Dgp::new(study);
    let paths = TreatmentPath::all(study.periods());
    let per_chunk = draws.div_ceil(CHUNKS).max(1);
    let chunk_means: Vec<Vec<f64>> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            paths
                .iter()
                .map(|p| {
                    let mut rng = rng::keyed(seed, &[tag::ORACLE, u64::from(study.number()), c as u64]);
                    dgp.forced_mean(p, per_chunk, &mut rng)
                })
                .collect()
        })
        .collect();
    let path_means: Vec<(TreatmentPath, f64)> =
        paths.iter().enumerate().map(|(k, p)| (p.clone(), chunk_means.iter().map(|c| c[k]).sum::<f64>() / CHUNKS as f64)).collect();
    let chunk_coefs: Vec<Vec<f64>> =
        chunk_means.iter().map(|c| msm_from_means(study, &paths.iter().cloned().zip(c.iter().copied()).collect::<Vec<_>>())).collect();
    let coefficients = msm_from_means(study, &path_means);
    let mc_se = (0..coefficients.len())
        .map(|j| stats::sample_sd(&chunk_coefs.iter().map(|c| c[j]).collect::<Vec<_>>()) / (CHUNKS as f64).sqrt())
        .collect();
    TruthOracle { study, labels: study.design().labels(), coefficients, mc_se: Some(mc_se), path_means }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "bao")]
    Bao,
    #[serde(rename = "gpool")]
    GPool,
    #[serde(rename = "gstrat")]
    GStrat,
    #[serde(rename = "lr")]
    Lr,
    #[serde(rename = "lr-stab")]
    LrStab,
    #[serde(rename = "lr-trunc")]
    LrTrunc,
    #[serde(rename = "unadj")]
    Unadj,
}

impl Method {
    pub const ALL: [Method; 7] = [Self::Bao, Self::GPool, Self::GStrat, Self::Lr, Self::LrStab, Self::LrTrunc, Self::Unadj];

    pub fn name(self) -> &'static str {
        match self {
            Self::Bao => "bao",
            Self::GPool => "gpool",
            Self::GStrat => "gstrat",
            Self::Lr => "lr",
            Self::LrStab => "lr-stab",
            Self::LrTrunc => "lr-trunc",
            Self::Unadj => "unadj",
        }
    }

    fn id(self) -> u64 {
        Self::ALL.iter().position(|&m| m == self).expect("listed") as u64
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.iter().copied().find(|m| m.name() == s).ok_or_else(|| Error::Argument(format!("unknown method '{s}'")))
    }
}

/// Weight diagnostics of one path under one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathDiagnostic {
    pub path: TreatmentPath,
    pub pre_asmd: f64,
    pub post_asmd: f64,
    pub cv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutput {
    pub coefficients: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    /// Empty for estimators without unit weights.
    pub diagnostics: Vec<PathDiagnostic>,
}

/// Balance of the raw covariates and weight CV per path, with each path's
/// weighted mean compared to its parent stratum under the same weights.
pub fn weight_diagnostics(data: &PanelDataset, unit_weights: &[f64]) -> Vec<PathDiagnostic> {
    let strata = PathStrata::build(data);
    let blocks: Vec<Matrix<f64>> = (0..data.periods()).map(|t| data.covariates(t).clone()).collect();
    let labels: Vec<Vec<String>> = (0..data.periods()).map(|t| data.covariate_names(t).to_vec()).collect();
    let table = asmd_table(&blocks, &labels, &strata, unit_weights, Reference::Weighted);
    strata
        .realized_paths()
        .into_iter()
        .map(|path| {
            let rows: Vec<_> = table.rows.iter().filter(|r| r.path == path).collect();
            let w: Vec<f64> = strata.members(&path).iter().map(|&i| unit_weights[i]).collect();
            PathDiagnostic {
                pre_asmd: stats::mean(&rows.iter().map(|r| r.pre_asmd).collect::<Vec<_>>()),
                post_asmd: stats::mean(&rows.iter().map(|r| r.post_asmd).collect::<Vec<_>>()),
                cv: weight_summary(&w).cv,
                path,
            }
        })
        .collect()
}

fn identity_features(data: &PanelDataset) -> Result<crate::features::FeatureSet> {
    apply_features(data, &BalanceSpec::identity(data, None))
}

fn ice_coefficients(data: &PanelDataset, design: &MsmDesign, mode: IceMode) -> Result<Vec<f64>> {
    let features = identity_features(data)?;
    let strata = PathStrata::build(data);
    let paths = strata.realized_paths();
    let mut means = Vec::with_capacity(paths.len());
    let mut prevalences = Vec::with_capacity(paths.len());
    for path in paths {
        let fit = comparators::gcomp_ice(data, &features, &path, mode)?;
        prevalences.push(strata.prevalence_f64(&path));
        means.push(PathMean { count: strata.count(&path), mean: fit.estimate, path });
    }
    Ok(fit_msm(&means, &prevalences, design)?.coefficients)
}

fn ipw_mode(method: Method) -> Option<IpwMode> {
    match method {
        Method::Lr => Some(IpwMode::Standard),
        Method::LrStab => Some(IpwMode::Stabilized),
        Method::LrTrunc => Some(IpwMode::Truncated { q: 0.95 }),
        _ => None,
    }
}

/// Point estimate and, for weighting estimators, the unit weights.
fn point_estimate(data: &PanelDataset, design: &MsmDesign, method: Method) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    match method {
        Method::GPool => Ok((ice_coefficients(data, design, IceMode::Pooled)?, None)),
        Method::GStrat => Ok((ice_coefficients(data, design, IceMode::Stratified)?, None)),
        Method::Unadj => {
            let w = vec![1.0; data.n()];
            Ok((comparators::ipw_msm(data, &w, design)?, Some(w)))
        }
        Method::Lr | Method::LrStab | Method::LrTrunc => {
            let model = comparators::fit_propensity(data, PropensityForm::default())?;
            let w = comparators::ipw_weights(data, &model, ipw_mode(method).expect("weighting method"))?;
            Ok((comparators::ipw_msm(data, &w, design)?, Some(w)))
        }
        Method::Bao => Err(Error::Argument("BAO runs through its own pipeline".into())),
    }
}

/// Bootstrap percentile intervals for a comparator, at most 10 draws per replicate.
fn comparator_intervals(
    data: &PanelDataset,
    design: &MsmDesign,
    method: Method,
    b: usize,
    seed: u64,
    point: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = data.n();
    let reps: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .filter_map(|r| {
            (0..10u64).find_map(|attempt| {
                let mut rng = rng::keyed(seed, &[tag::BOOTSTRAP, method.id(), r as u64, attempt]);
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                point_estimate(&data.resample(&rows), design, method).ok().map(|e| e.0)
            })
        })
        .collect();
    let p = point.len();
    if reps.len() < 2 {
        return (vec![f64::NAN; p], vec![f64::NAN; p]);
    }
    (0..p)
        .map(|j| {
            let mut col: Vec<f64> = reps.iter().map(|r| r[j]).collect();
            col.sort_by(f64::total_cmp);
            (stats::quantile_sorted(&col, 0.025).min(point[j]), stats::quantile_sorted(&col, 0.975).max(point[j]))
        })
        .unzip()
}

/// Runs one registered estimator on one dataset.
pub fn run_method(
    data: &PanelDataset,
    design: &MsmDesign,
    method: Method,
    bootstrap: usize,
    bao: &BaoConfig,
    seed: u64,
) -> Result<MethodOutput> {
    if method == Method::Bao {
        let config = BaoConfig { bootstrap, ..bao.clone() };
        let result = run_bao(data, &BalanceSpec::identity(data, None), design, &config, seed)?;
        let diagnostics = weight_diagnostics(data, &result.unit_weights);
        return Ok(MethodOutput {
            coefficients: result.msm.coefficients,
            ci_lower: result.msm.ci_lower,
            ci_upper: result.msm.ci_upper,
            diagnostics,
        });
    }
    let (coefficients, weights) = point_estimate(data, design, method)?;
    let (ci_lower, ci_upper) = if bootstrap > 0 {
        comparator_intervals(data, design, method, bootstrap, seed, &coefficients)
    } else {
        (vec![f64::NAN; coefficients.len()], vec![f64::NAN; coefficients.len()])
    };
    let diagnostics = weights.map(|w| weight_diagnostics(data, &w)).unwrap_or_default();
    Ok(MethodOutput { coefficients, ci_lower, ci_upper, diagnostics })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub study: Study,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Defaults to the study's true MSM.
    #[serde(default)]
    pub msm: Option<MsmDesign>,
    /// Bootstrap resamples per replicate for every estimator.
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default)]
    pub bao: BaoConfig,
}

fn default_bootstrap() -> usize {
    100
}

impl StudyConfig {
    pub fn new(study: Study, n: usize, reps: usize, seed: u64, methods: Vec<Method>) -> Self {
        Self { study, n, reps, seed, methods, msm: None, bootstrap: default_bootstrap(), bao: BaoConfig::default() }
    }

    pub fn design(&self) -> MsmDesign {
        self.msm.clone().unwrap_or_else(|| self.study.design())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 50 {
            return Err(Error::Argument("n must be at least 50".into()));
        }
        if self.reps == 0 {
            return Err(Error::Argument("at least one replicate is required".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Argument("no methods selected".into()));
        }
        self.design().validate(self.study.periods())
    }
}

/// Stream for replicate `r`'s data; depends only on `(seed, study, n, r)`.
pub fn replicate_rng(seed: u64, study: Study, n: usize, r: usize) -> StreamRng {
    rng::keyed(seed, &[tag::DATA, u64::from(study.number()), n as u64, r as u64])
}

pub fn replicate_data(config: &StudyConfig, r: usize) -> Result<PanelDataset> {
    Dgp::new(config.study).generate(config.n, &mut replicate_rng(config.seed, config.study, config.n, r))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub method: Method,
    pub output: Option<MethodOutput>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: Method,
    pub parameter: String,
    pub truth: f64,
    pub bias: f64,
    pub rmse: f64,
    /// Percent of intervals containing the truth.
    pub coverage: f64,
    pub length: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub method: Method,
    pub path: TreatmentPath,
    pub pre_asmd: f64,
    pub post_asmd: f64,
    pub cv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub config: StudyConfig,
    pub truth: TruthOracle,
    pub metrics: Vec<MetricRow>,
    pub figure: Vec<FigureRow>,
    pub records: Vec<ReplicateRecord>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Bias, RMSE, coverage and interval length of one parameter.
pub fn parameter_metrics(estimates: &[f64], lower: &[f64], upper: &[f64], truth: f64) -> (f64, f64, f64, f64) {
    let k = estimates.len() as f64;
    let bias = estimates.iter().sum::<f64>() / k - truth;
    let rmse = (estimates.iter().map(|e| (e - truth).powi(2)).sum::<f64>() / k).sqrt();
    let covered = lower.iter().zip(upper).filter(|(l, u)| **l <= truth && truth <= **u).count() as f64;
    let coverage = 100.0 * covered / k;
    let length = lower.iter().zip(upper).map(|(l, u)| u - l).sum::<f64>() / k;
    (bias, rmse, coverage, length)
}

/// Mean pre/post ASMD and weight CV per method and path, averaged over replicates.
pub fn imbalance_and_cv(records: &[ReplicateRecord]) -> Vec<FigureRow> {
    let mut acc: std::collections::BTreeMap<(Method, TreatmentPath), (f64, f64, f64, usize)> = Default::default();
    for rec in records {
        let Some(out) = &rec.output else { continue };
        for d in &out.diagnostics {
            let e = acc.entry((rec.method, d.path.clone())).or_insert((0.0, 0.0, 0.0, 0));
            e.0 += d.pre_asmd;
            e.1 += d.post_asmd;
            e.2 += d.cv;
            e.3 += 1;
        }
    }
    acc.into_iter()
        .map(|((method, path), (pre, post, cv, k))| {
            let k = k as f64;
            FigureRow { method, path, pre_asmd: pre / k, post_asmd: post / k, cv: cv / k }
        })
        .collect()
}

pub fn run_replications(config: &StudyConfig) -> Result<ReplicationReport> {
    config.validate()?;
    let started = Instant::now();
    let design = config.design();
    let truth = true_params(config.study);
    if design != config.study.design() {
        return Err(Error::Argument("metrics need the study's true MSM design".into()));
    }
    let records: Vec<ReplicateRecord> = (0..config.reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<ReplicateRecord>> {
            let data = replicate_data(config, r)?;
            let seed = rng::keyed(config.seed, &[tag::BOOTSTRAP, u64::from(config.study.number()), config.n as u64, r as u64]).next_u64();
            Ok(config
                .methods
                .iter()
                .map(|&method| match run_method(&data, &design, method, config.bootstrap, &config.bao, seed) {
                    Ok(out) => ReplicateRecord { replicate: r, method, output: Some(out), error: None },
                    Err(e) => ReplicateRecord { replicate: r, method, output: None, error: Some(e.to_string()) },
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut metrics = Vec::new();
    for &method in &config.methods {
        let ok: Vec<&MethodOutput> = records.iter().filter(|r| r.method == method).filter_map(|r| r.output.as_ref()).collect();
        let failures = records.iter().filter(|r| r.method == method && r.output.is_none()).count();
        for (j, label) in truth.labels.iter().enumerate() {
            let est: Vec<f64> = ok.iter().map(|o| o.coefficients[j]).collect();
            let lo: Vec<f64> = ok.iter().map(|o| o.ci_lower[j]).collect();
            let hi: Vec<f64> = ok.iter().map(|o| o.ci_upper[j]).collect();
            let (bias, rmse, coverage, length) = if est.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
            } else {
                parameter_metrics(&est, &lo, &hi, truth.coefficients[j])
            };
            metrics.push(MetricRow {
                method,
                parameter: label.clone(),
                truth: truth.coefficients[j],
                bias,
                rmse,
                coverage,
                length,
                failures,
            });
        }
    }
    let figure = imbalance_and_cv(&records);
    let wall_seconds = started.elapsed().as_secs_f64();
    log::info!("study {} n={} reps={}: {wall_seconds:.1}s", config.study.number(), config.n, config.reps);
    Ok(ReplicationReport { config: config.clone(), truth, metrics, figure, records, wall_seconds })
}

impl ReplicationReport {
    pub fn metric(&self, method: Method, parameter: &str) -> Option<&MetricRow> {
        self.metrics.iter().find(|m| m.method == method && m.parameter == parameter)
    }

    /// `study,n,method,parameter,bias,rmse,coverage,length,failures`
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let to_io = |e: csv::Error| std::io::Error::other(e);
        w.write_record(["study", "n", "method", "parameter", "bias", "rmse", "coverage", "length", "failures"]).map_err(to_io)?;
        for m in &self.metrics {
            w.write_record([
                self.config.study.number().to_string(),
                self.config.n.to_string(),
                m.method.name().to_string(),
                m.parameter.clone(),
                m.bias.to_string(),
                m.rmse.to_string(),
                m.coverage.to_string(),
                m.length.to_string(),
                m.failures.to_string(),
            ])
            .map_err(to_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_figure_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let to_io = |e: csv::Error| std::io::Error::other(e);
        w.write_record(["method", "path", "pre_asmd", "post_asmd", "cv"]).map_err(to_io)?;
        for r in &self.figure {
            w.write_record([
                r.method.name().to_string(),
                r.path.to_string(),
                r.pre_asmd.to_string(),
                r.post_asmd.to_string(),
                r.cv.to_string(),
            ])
            .map_err(to_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

const PALETTE: [&str; 7] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d"];

/// Scatter of mean post-weighting ASMD against mean weight CV, one point per
/// (method, path).
pub fn figure_svg(rows: &[FigureRow], title: &str) -> String {
    let (w, h, m) = (640.0, 480.0, 60.0);
    let finite = |v: f64| if v.is_finite() { v } else { 0.0 };
    let xmax = rows.iter().map(|r| finite(r.post_asmd)).fold(0.0, f64::max).max(1e-3) * 1.1;
    let ymax = rows.iter().map(|r| finite(r.cv)).fold(0.0, f64::max).max(1e-3) * 1.1;
    let sx = |v: f64| m + finite(v) / xmax * (w - 2.0 * m);
    let sy = |v: f64| h - m - finite(v) / ymax * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(s, r#"<line x1="{m}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#, h - m, w - m);
    let _ = writeln!(s, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">mean ASMD after weighting</text>"#, w / 2.0, h - 20.0);
    let _ = writeln!(s, r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">mean weight CV</text>"#, h / 2.0);
    for k in 0..=4 {
        let f = f64::from(k) / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{:.3}</text>"#, sx(f * xmax), h - m + 16.0, f * xmax);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{:.2}</text>"#, m - 6.0, sy(f * ymax) + 4.0, f * ymax);
    }
    let mut methods: Vec<Method> = rows.iter().map(|r| r.method).collect();
    methods.dedup();
    for r in rows {
        let colour = PALETTE[r.method.id() as usize % PALETTE.len()];
        let (x, y) = (sx(r.post_asmd), sy(r.cv));
        let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="4" fill="{colour}"/>"#);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="9">{}</text>"#, x + 5.0, y - 5.0, r.path);
    }
    for (k, method) in methods.iter().enumerate() {
        let colour = PALETTE[method.id() as usize % PALETTE.len()];
        let y = m + 16.0 * k as f64;
        let _ = writeln!(s, r#"<circle cx="{}" cy="{y}" r="4" fill="{colour}"/>"#, w - m - 70.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, w - m - 60.0, y + 4.0, method.name());
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_identity() {
        for x in [-0.5, 0.0, 0.3, 1.0, -1.0] {
            assert_eq!(clamp_innovation(1.0, x), x);
        }
        assert_eq!(clamp_innovation(1.0, 3.0), 1.0);
        assert_eq!(clamp_innovation(1.0, -3.0), -1.0);
    }

    #[test]
    fn study1_closed_form() {
        let t = true_params(Study::One);
        for (c, e) in t.coefficients.iter().zip([308.30, 4.57, -10.0]) {
            assert!((c - e).abs() < 0.01, "{:?}", t.coefficients);
        }
    }

    #[test]
    fn noiseless_outcomes_are_deterministic() {
        let dgp = Dgp { study: Study::One, noise_sd: 0.0 };
        let data = dgp.generate(20, &mut rng::keyed(1, &[])).unwrap();
        for i in 0..20 {
            let x: f64 = (0..2)
                .map(|t| {
                    let r = data.covariates(t).row(i);
                    27.4 * r[0] + 13.7 * (r[1] + r[2] + r[3])
                })
                .sum();
            let z = f64::from(data.z(i, 0).unwrap() + data.z(i, 1).unwrap());
            assert!((data.outcome(i).unwrap() - (250.0 - 10.0 * z + x)).abs() < 1e-9);
        }
    }

    #[test]
    fn metric_identities() {
        let est = [1.0, 2.0, 4.0];
        let (bias, rmse, cov, len) = parameter_metrics(&est, &[0.0, 3.0, 1.0], &[2.0, 5.0, 6.0], 1.5);
        assert!((bias - (7.0 / 3.0 - 1.5)).abs() < 1e-12);
        let var = est.iter().map(|e| (e - 7.0 / 3.0f64).powi(2)).sum::<f64>() / 3.0;
        assert!((rmse * rmse - (bias * bias + var)).abs() < 1e-12);
        assert!((cov - 200.0 / 3.0).abs() < 1e-12);
        assert!((len - 3.0).abs() < 1e-12);
    }
}
