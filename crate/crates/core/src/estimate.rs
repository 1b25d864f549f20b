//! The full balancing pipeline: residual balance problems per treatment path,
//! Hájek path means, marginal structural model fits and bootstrap intervals.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{asmd_table, BalanceTable, Reference, WeightSummary, ASMD_WARNING, BALANCE_SLACK};
use crate::error::{Error, Result};
use crate::features::{apply_features, feature_scales, BalanceSpec, FeatureSet, ScaleTable};
use crate::linalg::{weighted_least_squares, LeastSquares, Matrix};
use crate::ortho::{orthogonalize, ProjectionFit, ProjectionOptions, ResidualSet};
use crate::panel::{PanelDataset, PathStrata, TreatmentPath};
use crate::qpsolve::{relax_to_feasible, QpProblem, SolveStatus, SolverOptions, WeightSolution};
use crate::rng::{self, tag};
use crate::stats;
use crate::tune::{tune_delta, TuningConfig, TuningReport};

/// Everything the balance programs need, built once per dataset.
#[derive(Debug, Clone)]
pub struct BalanceSetup {
    pub strata: PathStrata,
    pub features: FeatureSet,
    pub fits: ProjectionFit,
    pub residuals: ResidualSet,
    /// Residual scales per period over each prefix stratum.
    pub scales: ScaleTable,
}

pub fn prepare_balance(data: &PanelDataset, spec: &BalanceSpec) -> Result<BalanceSetup> {
    let features = apply_features(data, spec)?;
    let strata = PathStrata::build(data);
    let options = ProjectionOptions { intercept: spec.intercept, pool_on_last_treatment: spec.pool_on_last_treatment };
    let (fits, residuals) = orthogonalize(&features, &strata, options)?;
    let scales = feature_scales(&residuals.residuals, &strata);
    Ok(BalanceSetup { strata, features, fits, residuals, scales })
}

impl BalanceSetup {
    /// Raw tolerance of feature `p` at period `t` (0-based) along `path`.
    pub fn raw_tolerance(&self, path: &TreatmentPath, t: usize, p: usize, delta: &[Vec<f64>]) -> f64 {
        self.scales.get(t, &path.prefix(t)).map_or(f64::NAN, |s| s[p].raw_tolerance(delta[t][p]))
    }

    /// Balance program for one full path: every residual column of every
    /// period, restricted to the path's members.
    pub fn path_problem(&self, path: &TreatmentPath, delta: &[Vec<f64>]) -> Result<QpProblem<f64>> {
        let members = self.strata.members(path).to_vec();
        let widths = self.features.widths();
        let k: usize = widths.iter().sum();
        let mut a = Matrix::zeros(k, members.len());
        let mut target = Vec::with_capacity(k);
        let mut tolerance = Vec::with_capacity(k);
        let mut labels = Vec::with_capacity(k);
        let mut row = 0;
        for (t, block) in self.residuals.residuals.iter().enumerate() {
            let means = self
                .residuals
                .target(t, path)
                .ok_or_else(|| Error::Structural(format!("no balance target for prefix {} at t={}", path.prefix(t), t + 1)))?;
            for p in 0..widths[t] {
                for (c, &i) in members.iter().enumerate() {
                    a[(row, c)] = block[(i, p)];
                }
                target.push(means[p]);
                tolerance.push(self.raw_tolerance(path, t, p, delta));
                labels.push(format!("t{}:{}", t + 1, self.residuals.labels[t][p]));
                row += 1;
            }
        }
        Ok(QpProblem::new(a, target, tolerance)?.with_path(path.clone(), members)?.with_labels(labels))
    }
}

/// Default tolerance multipliers tried when a path is infeasible.
pub fn default_ladder() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
}

/// Accepted weights for one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathWeights {
    pub path: TreatmentPath,
    pub members: Vec<usize>,
    /// Ladder entry at which the program became feasible.
    pub multiplier: f64,
    pub solution: WeightSolution<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedPath {
    pub path: TreatmentPath,
    pub count: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolvedPaths {
    pub solved: Vec<PathWeights>,
    pub dropped: Vec<DroppedPath>,
    pub warnings: Vec<String>,
}

pub(crate) fn solve_with_ladder(problem: &QpProblem<f64>, ladder: &[f64], opts: &SolverOptions) -> Result<(f64, WeightSolution<f64>)> {
    let mut start = 0;
    loop {
        let (mult, sol) = relax_to_feasible(problem, &ladder[start..], opts)?;
        // An uncertified iterate is kept only if it honours the constraints.
        if sol.status == SolveStatus::Optimal || sol.kkt.primal <= BALANCE_SLACK {
            return Ok((mult, sol));
        }
        start += ladder[start..].iter().position(|&m| m == mult).expect("multiplier from ladder") + 1;
        if start == ladder.len() {
            return Err(Error::Infeasible(format!("path {}: no certified weights up to tolerance multiplier {mult}", problem.path)));
        }
    }
}

/// Solves every realized path, relaxing tolerances along `ladder` where needed.
/// Paths still infeasible at the top of the ladder are dropped.
pub fn solve_paths(setup: &BalanceSetup, delta: &[Vec<f64>], ladder: &[f64], opts: &SolverOptions) -> Result<SolvedPaths> {
    let paths = setup.strata.realized_paths();
    let outcomes: Vec<Result<std::result::Result<PathWeights, DroppedPath>>> = paths
        .par_iter()
        .map(|path| {
            let problem = setup.path_problem(path, delta)?;
            Ok(match solve_with_ladder(&problem, ladder, opts) {
                Ok((multiplier, solution)) => Ok(PathWeights { path: path.clone(), members: problem.members, multiplier, solution }),
                Err(Error::Infeasible(reason)) => Err(DroppedPath { path: path.clone(), count: problem.members.len(), reason }),
                Err(e) => return Err(e),
            })
        })
        .collect();
    let mut out = SolvedPaths::default();
    for o in outcomes {
        match o? {
            Ok(w) => {
                if w.multiplier != 1.0 {
                    out.warnings.push(format!("path {}: tolerances relaxed by a factor {}", w.path, w.multiplier));
                }
                if w.solution.status == SolveStatus::MaxIter {
                    out.warnings.push(format!("path {}: iteration cap reached, KKT residual {:e}", w.path, w.solution.kkt.max()));
                }
                out.solved.push(w);
            }
            Err(d) => {
                out.warnings.push(format!("path {} dropped: {}", d.path, d.reason));
                out.dropped.push(d);
            }
        }
    }
    Ok(out)
}

/// Per-unit weights `ω_i · n_path`; zero for units on dropped paths.
pub fn unit_weights(n: usize, solved: &[PathWeights]) -> Vec<f64> {
    let mut w = vec![0.0; n];
    for pw in solved {
        let scale = pw.members.len() as f64;
        for (&i, &wi) in pw.members.iter().zip(&pw.solution.weights) {
            w[i] = wi * scale;
        }
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathMean {
    pub path: TreatmentPath,
    pub count: usize,
    pub mean: f64,
}

/// Hájek means `Σ ω_i Y_i / Σ ω_i` over each path's members.
pub fn estimate_path_means(data: &PanelDataset, solved: &[PathWeights]) -> Result<Vec<PathMean>> {
    solved
        .iter()
        .map(|pw| {
            if pw.members.len() != pw.solution.weights.len() {
                return Err(Error::Structural(format!(
                    "path {}: {} weights for {} members",
                    pw.path,
                    pw.solution.weights.len(),
                    pw.members.len()
                )));
            }
            let (mut num, mut den) = (0.0, 0.0);
            for (&i, &w) in pw.members.iter().zip(&pw.solution.weights) {
                let y =
                    data.outcome(i).ok_or_else(|| Error::Structural(format!("path {}: unit {} has no outcome", pw.path, data.ids()[i])))?;
                num += w * y;
                den += w;
            }
            Ok(PathMean { path: pw.path.clone(), count: pw.members.len(), mean: num / den })
        })
        .collect()
}

/// One column of a marginal structural model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "term", rename_all = "snake_case")]
pub enum MsmTerm {
    Intercept,
    /// `z_t`, 1-based.
    Z {
        t: usize,
    },
    /// `Σ_t z_t`
    Cumulative,
    /// `1{z_t ≠ z_{t-1}}`, 1-based, `t ≥ 2`.
    Switch {
        t: usize,
    },
    /// `Σ_{t≥2} 1{z_t ≠ z_{t-1}}`
    SwitchCount,
    /// `1{z̄_T = path}`
    PathDummy {
        path: TreatmentPath,
    },
}

impl MsmTerm {
    pub fn eval(&self, path: &TreatmentPath) -> f64 {
        let z = path.bits();
        match self {
            Self::Intercept => 1.0,
            Self::Z { t } => f64::from(z[t - 1]),
            Self::Cumulative => path.cumulative() as f64,
            Self::Switch { t } => f64::from(u8::from(z[t - 1] != z[t - 2])),
            Self::SwitchCount => z.windows(2).filter(|w| w[0] != w[1]).count() as f64,
            Self::PathDummy { path: c } => f64::from(u8::from(c == path)),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Intercept => "intercept".into(),
            Self::Z { t } => format!("z{t}"),
            Self::Cumulative => "cumulative".into(),
            Self::Switch { t } => format!("switch{t}"),
            Self::SwitchCount => "switches".into(),
            Self::PathDummy { path } => format!("path_{path}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MsmDesign {
    pub terms: Vec<MsmTerm>,
}

impl MsmDesign {
    /// `τ_0 + Σ_t τ_t z_t`
    pub fn additive(periods: usize) -> Self {
        let mut terms = vec![MsmTerm::Intercept];
        terms.extend((1..=periods).map(|t| MsmTerm::Z { t }));
        Self { terms }
    }

    /// `τ_0 + τ_1 Σ_t z_t`
    pub fn cumulative() -> Self {
        Self { terms: vec![MsmTerm::Intercept, MsmTerm::Cumulative] }
    }

    /// `τ_0 + τ_1 z_1 + τ_2 Σ_{t≥2} 1{z_t ≠ z_{t-1}}`
    pub fn switch() -> Self {
        Self { terms: vec![MsmTerm::Intercept, MsmTerm::Z { t: 1 }, MsmTerm::SwitchCount] }
    }

    /// One dummy per possible path.
    pub fn saturated(periods: usize) -> Self {
        Self { terms: TreatmentPath::all(periods).into_iter().map(|path| MsmTerm::PathDummy { path }).collect() }
    }

    pub fn named(name: &str, periods: usize) -> Result<Self> {
        match name {
            "additive" => Ok(Self::additive(periods)),
            "cumulative" => Ok(Self::cumulative()),
            "switch" if periods >= 2 => Ok(Self::switch()),
            "switch" => Err(Error::Argument("the switch model needs at least two periods".into())),
            "saturated" => Ok(Self::saturated(periods)),
            other => Err(Error::Argument(format!("unknown MSM '{other}' (expected additive, cumulative, switch or saturated)"))),
        }
    }

    pub fn columns(&self) -> usize {
        self.terms.len()
    }

    pub fn labels(&self) -> Vec<String> {
        self.terms.iter().map(MsmTerm::label).collect()
    }

    pub fn row(&self, path: &TreatmentPath) -> Vec<f64> {
        self.terms.iter().map(|t| t.eval(path)).collect()
    }

    pub fn matrix(&self, paths: &[TreatmentPath]) -> Matrix<f64> {
        let rows: Vec<Vec<f64>> = paths.iter().map(|p| self.row(p)).collect();
        Matrix::from_rows(&rows, self.columns())
    }

    pub fn validate(&self, periods: usize) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::Argument("MSM has no terms".into()));
        }
        for term in &self.terms {
            let ok = match term {
                MsmTerm::Z { t } => (1..=periods).contains(t),
                MsmTerm::Switch { t } => (2..=periods).contains(t),
                MsmTerm::PathDummy { path } => path.len() == periods,
                _ => true,
            };
            if !ok {
                return Err(Error::Argument(format!("MSM term {} does not fit {periods} periods", term.label())));
            }
        }
        Ok(())
    }
}

/// Point estimates of an MSM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsmCoefficients {
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Prevalence-weighted adjusted R²; `NaN` without residual degrees of freedom.
    pub adj_r2: f64,
}

/// Columns that add nothing to the span of the columns before them.
fn collinear_columns(x: &Matrix<f64>) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..x.cols() {
        let mut trial = kept.clone();
        trial.push(j);
        let sub = Matrix::from_fn(x.rows(), trial.len(), |i, c| x[(i, trial[c])]);
        if LeastSquares::new(&sub).rank() == trial.len() {
            kept = trial;
        } else {
            bad.push(j);
        }
    }
    bad
}

/// Rows are distinct unit vectors covering every column: the fit interpolates.
fn interpolating(x: &Matrix<f64>) -> Option<Vec<usize>> {
    if x.rows() != x.cols() {
        return None;
    }
    let mut column_of_row = Vec::with_capacity(x.rows());
    let mut seen = vec![false; x.cols()];
    for i in 0..x.rows() {
        let row = x.row(i);
        let ones: Vec<usize> = (0..row.len()).filter(|&j| row[j] == 1.0).collect();
        if ones.len() != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) || seen[ones[0]] {
            return None;
        }
        seen[ones[0]] = true;
        column_of_row.push(ones[0]);
    }
    Some(column_of_row)
}

/// Prevalence-weighted least squares of path means on design rows.
pub fn fit_msm(means: &[PathMean], prevalences: &[f64], design: &MsmDesign) -> Result<MsmCoefficients> {
    if means.len() != prevalences.len() {
        return Err(Error::Argument("one prevalence per path mean required".into()));
    }
    let p = design.columns();
    let paths: Vec<TreatmentPath> = means.iter().map(|m| m.path.clone()).collect();
    let x = design.matrix(&paths);
    let y: Vec<f64> = means.iter().map(|m| m.mean).collect();
    let labels = design.labels();
    let bad = collinear_columns(&x);
    if !bad.is_empty() {
        let names: Vec<&str> = bad.iter().map(|&j| labels[j].as_str()).collect();
        return Err(Error::Fit(format!("MSM design is rank deficient on the estimated paths; collinear: {}", names.join(", "))));
    }
    let coefficients = match interpolating(&x) {
        Some(cols) => {
            let mut beta = vec![0.0; p];
            for (i, &j) in cols.iter().enumerate() {
                beta[j] = y[i];
            }
            beta
        }
        None => weighted_least_squares(&x, &y, prevalences).0,
    };
    let fitted = x.mul_vec(&coefficients);
    let wsum: f64 = prevalences.iter().sum();
    let ybar = y.iter().zip(prevalences).map(|(a, w)| a * w).sum::<f64>() / wsum;
    let sse: f64 = y.iter().zip(&fitted).zip(prevalences).map(|((a, f), w)| w * (a - f).powi(2)).sum();
    let sst: f64 = y.iter().zip(prevalences).map(|(a, w)| w * (a - ybar).powi(2)).sum();
    let n = means.len();
    let adj_r2 = if n > p && sst > 0.0 { 1.0 - (sse / sst) * (n - 1) as f64 / (n - p) as f64 } else { f64::NAN };
    Ok(MsmCoefficients { labels, coefficients, adj_r2 })
}

/// Pipeline settings other than the balance spec and the MSM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaoConfig {
    pub tuning: TuningConfig,
    /// Bootstrap resamples for standard errors; 0 disables.
    pub bootstrap: usize,
    pub ladder: Vec<f64>,
    pub solver: SolverOptions,
}

impl Default for BaoConfig {
    fn default() -> Self {
        Self { tuning: TuningConfig::default(), bootstrap: 100, ladder: default_ladder(), solver: SolverOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    pub path: TreatmentPath,
    pub count: usize,
    /// `n_path / n` over the units followed to the end.
    pub prevalence: f64,
    pub mean: f64,
    pub status: SolveStatus,
    pub multiplier: f64,
    pub objective: f64,
    pub kkt_max: f64,
    pub weights: WeightSummary<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsmFit {
    pub labels: Vec<String>,
    pub coefficients: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
    pub adj_r2: f64,
    /// Resamples that produced a fit.
    pub replicates: usize,
    /// Resamples drawn, including redraws after failed fits.
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaoResult {
    /// Standardized tolerances per period and feature.
    pub delta: Vec<Vec<f64>>,
    /// Tuned common tolerance, when tuning ran.
    pub delta_star: Option<f64>,
    pub tuning: Option<TuningReport>,
    pub paths: Vec<PathEstimate>,
    pub dropped: Vec<DroppedPath>,
    pub msm: MsmFit,
    pub balance: BalanceTable,
    pub warnings: Vec<String>,
    /// `ω_i · n_path` per unit, zero on dropped paths.
    #[serde(skip)]
    pub unit_weights: Vec<f64>,
}

struct PointFit {
    setup: BalanceSetup,
    solved: SolvedPaths,
    means: Vec<PathMean>,
    prevalences: Vec<f64>,
    coefs: Result<MsmCoefficients>,
}

fn point_fit(data: &PanelDataset, spec: &BalanceSpec, delta: &[Vec<f64>], design: &MsmDesign, config: &BaoConfig) -> Result<PointFit> {
    let setup = prepare_balance(data, spec)?;
    let solved = solve_paths(&setup, delta, &config.ladder, &config.solver)?;
    let means = estimate_path_means(data, &solved.solved)?;
    // Prevalences renormalized over the retained paths.
    let counts: Vec<f64> = means.iter().map(|m| m.count as f64).collect();
    let total: f64 = counts.iter().sum();
    let prevalences: Vec<f64> = counts.iter().map(|c| c / total).collect();
    let coefs = if means.is_empty() {
        Err(Error::Infeasible("no path has feasible weights".into()))
    } else {
        fit_msm(&means, &prevalences, design)
    };
    Ok(PointFit { setup, solved, means, prevalences, coefs })
}

/// Draws resamples until `b` fits succeed or `10 b` draws are spent; each
/// replicate redraws at most 10 times with its own stream.
fn bootstrap(
    data: &PanelDataset,
    spec: &BalanceSpec,
    delta: &[Vec<f64>],
    design: &MsmDesign,
    config: &BaoConfig,
    seed: u64,
) -> (Vec<Vec<f64>>, usize) {
    let n = data.n();
    let runs: Vec<(Option<Vec<f64>>, usize)> = (0..config.bootstrap)
        .into_par_iter()
        .map(|b| {
            for attempt in 0..10u64 {
                let mut rng = rng::keyed(seed, &[tag::BOOTSTRAP, b as u64, attempt]);
                let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let sample = data.resample(&rows);
                if let Ok(PointFit { coefs: Ok(c), .. }) = point_fit(&sample, spec, delta, design, config) {
                    return (Some(c.coefficients), attempt as usize + 1);
                }
            }
            (None, 10)
        })
        .collect();
    let draws = runs.iter().map(|r| r.1).sum();
    (runs.into_iter().filter_map(|r| r.0).collect(), draws)
}

fn summarize_bootstrap(point: &[f64], reps: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let p = point.len();
    let (mut se, mut lo, mut hi) = (vec![f64::NAN; p], vec![f64::NAN; p], vec![f64::NAN; p]);
    if reps.len() < 2 {
        return (se, lo, hi);
    }
    for j in 0..p {
        let mut col: Vec<f64> = reps.iter().map(|r| r[j]).collect();
        se[j] = stats::sample_sd(&col);
        col.sort_by(f64::total_cmp);
        // Percentile interval widened, if needed, to cover the point estimate.
        lo[j] = stats::quantile_sorted(&col, 0.025).min(point[j]);
        hi[j] = stats::quantile_sorted(&col, 0.975).max(point[j]);
    }
    (se, lo, hi)
}

fn pipeline(data: &PanelDataset, spec: &BalanceSpec, design: &MsmDesign, config: &BaoConfig, seed: u64) -> Result<BaoResult> {
    design.validate(data.periods())?;
    spec.validate(data)?;
    let (delta, delta_star, tuning) = if spec.has_delta() {
        (spec.delta_schedule()?, None, None)
    } else {
        let report = tune_delta(data, spec, &config.tuning, &config.ladder, &config.solver, seed)?;
        let chosen = spec.with_uniform_delta(report.selected);
        (chosen.delta_schedule()?, Some(report.selected), Some(report))
    };

    let PointFit { setup, solved, means, prevalences, coefs } = point_fit(data, spec, &delta, design, config)?;
    let coefs = coefs?;
    let mut warnings = solved.warnings.clone();

    let weights = unit_weights(data.n(), &solved.solved);
    let multipliers: BTreeMap<&TreatmentPath, f64> = solved.solved.iter().map(|w| (&w.path, w.multiplier)).collect();
    let balance = asmd_table(&setup.residuals.residuals, &setup.residuals.labels, &setup.strata, &weights, Reference::Unweighted)
        .with_tolerances(|path, t, p| match multipliers.get(path) {
            Some(m) => setup.raw_tolerance(path, t, p, &delta) * m,
            None => f64::NAN,
        });
    for row in &balance.rows {
        if !multipliers.contains_key(&row.path) {
            continue;
        }
        if !row.satisfied {
            warnings.push(format!("path {} t={} {}: balance constraint violated after solving", row.path, row.t, row.feature));
        }
        if row.post_asmd > ASMD_WARNING {
            warnings.push(format!("path {} t={} {}: post-weighting ASMD {:.3}", row.path, row.t, row.feature, row.post_asmd));
        }
    }

    let paths = solved
        .solved
        .iter()
        .zip(&means)
        .map(|(w, m)| PathEstimate {
            path: w.path.clone(),
            count: m.count,
            prevalence: setup.strata.prevalence_f64(&w.path),
            mean: m.mean,
            status: w.solution.status,
            multiplier: w.multiplier,
            objective: w.solution.objective,
            kkt_max: w.solution.kkt.max(),
            weights: w.solution.summary,
        })
        .collect();
    debug_assert_eq!(prevalences.len(), means.len());

    let (reps, draws) = if config.bootstrap > 0 { bootstrap(data, spec, &delta, design, config, seed) } else { (Vec::new(), 0) };
    if config.bootstrap > 0 && reps.len() < config.bootstrap {
        warnings.push(format!("{} of {} bootstrap replicates failed", config.bootstrap - reps.len(), config.bootstrap));
    }
    let (se, ci_lower, ci_upper) = summarize_bootstrap(&coefs.coefficients, &reps);
    let msm = MsmFit {
        labels: coefs.labels,
        coefficients: coefs.coefficients,
        se,
        ci_lower,
        ci_upper,
        adj_r2: coefs.adj_r2,
        replicates: reps.len(),
        draws,
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(BaoResult { delta, delta_star, tuning, paths, dropped: solved.dropped, msm, balance, warnings, unit_weights: weights })
}

/// Runs the whole pipeline: features, tolerance tuning (unless the balance spec fixes
/// tolerances), weights, balance check, path means, MSM and bootstrap.
///
/// Censoring needs no separate switch: strata at each period only hold units
/// still followed, so projections, targets and weights are all computed on the
/// uncensored population whenever censoring indicators are present.
pub fn run_bao(data: &PanelDataset, spec: &BalanceSpec, design: &MsmDesign, config: &BaoConfig, seed: u64) -> Result<BaoResult> {
    pipeline(data, spec, design, config, seed)
}

/// [`run_bao`] for data carrying censoring indicators.
pub fn run_bao_censored(data: &PanelDataset, spec: &BalanceSpec, design: &MsmDesign, config: &BaoConfig, seed: u64) -> Result<BaoResult> {
    if !data.has_censoring() {
        return Err(Error::Argument("dataset has no censoring indicators".into()));
    }
    pipeline(data, spec, design, config, seed)
}
