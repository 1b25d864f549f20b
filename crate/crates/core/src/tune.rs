//! Bootstrap selection of the common standardized tolerance.
//!
//! In the default `evaluate` mode each candidate's weights are solved once on
//! the full sample and then judged on bootstrap resamples: strata and
//! residuals are rebuilt on the resample, every resampled unit keeps the
//! weight of the unit it copies, and the mean post-weighting ASMD over all
//! (period, feature, path) cells is recorded. Tight tolerances that fit the
//! sample's idiosyncrasies balance resamples worse. The `resolve` mode
//! instead solves the programs afresh on every resample.
//!
//! Each candidate is judged as the estimator would use it: paths are solved
//! up the relaxation ladder, and only a path infeasible at the top of the
//! ladder counts as infeasible. Such a path contributes its pre-weighting
//! ASMDs (uniform weights). A ladder of `[1.0]` judges the nominal tolerance
//! alone.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{asmd_table, Reference};
use crate::error::{Error, Result};
use crate::estimate::{prepare_balance, solve_with_ladder, BalanceSetup};
use crate::features::BalanceSpec;
use crate::panel::PanelDataset;
use crate::qpsolve::SolverOptions;
use crate::rng::{self, tag};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningMode {
    #[default]
    Evaluate,
    Resolve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningConfig {
    pub candidates: Vec<f64>,
    pub resamples: usize,
    pub mode: TuningMode,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self { candidates: vec![0.001, 0.01, 0.05], resamples: 20, mode: TuningMode::Evaluate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub delta: f64,
    pub mean_imbalance: f64,
    /// Share of resamples on which some path had no feasible weights.
    pub infeasibility_rate: f64,
    /// Mean over resamples of the mean weight CV across feasible paths.
    pub mean_cv: f64,
    /// Mean ladder multiplier over feasible paths and resamples.
    pub mean_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub mode: TuningMode,
    pub resamples: usize,
    pub candidates: Vec<CandidateReport>,
    pub selected: f64,
}

struct Solved {
    /// Per dataset unit; uniform on infeasible paths.
    unit_weights: Vec<f64>,
    infeasible: bool,
    cv: f64,
    multiplier: f64,
}

fn solve_all(setup: &BalanceSetup, spec: &BalanceSpec, n: usize, ladder: &[f64], opts: &SolverOptions) -> Result<Solved> {
    let delta = spec.delta_schedule()?;
    let mut unit_weights = vec![0.0; n];
    let mut infeasible = false;
    let (mut cvs, mut mults) = (Vec::new(), Vec::new());
    for path in setup.strata.realized_paths() {
        let p = setup.path_problem(&path, &delta)?;
        match solve_with_ladder(&p, ladder, opts) {
            Ok((mult, sol)) => {
                cvs.push(sol.summary.cv);
                mults.push(mult);
                for (&i, &w) in p.members.iter().zip(&sol.weights) {
                    unit_weights[i] = w;
                }
            }
            Err(Error::Infeasible(_)) => {
                infeasible = true;
                for &i in &p.members {
                    unit_weights[i] = 1.0;
                }
            }
            Err(e) => return Err(e),
        }
    }
    let avg = |v: &[f64]| if v.is_empty() { f64::NAN } else { stats::mean(v) };
    Ok(Solved { unit_weights, infeasible, cv: avg(&cvs), multiplier: avg(&mults) })
}

fn imbalance(setup: &BalanceSetup, unit_weights: &[f64]) -> f64 {
    asmd_table(&setup.residuals.residuals, &setup.residuals.labels, &setup.strata, unit_weights, Reference::Unweighted).mean_post_asmd()
}

struct Draw {
    imbalance: f64,
    infeasible: bool,
    cv: f64,
    multiplier: f64,
}

fn evaluate_candidate(
    data: &PanelDataset,
    spec: &BalanceSpec,
    delta: f64,
    resamples: &[Vec<usize>],
    mode: TuningMode,
    ladder: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<Draw>> {
    let spec = spec.with_uniform_delta(delta);
    let full = match mode {
        TuningMode::Evaluate => Some(solve_all(&prepare_balance(data, &spec)?, &spec, data.n(), ladder, opts)?),
        TuningMode::Resolve => None,
    };
    resamples
        .par_iter()
        .map(|rows| {
            let sample = data.resample(rows);
            let setup = prepare_balance(&sample, &spec)?;
            Ok(match &full {
                Some(f) => {
                    let w: Vec<f64> = rows.iter().map(|&i| f.unit_weights[i]).collect();
                    Draw { imbalance: imbalance(&setup, &w), infeasible: f.infeasible, cv: f.cv, multiplier: f.multiplier }
                }
                None => {
                    let s = solve_all(&setup, &spec, sample.n(), ladder, opts)?;
                    Draw { imbalance: imbalance(&setup, &s.unit_weights), infeasible: s.infeasible, cv: s.cv, multiplier: s.multiplier }
                }
            })
        })
        .collect()
}

/// Picks the candidate with the smallest mean imbalance among those feasible
/// on at least half the resamples; ties go to the smaller tolerance.
pub fn tune_delta(
    data: &PanelDataset,
    spec: &BalanceSpec,
    config: &TuningConfig,
    ladder: &[f64],
    opts: &SolverOptions,
    seed: u64,
) -> Result<TuningReport> {
    if config.candidates.is_empty() {
        return Err(Error::Argument("no tolerance candidates".into()));
    }
    if config.candidates.iter().any(|d| d.is_nan() || *d < 0.0) {
        return Err(Error::Argument("tolerance candidates must be nonnegative".into()));
    }
    if ladder.is_empty() || ladder.iter().any(|m| !m.is_finite()) || ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Argument("ladder must be nonempty, finite and strictly increasing".into()));
    }
    if config.resamples < 2 {
        return Err(Error::Argument("tuning needs at least two resamples".into()));
    }
    let n = data.n();
    let resamples: Vec<Vec<usize>> = (0..config.resamples)
        .map(|b| {
            let mut rng = rng::keyed(seed, &[tag::TUNE, b as u64]);
            (0..n).map(|_| rng.random_range(0..n)).collect()
        })
        .collect();

    let mut candidates = config.candidates.clone();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut reports = Vec::with_capacity(candidates.len());
    for &delta in &candidates {
        let draws = evaluate_candidate(data, spec, delta, &resamples, config.mode, ladder, opts)?;
        let b = draws.len() as f64;
        let finite_mean = |v: Vec<f64>| if v.is_empty() { f64::NAN } else { stats::mean(&v) };
        reports.push(CandidateReport {
            delta,
            mean_imbalance: draws.iter().map(|d| d.imbalance).sum::<f64>() / b,
            infeasibility_rate: draws.iter().filter(|d| d.infeasible).count() as f64 / b,
            mean_cv: finite_mean(draws.iter().map(|d| d.cv).filter(|c| c.is_finite()).collect()),
            mean_multiplier: finite_mean(draws.iter().map(|d| d.multiplier).filter(|c| c.is_finite()).collect()),
        });
    }

    let mut best: Option<&CandidateReport> = None;
    for r in &reports {
        if r.infeasibility_rate >= 0.5 || !r.mean_imbalance.is_finite() {
            continue;
        }
        if best.is_none_or(|b| r.mean_imbalance < b.mean_imbalance) {
            best = Some(r);
        }
    }
    match best {
        Some(b) => {
            let selected = b.delta;
            Ok(TuningReport { mode: config.mode, resamples: config.resamples, candidates: reports, selected })
        }
        None => Err(Error::Tuning(format!(
            "every candidate is infeasible on at least half the resamples: {}",
            serde_json::to_string(&reports)?
        ))),
    }
}
