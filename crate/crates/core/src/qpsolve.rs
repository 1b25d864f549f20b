//! Minimum-norm balancing weights on the simplex.
//!
//! For one treatment path with `m` members and `K` balance rows the program is
//!
//! ```text
//! minimize ‖ω‖²  subject to  ω ≥ 0,  1ᵀω = 1,  |Aω − b| ≤ δ  (elementwise)
//! ```
//!
//! Rows are scaled to unit max-norm. A phase-1 linear program certifies
//! feasibility; the solution is then found by an active-set sweep on the
//! KKT system and, failing that, by ADMM on the split `z = (Aω, ω)` with the
//! box and the simplex handled by projection, polished periodically by an
//! exact equality-constrained solve on the identified active set.
//!
//! Sign convention for the multipliers: stationarity reads
//! `2ω = Aᵀ(λ_lower − λ_upper) + ν1 + μ` with `λ_lower, λ_upper, μ ≥ 0`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{weight_summary, WeightSummary};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, LeastSquares, Matrix};
use crate::panel::TreatmentPath;
use crate::scalar::{max_abs, Real};

/// Balance program for one path.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem<T> {
    pub path: TreatmentPath,
    /// Dataset row indices of the path members, in the column order of `a`.
    pub members: Vec<usize>,
    /// `K × m`
    pub a: Matrix<T>,
    pub target: Vec<T>,
    /// Raw tolerances; `+∞` disables a row.
    pub tolerance: Vec<T>,
    /// Optional row labels used in reports.
    pub labels: Vec<String>,
}

impl<T: Real> QpProblem<T> {
    pub fn new(a: Matrix<T>, target: Vec<T>, tolerance: Vec<T>) -> Result<Self> {
        let m = a.cols();
        let problem = Self { path: TreatmentPath::root(), members: (0..m).collect(), a, target, tolerance, labels: Vec::new() };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_path(mut self, path: TreatmentPath, members: Vec<usize>) -> Result<Self> {
        self.path = path;
        self.members = members;
        self.validate()?;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Self {
        self.labels = labels;
        self
    }

    fn validate(&self) -> Result<()> {
        let (k, m) = (self.a.rows(), self.a.cols());
        if m == 0 {
            return Err(Error::Argument("balance problem has no units".into()));
        }
        if self.target.len() != k || self.tolerance.len() != k || self.members.len() != m {
            return Err(Error::Argument("balance problem dimensions are inconsistent".into()));
        }
        if self.tolerance.iter().any(|d| d.is_nan() || *d < T::zero()) {
            return Err(Error::Argument("tolerances must be nonnegative".into()));
        }
        if self.a.as_slice().iter().chain(&self.target).any(|v| !v.is_finite()) {
            return Err(Error::Argument("balance rows and targets must be finite".into()));
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.a.cols()
    }

    pub fn k(&self) -> usize {
        self.a.rows()
    }

    /// Copy with every tolerance multiplied by `factor`.
    pub fn scaled_tolerance(&self, factor: T) -> Self {
        let mut out = self.clone();
        for d in &mut out.tolerance {
            *d = *d * factor;
        }
        out
    }

    fn row_label(&self, k: usize) -> String {
        self.labels.get(k).cloned().unwrap_or_else(|| format!("row {k}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

/// Max-norm KKT residuals in the problem's original units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktReport<T> {
    pub stationarity: T,
    pub primal: T,
    pub dual: T,
    pub complementarity: T,
}

impl<T: Real> KktReport<T> {
    pub fn max(&self) -> T {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSolution<T> {
    pub status: SolveStatus,
    pub weights: Vec<T>,
    pub objective: T,
    pub lambda_lower: Vec<T>,
    pub lambda_upper: Vec<T>,
    pub nu: T,
    pub kkt: KktReport<T>,
    pub summary: WeightSummary<T>,
    pub iterations: usize,
    /// Phase-1 minimum total violation (scaled rows).
    pub violation: T,
    /// Original index of the most violated row when infeasible.
    pub most_violated: Option<usize>,
}

impl<T: Real> WeightSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// `λ_lower − λ_upper`
    pub fn lambda(&self) -> Vec<T> {
        self.lambda_lower.iter().zip(&self.lambda_upper).map(|(&a, &b)| a - b).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// ADMM primal/dual stopping tolerance (relative).
    pub tolerance: f64,
    /// Iteration cap; `None` means `100·(m + K)`.
    pub max_iter: Option<usize>,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor.
    pub alpha: f64,
    /// Attempt an exact active-set polish every this many ADMM iterations (0 disables).
    pub polish_every: usize,
    /// Run the active-set sweep before ADMM.
    pub active_set_sweep: bool,
    /// Phase-1 violation above which the problem is declared infeasible.
    pub infeasibility_tolerance: f64,
    /// Accepted solutions must have KKT residuals at most this large.
    pub kkt_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iter: None,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            polish_every: 10,
            active_set_sweep: true,
            infeasibility_tolerance: 1e-7,
            kkt_tolerance: 1e-6,
        }
    }
}

/// Kept (finite-tolerance) rows after scaling to unit max-norm.
struct Scaled<T> {
    /// Original row index per kept row.
    rows: Vec<usize>,
    scale: Vec<T>,
    a: Matrix<T>,
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<T: Real> Scaled<T> {
    fn k(&self) -> usize {
        self.rows.len()
    }

    fn is_equality(&self, k: usize) -> bool {
        self.lo[k] == self.hi[k]
    }
}

enum Prepared<T> {
    Ready(Scaled<T>),
    /// A zero row whose interval excludes 0.
    Infeasible(usize, T),
}

fn prepare<T: Real>(p: &QpProblem<T>) -> Prepared<T> {
    let m = p.m();
    let mut rows = Vec::new();
    let mut scale = Vec::new();
    let mut data = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for k in 0..p.k() {
        let d = p.tolerance[k];
        if d.is_infinite() {
            continue;
        }
        let row = p.a.row(k);
        let norm = max_abs(row);
        let (l, u) = (p.target[k] - d, p.target[k] + d);
        if norm == T::zero() {
            let gap = l.max(-u).max(T::zero());
            if gap > T::zero() {
                return Prepared::Infeasible(k, gap);
            }
            continue;
        }
        let s = T::one() / norm;
        rows.push(k);
        scale.push(s);
        data.extend(row.iter().map(|&v| v * s));
        lo.push(l * s);
        hi.push(u * s);
    }
    let kk = rows.len();
    Prepared::Ready(Scaled { rows, scale, a: Matrix::from_vec(kk, m, data), lo, hi })
}

fn pivot_tolerance<T: Real>() -> T {
    T::epsilon().sqrt() * T::lit(1e-3)
}

/// Minimum total violation of the scaled rows over the simplex.
struct PhaseOne<T> {
    total: T,
    per_row: Vec<T>,
    weights: Vec<T>,
}

/// Dense tableau simplex with Bland's rule.
///
/// Columns: `ω (m) | p (K) | s (K) | q (K) | t (K) | rhs`, rows
/// `1ᵀω = 1`, `aₖω + pₖ − sₖ = lₖ`, `aₖω − qₖ + tₖ = uₖ`; minimize `Σ p + q`.
fn phase_one<T: Real>(sc: &Scaled<T>) -> PhaseOne<T> {
    let m = sc.a.cols();
    let k = sc.k();
    let ncols = m + 4 * k;
    let nrows = 1 + 2 * k;
    let width = ncols + 1;
    let mut tab = vec![T::zero(); nrows * width];
    let mut basis = vec![0usize; nrows];
    let (p0, s0, q0, t0) = (m, m + k, m + 2 * k, m + 3 * k);
    for j in 0..m {
        tab[j] = T::one();
    }
    tab[ncols] = T::one();
    basis[0] = 0;
    for r in 0..k {
        let lrow = (1 + r) * width;
        let urow = (1 + k + r) * width;
        for j in 0..m {
            tab[lrow + j] = sc.a[(r, j)];
            tab[urow + j] = sc.a[(r, j)];
        }
        tab[lrow + p0 + r] = T::one();
        tab[lrow + s0 + r] = -T::one();
        tab[lrow + ncols] = sc.lo[r];
        tab[urow + q0 + r] = -T::one();
        tab[urow + t0 + r] = T::one();
        tab[urow + ncols] = sc.hi[r];
        let v = sc.a[(r, 0)];
        basis[1 + r] = if v >= sc.lo[r] { s0 + r } else { p0 + r };
        basis[1 + k + r] = if v <= sc.hi[r] { t0 + r } else { q0 + r };
    }
    let cost = |j: usize| if (p0..s0).contains(&j) || (q0..t0).contains(&j) { T::one() } else { T::zero() };

    fn pivot<T: Real>(tab: &mut [T], width: usize, nrows: usize, obj: &mut [T], r: usize, c: usize) {
        let pv = tab[r * width + c];
        for j in 0..width {
            tab[r * width + j] /= pv;
        }
        let (before, rest) = tab.split_at_mut(r * width);
        let (prow, after) = rest.split_at_mut(width);
        let eliminate = |row: &mut [T]| {
            let f = row[c];
            if f != T::zero() {
                for (x, &p) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * p;
                }
                row[c] = T::zero();
            }
        };
        before.chunks_mut(width).for_each(eliminate);
        after.chunks_mut(width).take(nrows - r - 1).for_each(eliminate);
        eliminate(obj);
    }

    let mut obj = vec![T::zero(); width];
    for r in 0..nrows {
        let c = basis[r];
        pivot(&mut tab, width, nrows, &mut obj, r, c);
    }
    // Reduced costs: c_j − Σ_r c_B(r) tab[r][j]; the last entry holds −objective.
    for j in 0..width {
        let mut v = if j < ncols { cost(j) } else { T::zero() };
        for r in 0..nrows {
            v -= cost(basis[r]) * tab[r * width + j];
        }
        obj[j] = v;
    }
    let tol = pivot_tolerance::<T>();
    let cap = 50 * (nrows + ncols);
    for _ in 0..cap {
        let Some(enter) = (0..ncols).find(|&j| obj[j] < -tol) else { break };
        let mut leave: Option<(usize, T)> = None;
        for r in 0..nrows {
            let a = tab[r * width + enter];
            if a > tol {
                let ratio = tab[r * width + ncols] / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((br, bv)) if ratio < bv || (ratio == bv && basis[r] < basis[br]) => Some((r, ratio)),
                    keep => keep,
                };
            }
        }
        let Some((r, _)) = leave else { break };
        pivot(&mut tab, width, nrows, &mut obj, r, enter);
        basis[r] = enter;
    }
    let mut values = vec![T::zero(); ncols];
    for r in 0..nrows {
        values[basis[r]] = tab[r * width + ncols].max(T::zero());
    }
    let per_row: Vec<T> = (0..k).map(|r| values[p0 + r] + values[q0 + r]).collect();
    PhaseOne { total: per_row.iter().copied().sum(), per_row, weights: values[..m].to_vec() }
}

/// Euclidean projection onto the probability simplex. Ties in the sort are
/// broken by index so the result is deterministic.
pub fn project_simplex<T: Real>(v: &[T], out: &mut [T], order: &mut Vec<usize>) {
    order.clear();
    order.extend(0..v.len());
    order.sort_by(|&i, &j| v[j].partial_cmp(&v[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    let mut cum = T::zero();
    let mut theta = T::zero();
    for (rank, &i) in order.iter().enumerate() {
        cum += v[i];
        let t = (cum - T::one()) / T::from_count(rank + 1);
        if v[i] - t > T::zero() {
            theta = t;
        }
    }
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - theta).max(T::zero());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Lower,
    Upper,
    Equal,
}

/// Equality-constrained solve on a guessed active set, in scaled units.
struct Attempt<T> {
    /// All KKT conditions of the full problem hold.
    accepted: bool,
    weights: Vec<T>,
    /// Per kept row, `λ_lower − λ_upper` (scaled).
    lambda: Vec<T>,
    nu: T,
    /// `aᵢᵀλ + ν` for every unit.
    dual_map: Vec<T>,
}

fn kkt_tolerance<T: Real>() -> T {
    T::lit(1e-9).max(T::epsilon() * T::lit(100.0))
}

/// Solves `min ‖ω_S‖²` subject to the rows in `active` holding with equality
/// and `1ᵀω_S = 1`, then checks every KKT condition of the full problem.
fn polish<T: Real>(sc: &Scaled<T>, support: &[usize], active: &[(usize, Side)]) -> Attempt<T> {
    let m = sc.a.cols();
    let na = active.len();
    // M = [A_JS; 1ᵀ], (na + 1) × |S|
    let mrow = |r: usize, i: usize| -> T {
        if r < na {
            sc.a[(active[r].0, i)]
        } else {
            T::one()
        }
    };
    let rhs: Vec<T> = active
        .iter()
        .map(|&(k, side)| match side {
            Side::Lower | Side::Equal => sc.lo[k],
            Side::Upper => sc.hi[k],
        })
        .chain(std::iter::once(T::one()))
        .collect();
    let dim = na + 1;
    let mut gram = Matrix::zeros(dim, dim);
    for r in 0..dim {
        for c in r..dim {
            let v: T = support.iter().map(|&i| mrow(r, i) * mrow(c, i)).sum();
            gram[(r, c)] = v;
            gram[(c, r)] = v;
        }
    }
    let ls = LeastSquares::new(&gram);
    let two_rhs: Vec<T> = rhs.iter().map(|&v| v * T::two()).collect();
    let mut theta = ls.solve(&two_rhs);
    let omega_of =
        |theta: &[T]| -> Vec<T> { support.iter().map(|&i| T::half() * (0..dim).map(|r| mrow(r, i) * theta[r]).sum::<T>()).collect() };
    let mut ws = omega_of(&theta);
    // One step of iterative refinement.
    let resid: Vec<T> = (0..dim).map(|r| T::two() * (rhs[r] - support.iter().zip(&ws).map(|(&i, &w)| mrow(r, i) * w).sum::<T>())).collect();
    for (t, c) in theta.iter_mut().zip(ls.solve(&resid)) {
        *t += c;
    }
    ws = omega_of(&theta);

    let mut lambda = vec![T::zero(); sc.k()];
    for (r, &(k, _)) in active.iter().enumerate() {
        lambda[k] = theta[r];
    }
    let nu = theta[na];
    let mut weights = vec![T::zero(); m];
    let mut in_support = vec![false; m];
    for (&i, &w) in support.iter().zip(&ws) {
        weights[i] = w;
        in_support[i] = true;
    }
    let atl = sc.a.tr_mul_vec(&lambda);
    let dual_map: Vec<T> = atl.iter().map(|&v| v + nu).collect();

    let tol = kkt_tolerance::<T>();
    let mut accepted = weights.iter().all(|&w| w >= -tol)
        && (0..m).all(|i| in_support[i] || dual_map[i] <= tol)
        && active.iter().all(|&(k, side)| match side {
            Side::Lower => lambda[k] >= -tol,
            Side::Upper => lambda[k] <= tol,
            Side::Equal => true,
        });
    for w in &mut weights {
        *w = w.max(T::zero());
    }
    if accepted {
        let aw = sc.a.mul_vec(&weights);
        let total: T = weights.iter().copied().sum();
        accepted = (total - T::one()).abs() <= tol && (0..sc.k()).all(|k| aw[k] >= sc.lo[k] - tol && aw[k] <= sc.hi[k] + tol);
    }
    Attempt { accepted, weights, lambda, nu, dual_map }
}

fn classify_rows<T: Real>(sc: &Scaled<T>, aw: &[T], keep: &[(usize, Side)], lambda: Option<&[T]>) -> Vec<(usize, Side)> {
    let tol = kkt_tolerance::<T>();
    let mut out = Vec::new();
    for k in 0..sc.k() {
        if sc.is_equality(k) {
            out.push((k, Side::Equal));
            continue;
        }
        let kept = keep.iter().find(|&&(j, _)| j == k).map(|&(_, s)| s);
        let side = match (kept, lambda) {
            (Some(Side::Lower), Some(l)) if l[k] > -tol => Some(Side::Lower),
            (Some(Side::Upper), Some(l)) if l[k] < tol => Some(Side::Upper),
            _ if aw[k] < sc.lo[k] - tol => Some(Side::Lower),
            _ if aw[k] > sc.hi[k] + tol => Some(Side::Upper),
            _ => None,
        };
        if let Some(s) = side {
            out.push((k, s));
        }
    }
    out
}

/// Semismooth-Newton style sweep over active sets starting from the uniform point.
fn active_set_sweep<T: Real>(sc: &Scaled<T>, max_sweeps: usize) -> Option<Attempt<T>> {
    let m = sc.a.cols();
    let uniform = vec![T::one() / T::from_count(m); m];
    let mut support: Vec<usize> = (0..m).collect();
    let mut active = classify_rows(sc, &sc.a.mul_vec(&uniform), &[], None);
    for _ in 0..max_sweeps {
        let attempt = polish(sc, &support, &active);
        if attempt.accepted {
            return Some(attempt);
        }
        let next_support: Vec<usize> = (0..m).filter(|&i| attempt.dual_map[i] > T::zero()).collect();
        if next_support.is_empty() {
            return None;
        }
        let dual_w: Vec<T> = attempt.dual_map.iter().map(|&d| (d * T::half()).max(T::zero())).collect();
        let next_active = classify_rows(sc, &sc.a.mul_vec(&dual_w), &active, Some(&attempt.lambda));
        if next_support == support && next_active == active {
            return None;
        }
        support = next_support;
        active = next_active;
    }
    None
}

struct AdmmOutcome<T> {
    weights: Vec<T>,
    lambda: Vec<T>,
    nu: T,
    iterations: usize,
    exact: bool,
}

fn admm<T: Real>(sc: &Scaled<T>, opts: &SolverOptions) -> AdmmOutcome<T> {
    let m = sc.a.cols();
    let k = sc.k();
    let cap = opts.max_iter.unwrap_or(100 * (m + k)).max(1);
    let (sigma, alpha) = (T::lit(opts.sigma), T::lit(opts.alpha));
    let one_m_alpha = T::one() - alpha;
    let tol = T::lit(opts.tolerance);
    let gram = sc.a.matmul(&sc.a.transpose());

    let mut rho = T::lit(opts.rho);
    let row_rho = |rho: T, r: usize| if sc.is_equality(r) { rho * T::lit(1e3) } else { rho };
    let factor = |rho: T| -> Matrix<T> {
        let c = T::two() + sigma + rho;
        let mut h = gram.clone();
        for r in 0..k {
            h[(r, r)] += c / row_rho(rho, r);
        }
        cholesky(&h).expect("Woodbury system is positive definite")
    };
    let mut chol = factor(rho);

    let mut x = vec![T::one() / T::from_count(m); m];
    let mut z_i = x.clone();
    let mut z_a: Vec<T> = sc.a.mul_vec(&x).iter().enumerate().map(|(r, &v)| v.max(sc.lo[r]).min(sc.hi[r])).collect();
    let mut y_a = vec![T::zero(); k];
    let mut y_i = vec![T::zero(); m];
    let mut rhs = vec![T::zero(); m];
    let mut xt = vec![T::zero(); m];
    let mut buf = vec![T::zero(); m];
    let mut order = Vec::with_capacity(m);
    let mut iterations = 0;

    for it in 1..=cap {
        iterations = it;
        let c = T::two() + sigma + rho;
        // rhs = σx + Aᵀ(ρ_A z_A − y_A) + ρ z_I − y_I
        let w: Vec<T> = (0..k).map(|r| row_rho(rho, r) * z_a[r] - y_a[r]).collect();
        let atw = sc.a.tr_mul_vec(&w);
        for i in 0..m {
            rhs[i] = sigma * x[i] + atw[i] + rho * z_i[i] - y_i[i];
        }
        // (cI + AᵀRA)⁻¹ rhs = (rhs − Aᵀ H⁻¹ A rhs) / c
        let ar = sc.a.mul_vec(&rhs);
        let h = cholesky_solve(&chol, &ar);
        let ath = sc.a.tr_mul_vec(&h);
        for i in 0..m {
            xt[i] = (rhs[i] - ath[i]) / c;
        }
        let zt_a = sc.a.mul_vec(&xt);

        for r in 0..k {
            let rr = row_rho(rho, r);
            let relaxed = alpha * zt_a[r] + one_m_alpha * z_a[r];
            let z_new = (relaxed + y_a[r] / rr).max(sc.lo[r]).min(sc.hi[r]);
            y_a[r] += rr * (relaxed - z_new);
            z_a[r] = z_new;
        }
        for i in 0..m {
            let relaxed = alpha * xt[i] + one_m_alpha * z_i[i];
            buf[i] = relaxed + y_i[i] / rho;
            x[i] = alpha * xt[i] + one_m_alpha * x[i];
        }
        let prev_zi = z_i.clone();
        project_simplex(&buf, &mut z_i, &mut order);
        for i in 0..m {
            let relaxed = alpha * xt[i] + one_m_alpha * prev_zi[i];
            y_i[i] += rho * (relaxed - z_i[i]);
        }

        let polish_now = opts.polish_every > 0 && it % opts.polish_every == 0;
        let check_now = polish_now || it % 25 == 0 || it == cap;
        if !check_now {
            continue;
        }
        if polish_now {
            let support: Vec<usize> = (0..m).filter(|&i| z_i[i] > T::zero()).collect();
            let lambda_guess: Vec<T> = y_a.iter().map(|&v| -v).collect();
            let active: Vec<(usize, Side)> = (0..k)
                .filter_map(|r| {
                    if sc.is_equality(r) {
                        Some((r, Side::Equal))
                    } else if z_a[r] <= sc.lo[r] && lambda_guess[r] >= T::zero() {
                        Some((r, Side::Lower))
                    } else if z_a[r] >= sc.hi[r] && lambda_guess[r] <= T::zero() {
                        Some((r, Side::Upper))
                    } else {
                        None
                    }
                })
                .collect();
            if !support.is_empty() {
                let p = polish(sc, &support, &active);
                if p.accepted {
                    return AdmmOutcome { weights: p.weights, lambda: p.lambda, nu: p.nu, iterations, exact: true };
                }
            }
        }
        let ax = sc.a.mul_vec(&x);
        let r_prim = (0..k).map(|r| (ax[r] - z_a[r]).abs()).chain((0..m).map(|i| (x[i] - z_i[i]).abs())).fold(T::zero(), T::max);
        let aty = sc.a.tr_mul_vec(&y_a);
        let r_dual = (0..m).map(|i| (T::two() * x[i] + aty[i] + y_i[i]).abs()).fold(T::zero(), T::max);
        let scale_p = max_abs(&ax).max(max_abs(&x)).max(max_abs(&z_a)).max(max_abs(&z_i));
        let scale_d = (T::two() * max_abs(&x)).max(max_abs(&aty)).max(max_abs(&y_i));
        if r_prim <= tol * (T::one() + scale_p) && r_dual <= tol * (T::one() + scale_d) {
            break;
        }
        if it % 25 == 0 {
            let num = r_prim / (scale_p + T::epsilon());
            let den = r_dual / (scale_d + T::epsilon());
            if den > T::zero() && num > T::zero() {
                let ratio = (num / den).sqrt();
                if ratio > T::lit(5.0) || ratio < T::lit(0.2) {
                    rho = (rho * ratio).max(T::lit(1e-6)).min(T::lit(1e6));
                    chol = factor(rho);
                }
            }
        }
    }
    // Inexact finish: weights on the simplex, multipliers from the ADMM duals.
    let lambda: Vec<T> = y_a.iter().map(|&v| -v).collect();
    let weights = z_i;
    let at_l = sc.a.tr_mul_vec(&lambda);
    let support: Vec<usize> = (0..m).filter(|&i| weights[i] > T::zero()).collect();
    let nu = if support.is_empty() {
        T::zero()
    } else {
        support.iter().map(|&i| T::two() * weights[i] - at_l[i]).sum::<T>() / T::from_count(support.len())
    };
    AdmmOutcome { weights, lambda, nu, iterations, exact: false }
}

fn uniform_solution<T: Real>(p: &QpProblem<T>) -> WeightSolution<T> {
    let m = p.m();
    let w = vec![T::one() / T::from_count(m); m];
    finish(p, SolveStatus::Optimal, w, vec![T::zero(); p.k()], T::two() / T::from_count(m), 0, T::zero(), None)
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Real>(
    p: &QpProblem<T>,
    status: SolveStatus,
    weights: Vec<T>,
    lambda: Vec<T>,
    nu: T,
    iterations: usize,
    violation: T,
    most_violated: Option<usize>,
) -> WeightSolution<T> {
    let objective = weights.iter().map(|&w| w * w).sum();
    let summary = weight_summary(&weights);
    let mut sol = WeightSolution {
        status,
        objective,
        lambda_lower: lambda.iter().map(|&l| l.max(T::zero())).collect(),
        lambda_upper: lambda.iter().map(|&l| (-l).max(T::zero())).collect(),
        weights,
        nu,
        kkt: KktReport::default(),
        summary,
        iterations,
        violation,
        most_violated,
    };
    if status != SolveStatus::Infeasible {
        sol.kkt = kkt_check(p, &sol);
    }
    sol
}

/// Solves the balance program for one path.
pub fn solve_path<T: Real>(p: &QpProblem<T>, opts: &SolverOptions) -> WeightSolution<T> {
    let sc = match prepare(p) {
        Prepared::Infeasible(k, gap) => {
            let m = p.m();
            let w = vec![T::one() / T::from_count(m); m];
            return finish(p, SolveStatus::Infeasible, w, vec![T::zero(); p.k()], T::zero(), 0, gap, Some(k));
        }
        Prepared::Ready(sc) => sc,
    };
    if sc.k() == 0 {
        return uniform_solution(p);
    }
    let m = p.m();
    let uniform = vec![T::one() / T::from_count(m); m];
    let au = sc.a.mul_vec(&uniform);
    if (0..sc.k()).all(|r| au[r] >= sc.lo[r] && au[r] <= sc.hi[r]) {
        return uniform_solution(p);
    }

    let one = phase_one(&sc);
    if one.total > T::lit(opts.infeasibility_tolerance) {
        let worst = (0..sc.k())
            .fold(None::<(usize, T)>, |best, r| match best {
                Some((_, v)) if v >= one.per_row[r] => best,
                _ => Some((r, one.per_row[r])),
            })
            .map(|(r, _)| sc.rows[r]);
        log::debug!(
            "path {} infeasible: violation {:e}, worst {}",
            p.path,
            one.total.to_f64_lossy(),
            worst.map_or_else(String::new, |k| p.row_label(k))
        );
        return finish(p, SolveStatus::Infeasible, one.weights, vec![T::zero(); p.k()], T::zero(), 0, one.total, worst);
    }

    let unscale = |lambda_scaled: &[T]| -> Vec<T> {
        let mut out = vec![T::zero(); p.k()];
        for (r, &k) in sc.rows.iter().enumerate() {
            out[k] = lambda_scaled[r] * sc.scale[r];
        }
        out
    };
    if opts.active_set_sweep {
        if let Some(s) = active_set_sweep(&sc, 4 * (sc.k() + 1) + 20) {
            let sol = finish(p, SolveStatus::Optimal, s.weights, unscale(&s.lambda), s.nu, 0, one.total, None);
            if sol.kkt.max() <= T::lit(opts.kkt_tolerance) {
                return sol;
            }
        }
    }
    let out = admm(&sc, opts);
    let lambda = unscale(&out.lambda);
    let mut sol = finish(p, SolveStatus::Optimal, out.weights, lambda, out.nu, out.iterations, one.total, None);
    if !(sol.kkt.max() <= T::lit(opts.kkt_tolerance)) {
        if out.exact {
            log::debug!("path {}: polished solution failed the KKT check", p.path);
        }
        sol.status = SolveStatus::MaxIter;
    }
    sol
}

/// Solves every path's program. The joint prevalence-weighted objective is
/// separable across paths, so each entry equals [`solve_path`] on its own.
pub fn solve_simultaneous<T: Real>(problems: &[QpProblem<T>], prevalences: &[T], opts: &SolverOptions) -> Result<Vec<WeightSolution<T>>> {
    if prevalences.len() != problems.len() {
        return Err(Error::Argument("one prevalence per path required".into()));
    }
    if prevalences.iter().any(|p| !(*p >= T::zero())) {
        return Err(Error::Argument("prevalences must be nonnegative".into()));
    }
    Ok(problems.par_iter().map(|p| solve_path(p, opts)).collect())
}

/// KKT residuals of a candidate solution in original units.
pub fn kkt_check<T: Real>(p: &QpProblem<T>, sol: &WeightSolution<T>) -> KktReport<T> {
    let w = &sol.weights;
    let lambda = sol.lambda();
    let aw = p.a.mul_vec(w);
    let atl = p.a.tr_mul_vec(&lambda);
    let mut stationarity = T::zero();
    for i in 0..w.len() {
        let r = T::two() * w[i] - atl[i] - sol.nu;
        // μ_i = r_i is admissible only at ω_i = 0 and only if nonnegative.
        let resid = if w[i] <= T::zero() { (-r).max(T::zero()) } else { r.abs() };
        stationarity = stationarity.max(resid);
    }
    let total: T = w.iter().copied().sum();
    let mut primal = (total - T::one()).abs();
    for &x in w {
        primal = primal.max(-x);
    }
    let mut complementarity = T::zero();
    for k in 0..p.k() {
        let d = p.tolerance[k];
        let (l, u) = (p.target[k] - d, p.target[k] + d);
        if d.is_finite() {
            primal = primal.max(l - aw[k]).max(aw[k] - u);
        }
        let (ll, lu) = (sol.lambda_lower[k], sol.lambda_upper[k]);
        if ll > T::zero() {
            complementarity = complementarity.max(if d.is_finite() { ll * (aw[k] - l).abs() } else { T::infinity() });
        }
        if lu > T::zero() {
            complementarity = complementarity.max(if d.is_finite() { lu * (u - aw[k]).abs() } else { T::infinity() });
        }
    }
    let dual = sol.lambda_lower.iter().chain(&sol.lambda_upper).fold(T::zero(), |acc, &l| acc.max(-l));
    KktReport { stationarity, primal: primal.max(T::zero()), dual, complementarity }
}

/// Walks a ladder of tolerance multipliers and returns the first feasible one.
pub fn relax_to_feasible<T: Real>(p: &QpProblem<T>, ladder: &[T], opts: &SolverOptions) -> Result<(T, WeightSolution<T>)> {
    if ladder.is_empty() {
        return Err(Error::Argument("relaxation ladder is empty".into()));
    }
    if ladder.windows(2).any(|w| !(w[1] > w[0])) || ladder.iter().any(|v| !v.is_finite() || *v < T::zero()) {
        return Err(Error::Argument("relaxation ladder must be finite, nonnegative and strictly increasing".into()));
    }
    let mut last = None;
    for &mult in ladder {
        let sol = solve_path(&p.scaled_tolerance(mult), opts);
        if sol.status != SolveStatus::Infeasible {
            return Ok((mult, sol));
        }
        last = Some(sol);
    }
    let sol = last.expect("ladder is nonempty");
    let worst = sol.most_violated.map_or_else(|| "unknown row".to_string(), |k| p.row_label(k));
    Err(Error::Infeasible(format!(
        "path {} infeasible up to tolerance multiplier {}; most violated constraint: {worst}; violation {:e}",
        p.path,
        ladder[ladder.len() - 1],
        sol.violation.to_f64_lossy()
    )))
}
