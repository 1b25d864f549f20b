//! Acceptance suite: one line per criterion.
//!
//! Runs as a plain binary (`harness = false`). A criterion prints `FAIL` when
//! any of its checks fails; the process exits non-zero unless every failing
//! check is listed in `KNOWN_UNATTAINABLE`.

#[allow(dead_code)]
#[path = "../../core/tests/common/datasets.rs"]
mod datasets;
#[allow(dead_code)]
#[path = "../../core/tests/common/ortho_check.rs"]
mod ortho_check;
#[path = "../../core/tests/common/qp_oracle.rs"]
mod qp_oracle;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use bao::estimate::{run_bao, run_bao_censored, BaoConfig, BaoResult, MsmDesign};
use bao::features::BalanceSpec;
use bao::linalg::Matrix;
use bao::qpsolve::{solve_path, QpProblem, SolveStatus, SolverOptions};
use bao::rng;
use bao::simlab::{gen_study1, gen_study3, monte_carlo_truth, run_replications, true_params, Method, Study, StudyConfig};
use rand::Rng;

const SEED: u64 = 2024;

/// Checks that cannot pass as literally stated (see the README).
const KNOWN_UNATTAINABLE: &[&str] = &["6:grid"];

#[derive(Default)]
struct Criterion {
    notes: Vec<String>,
    failed: Vec<&'static str>,
}

impl Criterion {
    fn check(&mut self, key: &'static str, ok: bool, note: String) {
        if !ok {
            self.failed.push(key);
        }
        self.notes.push(if ok { note } else { format!("{note} [failed]") });
    }
}

fn within(value: f64, expected: f64, tol: f64) -> bool {
    (value - expected).abs() <= tol
}

fn criterion1() -> Criterion {
    let mut c = Criterion::default();
    let start = Instant::now();
    let truth = true_params(Study::One).coefficients;
    let secs = start.elapsed().as_secs_f64();
    let ok = within(truth[0], 308.30, 0.01) && within(truth[1], 4.57, 0.01) && within(truth[2], -10.0, 0.01);
    c.check("1:values", ok, format!("tau = ({:.4}, {:.4}, {:.4})", truth[0], truth[1], truth[2]));
    c.check("1:runtime", secs < 1.0, format!("{secs:.2e}s"));
    c
}

fn criterion2() -> Criterion {
    let mut c = Criterion::default();
    for (study, expected) in [(Study::Two, vec![261.80, 58.50]), (Study::Three, vec![27.82, 0.0, 0.0])] {
        let mc = monte_carlo_truth(study, 10_000_000, SEED);
        let ok = mc.coefficients.iter().zip(&expected).all(|(v, e)| within(*v, *e, 0.05));
        let shown: Vec<String> = mc.coefficients.iter().map(|v| format!("{v:.3}")).collect();
        c.check("2:values", ok, format!("study {}: ({})", study.number(), shown.join(", ")));
    }
    c
}

fn study(study: Study, reps: usize, methods: Vec<Method>, bootstrap: usize) -> bao::simlab::ReplicationReport {
    let mut cfg = StudyConfig::new(study, 1000, reps, SEED, methods);
    cfg.bootstrap = bootstrap;
    cfg.bao.bootstrap = bootstrap;
    run_replications(&cfg).expect("replications")
}

fn criterion3() -> Criterion {
    let mut c = Criterion::default();
    let report = study(Study::One, 300, vec![Method::Bao, Method::GPool], 0);
    let labels = report.truth.labels.clone();
    let gpool = labels.iter().map(|l| report.metric(Method::GPool, l).unwrap().bias.abs()).fold(0.0, f64::max);
    c.check("3:gpool", gpool <= 0.3, format!("gpool max|bias| {gpool:.3}"));
    let tau2 = report.metric(Method::Bao, &labels[2]).unwrap();
    c.check("3:bias", (0.3..=1.5).contains(&tau2.bias), format!("BAO tau2 bias {:.3}", tau2.bias));
    c.check("3:rmse", (0.7..=1.6).contains(&tau2.rmse), format!("rmse {:.3}", tau2.rmse));
    let tau0 = report.metric(Method::Bao, &labels[0]).unwrap().rmse;
    c.check("3:tau0", tau0 <= 4.5, format!("tau0 rmse {tau0:.3}"));
    let failures: usize = report.metrics.iter().map(|m| m.failures).max().unwrap_or(0);
    c.check("3:failures", failures == 0, format!("failures {failures}"));
    c
}

fn criterion4() -> Criterion {
    let mut c = Criterion::default();
    let bao = study(Study::Three, 200, vec![Method::Bao], 100);
    let gpool = study(Study::Three, 200, vec![Method::GPool], 0);
    let label = &bao.truth.labels[2];
    let b = bao.metric(Method::Bao, label).unwrap();
    let g = gpool.metric(Method::GPool, label).unwrap();
    c.check("4:bias", b.bias.abs() < g.bias.abs(), format!("|tau2 bias| BAO {:.3} vs gpool {:.3}", b.bias.abs(), g.bias.abs()));
    c.check("4:coverage", b.coverage >= 85.0, format!("BAO coverage {:.1}%", b.coverage));
    c
}

fn criterion5() -> Criterion {
    let mut c = Criterion::default();
    let report = study(Study::One, 100, vec![Method::Bao, Method::LrStab], 0);
    for row in report.figure.iter().filter(|r| r.method == Method::Bao) {
        let ipw = report.figure.iter().find(|r| r.method == Method::LrStab && r.path == row.path).unwrap();
        c.check("5:cv", row.cv < ipw.cv, format!("path {} cv {:.3} < {:.3}", row.path, row.cv, ipw.cv));
    }
    c
}

fn problem(rows: &[Vec<f64>], target: &[f64], tol: &[f64]) -> QpProblem<f64> {
    QpProblem::new(Matrix::from_rows(rows, rows[0].len()), target.to_vec(), tol.to_vec()).unwrap()
}

fn criterion6() -> Criterion {
    let mut c = Criterion::default();
    let opts = SolverOptions::default();
    let mut r = rng::keyed(SEED, &[6]);
    let (mut worst_exact, mut worst_kkt, mut worst_grid) = (0.0f64, 0.0f64, 0.0f64);
    let (mut status_mismatch, mut grid_checked, mut grid_too_large, mut solver_above_grid) = (0, 0, 0, 0);
    for _ in 0..100 {
        let m = r.random_range(1..=6);
        let k = r.random_range(1..=2);
        let rows: Vec<Vec<f64>> = (0..k).map(|_| (0..m).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
        let target: Vec<f64> = rows
            .iter()
            .map(|row| {
                let lo = row.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                lo - 0.1 + (hi - lo + 0.2) * r.random::<f64>()
            })
            .collect();
        let tol: Vec<f64> = (0..k).map(|_| if r.random::<f64>() < 0.3 { 0.0 } else { r.random_range(0.0..0.4) }).collect();
        let s = solve_path(&problem(&rows, &target, &tol), &opts);
        match qp_oracle::enumerate(&rows, &target, &tol) {
            None => status_mismatch += usize::from(s.status != SolveStatus::Infeasible),
            Some((obj, _)) => {
                if s.status != SolveStatus::Optimal {
                    status_mismatch += 1;
                    continue;
                }
                worst_exact = worst_exact.max((s.objective - obj).abs());
                worst_kkt = worst_kkt.max(s.kkt.max());
            }
        }
        if m > 3 {
            grid_too_large += 1;
            continue;
        }
        if let Some(g) = qp_oracle::grid(&rows, &target, &tol, 1000) {
            grid_checked += 1;
            worst_grid = worst_grid.max((s.objective - g).abs());
            solver_above_grid += usize::from(s.objective > g + 1e-12);
        }
    }
    c.check("6:status", status_mismatch == 0, format!("feasibility agrees ({status_mismatch} mismatches)"));
    c.check("6:exact", worst_exact <= 1e-8, format!("exact oracle gap {worst_exact:.1e}"));
    c.check("6:kkt", worst_kkt <= 1e-6, format!("max KKT {worst_kkt:.1e}"));
    c.check("6:lattice", solver_above_grid == 0, "never above a feasible lattice point".into());
    c.check(
        "6:grid",
        worst_grid <= 1e-4 && grid_too_large == 0,
        format!("grid gap {worst_grid:.1e} on {grid_checked} instances, {grid_too_large} with m > 3 unscannable"),
    );

    let closed = solve_path(&problem(&[vec![1.0, 0.0, -1.0]], &[0.5], &[0.0]), &opts);
    let expected = [7.0 / 12.0, 1.0 / 3.0, 1.0 / 12.0];
    let gap = closed.weights.iter().zip(expected).map(|(w, e)| (w - e).abs()).fold(0.0, f64::max);
    c.check("6:closed", gap <= 1e-8, format!("(7/12, 1/3, 1/12) gap {gap:.1e}"));

    let mut uniform = true;
    for m in 1..=6 {
        let rows = vec![(0..m).map(|_| r.random_range(-2.0..2.0)).collect::<Vec<f64>>(); 2];
        let s = solve_path(&problem(&rows, &[0.3, -0.1], &[f64::INFINITY; 2]), &opts);
        uniform &= s.weights.iter().all(|&w| w == 1.0 / m as f64);
    }
    c.check("6:uniform", uniform, "infinite tolerance gives exact 1/m".into());
    c
}

/// `R̂_t` for `a·X_tp + b` is `a·R̂_t` in that column and unchanged elsewhere.
fn affine_gap(data: &bao::panel::PanelDataset, spec: &BalanceSpec, t: usize, p: usize, a: f64, b: f64) -> f64 {
    let (_, _, base) = ortho_check::residuals(data, spec);
    let (_, _, moved) = ortho_check::residuals(&data.map_covariate(t, p, |x| a * x + b), spec);
    let mut worst = 0.0f64;
    for s in t..base.residuals.len() {
        let (old, new) = (&base.residuals[s], &moved.residuals[s]);
        for i in 0..old.rows() {
            for q in 0..old.cols() {
                let want = if s == t && q == p { a * old[(i, q)] } else { old[(i, q)] };
                if want.is_finite() || new[(i, q)].is_finite() {
                    worst = worst.max((new[(i, q)] - want).abs() / (1.0 + want.abs()));
                }
            }
        }
    }
    worst
}

fn criterion7() -> Criterion {
    let mut c = Criterion::default();
    let mut r = rng::keyed(SEED, &[7]);
    let (mut mean_ratio, mut orth, mut idem, mut affine) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for case in 0..50u64 {
        let periods = r.random_range(2..=3);
        let mut data = datasets::random_panel(SEED + case, r.random_range(40..200), periods, r.random_range(1..=3));
        if case % 2 == 1 {
            data = bao::simlab::apply_mar_censoring(&data, -1.5, &mut rng::keyed(SEED, &[7, case])).unwrap();
        }
        let spec = BalanceSpec::identity(&data, None);
        let report = ortho_check::check(&data, &spec);
        mean_ratio = mean_ratio.max(report.mean_ratio);
        orth = orth.max(report.orthogonality);
        idem = idem.max(report.reprojection_beta).max(report.reprojection_change);
        let t = r.random_range(1..periods);
        let p = r.random_range(0..data.covariate_count(t));
        affine = affine.max(affine_gap(&data, &spec, t, p, r.random_range(0.2..5.0), r.random_range(-3.0..3.0)));
    }
    c.check("7:mean", mean_ratio <= 1e-8, format!("mean/SD {mean_ratio:.1e}"));
    c.check("7:orth", orth <= 1e-8, format!("orthogonality {orth:.1e}"));
    c.check("7:idempotent", idem <= 1e-8, format!("reprojection {idem:.1e}"));
    c.check("7:affine", affine <= 1e-8, format!("affine {affine:.1e}"));
    c
}

fn fingerprint(r: &BaoResult) -> (String, Vec<u64>) {
    (serde_json::to_string(r).unwrap(), r.unit_weights.iter().map(|w| w.to_bits()).collect())
}

fn criterion8() -> Criterion {
    let mut c = Criterion::default();
    let config = BaoConfig { bootstrap: 20, ..BaoConfig::default() };
    let mut same = 0;
    for s in 0..3u64 {
        let data =
            if s == 2 { gen_study3(500, &mut rng::keyed(SEED, &[8, s])) } else { gen_study1(500, &mut rng::keyed(SEED, &[8, s])) }.unwrap();
        let spec = BalanceSpec::identity(&data, None);
        let design = MsmDesign::additive(2);
        let plain = run_bao(&data, &spec, &design, &config, SEED + s).unwrap();
        let censored = run_bao_censored(&data.with_zero_censoring(), &spec, &design, &config, SEED + s).unwrap();
        same += usize::from(fingerprint(&plain) == fingerprint(&censored));
    }
    c.check("8:bitwise", same == 3, format!("{same}/3 datasets identical"));
    c
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_bao"))
        .args(args)
        .env_remove("BAO_SEED")
        .env("RUST_LOG", "error")
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .flatten()
        .filter(|e| e.path().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    out.sort();
    out
}

fn criterion9() -> Criterion {
    let mut c = Criterion::default();
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("panel.csv");
    let censored = root.path().join("censored.csv");
    let run = |k: usize| -> Option<Vec<(String, Vec<u8>)>> {
        let dir = root.path().join(format!("run{k}"));
        std::fs::create_dir_all(&dir).unwrap();
        let d = |name: &str| dir.join(name).to_string_lossy().into_owned();
        let p = |path: &Path| path.to_string_lossy().into_owned();
        let ok = run_cli(&[
            "simulate",
            "--study",
            "1",
            "--n",
            "300",
            "--reps",
            "4",
            "--seed",
            "9",
            "--methods",
            "bao,lr-stab,gpool",
            "--bootstrap",
            "10",
            "--out",
            &d("report.csv"),
            "--json",
            &d("report.json"),
            "--svg",
            &p(&dir),
            "--data-out",
            &p(&data),
        ]) && run_cli(&[
            "simulate",
            "--study",
            "3",
            "--n",
            "300",
            "--reps",
            "1",
            "--seed",
            "9",
            "--bootstrap",
            "0",
            "--out",
            &d("s3.csv"),
            "--data-out",
            &p(&censored),
            "--censor",
        ]) && run_cli(&[
            "estimate",
            "--data",
            &p(&data),
            "--seed",
            "5",
            "--bootstrap",
            "25",
            "--out",
            &d("bao.json"),
            "--weights-out",
            &d("weights.csv"),
            "--residuals-out",
            &d("residuals.csv"),
        ]) && run_cli(&["estimate", "--data", &p(&censored), "--seed", "5", "--bootstrap", "10", "--out", &d("censored.json")])
            && run_cli(&[
                "estimate",
                "--data",
                &p(&data),
                "--seed",
                "5",
                "--method",
                "lr-trunc",
                "--bootstrap",
                "20",
                "--out",
                &d("lr.json"),
            ]);
        ok.then(|| {
            let mut all = files(&dir);
            all.push(("panel.csv".into(), std::fs::read(&data).unwrap()));
            all.push(("censored.csv".into(), std::fs::read(&censored).unwrap()));
            all
        })
    };
    match (run(1), run(2)) {
        (Some(a), Some(b)) => {
            let identical = a == b;
            c.check("9:bytes", identical, format!("{} output files byte-identical across runs", a.len()));
        }
        _ => c.check("9:bytes", false, "a CLI invocation failed".into()),
    }
    c
}

fn main() {
    let criteria: [(u8, fn() -> Criterion); 9] = [
        (1, criterion1),
        (2, criterion2),
        (3, criterion3),
        (4, criterion4),
        (5, criterion5),
        (6, criterion6),
        (7, criterion7),
        (8, criterion8),
        (9, criterion9),
    ];
    let only: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut unexpected = Vec::new();
    for (id, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let c = run();
        let verdict = if c.failed.is_empty() { "PASS" } else { "FAIL" };
        let known: Vec<&str> = c.failed.iter().copied().filter(|k| KNOWN_UNATTAINABLE.contains(k)).collect();
        let suffix = if known.is_empty() { String::new() } else { format!(" (known unattainable: {})", known.join(", ")) };
        println!("criterion {id}: {verdict} [{:.1}s] {}{suffix}", start.elapsed().as_secs_f64(), c.notes.join("; "));
        unexpected.extend(c.failed.into_iter().filter(|k| !KNOWN_UNATTAINABLE.contains(k)));
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
