mod common;

use bao::linalg::Matrix;
use bao::panel::TreatmentPath;
use bao::qpsolve::{kkt_check, relax_to_feasible, solve_path, solve_simultaneous, QpProblem, SolveStatus, SolverOptions};
use common::qp_oracle;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem(rows: &[Vec<f64>], target: &[f64], tol: &[f64]) -> QpProblem<f64> {
    QpProblem::new(Matrix::from_rows(rows, rows[0].len()), target.to_vec(), tol.to_vec()).unwrap()
}

struct Instance {
    rows: Vec<Vec<f64>>,
    target: Vec<f64>,
    tol: Vec<f64>,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let m = rng.random_range(1..=6);
    let k = rng.random_range(1..=2);
    let rows: Vec<Vec<f64>> = (0..k).map(|_| (0..m).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    // Targets near the row range so that most instances are feasible but constrained.
    let target = rows
        .iter()
        .map(|r| {
            let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            lo - 0.1 + (hi - lo + 0.2) * rng.random::<f64>()
        })
        .collect();
    let tol = (0..k).map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random_range(0.0..0.4) }).collect();
    Instance { rows, target, tol }
}

#[test]
fn closed_form_instance_and_duals() {
    let p = problem(&[vec![1.0, 0.0, -1.0]], &[0.5], &[0.0]);
    let s = solve_path(&p, &SolverOptions::default());
    assert_eq!(s.status, SolveStatus::Optimal);
    let expected = [7.0 / 12.0, 1.0 / 3.0, 1.0 / 12.0];
    for (w, e) in s.weights.iter().zip(expected) {
        assert!((w - e).abs() < 1e-8);
    }
    assert!((s.objective - 66.0 / 144.0).abs() < 1e-12);
    // Plugging in the closed-form multipliers ν = 2/3, λ = 1/2 leaves zero residuals.
    let mut exact = s.clone();
    exact.weights = expected.to_vec();
    exact.nu = 2.0 / 3.0;
    exact.lambda_lower = vec![0.5];
    exact.lambda_upper = vec![0.0];
    assert!(kkt_check(&p, &exact).max() <= 1e-10);
    assert!(s.kkt.max() <= 1e-10);
}

#[test]
fn balanced_uniform_is_optimal() {
    let p = problem(&[vec![1.0, 0.0, -1.0]], &[0.0], &[0.0]);
    let s = solve_path(&p, &SolverOptions::default());
    assert!(s.weights.iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));
    assert!(kkt_check(&p, &s).max() < 1e-12);
}

#[test]
fn corrupted_solution_fails_stationarity() {
    let p = problem(&[vec![1.0, 0.0, -1.0]], &[0.5], &[0.0]);
    let mut s = solve_path(&p, &SolverOptions::default());
    s.weights[1] += 0.01;
    assert!(kkt_check(&p, &s).stationarity > 1e-3);
}

#[test]
fn matches_enumeration_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let admm_only = SolverOptions { active_set_sweep: false, ..SolverOptions::default() };
    for case in 0..400 {
        let inst = random_instance(&mut rng);
        let p = problem(&inst.rows, &inst.target, &inst.tol);
        let oracle = qp_oracle::enumerate(&inst.rows, &inst.target, &inst.tol);
        for opts in [SolverOptions::default(), admm_only] {
            let s = solve_path(&p, &opts);
            match &oracle {
                None => assert_eq!(s.status, SolveStatus::Infeasible, "case {case}"),
                Some((obj, w)) => {
                    assert_eq!(s.status, SolveStatus::Optimal, "case {case}: {s:?}");
                    assert!((s.objective - obj).abs() < 1e-9, "case {case}: {} vs {obj}", s.objective);
                    for (a, b) in s.weights.iter().zip(w) {
                        assert!((a - b).abs() < 1e-6, "case {case}");
                    }
                    assert!(s.kkt.max() <= 1e-6);
                }
            }
        }
    }
}

#[test]
fn matches_simplex_grid_for_three_units() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    while checked < 10 {
        let mut inst = random_instance(&mut rng);
        for r in &mut inst.rows {
            r.truncate(3);
            while r.len() < 3 {
                r.push(rng.random_range(-2.0..2.0));
            }
        }
        let p = problem(&inst.rows, &inst.target, &inst.tol);
        let s = solve_path(&p, &SolverOptions::default());
        let Some(g) = qp_oracle::grid(&inst.rows, &inst.target, &inst.tol, 1000) else { continue };
        assert_eq!(s.status, SolveStatus::Optimal);
        // The solver can never lose to a feasible lattice point.
        assert!(s.objective <= g + 1e-12);
        checked += 1;
    }
}

#[test]
fn separable_joint_solve() {
    let a = problem(&[vec![1.0, 0.0, -1.0]], &[0.5], &[0.0]).with_path("0".parse().unwrap(), vec![0, 1, 2]).unwrap();
    let b = problem(&[vec![0.0, 1.0]], &[0.9], &[0.0]).with_path("1".parse().unwrap(), vec![3, 4]).unwrap();
    let bad = problem(&[vec![0.0, 1.0]], &[3.0], &[0.0]);
    let opts = SolverOptions::default();
    let joint = solve_simultaneous(&[a.clone(), b.clone(), bad], &[0.5, 0.3, 0.2], &opts).unwrap();
    assert_eq!(joint[0], solve_path(&a, &opts));
    assert_eq!(joint[1], solve_path(&b, &opts));
    assert_eq!(joint[2].status, SolveStatus::Infeasible);
}

#[test]
fn relaxation_ladder() {
    let opts = SolverOptions::default();
    let easy = problem(&[vec![1.0, 0.0, -1.0]], &[0.0], &[0.1]);
    assert_eq!(relax_to_feasible(&easy, &[1.0, 2.0, 4.0], &opts).unwrap().0, 1.0);
    // Hull is [0, 1]; target 1.3 needs δ ≥ 0.3.
    let p = problem(&[vec![0.0, 1.0]], &[1.3], &[0.1]);
    assert_eq!(relax_to_feasible(&p, &[1.0, 2.0, 4.0], &opts).unwrap().0, 4.0);
    let far = problem(&[vec![0.0, 1.0]], &[10.0], &[0.1]);
    assert!(relax_to_feasible(&far, &[1.0, 2.0, 4.0], &opts).is_err());
    assert!(relax_to_feasible(&far, &[], &opts).is_err());
    assert!(relax_to_feasible(&far, &[2.0, 1.0], &opts).is_err());
}

#[test]
fn dual_identity_when_weights_positive() {
    // ω_i = ρ'(r̃ᵢᵀλ_R) with ρ(v) = −v²/4, r̃ᵢ = (aᵢ, 1) and λ_R = −(λ, ν); the
    // dual objective at λ_R equals minus the primal optimum.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for _ in 0..500 {
        let inst = random_instance(&mut rng);
        let p = problem(&inst.rows, &inst.target, &inst.tol);
        let s = solve_path(&p, &SolverOptions::default());
        if s.status != SolveStatus::Optimal || s.weights.iter().any(|&w| w <= 1e-9) {
            continue;
        }
        let lambda = s.lambda();
        let m = p.m();
        let mut dual = 0.0;
        for i in 0..m {
            let v = -(0..p.k()).map(|k| p.a[(k, i)] * lambda[k]).sum::<f64>() - s.nu;
            let rho_prime = -v / 2.0;
            assert!((rho_prime - s.weights[i]).abs() < 1e-9);
            dual += v * v / 4.0;
        }
        for k in 0..p.k() {
            dual += -inst.target[k] * lambda[k] + inst.tol[k] * lambda[k].abs();
        }
        dual += -s.nu;
        assert!((dual + s.objective).abs() < 1e-9, "{dual} vs {}", s.objective);
        checked += 1;
    }
    assert!(checked > 20);
}

#[test]
fn single_unit() {
    let p = problem(&[vec![2.0]], &[2.0], &[0.0]);
    let s = solve_path(&p, &SolverOptions::default());
    assert_eq!(s.weights, vec![1.0]);
    let q = problem(&[vec![2.0]], &[1.0], &[0.5]);
    assert_eq!(solve_path(&q, &SolverOptions::default()).status, SolveStatus::Infeasible);
}

#[test]
fn larger_problem_converges() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..5 {
        let m = 400;
        let k = 8;
        let rows: Vec<Vec<f64>> = (0..k).map(|_| (0..m).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let target = vec![0.3; k];
        let p = problem(&rows, &target, &vec![0.01; k]).with_path(TreatmentPath::root(), (0..m).collect()).unwrap();
        let s = solve_path(&p, &SolverOptions::default());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!(s.kkt.max() < 1e-6);
        let admm = solve_path(&p, &SolverOptions { active_set_sweep: false, ..SolverOptions::default() });
        assert_eq!(admm.status, SolveStatus::Optimal);
        assert!((admm.objective - s.objective).abs() < 1e-9);
    }
}

fn instance_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (1usize..=6, 1usize..=2).prop_flat_map(|(m, k)| {
        (
            proptest::collection::vec(proptest::collection::vec(-2.0..2.0f64, m), k),
            proptest::collection::vec(-0.5..0.5f64, k),
            proptest::collection::vec(0.0..0.5f64, k),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn beats_random_feasible_points((rows, target, tol) in instance_strategy(), seed in any::<u64>()) {
        let p = problem(&rows, &target, &tol);
        let s = solve_path(&p, &SolverOptions::default());
        prop_assume!(s.status == SolveStatus::Optimal);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = p.m();
        for _ in 0..200 {
            let raw: Vec<f64> = (0..m).map(|_| -rng.random::<f64>().ln()).collect();
            let total: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let aw = p.a.mul_vec(&w);
            let ok = (0..p.k()).all(|k| (aw[k] - target[k]).abs() <= tol[k]);
            if ok {
                let obj: f64 = w.iter().map(|x| x * x).sum();
                prop_assert!(s.objective <= obj + 1e-8);
            }
        }
    }

    #[test]
    fn widening_tolerance_never_hurts((rows, target, tol) in instance_strategy(), factor in 1.0..3.0f64) {
        let p = problem(&rows, &target, &tol);
        let wide = p.scaled_tolerance(factor);
        let opts = SolverOptions::default();
        let (a, b) = (solve_path(&p, &opts), solve_path(&wide, &opts));
        prop_assume!(a.status == SolveStatus::Optimal);
        prop_assert_eq!(b.status, SolveStatus::Optimal);
        prop_assert!(b.objective <= a.objective + 1e-10);
    }

    #[test]
    fn row_scaling_is_invisible((rows, target, tol) in instance_strategy(), which in 0usize..2) {
        let p = problem(&rows, &target, &tol);
        let k = which.min(p.k() - 1);
        let mut scaled_rows = rows.clone();
        for v in &mut scaled_rows[k] {
            *v *= 1000.0;
        }
        let mut st = target.clone();
        st[k] *= 1000.0;
        let mut sd = tol.clone();
        sd[k] *= 1000.0;
        let q = problem(&scaled_rows, &st, &sd);
        let opts = SolverOptions::default();
        let (a, b) = (solve_path(&p, &opts), solve_path(&q, &opts));
        prop_assert_eq!(a.status, b.status);
        if a.status == SolveStatus::Optimal {
            for (x, y) in a.weights.iter().zip(&b.weights) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn optimal_solutions_satisfy_invariants((rows, target, tol) in instance_strategy()) {
        let p = problem(&rows, &target, &tol);
        let s = solve_path(&p, &SolverOptions::default());
        if s.status == SolveStatus::Optimal {
            prop_assert!(s.weights.iter().all(|&w| w >= -1e-10));
            prop_assert!((s.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
            let aw = p.a.mul_vec(&s.weights);
            for k in 0..p.k() {
                prop_assert!((aw[k] - target[k]).abs() <= tol[k] + 1e-7);
            }
            prop_assert!(s.kkt.max() <= 1e-6);
            let m = p.m() as f64;
            prop_assert!(s.summary.ess >= 1.0 - 1e-12 && s.summary.ess <= m + 1e-9);
        }
    }
}
