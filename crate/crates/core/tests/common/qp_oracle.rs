//! Brute-force reference solutions for tiny balance programs.
//!
//! `enumerate` tries every support set and every assignment of each row to
//! {inactive, at lower bound, at upper bound}, solves the resulting
//! equality-constrained minimum-norm problem in closed form and keeps the
//! best primal-feasible candidate. `grid` scans the simplex lattice.

#![allow(dead_code)]

/// Dense Gauss-Jordan solve with partial pivoting; `None` if singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

fn feasible(rows: &[Vec<f64>], lo: &[f64], hi: &[f64], w: &[f64], tol: f64) -> bool {
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > tol || w.iter().any(|&x| x < -tol) {
        return false;
    }
    rows.iter().zip(lo.iter().zip(hi)).all(|(r, (&l, &u))| {
        let v: f64 = r.iter().zip(w).map(|(a, b)| a * b).sum();
        v >= l - tol && v <= u + tol
    })
}

/// Optimal objective and weights, or `None` if infeasible.
pub fn enumerate(rows: &[Vec<f64>], target: &[f64], tol: &[f64]) -> Option<(f64, Vec<f64>)> {
    let m = rows[0].len();
    let k = rows.len();
    let lo: Vec<f64> = target.iter().zip(tol).map(|(b, d)| b - d).collect();
    let hi: Vec<f64> = target.iter().zip(tol).map(|(b, d)| b + d).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        for code in 0..3usize.pow(k as u32) {
            let mut eq_rows: Vec<Vec<f64>> = Vec::new();
            let mut rhs = Vec::new();
            let mut c = code;
            for r in 0..k {
                match c % 3 {
                    1 => {
                        eq_rows.push(support.iter().map(|&i| rows[r][i]).collect());
                        rhs.push(lo[r]);
                    }
                    2 => {
                        eq_rows.push(support.iter().map(|&i| rows[r][i]).collect());
                        rhs.push(hi[r]);
                    }
                    _ => {}
                }
                c /= 3;
            }
            eq_rows.push(vec![1.0; support.len()]);
            rhs.push(1.0);
            // ω_S = Mᵀ (M Mᵀ)⁻¹ rhs
            let g: Vec<Vec<f64>> =
                eq_rows.iter().map(|a| eq_rows.iter().map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum()).collect()).collect();
            let Some(theta) = solve_dense(g, rhs) else { continue };
            let mut w = vec![0.0; m];
            for (s, &i) in support.iter().enumerate() {
                w[i] = eq_rows.iter().zip(&theta).map(|(r, t)| r[s] * t).sum();
            }
            if !feasible(rows, &lo, &hi, &w, 1e-10) {
                continue;
            }
            let obj: f64 = w.iter().map(|x| x * x).sum();
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, w));
            }
        }
    }
    best
}

/// Minimum objective over feasible lattice points `ω = j/steps` of the simplex.
pub fn grid(rows: &[Vec<f64>], target: &[f64], tol: &[f64], steps: usize) -> Option<f64> {
    let m = rows[0].len();
    let lo: Vec<f64> = target.iter().zip(tol).map(|(b, d)| b - d).collect();
    let hi: Vec<f64> = target.iter().zip(tol).map(|(b, d)| b + d).collect();
    let h = 1.0 / steps as f64;
    let mut best: Option<f64> = None;
    let mut counts = vec![0usize; m];
    fn rec(pos: usize, left: usize, counts: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if pos + 1 == counts.len() {
            counts[pos] = left;
            f(counts);
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            rec(pos + 1, left - c, counts, f);
        }
    }
    let mut visit = |c: &[usize]| {
        let mut obj = 0.0;
        for &x in c {
            let w = x as f64 * h;
            obj += w * w;
        }
        if best.is_some_and(|b| obj >= b) {
            return;
        }
        for (r, row) in rows.iter().enumerate() {
            let v: f64 = row.iter().zip(c).map(|(a, &x)| a * x as f64 * h).sum();
            if v < lo[r] - 1e-12 || v > hi[r] + 1e-12 {
                return;
            }
        }
        best = Some(obj);
    };
    rec(0, steps, &mut counts, &mut visit);
    best
}
