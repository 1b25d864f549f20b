use bao::linalg::Matrix;
use bao::panel::PanelDataset;
use bao::rng;
use rand::Rng;

/// Confounded panel: `X_t = 0.5 X_{t-1} + 0.4 z_{t-1} + U(-1.5, 1.5)`,
/// treatment logistic in the first current covariate.
pub fn random_panel(seed: u64, n: usize, periods: usize, width: usize) -> PanelDataset {
    let mut r = rng::keyed(seed, &[]);
    let mut x: Vec<Vec<Vec<f64>>> = Vec::with_capacity(periods);
    let mut z: Vec<Vec<u8>> = vec![Vec::with_capacity(periods); n];
    for t in 0..periods {
        let mut block = Vec::with_capacity(n);
        for (i, zi) in z.iter_mut().enumerate() {
            let row: Vec<f64> = (0..width)
                .map(|p| {
                    let carry = if t == 0 { 0.0 } else { 0.5 * x[t - 1][i][p] + 0.4 * f64::from(zi[t - 1]) };
                    carry + r.random_range(-1.5..1.5)
                })
                .collect();
            let p = 1.0 / (1.0 + (-row[0]).exp());
            zi.push(u8::from(r.random::<f64>() < p));
            block.push(row);
        }
        x.push(block);
    }
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let s: f64 = (0..periods).map(|t| x[t][i].iter().sum::<f64>() + 2.0 * f64::from(z[i][t])).sum();
            s + r.random_range(-1.0..1.0)
        })
        .collect();
    let covariates = x.into_iter().map(|b| Matrix::from_rows(&b, width)).collect();
    PanelDataset::complete(covariates, z, y).expect("valid panel")
}
