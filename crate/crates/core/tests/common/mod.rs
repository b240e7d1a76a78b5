//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimizes `||y - Xw - b||² + alpha ||w||²` by accelerated gradient
/// descent on the raw (uncentered) objective, restarting the momentum
/// whenever it points uphill. Returns `(w, b, gradient norm)`.
pub fn ridge_by_descent(x: &DMatrix<f64>, y: &[f64], alpha: f64, tol: f64) -> (Vec<f64>, f64, f64) {
    let (n, d) = x.shape();
    let p = d + 1;
    let row = |i: usize| -> Vec<f64> {
        let mut r: Vec<f64> = (0..d).map(|j| x[(i, j)]).collect();
        r.push(1.0);
        r
    };
    let rows: Vec<Vec<f64>> = (0..n).map(row).collect();

    let gradient = |theta: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; p];
        for (i, r) in rows.iter().enumerate() {
            let pred: f64 = r.iter().zip(theta).map(|(a, b)| a * b).sum();
            let resid = y[i] - pred;
            for k in 0..p {
                g[k] -= 2.0 * resid * r[k];
            }
        }
        for k in 0..d {
            g[k] += 2.0 * alpha * theta[k];
        }
        g
    };

    // Lipschitz constant 2 (λmax(AᵀA) + alpha) via power iteration.
    let mut v = vec![1.0; p];
    let mut lambda = 0.0;
    for _ in 0..500 {
        let mut av = vec![0.0; p];
        for r in &rows {
            let s: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
            for k in 0..p {
                av[k] += s * r[k];
            }
        }
        let norm = av.iter().map(|a| a * a).sum::<f64>().sqrt();
        lambda = norm;
        v = av.iter().map(|a| a / norm).collect();
    }
    let lip = 2.0 * (lambda * 1.01 + alpha);
    let step = 1.0 / lip;

    let mut theta = vec![0.0; p];
    let mut prev = theta.clone();
    let mut t = 1.0f64;
    let mut gnorm = f64::INFINITY;
    for _ in 0..1_000_000 {
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let beta = (t - 1.0) / t_next;
        let look: Vec<f64> = theta.iter().zip(&prev).map(|(a, b)| a + beta * (a - b)).collect();
        let g = gradient(&look);
        gnorm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        if gnorm <= tol {
            theta = look;
            break;
        }
        let next: Vec<f64> = look.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        // Gradient restart: drop the momentum once it points uphill.
        let uphill: f64 = g.iter().zip(next.iter().zip(&theta)).map(|(g, (a, b))| g * (a - b)).sum();
        t = if uphill > 0.0 { 1.0 } else { t_next };
        prev = std::mem::replace(&mut theta, next);
    }
    let b = theta[d];
    theta.truncate(d);
    (theta, b, gnorm)
}

/// Random Gaussian-ish design with a planted linear response plus noise.
pub fn random_problem(seed: u64, n: usize, d: usize) -> (DMatrix<f64>, Vec<f64>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, d, |_, _| r.random_range(-2.0..2.0));
    let w: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
    let y = (0..n).map(|i| (0..d).map(|j| x[(i, j)] * w[j]).sum::<f64>() + 0.5 + r.random_range(-0.3..0.3)).collect();
    (x, y)
}

/// Relative error with an absolute floor of 1e-6 for near-zero entries.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}
