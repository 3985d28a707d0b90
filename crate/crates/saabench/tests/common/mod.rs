#![allow(dead_code)] // not every test target uses every oracle

//! Independent oracles shared by the integration suites. These deliberately
//! avoid the library's closed-form paths: minimization by interval search,
//! constrained solves by a null-space method, posterior means by quadrature.

use nalgebra::{DMatrix, DVector};

/// Golden-section search for the minimizer of `f` on `[lo, hi]`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Equality-constrained quadratic solve of `min w' S w, 1'w = 1` by the
/// null-space method: `w = w0 + Z v` with `Z` spanning the sum-zero space.
pub fn null_space_min_variance(sigma: &DMatrix<f64>) -> DVector<f64> {
    let n = sigma.nrows();
    let w0 = DVector::from_element(n, 1.0 / n as f64);
    let mut z = DMatrix::zeros(n, n - 1);
    for j in 0..n - 1 {
        z[(j, j)] = 1.0;
        z[(n - 1, j)] = -1.0;
    }
    let reduced = z.transpose() * sigma * &z;
    let rhs = -(z.transpose() * sigma * &w0);
    let v = reduced.lu().solve(&rhs).expect("reduced system is nonsingular");
    w0 + z * v
}

/// Posterior mean of the scaled-beta shapes under a uniform prior on
/// `[lo, hi]^2`, by midpoint-rule quadrature on a `g x g` grid.
pub fn beta_posterior_grid_mean(ys: &[f64], lo: f64, hi: f64, g: usize) -> (f64, f64) {
    use statrs::function::gamma::ln_gamma;
    let eps = 1e-9;
    let (mut s1, mut s2) = (0.0, 0.0);
    for &y in ys {
        let u = ((y + 1.0) / 2.0).clamp(eps, 1.0 - eps);
        s1 += u.ln();
        s2 += (1.0 - u).ln();
    }
    let n = ys.len() as f64;
    let ll = |a: f64, b: f64| {
        -n * (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)) + (a - 1.0) * s1 + (b - 1.0) * s2
    };
    let step = (hi - lo) / g as f64;
    let mut grid = Vec::with_capacity(g * g);
    let mut max_ll = f64::NEG_INFINITY;
    for i in 0..g {
        let a = lo + (i as f64 + 0.5) * step;
        for j in 0..g {
            let b = lo + (j as f64 + 0.5) * step;
            let v = ll(a, b);
            max_ll = max_ll.max(v);
            grid.push((a, b, v));
        }
    }
    let (mut wsum, mut asum, mut bsum) = (0.0, 0.0, 0.0);
    for (a, b, v) in grid {
        let w = (v - max_ll).exp();
        wsum += w;
        asum += w * a;
        bsum += w * b;
    }
    (asum / wsum, bsum / wsum)
}

/// Mean and ddof-1 variance of a slice.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
