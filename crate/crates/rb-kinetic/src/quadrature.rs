//! One-dimensional quadrature rules and Chebyshev machinery.

use nalgebra::{DMatrix, SymmetricEigen};

/// Gauss rule from a symmetric Jacobi matrix (Golub-Welsch). `mu0` is the
/// total mass of the weight.
fn golub_welsch(diag: &[f64], offdiag: &[f64], mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = diag[i];
        if i + 1 < n {
            j[(i, i + 1)] = offdiag[i];
            j[(i + 1, i)] = offdiag[i];
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], mu0 * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Probabilists' Gauss-Hermite rule, weights summing to one (standard normal).
pub fn gauss_hermite_prob(n: usize) -> (Vec<f64>, Vec<f64>) {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
    let (mut x, mut w) = golub_welsch(&diag, &off, 1.0);
    // Symmetrize to kill eigen-solver noise.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let a = 0.5 * (x[j] - x[i]);
        x[i] = -a;
        x[j] = a;
        let b = 0.5 * (w[i] + w[j]);
        w[i] = b;
        w[j] = b;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    (x, w)
}

/// Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    golub_welsch(&diag, &off, 2.0)
}

/// Gauss rule for a weight given by a fine discrete measure, via the
/// Stieltjes procedure.
pub fn gauss_from_discrete(xs: &[f64], ws: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let m = xs.len();
    let mu0: f64 = ws.iter().sum();
    let mut p_prev = vec![0.0; m];
    let mut p = vec![1.0; m];
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut norm_prev = 1.0;
    for k in 0..n {
        let norm: f64 = (0..m).map(|i| ws[i] * p[i] * p[i]).sum();
        let ak = (0..m).map(|i| ws[i] * xs[i] * p[i] * p[i]).sum::<f64>() / norm;
        let bk = if k == 0 { 0.0 } else { norm / norm_prev };
        a.push(ak);
        if k > 0 {
            b.push(bk.sqrt());
        }
        let next: Vec<f64> = (0..m)
            .map(|i| (xs[i] - ak) * p[i] - bk * p_prev[i])
            .collect();
        p_prev = std::mem::replace(&mut p, next);
        norm_prev = norm;
    }
    golub_welsch(&a, &b, mu0)
}

/// Gauss rule on [0, inf) for the weight r^3 exp(-r^2/4).
pub fn gauss_r3_gaussian(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(12);
    let (panels, rmax) = (240usize, 24.0);
    let h = rmax / panels as f64;
    let mut xs = Vec::with_capacity(panels * gx.len());
    let mut ws = Vec::with_capacity(panels * gx.len());
    for p in 0..panels {
        let a = p as f64 * h;
        for (x, w) in gx.iter().zip(&gw) {
            let r = a + 0.5 * h * (x + 1.0);
            xs.push(r);
            ws.push(0.5 * h * w * r.powi(3) * (-0.25 * r * r).exp());
        }
    }
    gauss_from_discrete(&xs, &ws, n)
}

/// Chebyshev-Gauss-Lobatto nodes x_j = cos(pi j / n), j = 0..=n.
pub fn cheb_nodes(n: usize) -> Vec<f64> {
    (0..=n)
        .map(|j| (std::f64::consts::PI * j as f64 / n as f64).cos())
        .collect()
}

/// Collocation differentiation matrix on the Gauss-Lobatto nodes.
pub fn cheb_diff(n: usize) -> DMatrix<f64> {
    let x = cheb_nodes(n);
    let c = |j: usize| -> f64 {
        let s = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
        if j == 0 || j == n {
            2.0 * s
        } else {
            s
        }
    };
    let mut d = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..=n {
        for j in 0..=n {
            if i != j {
                d[(i, j)] = c(i) / c(j) / (x[i] - x[j]);
            }
        }
    }
    // Negative-sum trick for the diagonal.
    for i in 0..=n {
        let s: f64 = (0..=n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -s;
    }
    d
}

/// Clenshaw-Curtis weights on the Gauss-Lobatto nodes for [-1, 1].
pub fn clenshaw_curtis(n: usize) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    let mut w = vec![0.0; n + 1];
    for (j, wj) in w.iter_mut().enumerate() {
        let theta = pi * j as f64 / n as f64;
        let mut s = 0.0;
        for k in 0..=n / 2 {
            let bk = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
            s += bk / (1.0 - 4.0 * (k * k) as f64) * (2.0 * k as f64 * theta).cos();
        }
        let cj = if j == 0 || j == n { 1.0 } else { 2.0 };
        *wj = cj / n as f64 * s;
    }
    w
}

/// Chebyshev coefficients of the interpolant through Gauss-Lobatto values.
pub fn cheb_coeffs(vals: &[f64]) -> Vec<f64> {
    let n = vals.len() - 1;
    let pi = std::f64::consts::PI;
    (0..=n)
        .map(|k| {
            let mut s = 0.0;
            for (j, v) in vals.iter().enumerate() {
                let cj = if j == 0 || j == n { 0.5 } else { 1.0 };
                s += cj * v * (pi * (j * k) as f64 / n as f64).cos();
            }
            let ck = if k == 0 || k == n { 1.0 } else { 2.0 };
            ck * s / n as f64
        })
        .collect()
}

/// Evaluate a Chebyshev series at x.
pub fn cheb_eval(coeffs: &[f64], x: f64) -> f64 {
    // Clenshaw recurrence.
    let (mut b1, mut b2) = (0.0, 0.0);
    for &c in coeffs.iter().skip(1).rev() {
        let b0 = 2.0 * x * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    coeffs[0] + x * b1 - b2
}
