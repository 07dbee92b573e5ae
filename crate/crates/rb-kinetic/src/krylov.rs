//! Restarted GMRES for the matrix-free transport fixed points.

use nalgebra::{DMatrix, DVector};

/// Outcome of a GMRES solve.
#[derive(Clone, Debug)]
pub struct GmresReport {
    pub iterations: usize,
    /// Relative residual after each restart cycle.
    pub history: Vec<f64>,
    pub converged: bool,
}

/// Solve `A x = b` to relative residual `tol` with GMRES(`restart`),
/// modified Gram-Schmidt and Givens rotations.
pub fn gmres(
    mut apply: impl FnMut(&DVector<f64>) -> DVector<f64>,
    b: &DVector<f64>,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> (DVector<f64>, GmresReport) {
    let n = b.len();
    let mut x = DVector::zeros(n);
    let bnorm = b.norm();
    let mut report = GmresReport { iterations: 0, history: vec![], converged: false };
    if bnorm == 0.0 {
        report.converged = true;
        return (x, report);
    }
    while report.iterations < max_iter {
        let r = b - apply(&x);
        let beta = r.norm();
        report.history.push(beta / bnorm);
        if beta <= tol * bnorm {
            report.converged = true;
            return (x, report);
        }
        let m = restart.min(max_iter - report.iterations);
        let mut v: Vec<DVector<f64>> = vec![r / beta];
        let mut h = DMatrix::<f64>::zeros(m + 1, m);
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = DVector::<f64>::zeros(m + 1);
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let mut w = apply(&v[k]);
            for i in 0..=k {
                h[(i, k)] = w.dot(&v[i]);
                w.axpy(-h[(i, k)], &v[i], 1.0);
            }
            // second pass keeps the basis orthogonal when the spectrum clusters
            for i in 0..=k {
                let c = w.dot(&v[i]);
                h[(i, k)] += c;
                w.axpy(-c, &v[i], 1.0);
            }
            h[(k + 1, k)] = w.norm();
            for i in 0..k {
                let t = cs[i] * h[(i, k)] + sn[i] * h[(i + 1, k)];
                h[(i + 1, k)] = -sn[i] * h[(i, k)] + cs[i] * h[(i + 1, k)];
                h[(i, k)] = t;
            }
            let den = h[(k, k)].hypot(h[(k + 1, k)]);
            cs[k] = h[(k, k)] / den;
            sn[k] = h[(k + 1, k)] / den;
            h[(k, k)] = den;
            h[(k + 1, k)] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            report.iterations += 1;
            k_used = k + 1;
            let hn = w.norm();
            if g[k + 1].abs() <= 0.1 * tol * bnorm || hn == 0.0 {
                break;
            }
            v.push(w / hn);
        }
        let mut y = DVector::zeros(k_used);
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[(i, j)] * y[j];
            }
            y[i] = s / h[(i, i)];
        }
        for (i, yi) in y.iter().enumerate() {
            x.axpy(*yi, &v[i], 1.0);
        }
    }
    let r = (b - apply(&x)).norm() / bnorm;
    report.history.push(r);
    report.converged = r <= tol;
    (x, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 60;
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 + i as f64 * 0.01 } else { 0.3 / (1.0 + (i as f64 - 2.0 * j as f64).abs()) });
        let xs = DVector::from_fn(n, |i, _| (i as f64).sin());
        let b = &a * &xs;
        let (x, rep) = gmres(|v| &a * v, &b, 1e-13, 15, 500);
        assert!(rep.converged, "{:?}", rep.history);
        assert!((x - xs).amax() < 1e-11);
    }
}
