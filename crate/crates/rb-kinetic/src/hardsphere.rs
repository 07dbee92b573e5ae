//! Galerkin matrix of the hard-sphere linearized operator in the
//! Laguerre x spherical-harmonic polynomial basis.
//!
//! Basis functions are `h_lnm(v) = N_ln L_n^{(l+1/2)}(|v|^2/2) |v|^l Y_lm(v/|v|)`
//! with real, orthonormal spherical harmonics; they span polynomials of total
//! degree at most `D`. Isotropy makes the matrix block diagonal in `(l, m)`
//! and independent of `m`.

use crate::quadrature::{gauss_hermite_prob, gauss_legendre, gauss_r3_gaussian};
use crate::velocity::VelocityGrid;
use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

/// Index entry of a basis function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BasisLabel {
    pub l: usize,
    pub n: usize,
    pub m: i64,
}

pub fn basis_labels(degree: usize) -> Vec<BasisLabel> {
    let mut out = vec![];
    for l in 0..=degree {
        for n in 0..=(degree - l) / 2 {
            for m in -(l as i64)..=(l as i64) {
                out.push(BasisLabel { l, n, m });
            }
        }
    }
    out
}

fn radial_norm(l: usize, n: usize) -> f64 {
    let a = l as f64 + 0.5;
    let ln = -1.5 * (2.0 * PI).ln() + a * 2f64.ln() + ln_gamma(n as f64 + a + 1.0)
        - ln_gamma(n as f64 + 1.0);
    (-0.5 * ln).exp()
}

/// Generalized Laguerre L_0..L_nmax with parameter alpha at s.
fn laguerre(nmax: usize, alpha: f64, s: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if nmax >= 1 {
        out[1] = 1.0 + alpha - s;
    }
    for k in 1..nmax {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0 + alpha - s) * out[k] - (kf + alpha) * out[k - 1]) / (kf + 1.0);
    }
}

/// Real solid harmonics r^l Y_lm(v) for l <= lmax, index l*l + l + m.
pub fn solid_harmonics(lmax: usize, v: [f64; 3]) -> Vec<f64> {
    let (x, y, z) = (v[0], v[1], v[2]);
    let rho = (x * x + y * y).sqrt();
    let phi = y.atan2(x);
    let r2 = x * x + y * y + z * z;
    // Unnormalized solid associated Legendre: r^l P_l^m(cos) = rho^m * poly.
    // Use the recurrence on Q_l^m(z, r^2) = r^l P_l^m(z/r).
    let mut q = vec![vec![0.0; lmax + 1]; lmax + 1];
    q[0][0] = 1.0;
    for m in 0..=lmax {
        if m > 0 {
            q[m][m] = -(2.0 * m as f64 - 1.0) * rho * q[m - 1][m - 1];
        }
        if m < lmax {
            q[m + 1][m] = (2.0 * m as f64 + 1.0) * z * q[m][m];
        }
        for l in (m + 1)..lmax {
            let lf = l as f64;
            let mf = m as f64;
            q[l + 1][m] = ((2.0 * lf + 1.0) * z * q[l][m] - (lf + mf) * r2 * q[l - 1][m]) / (lf - mf + 1.0);
        }
    }
    let mut out = vec![0.0; (lmax + 1) * (lmax + 1)];
    for l in 0..=lmax {
        for m in 0..=l {
            let lnf = ln_gamma((l - m) as f64 + 1.0) - ln_gamma((l + m) as f64 + 1.0);
            let mut nlm = ((2.0 * l as f64 + 1.0) / (4.0 * PI)).sqrt() * (0.5 * lnf).exp();
            if m > 0 {
                nlm *= 2f64.sqrt();
            }
            let base = l * l + l;
            if m == 0 {
                out[base] = nlm * q[l][0];
            } else {
                out[base + m] = nlm * q[l][m] * (m as f64 * phi).cos();
                out[base - m] = nlm * q[l][m] * (m as f64 * phi).sin();
            }
        }
    }
    out
}

/// Basis values on the velocity grid, one column per label.
pub fn basis_on_grid(grid: &VelocityGrid, degree: usize) -> (Vec<BasisLabel>, DMatrix<f64>) {
    let labels = basis_labels(degree);
    let mut h = DMatrix::<f64>::zeros(grid.len(), labels.len());
    let mut lag = vec![0.0; degree / 2 + 2];
    for (i, &v) in grid.nodes.iter().enumerate() {
        let sh = solid_harmonics(degree, v);
        let s = 0.5 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
        for (k, lb) in labels.iter().enumerate() {
            laguerre(lb.n, lb.l as f64 + 0.5, s, &mut lag);
            let idx = (lb.l * lb.l) as i64 + lb.l as i64 + lb.m;
            h[(i, k)] = radial_norm(lb.l, lb.n) * lag[lb.n] * sh[idx as usize];
        }
    }
    (labels, h)
}

/// Radial blocks A^l_{nn'} = (h_lnm, L h_ln'm) of the hard-sphere operator
/// with collision kernel |(v - v_*) . omega| / 2.
pub fn radial_blocks(degree: usize) -> Vec<DMatrix<f64>> {
    let nw = degree / 2 + 4;
    let (gx, gw) = gauss_hermite_prob(nw);
    // W = (v + v_*)/2 ~ N(0, I/2)
    let s2 = 0.5f64.sqrt();
    let (rx, rw) = gauss_r3_gaussian(degree / 2 + 4);
    let nth = degree / 2 + 4;
    let (cx, cw) = gauss_legendre(nth);
    let nph = 2 * degree + 2;

    let mut sig = vec![];
    for (c, w) in cx.iter().zip(&cw) {
        let st = (1.0 - c * c).max(0.0).sqrt();
        for k in 0..nph {
            let ph = 2.0 * PI * k as f64 / nph as f64;
            sig.push(([st * ph.cos(), st * ph.sin(), *c], w * 2.0 * PI / nph as f64));
        }
    }
    let nmax = degree / 2;
    let mut blocks: Vec<DMatrix<f64>> = (0..=degree)
        .map(|l| DMatrix::zeros((degree - l) / 2 + 1, (degree - l) / 2 + 1))
        .collect();
    let norms: Vec<Vec<f64>> = (0..=degree)
        .map(|l| (0..=(degree - l) / 2).map(|n| radial_norm(l, n)).collect())
        .collect();
    let mut lag = vec![0.0; nmax + 2];
    let sgn = [-1.0, -1.0, 1.0, 1.0];
    // Radial values y[l][n][a] and pair polynomials q[l][a][b].
    let mut y = vec![vec![[0.0f64; 4]; nmax + 1]; degree + 1];
    let mut q = vec![[[0.0f64; 4]; 4]; degree + 1];
    for i in 0..nw {
        for j in 0..nw {
            for k in 0..nw {
                let wv = [s2 * gx[i], s2 * gx[j], s2 * gx[k]];
                let ww = gw[i] * gw[j] * gw[k];
                for (r, rwt) in rx.iter().zip(&rw) {
                    // r^3 = r^2 (density of |V|) times |V| from the kernel.
                    let wr = ww * rwt / (2.0 * PI.sqrt());
                    for (s, sw) in &sig {
                        let h = 0.5 * r;
                        let pts = [
                            [wv[0], wv[1], wv[2] + h],
                            [wv[0], wv[1], wv[2] - h],
                            [wv[0] + h * s[0], wv[1] + h * s[1], wv[2] + h * s[2]],
                            [wv[0] - h * s[0], wv[1] - h * s[1], wv[2] - h * s[2]],
                        ];
                        let sq: Vec<f64> = pts.iter().map(|p| p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).collect();
                        for l in 0..=degree {
                            for a in 0..4 {
                                laguerre(nmax, l as f64 + 0.5, 0.5 * sq[a], &mut lag);
                                for n in 0..=(degree - l) / 2 {
                                    y[l][n][a] = sgn[a] * norms[l][n] * lag[n];
                                }
                            }
                        }
                        for a in 0..4 {
                            for b in a..4 {
                                let d = pts[a][0] * pts[b][0] + pts[a][1] * pts[b][1] + pts[a][2] * pts[b][2];
                                let nn = sq[a] * sq[b];
                                let mut qm1 = 1.0;
                                let mut ql = d;
                                q[0][a][b] = 1.0;
                                if degree >= 1 {
                                    q[1][a][b] = d;
                                }
                                for l in 1..degree {
                                    let lf = l as f64;
                                    let qn = ((2.0 * lf + 1.0) * d * ql - lf * nn * qm1) / (lf + 1.0);
                                    q[l + 1][a][b] = qn;
                                    qm1 = ql;
                                    ql = qn;
                                }
                                for ql in q.iter_mut() {
                                    ql[b][a] = ql[a][b];
                                }
                            }
                        }
                        let wt = wr * sw;
                        for l in 0..=degree {
                            let nb = (degree - l) / 2 + 1;
                            for n in 0..nb {
                                // t_b = sum_a y_n[a] q[a][b]
                                let mut t = [0.0; 4];
                                for b in 0..4 {
                                    for a in 0..4 {
                                        t[b] += y[l][n][a] * q[l][a][b];
                                    }
                                }
                                for n2 in n..nb {
                                    let mut acc = 0.0;
                                    for b in 0..4 {
                                        acc += t[b] * y[l][n2][b];
                                    }
                                    blocks[l][(n, n2)] += wt * acc;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    for (l, b) in blocks.iter_mut().enumerate() {
        let nb = b.nrows();
        for n in 0..nb {
            for n2 in n..nb {
                let v = -b[(n, n2)] / (64.0 * PI);
                b[(n, n2)] = v;
                b[(n2, n)] = v;
            }
        }
        // Collision invariants are annihilated exactly.
        let zero: &[usize] = match l {
            0 => &[0, 1],
            1 => &[0],
            _ => &[],
        };
        for &z in zero {
            if z < nb {
                for k in 0..nb {
                    b[(z, k)] = 0.0;
                    b[(k, z)] = 0.0;
                }
            }
        }
    }
    blocks
}

/// Full Galerkin matrix in the label ordering of [`basis_labels`].
pub fn galerkin_matrix(degree: usize) -> DMatrix<f64> {
    let blocks = radial_blocks(degree);
    let labels = basis_labels(degree);
    let m = labels.len();
    DMatrix::from_fn(m, m, |i, j| {
        let (a, b) = (labels[i], labels[j]);
        if a.l == b.l && a.m == b.m {
            blocks[a.l][(a.n, b.n)]
        } else {
            0.0
        }
    })
}
