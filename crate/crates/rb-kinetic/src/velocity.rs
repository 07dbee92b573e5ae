//! Tensor Gauss-Hermite velocity grid, collision invariants and the
//! hydrodynamic projection.

use crate::quadrature::gauss_hermite_prob;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Quadrature scheme for the velocity grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocityScheme {
    GaussHermiteTensor,
}

/// Velocity nodes with Maxwellian-weighted quadrature weights.
///
/// Node `(ix, iy, iz)` sits at flat index `(ix * n + iy) * n + iz`, so each
/// run of `n` consecutive entries is a line along `v_z`.
#[derive(Clone, Debug)]
pub struct VelocityGrid {
    pub order: usize,
    pub abscissae: Vec<f64>,
    pub weights_1d: Vec<f64>,
    pub nodes: Vec<[f64; 3]>,
    pub weights: DVector<f64>,
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
    /// Per-line matrix of `f -> M^{-1} d/dv_z (M f)`.
    force_line: DMatrix<f64>,
    pub kernel: KernelBasis,
}

/// Orthonormal collision invariants on the grid, stored as columns.
#[derive(Clone, Debug)]
pub struct KernelBasis {
    pub psi: DMatrix<f64>,
    pub gram: DMatrix<f64>,
}

pub fn build_velocity_grid(order_per_axis: usize, scheme: VelocityScheme) -> Result<VelocityGrid> {
    let VelocityScheme::GaussHermiteTensor = scheme;
    if order_per_axis < 4 {
        return Err(Error::Config(format!(
            "velocity order {order_per_axis} cannot integrate |v|^4 moments (need >= 4)"
        )));
    }
    if order_per_axis % 2 == 1 {
        return Err(Error::Config(format!(
            "velocity order {order_per_axis} is odd and puts a node at v_z = 0"
        )));
    }
    let n = order_per_axis;
    let (x, w) = gauss_hermite_prob(n);
    let mut nodes = Vec::with_capacity(n * n * n);
    let mut weights = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                nodes.push([x[i], x[j], x[k]]);
                weights.push(w[i] * w[j] * w[k]);
            }
        }
    }
    let positive = (0..nodes.len()).filter(|&i| nodes[i][2] > 0.0).collect();
    let negative = (0..nodes.len()).filter(|&i| nodes[i][2] < 0.0).collect();
    let force_line = hermite_force_matrix(&x, &w);
    let weights = DVector::from_vec(weights);
    let kernel = kernel_basis(&nodes, &weights);
    Ok(VelocityGrid {
        order: n,
        abscissae: x,
        weights_1d: w,
        nodes,
        weights,
        positive,
        negative,
        force_line,
        kernel,
    })
}

/// Values of He_0..He_{n} at the given points, row per point.
fn hermite_table(x: &[f64], kmax: usize) -> DMatrix<f64> {
    let mut t = DMatrix::<f64>::zeros(x.len(), kmax + 1);
    for (i, &xi) in x.iter().enumerate() {
        t[(i, 0)] = 1.0;
        if kmax >= 1 {
            t[(i, 1)] = xi;
        }
        for k in 1..kmax {
            t[(i, k + 1)] = xi * t[(i, k)] - k as f64 * t[(i, k - 1)];
        }
    }
    t
}

// M^{-1} (M He_k)' = -He_{k+1}; the He_n image vanishes on the nodes.
fn hermite_force_matrix(x: &[f64], w: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let he = hermite_table(x, n);
    let mut fact = vec![1.0; n + 1];
    for k in 1..=n {
        fact[k] = fact[k - 1] * k as f64;
    }
    // coefficient map: c_k = sum_i w_i He_k(x_i) f_i / k!
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n - 1 {
                s -= he[(i, k + 1)] * w[j] * he[(j, k)] / fact[k];
            }
            m[(i, j)] = s;
        }
    }
    m
}

fn kernel_basis(nodes: &[[f64; 3]], weights: &DVector<f64>) -> KernelBasis {
    let n = nodes.len();
    let mut psi = DMatrix::<f64>::zeros(n, 5);
    for (i, v) in nodes.iter().enumerate() {
        let v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        psi[(i, 0)] = 1.0;
        psi[(i, 1)] = v[0];
        psi[(i, 2)] = v[1];
        psi[(i, 3)] = v[2];
        psi[(i, 4)] = (v2 - 3.0) / 6f64.sqrt();
    }
    let wpsi = DMatrix::from_fn(n, 5, |i, j| weights[i] * psi[(i, j)]);
    let gram = psi.transpose() * wpsi;
    KernelBasis { psi, gram }
}

impl VelocityGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn speed(&self, i: usize) -> f64 {
        let v = self.nodes[i];
        (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
    }

    /// Tabulate a velocity function.
    pub fn eval(&self, f: impl Fn([f64; 3]) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.nodes.iter().map(|&v| f(v)))
    }

    pub fn vz(&self) -> DVector<f64> {
        self.eval(|v| v[2])
    }

    /// M-weighted inner product (f, g).
    pub fn inner(&self, f: &DVector<f64>, g: &DVector<f64>) -> f64 {
        let mut s = 0.0;
        for i in 0..self.len() {
            s += self.weights[i] * f[i] * g[i];
        }
        s
    }

    pub fn norm(&self, f: &DVector<f64>) -> f64 {
        self.inner(f, f).sqrt()
    }

    /// Coefficients (f, psi_j).
    pub fn kernel_coeffs(&self, f: &DVector<f64>) -> [f64; 5] {
        let mut c = [0.0; 5];
        for (j, cj) in c.iter_mut().enumerate() {
            *cj = self.inner(f, &self.kernel.psi.column(j).into_owned());
        }
        c
    }

    /// Combination sum_j c_j psi_j.
    pub fn from_coeffs(&self, c: &[f64; 5]) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        for (j, cj) in c.iter().enumerate() {
            out.axpy(*cj, &self.kernel.psi.column(j), 1.0);
        }
        out
    }

    /// Hydrodynamic projection P f.
    pub fn project_kernel(&self, f: &DVector<f64>) -> DVector<f64> {
        self.from_coeffs(&self.kernel_coeffs(f))
    }

    /// (I - P) f.
    pub fn project_perp(&self, f: &DVector<f64>) -> DVector<f64> {
        f - self.project_kernel(f)
    }

    /// M^{-1} d/dv_z (M f), exact for the Hermite interpolant and mass
    /// conserving on the grid.
    pub fn force(&self, f: &[f64], out: &mut [f64]) {
        let n = self.order;
        for (line, o) in f.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += self.force_line[(i, j)] * line[j];
                }
                o[i] = s;
            }
        }
    }

    pub fn force_vec(&self, f: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        self.force(f.as_slice(), out.as_mut_slice());
        out
    }

    /// Per-line force matrix (acts along v_z).
    pub fn force_line(&self) -> &DMatrix<f64> {
        &self.force_line
    }

    /// Half-space flux sum over v_z > 0 of w v_z.
    pub fn half_flux(&self) -> f64 {
        self.positive
            .iter()
            .map(|&i| self.weights[i] * self.nodes[i][2])
            .sum()
    }
}
