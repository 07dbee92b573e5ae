//! Phase-space fields on a periodic-in-x, Chebyshev-in-z space grid.

use crate::hydro::spectral::{Modal, Spectral};
use crate::quadrature::{cheb_coeffs, cheb_diff, cheb_nodes, clenshaw_curtis};
use crate::velocity::VelocityGrid;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// Space grid: `nx` uniform points on `[-mu pi, mu pi)` times the
/// Gauss-Lobatto nodes `z_j = pi cos(pi j / nz)`. Matrices are stored with
/// a row per z node and a column per x node.
#[derive(Clone)]
pub struct SpaceGrid {
    pub mu: f64,
    pub nx: usize,
    pub nz: usize,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub d1: DMatrix<f64>,
    pub wz: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl SpaceGrid {
    pub fn new(mu: f64, nx: usize, nz: usize) -> Result<Self> {
        if !(mu > 0.0) || nx < 2 || nz < 4 {
            return Err(Error::Config(format!("bad space grid mu = {mu}, nx = {nx}, nz = {nz}")));
        }
        let h = 2.0 * PI * mu / nx as f64;
        let x = (0..nx).map(|i| -PI * mu + i as f64 * h).collect();
        let z = cheb_nodes(nz).into_iter().map(|v| PI * v).collect();
        let d1 = cheb_diff(nz) / PI;
        let wz = clenshaw_curtis(nz).into_iter().map(|w| PI * w).collect();
        let mut planner = FftPlanner::new();
        Ok(Self { mu, nx, nz, x, z, d1, wz, fwd: planner.plan_fft_forward(nx), inv: planner.plan_fft_inverse(nx) })
    }

    pub fn nzp(&self) -> usize {
        self.nz + 1
    }

    pub fn length(&self) -> f64 {
        2.0 * PI * self.mu
    }

    pub fn area(&self) -> f64 {
        self.length() * 2.0 * PI
    }

    fn wavenumber(&self, m: usize) -> f64 {
        let k0 = 1.0 / self.mu;
        if 2 * m < self.nx {
            m as f64 * k0
        } else if 2 * m == self.nx {
            0.0
        } else {
            -((self.nx - m) as f64) * k0
        }
    }

    /// Spectral x-derivative (Nyquist mode dropped).
    pub fn dx(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(f.nrows(), f.ncols());
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nx];
        for j in 0..f.nrows() {
            for i in 0..self.nx {
                buf[i] = Complex64::new(f[(j, i)], 0.0);
            }
            self.fwd.process(&mut buf);
            for (m, c) in buf.iter_mut().enumerate() {
                *c *= Complex64::new(0.0, self.wavenumber(m) / self.nx as f64);
            }
            self.inv.process(&mut buf);
            for i in 0..self.nx {
                out[(j, i)] = buf[i].re;
            }
        }
        out
    }

    pub fn dz(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        &self.d1 * f
    }

    /// Solve `grad r = -(mx, mz)` in the least-squares sense used for the
    /// pressure: nonzero x-modes from the x-component, the x-mean from the
    /// z-component. The result has zero mean.
    pub fn potential(&self, mx: &DMatrix<f64>, mz: &DMatrix<f64>) -> DMatrix<f64> {
        let nzp = self.nzp();
        let mut out = DMatrix::zeros(nzp, self.nx);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.nx];
        // x-mean of mz, integrated in z.
        let mean_z: Vec<f64> = (0..nzp).map(|j| mz.row(j).sum() / self.nx as f64).collect();
        let anti = self.antiderivative(&mean_z);
        for j in 0..nzp {
            for i in 0..self.nx {
                buf[i] = Complex64::new(mx[(j, i)], 0.0);
            }
            self.fwd.process(&mut buf);
            for (m, c) in buf.iter_mut().enumerate() {
                let k = self.wavenumber(m);
                *c = if k == 0.0 { Complex64::new(0.0, 0.0) } else { -*c / Complex64::new(0.0, k * self.nx as f64) };
            }
            self.inv.process(&mut buf);
            for i in 0..self.nx {
                out[(j, i)] = buf[i].re - anti[j];
            }
        }
        let mean = self.integrate(&out) / self.area();
        out.add_scalar_mut(-mean);
        out
    }

    /// `int_{-pi}^{z} f` on the nodes via the Chebyshev antiderivative.
    pub fn antiderivative(&self, f: &[f64]) -> Vec<f64> {
        let n = self.nz;
        let c = cheb_coeffs(f);
        // Integrate in xi = z / pi, then scale.
        let mut b = vec![0.0; n + 2];
        for k in 1..=n + 1 {
            let cm = if k == 1 { 2.0 * c[0] } else { c[k - 1] };
            let cp = if k < n { c[k + 1] } else { 0.0 };
            b[k] = (cm - cp) / (2.0 * k as f64);
        }
        let at = |x: f64| crate::quadrature::cheb_eval(&b, x);
        let base = at(-1.0);
        self.z.iter().map(|&z| PI * (at(z / PI) - base)).collect()
    }

    /// `int_Omega f dx dz` over all nodes.
    pub fn integrate(&self, f: &DMatrix<f64>) -> f64 {
        let h = self.length() / self.nx as f64;
        (0..self.nzp()).map(|j| self.wz[j] * h * f.row(j).sum()).sum()
    }

    /// Discrete L2 norm over the interior nodes `2..=nz-2` (wall rows carry
    /// boundary conditions rather than equations).
    pub fn interior_norm(&self, f: &DMatrix<f64>) -> f64 {
        let h = self.length() / self.nx as f64;
        let mut s = 0.0;
        for j in 2..=self.nz - 2 {
            s += self.wz[j] * h * f.row(j).map(|v| v * v).sum();
        }
        s.sqrt()
    }

    /// Evaluate a modal hydrodynamic field on this grid.
    pub fn sample(&self, sp: &Spectral, f: &Modal) -> Result<DMatrix<f64>> {
        if sp.geom.nz != self.nz || (sp.geom.mu - self.mu).abs() > 1e-14 * self.mu {
            return Err(Error::Config("hydrodynamic and kinetic grids differ".into()));
        }
        let k0 = sp.geom.k0();
        Ok(DMatrix::from_fn(self.nzp(), self.nx, |j, i| {
            let mut s = f[0][j].re;
            for (m, v) in f.iter().enumerate().skip(1) {
                s += 2.0 * (v[j] * Complex64::from_polar(1.0, m as f64 * k0 * self.x[i])).re;
            }
            s
        }))
    }
}

/// Perturbation `f(x, z, v)` stored per space point.
#[derive(Clone, Debug)]
pub struct KineticField {
    pub nzp: usize,
    pub nx: usize,
    pub nv: usize,
    pub data: Vec<f64>,
}

impl KineticField {
    pub fn zeros(nzp: usize, nx: usize, nv: usize) -> Self {
        Self { nzp, nx, nv, data: vec![0.0; nzp * nx * nv] }
    }

    pub fn like(other: &Self) -> Self {
        Self::zeros(other.nzp, other.nx, other.nv)
    }

    fn offset(&self, j: usize, i: usize) -> usize {
        (j * self.nx + i) * self.nv
    }

    pub fn point(&self, j: usize, i: usize) -> &[f64] {
        let o = self.offset(j, i);
        &self.data[o..o + self.nv]
    }

    pub fn point_mut(&mut self, j: usize, i: usize) -> &mut [f64] {
        let o = self.offset(j, i);
        &mut self.data[o..o + self.nv]
    }

    pub fn point_vec(&self, j: usize, i: usize) -> DVector<f64> {
        DVector::from_column_slice(self.point(j, i))
    }

    /// Build a field point by point.
    pub fn from_points(nzp: usize, nx: usize, nv: usize, mut f: impl FnMut(usize, usize) -> DVector<f64>) -> Self {
        let mut out = Self::zeros(nzp, nx, nv);
        for j in 0..nzp {
            for i in 0..nx {
                out.point_mut(j, i).copy_from_slice(f(j, i).as_slice());
            }
        }
        out
    }

    /// Values at velocity node `k` as a space matrix.
    pub fn component(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.nzp, self.nx, |j, i| self.data[self.offset(j, i) + k])
    }

    pub fn set_component(&mut self, k: usize, m: &DMatrix<f64>) {
        for j in 0..self.nzp {
            for i in 0..self.nx {
                let o = self.offset(j, i) + k;
                self.data[o] = m[(j, i)];
            }
        }
    }

    pub fn axpy(&mut self, a: f64, other: &Self) {
        self.data.iter_mut().zip(&other.data).for_each(|(x, y)| *x += a * y);
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { data: self.data.iter().map(|v| a * v).collect(), ..self.clone() }
    }

    /// Moment `(phi, f)` at every space point.
    pub fn moment(&self, grid: &VelocityGrid, phi: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.nzp, self.nx, |j, i| {
            self.point(j, i).iter().zip(phi.iter()).zip(grid.weights.iter()).map(|((f, p), w)| f * p * w).sum()
        })
    }

    /// Wall trace: row `j = 0` is `z = pi`, row `nz` is `z = -pi`.
    pub fn wall_trace(&self, top: bool) -> Vec<DVector<f64>> {
        let j = if top { 0 } else { self.nzp - 1 };
        (0..self.nx).map(|i| self.point_vec(j, i)).collect()
    }

    /// Norm `(int dx dz (f, f))^{1/2}` over the interior nodes.
    pub fn interior_norm(&self, space: &SpaceGrid, grid: &VelocityGrid) -> f64 {
        let sq = DMatrix::from_fn(self.nzp, self.nx, |j, i| {
            self.point(j, i).iter().zip(grid.weights.iter()).map(|(f, w)| w * f * f).sum::<f64>().sqrt()
        });
        space.interior_norm(&sq)
    }

    /// `v . grad f` with spectral derivatives.
    pub fn transport(&self, space: &SpaceGrid, grid: &VelocityGrid) -> Self {
        let mut out = Self::like(self);
        for k in 0..self.nv {
            let c = self.component(k);
            let v = grid.nodes[k];
            let t = space.dx(&c) * v[0] + space.dz(&c) * v[2];
            out.set_component(k, &t);
        }
        out
    }
}
