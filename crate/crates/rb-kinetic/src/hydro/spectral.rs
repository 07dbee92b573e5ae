//! Fourier (x) by Chebyshev collocation (z) machinery shared by the roll
//! solver and the DNS.
//!
//! A field is stored as its nonnegative Fourier modes `f_m(z_j)`, `m = 0..=M`,
//! sampled at the Gauss-Lobatto nodes `z_j = pi cos(pi j / N)`. The physical
//! field is `f(x, z) = sum_m f_m(z) e^{i m k0 x} + c.c.` over `m >= 1` plus
//! `f_0`. Products are evaluated on `n_x >= 3M + 1` points, which removes
//! quadratic aliasing exactly.

use crate::quadrature::{cheb_diff, cheb_nodes, clenshaw_curtis};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

pub type Modal = Vec<DVector<Complex64>>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Aspect parameter: x-period is `2 pi mu`.
    pub mu: f64,
    pub nx: usize,
    pub nz: usize,
}

impl Geometry {
    pub fn new(mu: f64, nx: usize, nz: usize) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::Config(format!("mu must be positive, got {mu}")));
        }
        if nx < 4 {
            return Err(Error::Config(format!("N_x = {nx} leaves no dealiased modes")));
        }
        if nz < 8 {
            return Err(Error::Config(format!("N_z = {nz} is too small")));
        }
        Ok(Self { mu, nx, nz })
    }

    /// Largest retained Fourier index (2/3 rule).
    pub fn modes(&self) -> usize {
        (self.nx - 1) / 3
    }

    pub fn k0(&self) -> f64 {
        1.0 / self.mu
    }

    pub fn length(&self) -> f64 {
        2.0 * PI * self.mu
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        let h = self.length() / self.nx as f64;
        (0..self.nx).map(|i| -PI * self.mu + i as f64 * h).collect()
    }
}

/// Differentiation, quadrature and FFT plans for one geometry.
#[derive(Clone)]
pub struct Spectral {
    pub geom: Geometry,
    pub z: Vec<f64>,
    /// d/dz on the nodes.
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    /// Clenshaw-Curtis weights for `int dz` over `[-pi, pi]`.
    pub wz: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Spectral {
    pub fn new(geom: Geometry) -> Self {
        let n = geom.nz;
        let z: Vec<f64> = cheb_nodes(n).into_iter().map(|x| PI * x).collect();
        let d1 = cheb_diff(n) / PI;
        let d2 = &d1 * &d1;
        let wz = clenshaw_curtis(n).into_iter().map(|w| PI * w).collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(geom.nx);
        let inv = planner.plan_fft_inverse(geom.nx);
        Self { geom, z, d1, d2, wz, fwd, inv }
    }

    pub fn npts(&self) -> usize {
        self.geom.nz + 1
    }

    pub fn kappa(&self, m: usize) -> f64 {
        m as f64 * self.geom.k0()
    }

    pub fn zeros(&self) -> Modal {
        vec![DVector::zeros(self.npts()); self.geom.modes() + 1]
    }

    /// Real matrix times complex vector.
    pub fn apply(mat: &DMatrix<f64>, v: &DVector<Complex64>) -> DVector<Complex64> {
        let n = v.len();
        let mut out = DVector::zeros(n);
        for i in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for j in 0..n {
                s += v[j] * mat[(i, j)];
            }
            out[i] = s;
        }
        out
    }

    pub fn dz(&self, f: &Modal) -> Modal {
        f.iter().map(|v| Self::apply(&self.d1, v)).collect()
    }

    pub fn dx(&self, f: &Modal) -> Modal {
        f.iter()
            .enumerate()
            .map(|(m, v)| v * Complex64::new(0.0, self.kappa(m)))
            .collect()
    }

    /// `(D^2 - kappa_m^2) f` for every mode.
    pub fn laplacian(&self, f: &Modal) -> Modal {
        f.iter()
            .enumerate()
            .map(|(m, v)| Self::apply(&self.d2, v) - v * Complex64::new(self.kappa(m).powi(2), 0.0))
            .collect()
    }

    /// Physical values, row per z node, column per x node.
    pub fn to_physical(&self, f: &Modal) -> DMatrix<f64> {
        let (nx, nzp) = (self.geom.nx, self.npts());
        let mut out = DMatrix::zeros(nzp, nx);
        let mut buf = vec![Complex64::new(0.0, 0.0); nx];
        for j in 0..nzp {
            buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for (m, v) in f.iter().enumerate() {
                // x starts at -mu pi, which contributes (-1)^m.
                let c = if m % 2 == 0 { v[j] } else { -v[j] };
                if m == 0 {
                    buf[0] = Complex64::new(c.re, 0.0);
                } else {
                    buf[m] = c;
                    buf[nx - m] = c.conj();
                }
            }
            self.inv.process(&mut buf);
            for i in 0..nx {
                out[(j, i)] = buf[i].re;
            }
        }
        out
    }

    pub fn to_modal(&self, g: &DMatrix<f64>) -> Modal {
        let (nx, nzp) = (self.geom.nx, self.npts());
        let mm = self.geom.modes();
        let mut out = self.zeros();
        let mut buf = vec![Complex64::new(0.0, 0.0); nx];
        for j in 0..nzp {
            for i in 0..nx {
                buf[i] = Complex64::new(g[(j, i)], 0.0);
            }
            self.fwd.process(&mut buf);
            for m in 0..=mm {
                let c = buf[m] / nx as f64;
                out[m][j] = if m % 2 == 0 { c } else { -c };
            }
            out[0][j].im = 0.0;
        }
        out
    }

    /// Modal `u . grad f` for the velocity of streamfunction `psi`
    /// (`u_x = -d_z psi`, `u_z = d_x psi`), truncated to the kept modes.
    pub fn advect(&self, psi: &Modal, f: &Modal) -> Modal {
        let ux = self.to_physical(&self.dz(psi));
        let uz = self.to_physical(&self.dx(psi));
        let fx = self.to_physical(&self.dx(f));
        let fz = self.to_physical(&self.dz(f));
        let prod = (-ux).component_mul(&fx) + uz.component_mul(&fz);
        self.to_modal(&prod)
    }

    /// `int_Omega f g` for two real fields in modal form.
    pub fn inner(&self, f: &Modal, g: &Modal) -> f64 {
        let len = self.geom.length();
        let mut s = 0.0;
        for (m, (a, b)) in f.iter().zip(g).enumerate() {
            let c = if m == 0 { 1.0 } else { 2.0 };
            for j in 0..self.npts() {
                s += c * self.wz[j] * (a[j] * b[j].conj()).re;
            }
        }
        len * s
    }

    pub fn norm(&self, f: &Modal) -> f64 {
        self.inner(f, f).max(0.0).sqrt()
    }
}

/// Elementwise combination `a f + b g`.
pub fn axpby(a: f64, f: &Modal, b: f64, g: &Modal) -> Modal {
    f.iter().zip(g).map(|(x, y)| x * Complex64::new(a, 0.0) + y * Complex64::new(b, 0.0)).collect()
}
