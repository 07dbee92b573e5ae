//! Linearized collision operators.
//!
//! Every operator is stored as a diagonal plus a finite-rank correction,
//! `L f = d * f + A_l (A_r^T W f)`, where `W` holds the Maxwellian quadrature
//! weights. A dense 16^3 x 16^3 matrix would not fit in memory comfortably,
//! and every solve we need reduces to a small capacitance system in this form.

use crate::hardsphere::{basis_on_grid, galerkin_matrix};
use crate::velocity::VelocityGrid;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionModel {
    BgkUnit,
    NuBgk,
    HardsphereTruncated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    LModel,
    LHardsphere,
    NOfQ,
    LJ,
    LJAdjoint,
}

#[derive(Clone, Debug)]
pub struct LinearOperator {
    pub kind: OperatorKind,
    pub model: CollisionModel,
    pub diag: DVector<f64>,
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub nu: DVector<f64>,
    pub kernel: DMatrix<f64>,
    pub adjoint_kernel: DMatrix<f64>,
    pub symmetric: bool,
    /// Galerkin degree for the hard-sphere tier, 0 otherwise.
    pub degree: usize,
}

/// Hard-sphere collision frequency pi * E|v - v_*| in closed form.
pub fn collision_frequency(v: [f64; 3]) -> f64 {
    let s = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let tail = (2.0 / PI).sqrt() * (-0.5 * s * s).exp();
    if s < 1e-6 {
        // (s + 1/s) erf(s/sqrt2) -> sqrt(2/pi) (1 + s^2 (1 - 1/6) ...)
        return PI * (2.0 * (2.0 / PI).sqrt() + s * s * (2.0 / PI).sqrt() / 3.0);
    }
    let erf = statrs::function::erf::erf(s / 2f64.sqrt());
    PI * ((s + 1.0 / s) * erf + tail)
}

fn scale_rows(d: &DVector<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| d[i] * m[(i, j)])
}

impl LinearOperator {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.left.ncols()
    }

    /// `A_r^T W f`.
    pub fn moments(&self, f: &DVector<f64>) -> DVector<f64> {
        let wf = self.weights.component_mul(f);
        self.right.tr_mul(&wf)
    }

    pub fn apply(&self, f: &DVector<f64>) -> DVector<f64> {
        let mut out = self.diag.component_mul(f);
        out.gemv(1.0, &self.left, &self.moments(f), 1.0);
        out
    }

    /// Adjoint in the M-weighted inner product.
    pub fn apply_adjoint(&self, g: &DVector<f64>) -> DVector<f64> {
        let wg = self.weights.component_mul(g);
        let mut out = self.diag.component_mul(g);
        out.gemv(1.0, &self.right, &self.left.tr_mul(&wg), 1.0);
        out
    }

    /// Dense matrix acting on grid values. Only sensible on small grids.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let wr = scale_rows(&self.weights, &self.right);
        let mut m = &self.left * wr.transpose();
        for i in 0..self.len() {
            m[(i, i)] += self.diag[i];
        }
        m
    }

    pub fn adjoint(&self) -> LinearOperator {
        let mut a = self.clone();
        std::mem::swap(&mut a.left, &mut a.right);
        std::mem::swap(&mut a.kernel, &mut a.adjoint_kernel);
        if self.kind == OperatorKind::LJ {
            a.kind = OperatorKind::LJAdjoint;
        }
        a
    }

    fn inner(&self, f: &DVector<f64>, g: &DVector<f64>) -> f64 {
        let mut s = 0.0;
        for i in 0..self.len() {
            s += self.weights[i] * f[i] * g[i];
        }
        s
    }

    /// Largest relative symmetry defect over a fixed family of probes.
    pub fn symmetry_defect(&self, grid: &VelocityGrid) -> f64 {
        let mut worst: f64 = 0.0;
        let probes: Vec<DVector<f64>> = (0..4)
            .map(|k| {
                let a = 0.37 + 0.21 * k as f64;
                grid.eval(|v| (a * v[0] + 0.3 * v[2] - 0.1 * k as f64).sin() + (a * v[1] * v[2]).cos() * (1.0 + 0.1 * v[2]))
            })
            .collect();
        for f in &probes {
            for g in &probes {
                let lhs = self.inner(f, &self.apply(g));
                let rhs = self.inner(&self.apply(f), g);
                let scale = self.inner(f, f).sqrt() * self.inner(g, g).sqrt();
                worst = worst.max((lhs - rhs).abs() / scale.max(1e-300));
            }
        }
        worst
    }

    /// Empirical bounds (min, max) of nu(v) / (1 + |v|) over the grid.
    pub fn nu_bounds(&self, grid: &VelocityGrid) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in 0..self.len() {
            let r = self.nu[i] / (1.0 + grid.speed(i));
            lo = lo.min(r);
            hi = hi.max(r);
        }
        (lo, hi)
    }
}

/// Assemble the linearized collision operator for one of the model tiers.
/// The hard-sphere tier uses Galerkin degree 6.
pub fn assemble_linearized_operator(grid: &VelocityGrid, model: CollisionModel) -> Result<LinearOperator> {
    assemble_with_degree(grid, model, 6)
}

pub fn assemble_with_degree(grid: &VelocityGrid, model: CollisionModel, degree: usize) -> Result<LinearOperator> {
    let n = grid.len();
    let psi = grid.kernel.psi.clone();
    let op = match model {
        CollisionModel::BgkUnit => LinearOperator {
            kind: OperatorKind::LModel,
            model,
            diag: DVector::from_element(n, -1.0),
            left: psi.clone(),
            right: psi.clone(),
            weights: grid.weights.clone(),
            nu: DVector::from_element(n, 1.0),
            kernel: psi.clone(),
            adjoint_kernel: psi,
            symmetric: true,
            degree: 0,
        },
        CollisionModel::NuBgk => {
            let nu = DVector::from_iterator(n, grid.nodes.iter().map(|&v| collision_frequency(v)));
            let nupsi = scale_rows(&nu, &psi);
            let c = psi.transpose() * scale_rows(&grid.weights, &nupsi);
            let cinv = c.try_inverse().ok_or(Error::Assembly { defect: f64::INFINITY, tol: 1e-11 })?;
            LinearOperator {
                kind: OperatorKind::LModel,
                model,
                diag: -nu.clone(),
                left: &nupsi * cinv,
                right: nupsi,
                weights: grid.weights.clone(),
                nu,
                kernel: psi.clone(),
                adjoint_kernel: psi,
                symmetric: true,
                degree: 0,
            }
        }
        CollisionModel::HardsphereTruncated => {
            if 2 * degree + 1 > 2 * grid.order - 1 {
                return Err(Error::Config(format!(
                    "velocity order {} cannot resolve Galerkin degree {degree}",
                    grid.order
                )));
            }
            let nu = DVector::from_iterator(n, grid.nodes.iter().map(|&v| collision_frequency(v)));
            let (_, h) = basis_on_grid(grid, degree);
            let lhat = galerkin_matrix(degree);
            let nuh = scale_rows(&nu, &h);
            let nhat = h.transpose() * scale_rows(&grid.weights, &nuh);
            // L = L_D P - (I-P) nu (I-P), P the projector on degree <= D.
            let m = h.ncols();
            let mut left = DMatrix::zeros(n, 2 * m);
            left.columns_mut(0, m).copy_from(&(&h * (&lhat - &nhat) + &nuh));
            left.columns_mut(m, m).copy_from(&h);
            let mut right = DMatrix::zeros(n, 2 * m);
            right.columns_mut(0, m).copy_from(&h);
            right.columns_mut(m, m).copy_from(&nuh);
            LinearOperator {
                kind: OperatorKind::LHardsphere,
                model,
                diag: -nu.clone(),
                left,
                right,
                weights: grid.weights.clone(),
                nu,
                kernel: psi.clone(),
                adjoint_kernel: psi,
                symmetric: true,
                degree,
            }
        }
    };
    let defect = op.symmetry_defect(grid);
    if defect > 1e-11 {
        return Err(Error::Assembly { defect, tol: 1e-11 });
    }
    Ok(op)
}

/// Factored solver for `L h = g`, `P h = 0`.
///
/// The kernel is deflated: `A = L - Psi Psi^T W` is invertible and agrees
/// with `L` on the complement of the kernel, so `A^{-1} g` is the
/// pseudo-inverse whenever `g` lies in the range. `A^{-1}` is applied through
/// the Woodbury identity.
#[derive(Clone, Debug)]
pub struct PseudoInverse {
    dinv: DVector<f64>,
    ul: DMatrix<f64>,
    ur: DMatrix<f64>,
    weights: DVector<f64>,
    cap: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    psi: DMatrix<f64>,
    op: LinearOperator,
}

impl PseudoInverse {
    pub fn new(op: &LinearOperator, psi: &DMatrix<f64>) -> Result<Self> {
        let n = op.len();
        let r = op.rank();
        let mut ul = DMatrix::zeros(n, r + 5);
        ul.columns_mut(0, r).copy_from(&op.left);
        ul.columns_mut(r, 5).copy_from(&(-psi));
        let mut ur = DMatrix::zeros(n, r + 5);
        ur.columns_mut(0, r).copy_from(&op.right);
        ur.columns_mut(r, 5).copy_from(psi);
        if op.diag.iter().any(|d| *d >= 0.0) {
            return Err(Error::Assembly { defect: op.diag.max(), tol: 0.0 });
        }
        let dinv = op.diag.map(|d| 1.0 / d);
        let dul = scale_rows(&dinv, &ul);
        let mut cap = ur.transpose() * scale_rows(&op.weights, &dul);
        for i in 0..r + 5 {
            cap[(i, i)] += 1.0;
        }
        Ok(Self { dinv, ul, ur, weights: op.weights.clone(), cap: cap.lu(), psi: psi.clone(), op: op.clone() })
    }

    fn apply_ainv(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self.dinv.component_mul(b);
        let m = self.ur.tr_mul(&self.weights.component_mul(&y));
        let c = self.cap.solve(&m).expect("capacitance matrix is singular");
        let mut corr = &self.ul * c;
        corr.component_mul_assign(&self.dinv);
        y - corr
    }

    fn apply_a(&self, h: &DVector<f64>) -> DVector<f64> {
        let mut out = self.op.apply(h);
        let m = self.psi.tr_mul(&self.weights.component_mul(h));
        out.gemv(-1.0, &self.psi, &m, 1.0);
        out
    }

    fn kernel_moments(&self, g: &DVector<f64>) -> DVector<f64> {
        self.psi.tr_mul(&self.weights.component_mul(g))
    }

    /// Solve without the solvability check; the kernel component of `g`
    /// is mapped through the deflated block.
    pub fn solve_unchecked(&self, g: &DVector<f64>) -> DVector<f64> {
        let mut h = self.apply_ainv(g);
        let r = g - self.apply_a(&h);
        h += self.apply_ainv(&r);
        h
    }

    pub fn solve(&self, g: &DVector<f64>) -> Result<DVector<f64>> {
        let pm = self.kernel_moments(g);
        let gn = (self.weights.component_mul(g).dot(g)).sqrt();
        if pm.norm() > 1e-10 * gn.max(1.0) {
            return Err(Error::Solvability { norm: pm.norm(), moments: pm.iter().copied().collect() });
        }
        Ok(self.solve_unchecked(g))
    }
}

/// Unique `h` with `L h = g` and `P h = 0`.
pub fn pseudo_inverse(op: &LinearOperator, g: &DVector<f64>) -> Result<DVector<f64>> {
    PseudoInverse::new(op, &op.adjoint_kernel)?.solve(g)
}

/// Burnett functions and transport coefficients.
#[derive(Clone, Debug)]
pub struct Burnett {
    /// Values of A-bar (so that v_z A-bar solves the heat-flux problem).
    pub a_bar: DVector<f64>,
    pub b_bar: DVector<f64>,
    pub vz_a: DVector<f64>,
    pub vxvz_b: DVector<f64>,
    /// Viscosity eta-hat = -(v_x v_z B-bar, v_x v_z).
    pub eta: f64,
    /// Conductivity k-hat = -(v_z A-bar, v_z (v^2 - 5)) / 10.
    pub kappa: f64,
}

pub fn burnett_functions(grid: &VelocityGrid, op: &LinearOperator) -> Result<Burnett> {
    let g1 = grid.eval(|v| v[2] * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] - 5.0));
    let g2 = grid.eval(|v| v[0] * v[2]);
    let inv = PseudoInverse::new(op, &op.adjoint_kernel)?;
    let vz_a = inv.solve(&g1)?;
    let vxvz_b = inv.solve(&g2)?;
    let a_bar = DVector::from_iterator(grid.len(), (0..grid.len()).map(|i| vz_a[i] / grid.nodes[i][2]));
    // v_x never vanishes on an even grid either.
    let b_bar = DVector::from_iterator(
        grid.len(),
        (0..grid.len()).map(|i| vxvz_b[i] / (grid.nodes[i][0] * grid.nodes[i][2])),
    );
    let eta = -grid.inner(&vxvz_b, &g2);
    let kappa = -grid.inner(&vz_a, &g1) / 10.0;
    Ok(Burnett { a_bar, b_bar, vz_a, vxvz_b, eta, kappa })
}

/// Hydrodynamically consistent bilinear collision term,
/// `J(f, g) = -L(Pf Pg)`.
///
/// For the hard-sphere kernel this is exact whenever both arguments are
/// collision invariants (a local Maxwellian is an equilibrium). It is
/// symmetric and conserves mass, momentum and energy for every tier.
pub fn bilinear_j(grid: &VelocityGrid, op: &LinearOperator, f: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
    let pf = grid.project_kernel(f);
    let pg = grid.project_kernel(g);
    -op.apply(&pf.component_mul(&pg))
}

/// `L_J f = L f + eps J(q, P f)` at one space point.
pub fn build_lj(grid: &VelocityGrid, base: &LinearOperator, q: &DVector<f64>, eps: f64) -> Result<LinearOperator> {
    let n = base.len();
    let r = base.rank();
    let psi = &grid.kernel.psi;
    let pq = grid.project_kernel(q);
    // n_j = L(Pq psi_j) so that eps N P f = -eps sum_j n_j (psi_j, f).
    let mut nmat = DMatrix::zeros(n, 5);
    for j in 0..5 {
        let col = pq.component_mul(&psi.column(j));
        nmat.set_column(j, &base.apply(&col));
    }
    let mut left = DMatrix::zeros(n, r + 5);
    left.columns_mut(0, r).copy_from(&base.left);
    left.columns_mut(r, 5).copy_from(&(-eps * &nmat));
    let mut right = DMatrix::zeros(n, r + 5);
    right.columns_mut(0, r).copy_from(&base.right);
    right.columns_mut(r, 5).copy_from(psi);
    // psi-bar_j = psi_j - eps L^{-1} N psi_j with N psi_j = -n_j.
    let inv = PseudoInverse::new(base, psi)?;
    let mut kernel = psi.clone();
    for j in 0..5 {
        let npsi = -nmat.column(j).into_owned();
        let h = inv.solve(&npsi)?;
        let mut col = kernel.column_mut(j);
        col.axpy(-eps, &h, 1.0);
    }
    let op = LinearOperator {
        kind: OperatorKind::LJ,
        model: base.model,
        diag: base.diag.clone(),
        left,
        right,
        weights: base.weights.clone(),
        nu: base.nu.clone(),
        kernel,
        adjoint_kernel: psi.clone(),
        symmetric: eps == 0.0,
        degree: base.degree,
    };
    let mut worst: f64 = 0.0;
    for j in 0..5 {
        let res = op.apply(&op.kernel.column(j).into_owned());
        worst = worst.max(grid.norm(&res));
    }
    if worst > 1e-10 {
        return Err(Error::Kernel { residual: worst, eps });
    }
    Ok(op)
}

/// Result of a spectral-gap computation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapReport {
    pub gap: f64,
    /// Relative eigen-residual of the minimizing direction.
    pub certificate: f64,
    /// Dimension of the reduced eigenproblem.
    pub reduced_dim: usize,
}

/// Smallest value of `-(f, L f) / (f, nu f)` over `f` orthogonal to the
/// operator's kernel basis (symmetric part for non-symmetric operators).
///
/// With `y = nu^{1/2} f` the quotient becomes that of `I - V S V^T W`, a
/// finite-rank perturbation of the identity, so the spectrum on the
/// constrained space is the spectrum of a small compressed matrix plus 1.
pub fn spectral_gap(op: &LinearOperator) -> Result<GapReport> {
    spectral_gap_with_constraints(op, &op.kernel)
}

pub fn spectral_gap_with_constraints(op: &LinearOperator, constraints: &DMatrix<f64>) -> Result<GapReport> {
    let n = op.len();
    for i in 0..n {
        if (op.diag[i] + op.nu[i]).abs() > 1e-12 * op.nu[i] {
            return Err(Error::Config("spectral gap needs diagonal part -nu".into()));
        }
    }
    let r = op.rank();
    let w = &op.weights;
    let s = op.nu.map(|x| 1.0 / x.sqrt());
    // Symmetric part: U S U^T with U = [A_l, A_r], S = [[0, I], [I, 0]] / 2.
    let mut v = DMatrix::zeros(n, 2 * r);
    v.columns_mut(0, r).copy_from(&scale_rows(&s, &op.left));
    v.columns_mut(r, r).copy_from(&scale_rows(&s, &op.right));
    let c = scale_rows(&s, constraints);
    let ctw = scale_rows(w, &c).transpose();
    let gram = &ctw * &c;
    let gram_inv = gram.try_inverse().ok_or_else(|| Error::Config("degenerate constraint basis".into()))?;
    let project = |x: &DMatrix<f64>| -> DMatrix<f64> { x - &c * (&gram_inv * (&ctw * x)) };
    let qv = project(&v);
    let sw = w.map(|x| x.sqrt());
    let x = scale_rows(&sw, &qv);
    let svd = x.svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > 1e-10 * smax.max(1e-300))
        .collect();
    let k = keep.len();
    let mut z = DMatrix::zeros(n, k);
    for (col, &kk) in keep.iter().enumerate() {
        for i in 0..n {
            z[(i, col)] = u[(i, kk)] / sw[i];
        }
    }
    let complement = n - constraints.ncols() - k;
    if k == 0 {
        return Ok(GapReport { gap: 1.0, certificate: 0.0, reduced_dim: 0 });
    }
    // Compressed operator T_Z = I - Z^T W V S V^T W Z.
    let b = scale_rows(w, &v).transpose() * &z; // (2r) x k
    let mut sb = DMatrix::zeros(2 * r, k);
    sb.rows_mut(0, r).copy_from(&(0.5 * b.rows(r, r)));
    sb.rows_mut(r, r).copy_from(&(0.5 * b.rows(0, r)));
    let mut t = -(b.transpose() * sb);
    for i in 0..k {
        t[(i, i)] += 1.0;
    }
    let t = 0.5 * (&t + t.transpose());
    let eig = SymmetricEigen::new(t);
    let (imin, &lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let (gap, cert) = if complement > 0 && lmin >= 1.0 {
        (1.0, 0.0)
    } else {
        let y = &z * eig.eigenvectors.column(imin);
        // T y - lmin y, projected onto the constraint complement.
        let vy = v.tr_mul(&w.component_mul(&y));
        let mut svy = DVector::zeros(2 * r);
        svy.rows_mut(0, r).copy_from(&(0.5 * vy.rows(r, r)));
        svy.rows_mut(r, r).copy_from(&(0.5 * vy.rows(0, r)));
        let ty = &y - &v * svy;
        let res = project(&DMatrix::from_column_slice(n, 1, (ty - lmin * &y).as_slice()));
        let rn = (0..n).map(|i| w[i] * res[(i, 0)].powi(2)).sum::<f64>().sqrt();
        let yn = (0..n).map(|i| w[i] * y[i].powi(2)).sum::<f64>().sqrt();
        (lmin, rn / yn)
    };
    if gap <= 0.0 {
        return Err(Error::Gap { gap });
    }
    Ok(GapReport { gap, certificate: cert, reduced_dim: k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::velocity::{build_velocity_grid, VelocityScheme};

    fn grid(n: usize) -> VelocityGrid {
        build_velocity_grid(n, VelocityScheme::GaussHermiteTensor).unwrap()
    }

    #[test]
    fn nu_closed_form_values() {
        assert!((collision_frequency([0.0; 3]) - PI * (8.0 / PI).sqrt()).abs() < 1e-12);
        let a = collision_frequency([0.3, -1.2, 0.5]);
        let b = collision_frequency([1.2, 0.5, 0.3]);
        assert!((a - b).abs() < 1e-12);
        assert!((collision_frequency([1e-7, 0.0, 0.0]) - collision_frequency([1e-5, 0.0, 0.0])).abs() < 1e-8);
    }

    #[test]
    fn nu_at_origin_matches_radial_quadrature() {
        // E|v_*| for a 3-D standard normal, by a 1-D radial rule.
        let (x, w) = crate::quadrature::gauss_legendre(200);
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            let r = 6.0 * (xi + 1.0);
            s += 6.0 * wi * 4.0 * PI * r.powi(3) * (-0.5 * r * r).exp() / (2.0 * PI).powf(1.5);
        }
        assert!((collision_frequency([0.0; 3]) - PI * s).abs() < 1e-10);
    }

    #[test]
    fn nu_large_speed_against_direct_quadrature() {
        // pi E|v - v_*| at |v| = 8 by tensor Gauss-Hermite, and the ratio to pi|v|.
        let (x, w) = crate::quadrature::gauss_hermite_prob(40);
        let mut s = 0.0;
        for i in 0..40 {
            for j in 0..40 {
                for k in 0..40 {
                    let d = ((x[i]).powi(2) + (x[j]).powi(2) + (8.0 - x[k]).powi(2)).sqrt();
                    s += w[i] * w[j] * w[k] * d;
                }
            }
        }
        let nu = collision_frequency([0.0, 0.0, 8.0]);
        assert!((nu - PI * s).abs() < 1e-9);
        assert!((nu / (PI * 8.0) - 1.0).abs() < 0.02);
    }

    #[test]
    fn bgk_examples() {
        let g = grid(8);
        let op = assemble_linearized_operator(&g, CollisionModel::BgkUnit).unwrap();
        let psi3 = g.kernel.psi.column(3).into_owned();
        assert!(op.apply(&psi3).amax() < 1e-13);
        let f = g.eval(|v| v[0] * v[2]);
        assert!((op.apply(&f) + &f).amax() < 1e-13);
        let h = pseudo_inverse(&op, &f).unwrap();
        assert!((h + &f).amax() < 1e-13);
        let one = g.kernel.psi.column(0).into_owned();
        assert!(matches!(pseudo_inverse(&op, &one), Err(Error::Solvability { .. })));
        let b = burnett_functions(&g, &op).unwrap();
        assert!((b.eta - 1.0).abs() < 1e-12);
        assert!((b.kappa - 1.0).abs() < 1e-12);
        assert!((b.b_bar.add_scalar(1.0)).amax() < 1e-12);
        let a = g.eval(|v| -(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] - 5.0));
        assert!((&b.a_bar - a).amax() < 1e-11);
        let gap = spectral_gap(&op).unwrap();
        assert!((gap.gap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nu_bgk_properties() {
        let g = grid(8);
        let op = assemble_linearized_operator(&g, CollisionModel::NuBgk).unwrap();
        for j in 0..5 {
            assert!(g.norm(&op.apply(&g.kernel.psi.column(j).into_owned())) < 1e-12);
        }
        let gap = spectral_gap(&op).unwrap();
        assert!(gap.gap > 0.0 && gap.gap <= 1.0 + 1e-12);
        assert!(gap.certificate < 1e-8);
        let (lo, hi) = op.nu_bounds(&g);
        assert!(lo > 0.5 && hi < 6.0);
    }

    #[test]
    fn hardsphere_shear_form_against_brute_force() {
        let g = grid(8);
        let op = assemble_linearized_operator(&g, CollisionModel::HardsphereTruncated).unwrap();
        let f = g.eval(|v| v[0] * v[2]);
        let form = -g.inner(&f, &op.apply(&f));
        // Independent oracle: -(f, L f) = (1/16) E_{v, v*} |V| int dsigma (Delta f)^2
        // on a Cartesian product of two Gauss-Hermite grids.
        let (x, w) = crate::quadrature::gauss_hermite_prob(10);
        let (cx, cw) = crate::quadrature::gauss_legendre(8);
        let nph = 16;
        let mut sig = vec![];
        for (c, wc) in cx.iter().zip(&cw) {
            let st = (1.0 - c * c).sqrt();
            for k in 0..nph {
                let p = 2.0 * PI * k as f64 / nph as f64;
                sig.push(([st * p.cos(), st * p.sin(), *c], wc * 2.0 * PI / nph as f64));
            }
        }
        let pts: Vec<([f64; 3], f64)> = {
            let mut p = vec![];
            for i in 0..10 {
                for j in 0..10 {
                    for k in 0..10 {
                        p.push(([x[i], x[j], x[k]], w[i] * w[j] * w[k]));
                    }
                }
            }
            p
        };
        let fxz = |v: [f64; 3]| v[0] * v[2];
        let mut acc = 0.0;
        for (v, wv) in &pts {
            for (u, wu) in &pts {
                let vv = [v[0] - u[0], v[1] - u[1], v[2] - u[2]];
                let r = (vv[0] * vv[0] + vv[1] * vv[1] + vv[2] * vv[2]).sqrt();
                let cm = [0.5 * (v[0] + u[0]), 0.5 * (v[1] + u[1]), 0.5 * (v[2] + u[2])];
                let f0 = fxz(*v) + fxz(*u);
                let mut inner = 0.0;
                for (s, ws) in &sig {
                    let a = [cm[0] + 0.5 * r * s[0], cm[1] + 0.5 * r * s[1], cm[2] + 0.5 * r * s[2]];
                    let b = [cm[0] - 0.5 * r * s[0], cm[1] - 0.5 * r * s[1], cm[2] - 0.5 * r * s[2]];
                    let d = fxz(a) + fxz(b) - f0;
                    inner += ws * d * d;
                }
                acc += wv * wu * r * inner;
            }
        }
        let oracle = acc / 16.0;
        assert!(form > 0.0);
        assert!((form / oracle - 1.0).abs() < 0.01, "form {form} oracle {oracle}");
    }

    #[test]
    fn hardsphere_operator_invariants() {
        let g = grid(8);
        let op = assemble_linearized_operator(&g, CollisionModel::HardsphereTruncated).unwrap();
        for j in 0..5 {
            assert!(g.norm(&op.apply(&g.kernel.psi.column(j).into_owned())) < 1e-12);
        }
        let gv = g.eval(|v| v[2] * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] - 5.0));
        let h = pseudo_inverse(&op, &gv).unwrap();
        assert!(g.norm(&(op.apply(&h) - &gv)) < 1e-10);
        for c in g.kernel_coeffs(&h) {
            assert!(c.abs() < 1e-12);
        }
        let b = burnett_functions(&g, &op).unwrap();
        assert!(b.eta > 0.0 && b.kappa > 0.0);
        let gap = spectral_gap(&op).unwrap();
        assert!(gap.gap > 0.0 && gap.certificate < 1e-8, "{gap:?}");
    }

    #[test]
    fn lj_kernel_and_gap() {
        let g = grid(8);
        let base = assemble_linearized_operator(&g, CollisionModel::BgkUnit).unwrap();
        let q = g.eval(|v| -0.2 + 0.3 * v[0] + 0.1 * v[2] + 0.2 * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] - 3.0) / 2.0);
        let lj0 = build_lj(&g, &base, &q, 0.0).unwrap();
        assert!((&lj0.kernel - &g.kernel.psi).amax() < 1e-14);
        let g0 = spectral_gap(&base).unwrap().gap;
        for eps in [1e-3, 1e-2, 5e-2] {
            let lj = build_lj(&g, &base, &q, eps).unwrap();
            let adj = lj.adjoint();
            for j in 0..5 {
                assert!(g.norm(&adj.apply(&g.kernel.psi.column(j).into_owned())) < 1e-10);
            }
            let gj = spectral_gap(&lj).unwrap();
            assert!(gj.gap >= 0.95 * g0, "eps {eps}: {gj:?}");
            assert!(gj.certificate < 1e-8);
        }
    }
}
