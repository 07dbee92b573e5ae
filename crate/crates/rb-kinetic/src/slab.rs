//! One-dimensional slab between the walls `z = -pi` and `z = pi`.
//!
//! Stationary problem, with no x dependence:
//!
//! `v_z f' - eps G M^{-1} d/dv_z (M f) = (1/eps) L_J f + g`
//!
//! Incoming data is either given or diffusely re-emitted with the wall
//! Maxwellians. The top wall is at temperature `1 - 2 pi eps lambda`.
//!
//! The stationary solver is Chebyshev collocation in z. Velocity nodes on one
//! `v_z` line are coupled only by the force, so each line is a dense block
//! that is factored once. The collision term is diagonal plus finite rank,
//! and its moments at every node are eliminated through a dense Schur system.
//! Diffuse walls add one re-emission coefficient per wall. A pure diffuse
//! problem has a one-dimensional mass kernel, fixed by a zero-total-mass
//! constraint whose multiplier reports the solvability defect of the source.
//!
//! The time-dependent run is upwind finite volume with explicit transport and
//! force and implicit collision.

use crate::collision::{bilinear_j, build_lj, spectral_gap, LinearOperator};
use crate::field::KineticField;
use crate::quadrature::{cheb_diff, cheb_nodes, clenshaw_curtis};
use crate::velocity::VelocityGrid;
use crate::{Error, Result};
use faer::linalg::solvers::PartialPivLu;
use faer::prelude::*;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallCondition {
    GivenIndata,
    Diffuse,
    DiffuseWithDefect,
}

/// The field `q` entering `L_J = L + eps J(q, P .)`, as kernel coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QProfile {
    Zero,
    /// First-order field of the conducting state: `T = -lambda z`,
    /// `rho = -T - G z`.
    Laminar { lambda: f64 },
}

impl QProfile {
    pub fn coeffs(&self, z: f64, g: f64) -> [f64; 5] {
        match *self {
            QProfile::Zero => [0.0; 5],
            QProfile::Laminar { lambda } => {
                let t = -lambda * z;
                [-t - g * z, 0.0, 0.0, 0.0, t * (1.5f64).sqrt()]
            }
        }
    }
}

/// Slab problem on `nz + 1` Chebyshev nodes. Node 0 is the top wall.
#[derive(Clone, Debug)]
pub struct SlabProblem {
    pub grid: VelocityGrid,
    pub base: LinearOperator,
    pub eps: f64,
    pub g: f64,
    pub lambda: f64,
    pub nz: usize,
    pub q: QProfile,
    pub source: KineticField,
    pub bc: WallCondition,
    /// Wall functions, top then bottom: incoming data for `GivenIndata`,
    /// the defect for `DiffuseWithDefect`, unused otherwise.
    pub wall_data: [DVector<f64>; 2],
}

impl SlabProblem {
    /// Zero source, diffuse walls, `q = 0`.
    pub fn new(grid: VelocityGrid, base: LinearOperator, eps: f64, g: f64, lambda: f64, nz: usize) -> Result<Self> {
        let nv = grid.len();
        let p = Self {
            source: KineticField::zeros(nz + 1, 1, nv),
            wall_data: [DVector::zeros(nv), DVector::zeros(nv)],
            grid,
            base,
            eps,
            g,
            lambda,
            nz,
            q: QProfile::Zero,
            bc: WallCondition::Diffuse,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.grid.len();
        if !(self.eps > 0.0) || !self.g.is_finite() || !self.lambda.is_finite() {
            return Err(Error::Config(format!("bad slab parameters eps = {}, G = {}, lambda = {}", self.eps, self.g, self.lambda)));
        }
        if self.nz < 4 {
            return Err(Error::Config(format!("nz = {} is too small", self.nz)));
        }
        if self.base.len() != nv || self.source.nv != nv || self.source.nx != 1 || self.source.nzp != self.nz + 1 {
            return Err(Error::Config("slab source, operator and velocity grid differ in size".into()));
        }
        if self.wall_data.iter().any(|d| d.len() != nv) {
            return Err(Error::Config("wall data has the wrong length".into()));
        }
        if self.wall_temperature(true) <= 0.0 {
            return Err(Error::Config(format!("top wall temperature {} is not positive", self.wall_temperature(true))));
        }
        Ok(())
    }

    pub fn z(&self) -> Vec<f64> {
        cheb_nodes(self.nz).into_iter().map(|x| PI * x).collect()
    }

    pub fn z_weights(&self) -> Vec<f64> {
        clenshaw_curtis(self.nz).into_iter().map(|w| PI * w).collect()
    }

    pub fn kappa(&self, z: f64) -> f64 {
        (self.eps * self.g * (z + PI)).exp()
    }

    pub fn wall_temperature(&self, top: bool) -> f64 {
        if top {
            1.0 - 2.0 * PI * self.eps * self.lambda
        } else {
            1.0
        }
    }

    /// `M_w / M` on the nodes, scaled so that the discrete incoming flux
    /// `sum_in w |v_z| r` is one. Re-emission is then exactly impermeable.
    pub fn wall_ratio(&self, top: bool) -> DVector<f64> {
        let t = self.wall_temperature(top);
        let grid = &self.grid;
        let incoming = |k: usize| if top { grid.nodes[k][2] < 0.0 } else { grid.nodes[k][2] > 0.0 };
        let mut r = DVector::from_fn(grid.len(), |k, _| {
            if !incoming(k) {
                return 0.0;
            }
            let v2: f64 = grid.nodes[k].iter().map(|x| x * x).sum();
            t.powf(-1.5) * (-0.5 * v2 * (1.0 / t - 1.0)).exp()
        });
        let flux: f64 = (0..grid.len()).map(|k| grid.weights[k] * grid.nodes[k][2].abs() * r[k]).sum();
        r /= flux;
        r
    }

    /// `L_J` at height `z`.
    pub fn operator_at(&self, z: f64) -> Result<LinearOperator> {
        match self.q {
            QProfile::Zero => Ok(self.base.clone()),
            _ => {
                let q = self.grid.from_coeffs(&self.q.coeffs(z, self.g));
                build_lj(&self.grid, &self.base, &q, self.eps)
            }
        }
    }

    /// Norm of a field given on the collocation nodes.
    pub fn norm(&self, f: &KineticField, which: NormKind) -> Result<f64> {
        if f.nzp != self.nz + 1 || f.nx != 1 || f.nv != self.grid.len() {
            return Err(Error::Missing("field is not on the slab grid".into()));
        }
        let w = &self.grid.weights;
        let local = |j: usize| f.point(j, 0).iter().zip(w.iter()).map(|(x, w)| w * x * x).sum::<f64>();
        Ok(match which {
            NormKind::Q22 => self.z_weights().iter().enumerate().map(|(j, wz)| wz * local(j)).sum::<f64>().sqrt(),
            NormKind::Inf2 => (0..=self.nz).map(local).fold(0.0, f64::max).sqrt(),
            NormKind::Boundary22 => {
                let mut s = 0.0;
                for j in [0, self.nz] {
                    for (k, x) in f.point(j, 0).iter().enumerate() {
                        s += w[k] * self.grid.nodes[k][2].abs() * x * x;
                    }
                }
                s.sqrt()
            }
            NormKind::Time222 => return Err(Error::Missing("the time norm needs a history; use time_norm".into())),
        })
    }
}

/// Norms of slab fields. `Q22` is the `L^2(dz, M dv)` norm, `Boundary22`
/// the `|v_z|`-weighted trace norm over both walls, `Inf2` the sup over z
/// of the velocity norm and `Time222` the `L^2` norm in time of `Q22`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Q22,
    Boundary22,
    Inf2,
    Time222,
}

/// `(int_0^T ||R(t)||^2 dt)^{1/2}` by the trapezoid rule.
pub fn time_norm(t: &[f64], norms: &[f64]) -> Result<f64> {
    if t.len() != norms.len() || t.len() < 2 {
        return Err(Error::Missing("time norm needs at least two samples".into()));
    }
    let s: f64 = t.windows(2).zip(norms.windows(2)).map(|(t, n)| 0.5 * (t[1] - t[0]) * (n[0] * n[0] + n[1] * n[1])).sum();
    Ok(s.sqrt())
}

/// Density, normal velocity and temperature moments at every node.
pub fn moment_profile(grid: &VelocityGrid, f: &KineticField) -> Vec<[f64; 3]> {
    (0..f.nzp)
        .map(|j| {
            let mut m = [0.0; 3];
            for (k, x) in f.point(j, 0).iter().enumerate() {
                let v = grid.nodes[k];
                let v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                let w = grid.weights[k] * x;
                m[0] += w;
                m[1] += w * v[2];
                m[2] += w * (v2 - 3.0) / 3.0;
            }
            m
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SlabSolution {
    pub z: Vec<f64>,
    pub f: KineticField,
    pub residual: f64,
    /// Net wall-normal mass flux, top then bottom.
    pub flux: [f64; 2],
    pub mass: f64,
    /// Multiplier of the zero-mass constraint (diffuse walls only).
    pub gauge: f64,
}

/// Terms of the weighted Green identity
/// `outgoing + collision = source + incoming`, where
/// `collision = -(2/eps) (kappa f, L_J f)` and `source = 2 (kappa g, f)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GreenBalance {
    pub outgoing: f64,
    pub incoming: f64,
    pub collision: f64,
    pub source: f64,
    pub defect: f64,
}

/// Factored stationary slab operator.
pub struct SlabSolver<'p> {
    prob: &'p SlabProblem,
    z: Vec<f64>,
    wz: Vec<f64>,
    d1: DMatrix<f64>,
    ops: Vec<LinearOperator>,
    ratio: [DVector<f64>; 2],
    n: usize,
    r: usize,
    lines: Vec<PartialPivLu<f64>>,
    schur: PartialPivLu<f64>,
}

impl<'p> SlabSolver<'p> {
    pub fn new(prob: &'p SlabProblem) -> Result<Self> {
        prob.validate()?;
        let z = prob.z();
        let ops = z.iter().map(|&z| prob.operator_at(z)).collect::<Result<Vec<_>>>()?;
        let r = ops[0].rank();
        if ops.iter().any(|o| o.rank() != r) {
            return Err(Error::Config("operator rank varies across the slab".into()));
        }
        let mut s = Self {
            wz: prob.z_weights(),
            d1: cheb_diff(prob.nz) / PI,
            ratio: [prob.wall_ratio(true), prob.wall_ratio(false)],
            n: prob.grid.order,
            r,
            lines: vec![],
            schur: Mat::<f64>::identity(1, 1).partial_piv_lu(),
            prob,
            z,
            ops,
        };
        let ny = s.unknowns();
        let mut k = Mat::<f64>::zeros(ny, ny);
        for i in 0..s.moment_rows() + s.wall_rows() {
            k.write(i, i, 1.0);
        }
        for l in 0..s.line_count() {
            let lu = s.line_matrix(l).partial_piv_lu();
            let x = lu.solve(&s.line_columns(l));
            s.accumulate(l, &x, |row, col, v| {
                let sign = if row < s.moment_rows() + s.wall_rows() { -1.0 } else { 1.0 };
                k.write(row, col, k.read(row, col) + sign * v);
            }, ny);
            s.lines.push(lu);
        }
        s.schur = k.partial_piv_lu();
        Ok(s)
    }

    pub fn problem(&self) -> &SlabProblem {
        self.prob
    }

    pub fn operators(&self) -> &[LinearOperator] {
        &self.ops
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    fn nzp(&self) -> usize {
        self.prob.nz + 1
    }

    fn line_count(&self) -> usize {
        self.prob.grid.len() / self.n
    }

    fn diffuse(&self) -> bool {
        self.prob.bc != WallCondition::GivenIndata
    }

    fn moment_rows(&self) -> usize {
        self.r * self.nzp()
    }

    fn wall_rows(&self) -> usize {
        if self.diffuse() {
            2
        } else {
            0
        }
    }

    fn unknowns(&self) -> usize {
        self.moment_rows() + if self.diffuse() { 3 } else { 0 }
    }

    /// Incoming velocity `k` at node `j` carries a boundary condition.
    fn is_inflow(&self, j: usize, k: usize) -> bool {
        let vz = self.prob.grid.nodes[k][2];
        (j == 0 && vz < 0.0) || (j == self.prob.nz && vz > 0.0)
    }

    fn line_matrix(&self, l: usize) -> Mat<f64> {
        let (n, nzp) = (self.n, self.nzp());
        let p = self.prob;
        let fl = p.grid.force_line();
        let mut a = Mat::<f64>::zeros(n * nzp, n * nzp);
        for j in 0..nzp {
            for ia in 0..n {
                let k = l * n + ia;
                let row = j * n + ia;
                if self.is_inflow(j, k) {
                    a.write(row, row, 1.0);
                    continue;
                }
                let vz = p.grid.nodes[k][2];
                for jj in 0..nzp {
                    a.write(row, jj * n + ia, vz * self.d1[(j, jj)]);
                }
                for ib in 0..n {
                    let c = a.read(row, j * n + ib) - p.eps * p.g * fl[(ia, ib)];
                    a.write(row, j * n + ib, c);
                }
                a.write(row, row, a.read(row, row) - self.ops[j].diag[k] / p.eps);
            }
        }
        a
    }

    /// Right-hand side columns driven by the Schur unknowns.
    fn line_columns(&self, l: usize) -> Mat<f64> {
        let (n, nzp, r) = (self.n, self.nzp(), self.r);
        let eps = self.prob.eps;
        let mut c = Mat::<f64>::zeros(n * nzp, self.unknowns());
        for j in 0..nzp {
            for ia in 0..n {
                let k = l * n + ia;
                let row = j * n + ia;
                if self.is_inflow(j, k) {
                    if self.diffuse() {
                        let (w, col) = if j == 0 { (0, self.moment_rows()) } else { (1, self.moment_rows() + 1) };
                        c.write(row, col, self.ratio[w][k]);
                    }
                    continue;
                }
                for m in 0..r {
                    c.write(row, j * r + m, self.ops[j].left[(k, m)] / eps);
                }
                if self.diffuse() {
                    c.write(row, self.moment_rows() + 2, 1.0);
                }
            }
        }
        c
    }

    /// Line right-hand side from a source and wall data.
    fn line_rhs(&self, l: usize, source: &KineticField, wall: &[DVector<f64>; 2]) -> Mat<f64> {
        let (n, nzp) = (self.n, self.nzp());
        Mat::from_fn(n * nzp, 1, |row, _| {
            let (j, ia) = (row / n, row % n);
            let k = l * n + ia;
            if !self.is_inflow(j, k) {
                return source.point(j, 0)[k];
            }
            let w = if j == 0 { 0 } else { 1 };
            match self.prob.bc {
                WallCondition::GivenIndata => wall[w][k],
                WallCondition::Diffuse => 0.0,
                WallCondition::DiffuseWithDefect => -wall[w][k],
            }
        })
    }

    /// Feed the functionals (moments, outgoing fluxes, mass) of the line
    /// solution block `x` into `sink(row, col, value)`.
    fn accumulate(&self, l: usize, x: &Mat<f64>, mut sink: impl FnMut(usize, usize, f64), ncols: usize) {
        let (n, nzp, r) = (self.n, self.nzp(), self.r);
        let grid = &self.prob.grid;
        let mut acc = vec![0.0; ncols];
        for j in 0..nzp {
            for m in 0..r {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for ia in 0..n {
                    let k = l * n + ia;
                    let c = self.ops[j].right[(k, m)] * grid.weights[k];
                    if c != 0.0 {
                        for (col, a) in acc.iter_mut().enumerate() {
                            *a += c * x.read(j * n + ia, col);
                        }
                    }
                }
                for (col, a) in acc.iter().enumerate() {
                    sink(j * r + m, col, *a);
                }
            }
        }
        if !self.diffuse() {
            return;
        }
        for (w, j) in [(0usize, 0usize), (1, self.prob.nz)] {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for ia in 0..n {
                let k = l * n + ia;
                if self.is_inflow(j, k) {
                    continue;
                }
                let c = grid.weights[k] * grid.nodes[k][2].abs();
                for (col, a) in acc.iter_mut().enumerate() {
                    *a += c * x.read(j * n + ia, col);
                }
            }
            for (col, a) in acc.iter().enumerate() {
                sink(self.moment_rows() + w, col, *a);
            }
        }
        acc.iter_mut().for_each(|a| *a = 0.0);
        for j in 0..nzp {
            for ia in 0..n {
                let c = self.wz[j] * grid.weights[l * n + ia];
                for (col, a) in acc.iter_mut().enumerate() {
                    *a += c * x.read(j * n + ia, col);
                }
            }
        }
        for (col, a) in acc.iter().enumerate() {
            sink(self.moment_rows() + 2, col, *a);
        }
    }

    /// Solve with the problem's own source and wall data.
    pub fn solve(&self) -> Result<SlabSolution> {
        self.solve_with(&self.prob.source, &self.prob.wall_data)
    }

    pub fn solve_with(&self, source: &KineticField, wall: &[DVector<f64>; 2]) -> Result<SlabSolution> {
        let p = self.prob;
        let grid = &p.grid;
        let nv = grid.len();
        if source.nzp != self.nzp() || source.nx != 1 || source.nv != nv || wall.iter().any(|w| w.len() != nv) {
            return Err(Error::Config("slab source or wall data does not match the grid".into()));
        }
        if p.bc == WallCondition::DiffuseWithDefect {
            let flux: Vec<f64> = wall.iter().map(|w| (0..nv).map(|k| grid.weights[k] * grid.nodes[k][2] * w[k]).sum()).collect();
            let scale = wall.iter().map(|w| grid.norm(w)).fold(1e-300, f64::max);
            if flux.iter().any(|f| f.abs() > 1e-12 * scale) {
                // a defect with net flux makes the walls permeable
                return Err(Error::Solvability { norm: flux[0].abs().max(flux[1].abs()), moments: flux });
            }
        }
        let ny = self.unknowns();
        let mut rhs = Mat::<f64>::zeros(ny, 1);
        let mut base = Vec::with_capacity(self.line_count());
        for l in 0..self.line_count() {
            let b = self.line_rhs(l, source, wall);
            let x = self.lines[l].solve(&b);
            self.accumulate(l, &x, |row, _, v| rhs.write(row, 0, rhs.read(row, 0) + v), 1);
            base.push(b);
        }
        if self.diffuse() {
            let mr = self.moment_rows();
            rhs.write(mr + 2, 0, -rhs.read(mr + 2, 0));
            if p.bc == WallCondition::DiffuseWithDefect {
                for (w, j) in [(0usize, 0usize), (1, p.nz)] {
                    let extra: f64 = (0..nv).filter(|&k| !self.is_inflow(j, k)).map(|k| grid.weights[k] * grid.nodes[k][2].abs() * wall[w][k]).sum();
                    rhs.write(mr + w, 0, rhs.read(mr + w, 0) + extra);
                }
            }
        }
        let y = self.schur.solve(&rhs);
        let mut f = KineticField::zeros(self.nzp(), 1, nv);
        for (l, b) in base.into_iter().enumerate() {
            let c = self.line_columns(l);
            let x = self.lines[l].solve(&(b + &c * &y));
            for j in 0..self.nzp() {
                for ia in 0..self.n {
                    f.point_mut(j, 0)[l * self.n + ia] = x.read(j * self.n + ia, 0);
                }
            }
        }
        let gauge = if self.diffuse() { y.read(ny - 1, 0) } else { 0.0 };
        let residual = self.residual(&f, source, wall);
        let scale = source.data.iter().chain(f.data.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
        if gauge.abs() > 1e-8 * scale {
            return Err(Error::Solvability { norm: gauge, moments: vec![gauge] });
        }
        if !(residual <= 1e-8 * scale) {
            return Err(Error::Convergence(format!("slab transport solve is singular: residual {residual:.3e}")));
        }
        let flux = [self.wall_flux(&f, 0), self.wall_flux(&f, p.nz)];
        let mass = self.mass(&f);
        Ok(SlabSolution { z: self.z.clone(), f, residual, flux, mass, gauge })
    }

    fn wall_flux(&self, f: &KineticField, j: usize) -> f64 {
        let g = &self.prob.grid;
        f.point(j, 0).iter().enumerate().map(|(k, x)| g.weights[k] * g.nodes[k][2] * x).sum()
    }

    /// Total mass `int dz <f>`.
    pub fn mass(&self, f: &KineticField) -> f64 {
        let g = &self.prob.grid;
        (0..self.nzp()).map(|j| self.wz[j] * f.point(j, 0).iter().zip(g.weights.iter()).map(|(x, w)| w * x).sum::<f64>()).sum()
    }

    /// `v_z f' - eps G F f - (1/eps) L_J f` at every node.
    pub fn apply(&self, f: &KineticField) -> KineticField {
        let p = self.prob;
        let nv = p.grid.len();
        let mut out = KineticField::zeros(self.nzp(), 1, nv);
        for k in 0..nv {
            let vz = p.grid.nodes[k][2];
            for j in 0..self.nzp() {
                let mut s = 0.0;
                for jj in 0..self.nzp() {
                    s += self.d1[(j, jj)] * f.point(jj, 0)[k];
                }
                out.point_mut(j, 0)[k] = vz * s;
            }
        }
        for j in 0..self.nzp() {
            let fj = f.point_vec(j, 0);
            let force = p.grid.force_vec(&fj);
            let coll = self.ops[j].apply(&fj);
            for (k, o) in out.point_mut(j, 0).iter_mut().enumerate() {
                *o -= p.eps * p.g * force[k] + coll[k] / p.eps;
            }
        }
        out
    }

    /// Largest violation of the collocation equations and wall conditions.
    pub fn residual(&self, f: &KineticField, source: &KineticField, wall: &[DVector<f64>; 2]) -> f64 {
        let p = self.prob;
        let grid = &p.grid;
        let nv = grid.len();
        let lhs = self.apply(f);
        let mut worst: f64 = 0.0;
        for (w, j) in [(0usize, 0usize), (1, p.nz)] {
            let defect = |k: usize| if p.bc == WallCondition::DiffuseWithDefect { wall[w][k] } else { 0.0 };
            let c: f64 = (0..nv)
                .filter(|&k| !self.is_inflow(j, k))
                .map(|k| grid.weights[k] * grid.nodes[k][2].abs() * (f.point(j, 0)[k] + defect(k)))
                .sum();
            for k in (0..nv).filter(|&k| self.is_inflow(j, k)) {
                let target = match p.bc {
                    WallCondition::GivenIndata => wall[w][k],
                    _ => self.ratio[w][k] * c - defect(k),
                };
                worst = worst.max((f.point(j, 0)[k] - target).abs());
            }
        }
        for j in 0..self.nzp() {
            for k in 0..nv {
                if !self.is_inflow(j, k) {
                    worst = worst.max((lhs.point(j, 0)[k] - source.point(j, 0)[k]).abs());
                }
            }
        }
        worst
    }

    pub fn green_balance(&self, f: &KineticField, source: &KineticField) -> GreenBalance {
        let p = self.prob;
        self.green_balance_with(f, source, |z| p.kappa(z))
    }

    /// Green identity terms with an arbitrary weight `kappa(z)`.
    pub fn green_balance_with(&self, f: &KineticField, source: &KineticField, kappa: impl Fn(f64) -> f64) -> GreenBalance {
        let p = self.prob;
        let grid = &p.grid;
        let (mut outgoing, mut incoming) = (0.0, 0.0);
        for j in [0, p.nz] {
            let kz = kappa(self.z[j]);
            for (k, x) in f.point(j, 0).iter().enumerate() {
                let t = kz * grid.weights[k] * grid.nodes[k][2].abs() * x * x;
                if self.is_inflow(j, k) {
                    incoming += t;
                } else {
                    outgoing += t;
                }
            }
        }
        let (mut collision, mut src) = (0.0, 0.0);
        for j in 0..self.nzp() {
            let fj = f.point_vec(j, 0);
            let kz = self.wz[j] * kappa(self.z[j]);
            collision -= 2.0 / p.eps * kz * grid.inner(&fj, &self.ops[j].apply(&fj));
            src += 2.0 * kz * grid.inner(&fj, &source.point_vec(j, 0));
        }
        GreenBalance { outgoing, incoming, collision, source: src, defect: outgoing + collision - src - incoming }
    }

    /// `J(f, f)` node by node.
    pub fn quadratic(&self, f: &KineticField) -> KineticField {
        let p = self.prob;
        KineticField::from_points(self.nzp(), 1, p.grid.len(), |j, _| {
            let fj = f.point_vec(j, 0);
            bilinear_j(&p.grid, &p.base, &fj, &fj)
        })
    }

    /// `||nu^{1/2} f||_{2,2}`.
    pub fn nu_norm(&self, f: &KineticField) -> f64 {
        let g = &self.prob.grid;
        let nu = &self.prob.base.nu;
        (0..self.nzp())
            .map(|j| self.wz[j] * f.point(j, 0).iter().enumerate().map(|(k, x)| g.weights[k] * nu[k] * x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

pub fn solve_linear_slab(prob: &SlabProblem) -> Result<SlabSolution> {
    SlabSolver::new(prob)?.solve()
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PicardConfig {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self { max_iter: 60, tol: 1e-11 }
    }
}

#[derive(Clone, Debug)]
pub struct PicardReport {
    pub r: KineticField,
    /// `||nu^{1/2} (R^{n+1} - R^n)||` for n = 0, 1, ...
    pub differences: Vec<f64>,
    /// Successive ratios of the differences.
    pub ratios: Vec<f64>,
    /// Asymptotic contraction: the last ratio measured well above round-off.
    pub contraction: f64,
    pub iterations: usize,
    /// Residual of the nonlinear discrete equation at the fixed point.
    pub residual: f64,
}

/// Picard iteration `R^{n+1} = S(J(R^n, R^n) + eps A)`, with `S` the linear
/// slab solve of `solver` (its wall data enter every step).
pub fn picard_remainder(solver: &SlabSolver, a: &KineticField, cfg: &PicardConfig) -> Result<PicardReport> {
    let p = solver.problem();
    let eps = p.eps;
    let ea = a.scaled(eps);
    let mut r = KineticField::like(a);
    let mut differences: Vec<f64> = vec![];
    let mut ratios: Vec<f64> = vec![];
    let mut iterations = 0;
    loop {
        let mut src = solver.quadratic(&r);
        src.axpy(1.0, &ea);
        let next = solver.solve_with(&src, &p.wall_data)?.f;
        let mut diff = next.clone();
        diff.axpy(-1.0, &r);
        let d = solver.nu_norm(&diff);
        if let Some(&prev) = differences.last() {
            ratios.push(if prev > 0.0 { d / prev } else { 0.0 });
        }
        differences.push(d);
        r = next;
        iterations += 1;
        let n = ratios.len();
        if n >= 3 && ratios[n - 3..].iter().all(|&q| q >= 1.0) {
            return Err(Error::Divergence { eps, ratios });
        }
        if d <= cfg.tol || iterations >= cfg.max_iter {
            break;
        }
    }
    // ratios whose numerator sits well above the round-off floor
    let floor = 1e-12 * solver.nu_norm(&r).max(1e-300);
    let contraction = ratios
        .iter()
        .zip(differences.iter().skip(1))
        .filter(|(_, &d)| d > floor * 1e2)
        .map(|(q, _)| *q)
        .next_back()
        .unwrap_or(0.0);
    let mut src = solver.quadratic(&r);
    src.axpy(1.0, &ea);
    let residual = solver.residual(&r, &src, &p.wall_data);
    Ok(PicardReport { r, differences, ratios, contraction, iterations, residual })
}

/// Settings for the time-dependent slab run.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub cells: usize,
    /// Step; `None` takes the smaller of `eps^2 / (4 gap)` and half the
    /// transport CFL limit.
    pub dt: Option<f64>,
    pub t_final: f64,
    pub record_every: usize,
    /// Abort when the norm exceeds this multiple of its initial value.
    pub blowup: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self { cells: 64, dt: None, t_final: 1.0, record_every: 10, blowup: 1e6 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvolveReport {
    pub dt: f64,
    pub steps: usize,
    pub t: Vec<f64>,
    pub norm: Vec<f64>,
    /// `||(I - P) R||_{2,2}`.
    pub perp_norm: Vec<f64>,
    pub mass: Vec<f64>,
    /// Largest wall-normal mass flux seen at any step.
    pub max_flux: f64,
    /// Largest mass change per unit time.
    pub mass_drift: f64,
    /// `int_0^T ||R||^2 dt`.
    pub energy_integral: f64,
}

/// `(I - c L_J)^{-1}` at one cell by Woodbury.
struct ImplicitCollision {
    dinv: DVector<f64>,
    left: DMatrix<f64>,
    wright: DMatrix<f64>,
    cap: DMatrix<f64>,
}

impl ImplicitCollision {
    fn new(op: &LinearOperator, c: f64) -> Result<Self> {
        let dinv = op.diag.map(|d| 1.0 / (1.0 - c * d));
        let left = &op.left * c;
        let wright = DMatrix::from_fn(op.len(), op.rank(), |i, j| op.weights[i] * op.right[(i, j)]);
        let mut small = DMatrix::identity(op.rank(), op.rank());
        for a in 0..op.rank() {
            for b in 0..op.rank() {
                let s: f64 = (0..op.len()).map(|i| wright[(i, a)] * dinv[i] * left[(i, b)]).sum();
                small[(a, b)] -= s;
            }
        }
        let cap = small.try_inverse().ok_or_else(|| Error::Convergence("implicit collision step is singular".into()))?;
        Ok(Self { dinv, left, wright, cap })
    }

    fn apply(&self, b: &mut [f64]) {
        let y = DVector::from_iterator(b.len(), b.iter().zip(self.dinv.iter()).map(|(b, d)| b * d));
        let t = &self.cap * self.wright.tr_mul(&y);
        let corr = &self.left * t;
        for (i, x) in b.iter_mut().enumerate() {
            *x = y[i] + self.dinv[i] * corr[i];
        }
    }
}

/// Relaxation run of
/// `R_t + (1/eps) v_z R_z - G M^{-1} d/dv_z (M R) = (1/eps^2) L_J R`
/// from `initial(z)`, with the walls of `prob` (the source is not used).
pub fn evolve_slab(prob: &SlabProblem, initial: impl Fn(f64) -> DVector<f64>, cfg: &EvolveConfig) -> Result<EvolveReport> {
    prob.validate()?;
    if cfg.cells < 4 || !(cfg.t_final >= 0.0) || cfg.record_every == 0 {
        return Err(Error::Config("bad evolve settings".into()));
    }
    let grid = &prob.grid;
    let nv = grid.len();
    let (eps, nc) = (prob.eps, cfg.cells);
    let h = 2.0 * PI / nc as f64;
    let zc: Vec<f64> = (0..nc).map(|i| -PI + (i as f64 + 0.5) * h).collect();
    let vmax = grid.nodes.iter().map(|v| v[2].abs()).fold(0.0, f64::max);
    let gap = spectral_gap(&prob.base)?.gap;
    let dt = match cfg.dt {
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(Error::Config(format!("dt = {dt} must be positive"))),
        None => (eps * eps / (4.0 * gap)).min(0.5 * eps * h / vmax),
    };
    if dt * vmax > eps * h * (1.0 + 1e-12) {
        return Err(Error::Config(format!("dt = {dt} violates the transport CFL limit {}", eps * h / vmax)));
    }
    let steps = (cfg.t_final / dt).ceil() as usize;
    let dt = if steps > 0 { cfg.t_final / steps as f64 } else { dt };
    let implicit = zc
        .iter()
        .map(|&z| ImplicitCollision::new(&prob.operator_at(z)?, dt / (eps * eps)))
        .collect::<Result<Vec<_>>>()?;
    let ratio = [prob.wall_ratio(true), prob.wall_ratio(false)];
    let mut r: Vec<f64> = Vec::with_capacity(nc * nv);
    for &z in &zc {
        let v = initial(z);
        if v.len() != nv {
            return Err(Error::Config("initial datum has the wrong length".into()));
        }
        r.extend(v.iter());
    }
    let norms = |r: &[f64]| -> (f64, f64, f64) {
        let (mut n2, mut p2, mut m) = (0.0, 0.0, 0.0);
        for c in r.chunks_exact(nv) {
            let v = DVector::from_column_slice(c);
            let perp = grid.project_perp(&v);
            n2 += h * grid.inner(&v, &v);
            p2 += h * grid.inner(&perp, &perp);
            m += h * c.iter().zip(grid.weights.iter()).map(|(x, w)| x * w).sum::<f64>();
        }
        (n2.sqrt(), p2.sqrt(), m)
    };
    let mut report = EvolveReport { dt, steps, t: vec![], norm: vec![], perp_norm: vec![], mass: vec![], max_flux: 0.0, mass_drift: 0.0, energy_integral: 0.0 };
    let record = |rep: &mut EvolveReport, t: f64, r: &[f64]| {
        let (n, p, m) = norms(r);
        rep.t.push(t);
        rep.norm.push(n);
        rep.perp_norm.push(p);
        rep.mass.push(m);
    };
    record(&mut report, 0.0, &r);
    let n0 = report.norm[0];
    let m0 = report.mass[0];
    let diffuse = prob.bc != WallCondition::GivenIndata;
    let mut face = vec![0.0; (nc + 1) * nv];
    let mut force = vec![0.0; nv];
    for step in 1..=steps {
        // wall inflow states: face 0 is the bottom wall, face nc the top
        for (w, cell, f) in [(1usize, 0usize, 0usize), (0, nc - 1, nc)] {
            let c = &r[cell * nv..(cell + 1) * nv];
            let defect = |k: usize| if prob.bc == WallCondition::DiffuseWithDefect { prob.wall_data[w][k] } else { 0.0 };
            let incoming = |k: usize| if w == 1 { grid.nodes[k][2] > 0.0 } else { grid.nodes[k][2] < 0.0 };
            let out: f64 = (0..nv).filter(|&k| !incoming(k)).map(|k| grid.weights[k] * grid.nodes[k][2].abs() * (c[k] + defect(k))).sum();
            for k in 0..nv {
                face[f * nv + k] = if !incoming(k) {
                    c[k]
                } else if diffuse {
                    ratio[w][k] * out - defect(k)
                } else {
                    prob.wall_data[w][k]
                };
            }
        }
        for i in 1..nc {
            for k in 0..nv {
                let up = if grid.nodes[k][2] > 0.0 { i - 1 } else { i };
                face[i * nv + k] = r[up * nv + k];
            }
        }
        for f in [0, nc] {
            let flux: f64 = (0..nv).map(|k| grid.weights[k] * grid.nodes[k][2] * face[f * nv + k]).sum();
            report.max_flux = report.max_flux.max(flux.abs());
        }
        for i in 0..nc {
            let cell = &mut r[i * nv..(i + 1) * nv];
            grid.force(cell, &mut force);
            for k in 0..nv {
                let vz = grid.nodes[k][2];
                cell[k] += -dt / (eps * h) * vz * (face[(i + 1) * nv + k] - face[i * nv + k]) + dt * prob.g * force[k];
            }
            implicit[i].apply(cell);
        }
        let t = step as f64 * dt;
        if step % cfg.record_every == 0 || step == steps {
            record(&mut report, t, &r);
            let n = *report.norm.last().unwrap();
            if !n.is_finite() || n > cfg.blowup * n0.max(1e-300) {
                return Err(Error::Blowup { step });
            }
            let m = *report.mass.last().unwrap();
            if t > 0.0 && diffuse {
                report.mass_drift = report.mass_drift.max((m - m0).abs() / t);
            }
        }
    }
    report.energy_integral = time_norm(&report.t, &report.norm).map(|v| v * v).unwrap_or(0.0);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::{assemble_linearized_operator, CollisionModel};
    use crate::velocity::{build_velocity_grid, VelocityScheme};

    fn problem(eps: f64, g: f64, nz: usize) -> SlabProblem {
        let grid = build_velocity_grid(6, VelocityScheme::GaussHermiteTensor).unwrap();
        let op = assemble_linearized_operator(&grid, CollisionModel::BgkUnit).unwrap();
        SlabProblem::new(grid, op, eps, g, 0.5, nz).unwrap()
    }

    #[test]
    fn zero_data_gives_zero() {
        let mut p = problem(0.1, 0.1, 16);
        for bc in [WallCondition::GivenIndata, WallCondition::Diffuse] {
            p.bc = bc;
            let s = solve_linear_slab(&p).unwrap();
            assert!(s.f.data.iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn kappa_bounds_and_wall_ratio() {
        let p = problem(0.1, 0.3, 8);
        for z in p.z() {
            let k = p.kappa(z);
            assert!((1.0..=(2.0 * PI * 0.1 * 0.3).exp() * (1.0 + 1e-15)).contains(&k));
        }
        for top in [true, false] {
            let r = p.wall_ratio(top);
            let flux: f64 = (0..p.grid.len()).map(|k| p.grid.weights[k] * p.grid.nodes[k][2].abs() * r[k]).sum();
            assert!((flux - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn unit_function_norm() {
        let p = problem(0.1, 0.0, 12);
        let one = KineticField::from_points(13, 1, p.grid.len(), |_, _| DVector::from_element(p.grid.len(), 1.0));
        assert!((p.norm(&one, NormKind::Q22).unwrap() - (2.0 * PI).sqrt()).abs() < 1e-12);
        assert!((p.norm(&one, NormKind::Inf2).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(p.norm(&one, NormKind::Time222), Err(Error::Missing(_))));
    }

    fn smooth(grid: &VelocityGrid, z: f64) -> DVector<f64> {
        grid.eval(|v| 0.3 * z.sin() + (0.5 * z).cos() * v[0] * v[2] + 0.1 * z.cos() * v[2] * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] - 5.0))
    }

    #[test]
    fn recovers_a_discrete_solution() {
        let mut p = problem(0.1, 0.2, 16);
        p.q = QProfile::Laminar { lambda: 0.5 };
        p.bc = WallCondition::GivenIndata;
        let z = p.z();
        let exact = KineticField::from_points(17, 1, p.grid.len(), |j, _| smooth(&p.grid, z[j]));
        let solver = SlabSolver::new(&p).unwrap();
        let g = solver.apply(&exact);
        let wall = [exact.point_vec(0, 0), exact.point_vec(16, 0)];
        let s = solver.solve_with(&g, &wall).unwrap();
        assert!(s.f.data.iter().zip(&exact.data).all(|(a, b)| (a - b).abs() < 1e-11));
        assert!(solver.green_balance(&s.f, &g).defect.abs() < 1e-8);
    }

    #[test]
    fn unweighted_balance_when_gravity_vanishes() {
        let mut p = problem(0.2, 0.0, 12);
        p.bc = WallCondition::GivenIndata;
        let z = p.z();
        let f = KineticField::from_points(13, 1, p.grid.len(), |j, _| smooth(&p.grid, z[j]));
        let solver = SlabSolver::new(&p).unwrap();
        let g = solver.apply(&f);
        let a = solver.green_balance(&f, &g);
        let b = solver.green_balance_with(&f, &g, |_| 1.0);
        assert_eq!(a.outgoing, b.outgoing);
        assert_eq!(a.collision, b.collision);
        assert_eq!(a.source, b.source);
        let zero = solver.green_balance(&KineticField::like(&f), &KineticField::like(&f));
        assert_eq!([zero.outgoing, zero.incoming, zero.collision, zero.source], [0.0; 4]);
    }

    #[test]
    fn defect_with_net_flux_is_rejected() {
        let mut p = problem(0.1, 0.1, 8);
        p.bc = WallCondition::DiffuseWithDefect;
        p.wall_data[1] = p.grid.eval(|v| if v[2] > 0.0 { 1.0 } else { 0.0 });
        assert!(matches!(solve_linear_slab(&p), Err(Error::Solvability { .. })));
    }

    #[test]
    fn source_with_mass_is_rejected_by_the_gauge() {
        let mut p = problem(0.1, 0.1, 8);
        p.source = KineticField::from_points(9, 1, p.grid.len(), |_, _| DVector::from_element(p.grid.len(), 1.0));
        assert!(matches!(solve_linear_slab(&p), Err(Error::Solvability { .. })));
    }

    #[test]
    fn picard_without_source_stops_at_zero() {
        let p = problem(0.05, 0.1, 8);
        let solver = SlabSolver::new(&p).unwrap();
        let rep = picard_remainder(&solver, &KineticField::zeros(9, 1, p.grid.len()), &PicardConfig::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.r.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn relaxation_conserves_mass_and_stays_impermeable() {
        let p = problem(0.1, 0.1, 8);
        let grid = p.grid.clone();
        let cfg = EvolveConfig { cells: 32, t_final: 0.5, record_every: 5, ..Default::default() };
        let rep = evolve_slab(&p, |z| grid.eval(|v| 0.01 * z.cos() * v[2] * v[2]), &cfg).unwrap();
        assert!(rep.max_flux < 1e-12 && rep.mass_drift < 1e-10, "{} {}", rep.max_flux, rep.mass_drift);
        assert!(rep.norm.last().unwrap() < &rep.norm[0]);
        let zero = evolve_slab(&p, |_| DVector::zeros(grid.len()), &cfg).unwrap();
        assert!(zero.norm.iter().all(|n| *n == 0.0));
    }
}
