//! Half-space Milne problem
//!
//! ```text
//! v_z dh/dz - eps^2 G(z) M^{-1} d_vz (M h) = L h + S(z),   z in [0, inf)
//! h(0, v) = f(v)  for v_z > 0,      <v_z h> = 0
//! ```
//!
//! The half-line is cut at `Z_max`, where the incoming half of `h` is set to
//! a kernel state: the hydrodynamic projection of the outgoing state, except
//! that its `psi_3` (flux) coefficient is a free multiplier. Bounded
//! solutions of the true half-space problem form a one-parameter family for
//! each inflow; the multiplier spans it and is fixed by `<v_z h> = 0` at the
//! wall. It tends to zero as `Z_max` grows.
//!
//! Each velocity node is swept along its characteristic with the box scheme
//! on a stretched grid. The coupling through the nondiagonal part of `L` is
//! solved densely in moment space (GMRES for high-rank operators), and the
//! weak `eps^2` force by fixed-point iteration.

use crate::collision::LinearOperator;
use crate::field::KineticField;
use crate::krylov::gmres;
use crate::velocity::VelocityGrid;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Decaying boundary-layer force `G^-(z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ForceProfile {
    None,
    /// `g exp(-rate z)`.
    Exponential { g: f64, rate: f64 },
}

impl ForceProfile {
    pub fn at(&self, z: f64) -> f64 {
        match *self {
            ForceProfile::None => 0.0,
            ForceProfile::Exponential { g, rate } => g * (-rate * z).exp(),
        }
    }
}

/// Half-line truncation and grid. Steps grow geometrically from `dz0` by
/// `stretch` up to `dz_max`, so the nodes below any `z` do not depend on
/// `z_max`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MilneConfig {
    pub z_max: f64,
    pub dz0: f64,
    pub stretch: f64,
    pub dz_max: f64,
    /// Kinetic `eps`; the force enters as `eps^2 G(z)`.
    pub eps: f64,
    pub force: ForceProfile,
    /// Tolerance for the force iteration and the Krylov fallback.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MilneConfig {
    fn default() -> Self {
        Self {
            z_max: 64.0,
            dz0: 0.02,
            stretch: 1.05,
            dz_max: 0.5,
            eps: 0.05,
            force: ForceProfile::None,
            tol: 1e-14,
            max_iter: 3000,
        }
    }
}

/// Above this many moment unknowns the dense solve gives way to GMRES.
const DENSE_LIMIT: usize = 6000;

impl MilneConfig {
    pub fn z(&self) -> Vec<f64> {
        let mut z = vec![0.0];
        let mut dz = self.dz0;
        while *z.last().unwrap() < self.z_max * (1.0 - 1e-12) {
            z.push(z.last().unwrap() + dz);
            dz = (dz * self.stretch).min(self.dz_max);
        }
        z
    }

    fn validate(&self) -> Result<()> {
        let ok = self.z_max > 0.0 && self.dz0 > 0.0 && self.stretch >= 1.0 && self.dz_max >= self.dz0;
        if !ok || self.dz0 * 4.0 > self.z_max {
            return Err(Error::Config(format!(
                "bad Milne grid z_max = {}, dz0 = {}, stretch = {}, dz_max = {}",
                self.z_max, self.dz0, self.stretch, self.dz_max
            )));
        }
        if !(self.eps >= 0.0) {
            return Err(Error::Config(format!("eps must be nonnegative, got {}", self.eps)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct MilneSolution {
    pub z: Vec<f64>,
    /// `h` on the z nodes (a one-column field).
    pub h: KineticField,
    /// Kernel coefficients of the asymptote; the `psi_3` slot is the
    /// (vanishing) flux.
    pub q_infinity: [f64; 5],
    pub decay_rate: f64,
    /// R^2 of the log-linear tail fit.
    pub tail_r2: f64,
    /// Largest `|<v_z h>|` over all nodes.
    pub flux: f64,
    /// Flux slot of the far-end closure, which goes to zero with `Z_max`.
    pub multiplier: f64,
    /// Max-norm residual of the discrete equations.
    pub residual: f64,
    pub iterations: usize,
}

struct Sweeper<'a> {
    grid: &'a VelocityGrid,
    op: &'a LinearOperator,
    cfg: MilneConfig,
    z: Vec<f64>,
    nv: usize,
    force: Vec<f64>,
}

impl<'a> Sweeper<'a> {
    fn new(grid: &'a VelocityGrid, op: &'a LinearOperator, cfg: MilneConfig) -> Self {
        let z = cfg.z();
        let force = z.iter().map(|&z| cfg.eps * cfg.eps * cfg.force.at(z)).collect();
        Self { grid, op, cfg, nv: grid.len(), z, force }
    }

    fn nz(&self) -> usize {
        self.z.len()
    }

    fn at<'b>(&self, x: &'b DVector<f64>, j: usize) -> &'b [f64] {
        &x.as_slice()[j * self.nv..(j + 1) * self.nv]
    }

    fn has_force(&self) -> bool {
        self.force.iter().any(|f| *f != 0.0)
    }

    /// `eps^2 G F h` at every node.
    fn force_term(&self, h: &DVector<f64>) -> DVector<f64> {
        let nv = self.nv;
        let mut out = DVector::zeros(h.len());
        for j in 0..self.nz() {
            if self.force[j] != 0.0 {
                let o = &mut out.as_mut_slice()[j * nv..(j + 1) * nv];
                self.grid.force(&h.as_slice()[j * nv..(j + 1) * nv], o);
                o.iter_mut().for_each(|a| *a *= self.force[j]);
            }
        }
        out
    }

    /// Right side `(L - diag) h + eps^2 G F h + S` at every node.
    fn coupling(&self, h: &DVector<f64>, source: Option<&KineticField>) -> DVector<f64> {
        let nv = self.nv;
        let mut out = self.force_term(h);
        for j in 0..self.nz() {
            let hj = DVector::from_column_slice(self.at(h, j));
            let lh = self.op.apply(&hj);
            let o = &mut out.as_mut_slice()[j * nv..(j + 1) * nv];
            for k in 0..nv {
                o[k] += lh[k] - self.op.diag[k] * hj[k];
            }
            if let Some(s) = source {
                o.iter_mut().zip(s.point(j, 0)).for_each(|(a, b)| *a += b);
            }
        }
        out
    }

    fn source_vec(&self, source: Option<&KineticField>) -> DVector<f64> {
        match source {
            Some(s) => DVector::from_column_slice(&s.data),
            None => DVector::zeros(self.nv * self.nz()),
        }
    }

    /// Sweep every node along its characteristic with the box scheme and
    /// right side `q`. Inflow at `z = 0` comes from `inflow`, at `Z_max`
    /// from `far`.
    fn sweep(&self, q: &DVector<f64>, inflow: &DVector<f64>, far: &DVector<f64>) -> DVector<f64> {
        let (nv, nz) = (self.nv, self.nz());
        let mut h = DVector::zeros(nv * nz);
        for k in 0..nv {
            let v = self.grid.nodes[k][2];
            let d = self.op.diag[k];
            if v > 0.0 {
                h[k] = inflow[k];
                for j in 0..nz - 1 {
                    let dz = self.z[j + 1] - self.z[j];
                    let qb = 0.5 * (q[j * nv + k] + q[(j + 1) * nv + k]);
                    h[(j + 1) * nv + k] = ((v / dz + 0.5 * d) * h[j * nv + k] + qb) / (v / dz - 0.5 * d);
                }
            } else {
                h[(nz - 1) * nv + k] = far[k];
                for j in (0..nz - 1).rev() {
                    let dz = self.z[j + 1] - self.z[j];
                    let qb = 0.5 * (q[j * nv + k] + q[(j + 1) * nv + k]);
                    h[j * nv + k] = ((v / dz - 0.5 * d) * h[(j + 1) * nv + k] - qb) / (v / dz + 0.5 * d);
                }
            }
        }
        h
    }

    /// Far-end state: the hydrodynamic projection with the flux slot set to `a`.
    fn closure(&self, far: &DVector<f64>, a: f64) -> DVector<f64> {
        let mut c = self.grid.kernel_coeffs(far);
        c[3] = a;
        self.grid.from_coeffs(&c)
    }

    fn far(&self, h: &DVector<f64>) -> DVector<f64> {
        DVector::from_column_slice(self.at(h, self.nz() - 1))
    }

    fn flux(&self, h: &DVector<f64>, j: usize) -> f64 {
        self.at(h, j).iter().zip(self.grid.nodes.iter()).zip(self.grid.weights.iter()).map(|((f, v), w)| f * v[2] * w).sum()
    }

    /// Max-norm residual of the box equations and boundary rows.
    fn residual(&self, h: &DVector<f64>, inflow: &DVector<f64>, source: Option<&KineticField>, a: f64) -> f64 {
        let (nv, nz) = (self.nv, self.nz());
        let q = self.coupling(h, source);
        let mut r: f64 = 0.0;
        for j in 0..nz - 1 {
            let dz = self.z[j + 1] - self.z[j];
            for k in 0..nv {
                let v = self.grid.nodes[k][2];
                let (h0, h1) = (h[j * nv + k], h[(j + 1) * nv + k]);
                let lhs = v * (h1 - h0) / dz - 0.5 * self.op.diag[k] * (h0 + h1);
                r = r.max((lhs - 0.5 * (q[j * nv + k] + q[(j + 1) * nv + k])).abs());
            }
        }
        let pfar = self.closure(&self.far(h), a);
        for k in 0..nv {
            if self.grid.nodes[k][2] > 0.0 {
                r = r.max((h[k] - inflow[k]).abs());
            } else {
                r = r.max((h[(nz - 1) * nv + k] - pfar[k]).abs());
            }
        }
        r
    }
}

/// Dense solve in the space of collision moments. The unknowns are the
/// moments `m_j = A_r^T W h_j` at every node and the five far-end kernel
/// coefficients; every velocity node is then recovered by one sweep.
struct MomentSolver<'a, 'b> {
    sw: &'b Sweeper<'a>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl<'a, 'b> MomentSolver<'a, 'b> {
    fn rank(sw: &Sweeper) -> usize {
        sw.op.rank()
    }

    fn size(sw: &Sweeper) -> usize {
        Self::rank(sw) * sw.nz() + 5
    }

    /// Sweep driven by moments/far coefficients `y` plus a fixed right side.
    fn drive(sw: &Sweeper, y: &DVector<f64>, base: &DVector<f64>, inflow: &DVector<f64>) -> DVector<f64> {
        let (nv, r) = (sw.nv, Self::rank(sw));
        let mut q = base.clone();
        for j in 0..sw.nz() {
            let m = y.rows(j * r, r);
            let add = &sw.op.left * m;
            q.rows_mut(j * nv, nv).iter_mut().zip(add.iter()).for_each(|(a, b)| *a += b);
        }
        let mut c = [0.0; 5];
        c.copy_from_slice(y.rows(r * sw.nz(), 5).as_slice());
        sw.sweep(&q, inflow, &sw.grid.from_coeffs(&c))
    }

    /// Moments of a swept field, with the flux at the wall in the far slot 3.
    fn observe(sw: &Sweeper, h: &DVector<f64>) -> DVector<f64> {
        let (nv, r) = (sw.nv, Self::rank(sw));
        let mut out = DVector::zeros(Self::size(sw));
        for j in 0..sw.nz() {
            let wh = sw.op.weights.component_mul(&h.rows(j * nv, nv));
            out.rows_mut(j * r, r).copy_from(&sw.op.right.tr_mul(&wh));
        }
        let mut c = sw.grid.kernel_coeffs(&sw.far(h));
        c[3] = sw.flux(h, 0);
        out.rows_mut(r * sw.nz(), 5).copy_from_slice(&c);
        out
    }

    fn new(sw: &'b Sweeper<'a>) -> Result<Self> {
        let n = Self::size(sw);
        let (zq, zi) = (DVector::zeros(sw.nv * sw.nz()), DVector::zeros(sw.nv));
        let flux_row = Self::rank(sw) * sw.nz() + 3;
        let mut k = DMatrix::zeros(n, n);
        let mut e = DVector::zeros(n);
        for col in 0..n {
            e[col] = 1.0;
            let out = Self::observe(sw, &Self::drive(sw, &e, &zq, &zi));
            e[col] = 0.0;
            let mut column = -out;
            if col != flux_row {
                column[col] += 1.0;
            }
            k.set_column(col, &column);
        }
        Ok(Self { sw, lu: k.lu() })
    }

    fn solve(&self, base: &DVector<f64>, inflow: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
        let sw = self.sw;
        let out0 = Self::observe(sw, &sw.sweep(base, inflow, &DVector::zeros(sw.nv)));
        let y = self.lu.solve(&out0).ok_or_else(|| Error::Convergence("singular Milne moment system".into()))?;
        let a = y[Self::rank(sw) * sw.nz() + 3];
        Ok((Self::drive(sw, &y, base, inflow), a))
    }
}

/// Matrix-free fallback for high-rank operators: GMRES on `h` with the
/// far flux slot fixed, then superposition for zero flux.
fn solve_krylov(sw: &Sweeper, inflow: &DVector<f64>, source: Option<&KineticField>) -> Result<(DVector<f64>, f64, usize)> {
    let n = sw.nv * sw.nz();
    let run = |inflow: &DVector<f64>, source: Option<&KineticField>, a: f64| -> Result<(DVector<f64>, usize)> {
        let q = sw.coupling(&DVector::zeros(n), source);
        let b = sw.sweep(&q, inflow, &sw.closure(&DVector::zeros(sw.nv), a));
        let op = |v: &DVector<f64>| v - sw.sweep(&sw.coupling(v, None), &DVector::zeros(sw.nv), &sw.closure(&sw.far(v), 0.0));
        let (x, rep) = gmres(op, &b, sw.cfg.tol, 150, sw.cfg.max_iter);
        if !rep.converged {
            return Err(Error::Convergence(format!("Milne sweeps stalled, residual history {:?}", rep.history)));
        }
        Ok((x, rep.iterations))
    };
    let (ha, ia) = run(inflow, source, 0.0)?;
    let (hb, ib) = run(&DVector::zeros(sw.nv), None, 1.0)?;
    let fb = sw.flux(&hb, 0);
    if fb.abs() < 1e-12 {
        return Err(Error::Convergence("far-end flux slot does not reach the wall".into()));
    }
    let a = -sw.flux(&ha, 0) / fb;
    Ok((ha + hb * a, a, ia + ib))
}

/// Solve the Milne problem for `indata` (only its `v_z > 0` values are
/// used) and an optional source given on the nodes of `cfg.z()`.
pub fn solve_milne(
    grid: &VelocityGrid,
    op: &LinearOperator,
    indata: &DVector<f64>,
    source: Option<&KineticField>,
    cfg: &MilneConfig,
) -> Result<MilneSolution> {
    cfg.validate()?;
    let nv = grid.len();
    if indata.len() != nv || op.len() != nv {
        return Err(Error::Config("indata, operator and velocity grid differ in size".into()));
    }
    let sw = Sweeper::new(grid, op, *cfg);
    if let Some(s) = source {
        if s.nzp != sw.nz() || s.nx != 1 || s.nv != nv {
            return Err(Error::Config("Milne source does not match the z grid".into()));
        }
    }
    let inflow = DVector::from_fn(nv, |k, _| if grid.nodes[k][2] > 0.0 { indata[k] } else { 0.0 });
    let (h, a, iterations) = if MomentSolver::size(&sw) <= DENSE_LIMIT {
        let ms = MomentSolver::new(&sw)?;
        let src = sw.source_vec(source);
        let (mut h, mut a) = ms.solve(&src, &inflow)?;
        let mut it = 1;
        // the force is weak (eps^2 G): fixed-point iteration on it
        if sw.has_force() {
            let mut history = vec![];
            loop {
                let (hn, an) = ms.solve(&(&src + sw.force_term(&h)), &inflow)?;
                let change = (&hn - &h).amax();
                history.push(change);
                h = hn;
                a = an;
                it += 1;
                if change <= sw.cfg.tol * h.amax().max(1.0) {
                    break;
                }
                if it > sw.cfg.max_iter || (history.len() > 3 && change > history[history.len() - 4]) {
                    return Err(Error::Convergence(format!("Milne force iteration stalled: {history:?}")));
                }
            }
        }
        (h, a, it)
    } else {
        solve_krylov(&sw, &inflow, source)?
    };
    let residual = sw.residual(&h, &inflow, source, a);
    let flux = (0..sw.nz()).map(|j| sw.flux(&h, j).abs()).fold(0.0, f64::max);
    let scale = h.amax().max(1.0);
    if flux > 1e-10 * scale {
        return Err(Error::Convergence(format!("flux defect {flux:.3e} after solve")));
    }
    let field = KineticField { nzp: sw.nz(), nx: 1, nv, data: h.as_slice().to_vec() };
    let q = grid.kernel_coeffs(&sw.far(&h));
    let (decay_rate, tail_r2) = tail_fit(&sw.z, &field, grid, &q);
    Ok(MilneSolution { z: sw.z.clone(), h: field, q_infinity: q, decay_rate, tail_r2, flux, multiplier: a, residual, iterations })
}

/// `||h(z) - q_inf||` at every node.
pub fn distance_profile(h: &KineticField, grid: &VelocityGrid, q: &[f64; 5]) -> Vec<f64> {
    let qv = grid.from_coeffs(q);
    (0..h.nzp).map(|j| grid.norm(&(h.point_vec(j, 0) - &qv))).collect()
}

/// Fit `log ||h - q_inf||` on the tail: from where the distance has dropped
/// to 1e-2 of its wall value down to 1e-6 of it (well above round-off).
fn tail_fit(z: &[f64], h: &KineticField, grid: &VelocityGrid, q: &[f64; 5]) -> (f64, f64) {
    let d = distance_profile(h, grid, q);
    let d0 = d[0];
    if d0 == 0.0 {
        return (f64::INFINITY, 1.0);
    }
    let pts: Vec<(f64, f64)> = z
        .iter()
        .zip(&d)
        .filter(|(_, &v)| v <= 1e-2 * d0 && v >= 1e-6 * d0)
        .map(|(&z, &v)| (z, v.ln()))
        .collect();
    if pts.len() < 3 {
        return (f64::NAN, 0.0);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    (-slope, sxy * sxy / (sxx * syy))
}

/// Boundary-layer correction `b = h - q_inf` and its estimated size at the
/// opposite wall, `2 pi / eps` away: `||b(0)|| exp(-sigma 2 pi / eps)`.
pub fn layer_correction(sol: &MilneSolution, grid: &VelocityGrid, eps: f64) -> (KineticField, f64) {
    let qv = grid.from_coeffs(&sol.q_infinity);
    let mut b = sol.h.clone();
    for j in 0..b.nzp {
        b.point_mut(j, 0).iter_mut().zip(qv.iter()).for_each(|(x, q)| *x -= q);
    }
    let b0 = grid.norm(&b.point_vec(0, 0));
    let defect = if b0 == 0.0 { 0.0 } else { b0 * (-sol.decay_rate * 2.0 * std::f64::consts::PI / eps).exp() };
    (b, defect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collision::{assemble_linearized_operator, CollisionModel};
    use crate::velocity::{build_velocity_grid, VelocityScheme};

    fn setup() -> (VelocityGrid, LinearOperator) {
        let grid = build_velocity_grid(6, VelocityScheme::GaussHermiteTensor).unwrap();
        let op = assemble_linearized_operator(&grid, CollisionModel::BgkUnit).unwrap();
        (grid, op)
    }

    fn cfg(z_max: f64) -> MilneConfig {
        MilneConfig { z_max, ..MilneConfig::default() }
    }

    #[test]
    fn zero_data_gives_zero() {
        let (grid, op) = setup();
        let sol = solve_milne(&grid, &op, &DVector::zeros(grid.len()), None, &cfg(10.0)).unwrap();
        assert!(sol.h.data.iter().all(|v| *v == 0.0));
        assert_eq!(sol.q_infinity, [0.0; 5]);
    }

    #[test]
    fn shear_inflow() {
        let (grid, op) = setup();
        // v_x is itself an equilibrium; the v_x v_z part makes a layer
        let sol = solve_milne(&grid, &op, &grid.eval(|v| v[0] * (1.0 + v[2])), None, &cfg(30.0)).unwrap();
        assert!(sol.flux <= 1e-12, "flux {}", sol.flux);
        assert!(sol.q_infinity[1].abs() > 0.1, "{:?}", sol.q_infinity);
        assert!(sol.q_infinity[3].abs() <= 1e-11);
        assert!(sol.residual < 1e-9, "residual {}", sol.residual);
        assert!(sol.decay_rate > 0.0 && sol.tail_r2 > 0.999, "{} {}", sol.decay_rate, sol.tail_r2);
        let (_, defect) = layer_correction(&sol, &grid, 0.05);
        assert!(defect < 1e-12);
    }

    #[test]
    fn constant_maxwellian_is_its_own_asymptote() {
        let (grid, op) = setup();
        let q = grid.from_coeffs(&[0.3, 0.1, -0.2, 0.0, 0.4]);
        let sol = solve_milne(&grid, &op, &q, None, &cfg(10.0)).unwrap();
        let (b, _) = layer_correction(&sol, &grid, 0.05);
        assert!(b.data.iter().all(|v| v.abs() < 1e-9));
        assert!(sol.multiplier.abs() < 1e-9);
    }

    #[test]
    fn forced_layer_is_linear_in_the_data() {
        let (grid, op) = setup();
        let c = MilneConfig { z_max: 32.0, force: ForceProfile::Exponential { g: 0.1, rate: 1.0 }, ..MilneConfig::default() };
        let a = grid.eval(|v| v[2] * v[2] - 1.0 + v[0]);
        let b = grid.eval(|v| v[0] * v[2] + 0.5 * v[1]);
        let sa = solve_milne(&grid, &op, &a, None, &c).unwrap();
        let sb = solve_milne(&grid, &op, &b, None, &c).unwrap();
        let sab = solve_milne(&grid, &op, &(&a * 2.0 - &b), None, &c).unwrap();
        assert!(sa.flux <= 1e-12 && sa.q_infinity[3].abs() <= 1e-11);
        assert!(sa.tail_r2 > 0.999, "{}", sa.tail_r2);
        for i in 0..5 {
            let lin = 2.0 * sa.q_infinity[i] - sb.q_infinity[i];
            assert!((sab.q_infinity[i] - lin).abs() < 1e-10, "{i}: {} vs {lin}", sab.q_infinity[i]);
        }
    }
}
