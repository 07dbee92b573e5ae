//! Critical point, weakly nonlinear roll branch and Newton steady rolls.
//!
//! Everything here works on the same collocation discretization as the DNS,
//! so the rolls are exact fixed points of the time stepper.
//!
//! Steady solutions are sought in the subspace fixed by the reflection
//! `x -> -x` composed with half-period translation. There odd Fourier modes
//! carry `psi_m = a_m` and `theta_m = i b_m`, even ones `psi_m = i a_m` and
//! `theta_m = b_m` (with `psi_0 = 0`), all `a_m, b_m` real. This kills the
//! translation null direction and makes the Newton system real.

use super::linear::{critical_linear, dense_eigenvalues};
use super::spectral::{Geometry, Modal, Spectral};
use super::{HydroParams, HydroState};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default validity bound for the perturbative roll formula.
pub const DELTA_MAX: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Clockwise,
    Anticlockwise,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Clockwise => -1.0,
            Branch::Anticlockwise => 1.0,
        }
    }
}

/// Steady-state residual operator at fixed `lambda_eff`.
pub struct SteadyOperator<'a> {
    pub sp: &'a Spectral,
    pub params: HydroParams,
}

impl<'a> SteadyOperator<'a> {
    pub fn new(sp: &'a Spectral, params: HydroParams) -> Self {
        Self { sp, params }
    }

    /// Modal residuals of the vorticity and temperature equations, with
    /// the wall conditions in rows 0, 1, N-1, N (psi) and 0, N (theta).
    /// `lin` and `nonlin` switch the linear and quadratic parts.
    pub fn residual_parts(&self, s: &HydroState, le: f64, lin: bool, nonlin: bool) -> (Modal, Modal) {
        let sp = self.sp;
        let p = &self.params;
        let n = sp.geom.nz;
        let omega = sp.laplacian(&s.psi);
        let mut rp = sp.zeros();
        let mut rt = sp.zeros();
        if lin {
            let lap_omega = sp.laplacian(&omega);
            let lap_theta = sp.laplacian(&s.theta);
            for m in 0..rp.len() {
                let ik = Complex64::new(0.0, sp.kappa(m));
                rp[m] = &lap_omega[m] * Complex64::new(p.eta, 0.0) + &s.theta[m] * (ik * p.g);
                rt[m] = &lap_theta[m] * Complex64::new(p.kappa, 0.0) + &s.psi[m] * (ik * le);
            }
        }
        if nonlin {
            let nw = sp.advect(&s.psi, &omega);
            let nt = sp.advect(&s.psi, &s.theta);
            for m in 0..rp.len() {
                rp[m] -= &nw[m];
                rt[m] -= &nt[m];
            }
        }
        for m in 0..rp.len() {
            let dpsi = Spectral::apply(&sp.d1, &s.psi[m]);
            if lin {
                rp[m][0] = s.psi[m][0];
                rp[m][n] = s.psi[m][n];
                rp[m][1] = dpsi[0];
                rp[m][n - 1] = dpsi[n];
                rt[m][0] = s.theta[m][0];
                rt[m][n] = s.theta[m][n];
            } else {
                for j in [0, 1, n - 1, n] {
                    rp[m][j] = Complex64::new(0.0, 0.0);
                }
                rt[m][0] = Complex64::new(0.0, 0.0);
                rt[m][n] = Complex64::new(0.0, 0.0);
            }
        }
        (rp, rt)
    }

    pub fn residual(&self, s: &HydroState, le: f64) -> (Modal, Modal) {
        self.residual_parts(s, le, true, true)
    }

    /// Derivative of the residual with respect to `lambda_eff`.
    pub fn d_lambda(&self, s: &HydroState) -> (Modal, Modal) {
        let sp = self.sp;
        let n = sp.geom.nz;
        let rp = sp.zeros();
        let mut rt = sp.zeros();
        for m in 0..rt.len() {
            let ik = Complex64::new(0.0, sp.kappa(m));
            rt[m] = &s.psi[m] * ik;
            rt[m][0] = Complex64::new(0.0, 0.0);
            rt[m][n] = Complex64::new(0.0, 0.0);
        }
        (rp, rt)
    }

    pub fn residual_norm(&self, s: &HydroState, le: f64) -> f64 {
        let (rp, rt) = self.residual(s, le);
        (self.sp.inner(&rp, &rp) + self.sp.inner(&rt, &rt)).sqrt()
    }
}

/// Real packing of the symmetric subspace.
#[derive(Clone, Copy, Debug)]
pub struct Packing {
    pub n1: usize,
    pub modes: usize,
}

impl Packing {
    pub fn new(sp: &Spectral) -> Self {
        Self { n1: sp.npts(), modes: sp.geom.modes() }
    }

    pub fn len(&self) -> usize {
        self.n1 * (2 * self.modes + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index range of mode `m` in a packed vector.
    pub fn block(&self, m: usize) -> std::ops::Range<usize> {
        if m == 0 {
            0..self.n1
        } else {
            self.n1 * (2 * m - 1)..self.n1 * (2 * m + 1)
        }
    }

    /// Pack a pair of modal fields using the phases of (psi, theta).
    pub fn pack(&self, psi: &Modal, theta: &Modal) -> DVector<f64> {
        let n1 = self.n1;
        let mut out = DVector::zeros(self.len());
        for j in 0..n1 {
            out[j] = theta[0][j].re;
        }
        for m in 1..=self.modes {
            let o = self.block(m).start;
            for j in 0..n1 {
                let (a, b) = if m % 2 == 1 { (psi[m][j].re, theta[m][j].im) } else { (psi[m][j].im, theta[m][j].re) };
                out[o + j] = a;
                out[o + n1 + j] = b;
            }
        }
        out
    }

    pub fn pack_state(&self, s: &HydroState) -> DVector<f64> {
        self.pack(&s.psi, &s.theta)
    }

    pub fn unpack(&self, x: &DVector<f64>, geom: Geometry) -> HydroState {
        let n1 = self.n1;
        let z = || DVector::from_element(n1, Complex64::new(0.0, 0.0));
        let mut psi = vec![z(); self.modes + 1];
        let mut theta = vec![z(); self.modes + 1];
        for j in 0..n1 {
            theta[0][j] = Complex64::new(x[j], 0.0);
        }
        for m in 1..=self.modes {
            let o = self.block(m).start;
            for j in 0..n1 {
                let (a, b) = (x[o + j], x[o + n1 + j]);
                if m % 2 == 1 {
                    psi[m][j] = Complex64::new(a, 0.0);
                    theta[m][j] = Complex64::new(0.0, b);
                } else {
                    psi[m][j] = Complex64::new(0.0, a);
                    theta[m][j] = Complex64::new(b, 0.0);
                }
            }
        }
        HydroState { geometry: geom, psi, theta }
    }
}

struct Packed<'a> {
    op: SteadyOperator<'a>,
    pk: Packing,
}

impl<'a> Packed<'a> {
    fn state(&self, x: &DVector<f64>) -> HydroState {
        self.pk.unpack(x, self.op.sp.geom)
    }
    fn lin(&self, x: &DVector<f64>, le: f64) -> DVector<f64> {
        let (rp, rt) = self.op.residual_parts(&self.state(x), le, true, false);
        self.pk.pack(&rp, &rt)
    }
    fn nonlin(&self, x: &DVector<f64>) -> DVector<f64> {
        let (rp, rt) = self.op.residual_parts(&self.state(x), 0.0, false, true);
        self.pk.pack(&rp, &rt)
    }
    fn full(&self, x: &DVector<f64>, le: f64) -> DVector<f64> {
        let (rp, rt) = self.op.residual(&self.state(x), le);
        self.pk.pack(&rp, &rt)
    }
    fn dlam(&self, x: &DVector<f64>) -> DVector<f64> {
        let (rp, rt) = self.op.d_lambda(&self.state(x));
        self.pk.pack(&rp, &rt)
    }
    /// Symmetric bilinear form with Q(x, x) = nonlin(x).
    fn q(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        (self.nonlin(&(x + y)) - self.nonlin(x) - self.nonlin(y)) * 0.5
    }
    fn lin_matrix(&self, le: f64, modes: &[usize]) -> DMatrix<f64> {
        let idx: Vec<usize> = modes.iter().flat_map(|&m| self.pk.block(m)).collect();
        let mut out = DMatrix::zeros(idx.len(), idx.len());
        let mut e = DVector::zeros(self.pk.len());
        for (c, &k) in idx.iter().enumerate() {
            e[k] = 1.0;
            let col = self.lin(&e, le);
            e[k] = 0.0;
            for (r, &i) in idx.iter().enumerate() {
                out[(r, c)] = col[i];
            }
        }
        out
    }
    /// Exact Jacobian: the quadratic part is differentiated by central
    /// differences with unit step, which is exact for a quadratic map.
    fn jacobian(&self, x: &DVector<f64>, le: f64) -> DMatrix<f64> {
        let n = self.pk.len();
        let mut out = DMatrix::zeros(n, n);
        let mut e = DVector::zeros(n);
        for k in 0..n {
            e[k] = 1.0;
            let col = self.lin(&e, le) + (self.nonlin(&(x + &e)) - self.nonlin(&(x - &e))) * 0.5;
            e[k] = 0.0;
            out.set_column(k, &col);
        }
        out
    }
}

fn extract(v: &DVector<f64>, r: std::ops::Range<usize>) -> DVector<f64> {
    DVector::from_iterator(r.len(), r.map(|i| v[i]))
}

/// Critical point with the weakly nonlinear data needed for the rolls.
#[derive(Clone, Debug)]
pub struct BifurcationPoint {
    pub params: HydroParams,
    pub ra_c: f64,
    pub alpha_c: f64,
    /// Critical kinetic temperature gradient.
    pub lambda_c: f64,
    /// Critical effective gradient of the collocation problem.
    pub lambda_eff_c: f64,
    /// Eigenvalue of `k Lap tau = d0 phi_z`.
    pub d0: f64,
    /// Roll amplitude constant, `C0^2 = lambda_c / lambda_2`.
    pub c0: f64,
    /// Cubic Landau coefficient `lambda_2`; positive means supercritical.
    pub landau: f64,
    /// Critical mode (phi, tau), normalized to `|tau|_{L2} = 1`.
    pub mode: HydroState,
    pub second_order: HydroState,
    pub delta_max: f64,
}

/// JSON-friendly summary of a bifurcation point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalSummary {
    pub ra_c: f64,
    pub alpha_c: f64,
    pub lambda_c: f64,
    pub d0: f64,
    pub c0: f64,
    pub landau: f64,
    pub supercritical: bool,
    pub mu: f64,
    pub nz: usize,
}

/// Locate the critical point and run the Lyapunov-Schmidt reduction.
///
/// The box is `mu = 2 pi / alpha_c`, so Fourier mode 1 is the critical one.
pub fn critical_point(params: &HydroParams, nx: usize, nz: usize) -> Result<BifurcationPoint> {
    let lin = critical_linear(params, nz.max(24))?;
    let geom = Geometry::new(2.0 * PI / lin.alpha_c, nx, nz)?;
    if geom.modes() < 2 {
        return Err(Error::Config(format!("N_x = {nx} keeps fewer than two Fourier modes")));
    }
    let sp = Spectral::new(geom);
    let pk = Packing::new(&sp);
    let pd = Packed { op: SteadyOperator::new(&sp, *params), pk };
    let b1 = pk.block(1);

    // Discrete critical gradient: J1(l) = A1 + l B1 is singular.
    let a1 = pd.lin_matrix(0.0, &[1]);
    let bl = {
        let mut m = DMatrix::zeros(b1.len(), b1.len());
        let mut e = DVector::zeros(pk.len());
        for (c, k) in b1.clone().enumerate() {
            e[k] = 1.0;
            let col = pd.dlam(&e);
            e[k] = 0.0;
            for (r, i) in b1.clone().enumerate() {
                m[(r, c)] = col[i];
            }
        }
        m
    };
    let c = a1
        .clone()
        .lu()
        .solve(&(-&bl))
        .ok_or_else(|| Error::Convergence("mode-1 diffusion block is singular".into()))?;
    let mut le_c = f64::INFINITY;
    for nu in dense_eigenvalues(&c) {
        if nu.re > 1e-14 && nu.im.abs() < 1e-8 * nu.re {
            let l = 1.0 / nu.re;
            if (l - params.lambda_eff(lin.ra_c)).abs() < 0.05 * l && l < le_c {
                le_c = l;
            }
        }
    }
    if !le_c.is_finite() {
        return Err(Error::Convergence("no real critical gradient near the tau estimate".into()));
    }
    let j1 = &a1 + &bl * le_c;
    let svd = j1.clone().svd(true, true);
    let imin = svd.singular_values.imin();
    let x1b = svd.v_t.as_ref().unwrap().row(imin).transpose();
    let yb = svd.u.as_ref().unwrap().column(imin).into_owned();

    let mut x1 = DVector::zeros(pk.len());
    x1.rows_mut(b1.start, b1.len()).copy_from(&x1b);
    let mut mode = pk.unpack(&x1, geom);
    let tn = sp.norm(&mode.theta);
    let mid = sp.geom.nz / 2;
    let sgn = if mode.theta[1][mid].im >= 0.0 { 1.0 } else { -1.0 };
    x1 *= sgn / tn;
    mode = pk.unpack(&x1, geom);

    // Second order on modes 0 and 2.
    let q11 = pd.nonlin(&x1);
    let mut x2 = DVector::zeros(pk.len());
    for m in [0usize, 2] {
        let r = pk.block(m);
        let jm = pd.lin_matrix(le_c, &[m]);
        let rhs = -extract(&q11, r.clone());
        let sol = jm.lu().solve(&rhs).ok_or_else(|| Error::Convergence(format!("mode-{m} block is singular")))?;
        x2.rows_mut(r.start, r.len()).copy_from(&sol);
    }
    let second_order = pk.unpack(&x2, geom);

    // Third-order solvability on mode 1.
    let q12 = extract(&pd.q(&x1, &x2), b1.clone());
    let bx1 = extract(&pd.dlam(&x1), b1.clone());
    let num = yb.dot(&bx1);
    let den = yb.dot(&q12);
    let landau = -2.0 * den / num;
    let c0sq = le_c / landau;
    if !(c0sq > 0.0) {
        return Err(Error::Convergence(format!("subcritical bifurcation: lambda_2 = {landau:.6e}")));
    }
    Ok(BifurcationPoint {
        params: *params,
        ra_c: lin.ra_c,
        alpha_c: lin.alpha_c,
        lambda_c: params.lambda_from_eff(le_c),
        lambda_eff_c: le_c,
        d0: -le_c,
        c0: c0sq.sqrt(),
        landau,
        mode,
        second_order,
        delta_max: DELTA_MAX,
    })
}

impl BifurcationPoint {
    pub fn geometry(&self) -> Geometry {
        self.mode.geometry
    }

    pub fn spectral(&self) -> Spectral {
        Spectral::new(self.geometry())
    }

    pub fn summary(&self) -> CriticalSummary {
        CriticalSummary {
            ra_c: self.ra_c,
            alpha_c: self.alpha_c,
            lambda_c: self.lambda_c,
            d0: self.d0,
            c0: self.c0,
            landau: self.landau,
            supercritical: self.landau > 0.0,
            mu: self.geometry().mu,
            nz: self.geometry().nz,
        }
    }

    /// `lambda_eff = lambda_c (1 + delta^2)`.
    pub fn lambda_eff_at(&self, delta: f64) -> f64 {
        self.lambda_eff_c * (1.0 + delta * delta)
    }

    pub fn rayleigh_at(&self, delta: f64) -> f64 {
        self.params.rayleigh(self.lambda_eff_at(delta))
    }

    /// Inverse of `rayleigh_at`.
    pub fn delta_for(&self, ra: f64) -> Result<f64> {
        let r = self.params.lambda_eff(ra) / self.lambda_eff_c - 1.0;
        if r < 0.0 {
            return Err(Error::Config(format!("Ra = {ra} is below the critical value, no rolls")));
        }
        Ok(r.sqrt())
    }

    fn roll_unchecked(&self, delta: f64, branch: Branch) -> HydroState {
        let a = branch.sign() * delta * self.c0;
        self.mode.combine(a, &self.second_order, delta * delta * self.c0 * self.c0)
    }

    /// Perturbative roll `s delta C0 X1 + delta^2 C0^2 X2`, with `s = -1`
    /// for the clockwise branch, at `lambda_eff = lambda_c (1 + delta^2)`.
    pub fn roll_solution(&self, delta: f64, branch: Branch) -> Result<HydroState> {
        if delta < 0.0 || !delta.is_finite() {
            return Err(Error::Config(format!("delta must be nonnegative, got {delta}")));
        }
        if delta > self.delta_max {
            return Err(Error::OutOfRange { delta, max: self.delta_max });
        }
        Ok(self.roll_unchecked(delta, branch))
    }

    /// Residual norm of the steady equations for a state at `delta`.
    pub fn steady_residual(&self, state: &HydroState, delta: f64) -> f64 {
        let sp = self.spectral();
        SteadyOperator::new(&sp, self.params).residual_norm(state, self.lambda_eff_at(delta))
    }

    /// Steady roll at Rayleigh number `ra` by Newton's method, seeded with
    /// the perturbative formula (used outside its validity range if needed).
    pub fn steady_roll(&self, ra: f64, branch: Branch) -> Result<HydroState> {
        let delta = self.delta_for(ra)?;
        let sp = self.spectral();
        let pk = Packing::new(&sp);
        let pd = Packed { op: SteadyOperator::new(&sp, self.params), pk };
        let le = self.params.lambda_eff(ra);
        let mut x = pk.pack_state(&self.roll_unchecked(delta, branch));
        let scale = x.amax().max(1e-300);
        let mut last = f64::INFINITY;
        for _ in 0..30 {
            let f = pd.full(&x, le);
            let fn_ = f.amax();
            if fn_ < 1e-12 * scale {
                return Ok(pk.unpack(&x, sp.geom));
            }
            if !(fn_ < 1e3 * last) {
                break;
            }
            last = fn_;
            let jac = pd.jacobian(&x, le);
            let dx = jac.lu().solve(&f).ok_or_else(|| Error::Convergence("singular Newton Jacobian".into()))?;
            x -= dx;
        }
        let f = pd.full(&x, le).amax();
        if f < 1e-9 * scale {
            return Ok(pk.unpack(&x, sp.geom));
        }
        Err(Error::Convergence(format!("Newton for the roll stalled at residual {f:.3e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bif() -> BifurcationPoint {
        critical_point(&HydroParams::default(), 16, 32).unwrap()
    }

    #[test]
    fn packing_round_trip() {
        let sp = Spectral::new(Geometry::new(2.0, 16, 12).unwrap());
        let pk = Packing::new(&sp);
        let x = DVector::from_fn(pk.len(), |i, _| (i as f64 * 0.37).sin());
        let s = pk.unpack(&x, sp.geom);
        assert_eq!((pk.pack_state(&s) - &x).amax(), 0.0);
        assert!(s.psi[0].iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn critical_point_and_rolls() {
        let b = bif();
        assert!((b.ra_c - 1707.76).abs() < 0.01);
        let p = b.params;
        // collocation and tau agree on the threshold
        assert!((p.rayleigh(b.lambda_eff_c) / b.ra_c - 1.0).abs() < 1e-6);
        assert!(b.c0 > 0.0 && b.landau > 0.0);
        let sp = b.spectral();
        assert!((sp.norm(&b.mode.theta) - 1.0).abs() < 1e-12);

        // trivial branch
        let r0 = b.roll_solution(0.0, Branch::Clockwise).unwrap();
        assert_eq!(r0.energy(&sp), 0.0);
        assert!(matches!(b.roll_solution(0.2, Branch::Clockwise), Err(Error::OutOfRange { .. })));

        // reflection swaps branches, energies agree
        let cw = b.roll_solution(0.05, Branch::Clockwise).unwrap();
        let acw = b.roll_solution(0.05, Branch::Anticlockwise).unwrap();
        assert!(cw.reflect().distance(&acw, &sp) < 1e-14 * acw.energy(&sp).sqrt());
        assert!((cw.energy(&sp) - acw.energy(&sp)).abs() <= 1e-12 * cw.energy(&sp));

        // O(delta^3) residual
        let ds = [0.025, 0.05, 0.1];
        let rs: Vec<f64> = ds
            .iter()
            .map(|&d| b.steady_residual(&b.roll_solution(d, Branch::Clockwise).unwrap(), d))
            .collect();
        let slope = (rs[2] / rs[0]).ln() / (ds[2] / ds[0]).ln();
        assert!(slope >= 2.9, "slope {slope}, residuals {rs:?}");

        // Newton converges to a nearby exact steady state
        let ra = b.rayleigh_at(0.05);
        let s = b.steady_roll(ra, Branch::Clockwise).unwrap();
        assert!(b.steady_residual(&s, 0.05) < 1e-9);
        assert!(s.distance(&cw, &sp) < 0.05 * cw.energy(&sp).sqrt());
        assert!(s.divergence_max(&sp) < 1e-10 && s.wall_max(&sp) < 1e-10);
    }
}
