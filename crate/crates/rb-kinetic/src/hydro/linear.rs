//! Linear stability of the laminar state by a Chebyshev-tau method.
//!
//! At horizontal wavenumber `k` the perturbation `(w, theta) e^{ikx + st}`
//! obeys
//!
//! ```text
//! s (D^2 - k^2) w = eta (D^2 - k^2)^2 w - G k^2 theta
//! s theta         = kappa (D^2 - k^2) theta + lambda_eff w
//! ```
//!
//! with `w = Dw = theta = 0` (rigid) or `w = D^2 w = theta = 0` (stress-free)
//! at `z = +-pi`. Boundary rows are mapped to a far-away spurious eigenvalue.

use super::{HydroParams, WallKind, GAP};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const SPURIOUS: f64 = -1e8;

/// Rightmost eigenpair at one (Ra, alpha).
#[derive(Clone, Debug)]
pub struct LinearMode {
    pub growth_rate: Complex64,
    pub ra: f64,
    pub alpha: f64,
    /// Chebyshev coefficients (in z / pi) of w and theta.
    pub w: Vec<Complex64>,
    pub theta: Vec<Complex64>,
    /// Relative residual |A x - s B x| / |x| after row equilibration.
    pub residual: f64,
}

impl LinearMode {
    pub fn w_at(&self, z: f64) -> Complex64 {
        cheb_eval_c(&self.w, z / PI)
    }
    pub fn theta_at(&self, z: f64) -> Complex64 {
        cheb_eval_c(&self.theta, z / PI)
    }
}

fn cheb_eval_c(c: &[Complex64], x: f64) -> Complex64 {
    let re: Vec<f64> = c.iter().map(|v| v.re).collect();
    let im: Vec<f64> = c.iter().map(|v| v.im).collect();
    Complex64::new(crate::quadrature::cheb_eval(&re, x), crate::quadrature::cheb_eval(&im, x))
}

/// Coefficient-space derivative d/dxi.
pub fn cheb_coeff_diff(n: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n + 1, n + 1);
    for k in 0..=n {
        let ck = if k == 0 { 2.0 } else { 1.0 };
        for p in (k + 1)..=n {
            if (p + k) % 2 == 1 {
                d[(k, p)] = 2.0 * p as f64 / ck;
            }
        }
    }
    d
}

/// Tau matrices (A, B) for the generalized problem A x = s B x.
///
/// Unknowns are the coefficients of `w`, `v = (D^2 - k^2) w` and `theta`.
/// Splitting the fourth-order operator this way keeps the tau truncation
/// free of spurious unstable eigenvalues; algebraic and boundary rows are
/// sent to `SPURIOUS`.
pub fn tau_matrices(ra: f64, alpha: f64, p: &HydroParams, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = alpha / GAP;
    let m = n + 1;
    let dz = cheb_coeff_diff(n) / PI;
    let d2 = &dz * &dz;
    let lap = &d2 - DMatrix::identity(m, m) * (k * k);
    let le = p.lambda_eff(ra);
    let (iw, iv, it) = (0, m, 2 * m);
    let dim = 3 * m;
    let mut a = DMatrix::zeros(dim, dim);
    let mut b = DMatrix::zeros(dim, dim);
    // v equation: s v = eta lap v - G k^2 theta
    a.view_mut((iv, iv), (m, m)).copy_from(&(p.eta * &lap));
    for i in 0..m {
        a[(iv + i, it + i)] = -p.g * k * k;
        b[(iv + i, iv + i)] = 1.0;
    }
    // constraint: v - lap w = 0
    a.view_mut((iw, iw), (m, m)).copy_from(&(-&lap));
    for i in 0..m {
        a[(iw + i, iv + i)] = 1.0;
    }
    // theta equation
    a.view_mut((it, it), (m, m)).copy_from(&(p.kappa * &lap));
    for i in 0..m {
        a[(it + i, iw + i)] = le;
        b[(it + i, it + i)] = 1.0;
    }
    for i in 0..m {
        for j in 0..dim {
            b[(iw + i, j)] = a[(iw + i, j)] / SPURIOUS;
        }
    }
    let val = |kk: usize, s: f64| if s > 0.0 || kk.is_multiple_of(2) { 1.0 } else { -1.0 };
    let d1 = |kk: usize, s: f64| {
        let v = (kk * kk) as f64 / PI;
        if s > 0.0 || kk % 2 == 1 {
            v
        } else {
            -v
        }
    };
    let d2v = |kk: usize, s: f64| {
        let kf = kk as f64;
        let v = kf * kf * (kf * kf - 1.0) / (3.0 * PI * PI);
        if s > 0.0 || kk.is_multiple_of(2) {
            v
        } else {
            -v
        }
    };
    let mut set_row = |row: usize, col0: usize, f: &dyn Fn(usize) -> f64| {
        for j in 0..dim {
            a[(row, j)] = 0.0;
            b[(row, j)] = 0.0;
        }
        for kk in 0..m {
            a[(row, col0 + kk)] = f(kk);
            b[(row, col0 + kk)] = f(kk) / SPURIOUS;
        }
    };
    set_row(iv + m - 2, iw, &|kk| val(kk, 1.0));
    set_row(iv + m - 1, iw, &|kk| val(kk, -1.0));
    match p.walls {
        WallKind::Rigid => {
            set_row(iw + m - 2, iw, &|kk| d1(kk, 1.0));
            set_row(iw + m - 1, iw, &|kk| d1(kk, -1.0));
        }
        WallKind::StressFree => {
            set_row(iw + m - 2, iw, &|kk| d2v(kk, 1.0));
            set_row(iw + m - 1, iw, &|kk| d2v(kk, -1.0));
        }
    }
    set_row(it + m - 2, it, &|kk| val(kk, 1.0));
    set_row(it + m - 1, it, &|kk| val(kk, -1.0));
    for i in 0..dim {
        let s = a.row(i).amax().max(b.row(i).amax());
        if s > 0.0 {
            for j in 0..dim {
                a[(i, j)] /= s;
                b[(i, j)] /= s;
            }
        }
    }
    (a, b)
}

/// All eigenvalues of a dense real matrix.
pub fn dense_eigenvalues(c: &DMatrix<f64>) -> Vec<Complex64> {
    let fm = faer::Mat::<f64>::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)]);
    let ev: Vec<faer::complex_native::c64> = fm.eigenvalues();
    ev.into_iter().map(|z| Complex64::new(z.re, z.im)).collect()
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Rightmost eigenvalue together with the tau matrices it came from.
fn rightmost(ra: f64, alpha: f64, p: &HydroParams, n: usize) -> Result<(Complex64, DMatrix<f64>, DMatrix<f64>)> {
    if !(ra > 0.0 && alpha > 0.0) {
        return Err(Error::Config(format!("need Ra > 0 and alpha > 0, got Ra = {ra}, alpha = {alpha}")));
    }
    if n < 24 {
        return Err(Error::Config(format!("N_z = {n} is below the minimum 24")));
    }
    let (a, b) = tau_matrices(ra, alpha, p, n);
    let k = alpha / GAP;
    // Shift to the right of the physical spectrum; eigenvalues of
    // (A - sB)^{-1} B are 1/(lambda - s).
    let shift = (p.eta + p.kappa) * (1.0 + k * k);
    let lu = (&a - shift * &b).lu();
    let c = lu.solve(&b).ok_or_else(|| Error::Convergence("shifted tau matrix is singular".into()))?;
    let mus = dense_eigenvalues(&c);
    let mut best: Option<Complex64> = None;
    for mu in mus.iter() {
        if mu.norm() < 1e-13 {
            continue;
        }
        let s = Complex64::new(shift, 0.0) + 1.0 / mu;
        // Boundary and constraint rows live at SPURIOUS; anything that far
        // out is not a physical mode.
        if s.norm() > 0.5 * SPURIOUS.abs() {
            continue;
        }
        if best.is_none_or(|bb| s.re > bb.re) {
            best = Some(s);
        }
    }
    let mut sigma = best.ok_or_else(|| Error::Convergence("no finite eigenvalue".into()))?;
    if sigma.im.abs() < 1e-9 * sigma.re.abs().max(1e-6) {
        sigma.im = 0.0;
    }
    Ok((sigma, a, b))
}

/// Rightmost growth rate only.
pub fn growth_rate(ra: f64, alpha: f64, p: &HydroParams, n: usize) -> Result<Complex64> {
    Ok(rightmost(ra, alpha, p, n)?.0)
}

/// Rightmost eigenvalue and eigenvector at (Ra, alpha).
pub fn least_eigenpair(ra: f64, alpha: f64, p: &HydroParams, n: usize) -> Result<LinearMode> {
    let (mut sigma, a, b) = rightmost(ra, alpha, p, n)?;

    // Inverse iteration for the eigenvector, with Rayleigh-type refinement.
    let ac = to_complex(&a);
    let bc = to_complex(&b);
    let dim = a.nrows();
    let mut x = DVector::from_fn(dim, |i, _| Complex64::new(1.0 + 0.01 * i as f64, 0.0));
    let mut residual = f64::INFINITY;
    for _ in 0..6 {
        let mshift = &ac - &bc * sigma;
        let lu = mshift.lu();
        let bx = &bc * &x;
        let y = match lu.solve(&bx) {
            Some(y) => y,
            None => break,
        };
        let nrm = y.norm();
        if !nrm.is_finite() || nrm == 0.0 {
            break;
        }
        x = y / Complex64::new(nrm, 0.0);
        let ax = &ac * &x;
        let bx = &bc * &x;
        let denom = bx.dotc(&bx);
        if denom.norm() > 0.0 {
            let corr = bx.dotc(&(&ax - &bx * sigma)) / denom;
            sigma += corr;
        }
        residual = (&ac * &x - &bc * &x * sigma).norm() / x.norm();
        if residual < 1e-12 {
            break;
        }
    }
    if residual > 1e-8 {
        return Err(Error::Convergence(format!("eigen-residual {residual:.3e} at Ra = {ra}, alpha = {alpha}")));
    }
    if sigma.im.abs() < 1e-10 {
        sigma.im = 0.0;
    }
    let m = n + 1;
    let w: Vec<Complex64> = (0..m).map(|i| x[i]).collect();
    let th: Vec<Complex64> = (0..m).map(|i| x[2 * m + i]).collect();
    // Fix the phase so the midplane temperature is real and positive.
    let t0 = cheb_eval_c(&th, 0.0);
    let ph = if t0.norm() > 0.0 { t0.conj() / t0.norm() } else { Complex64::new(1.0, 0.0) };
    Ok(LinearMode {
        growth_rate: sigma,
        ra,
        alpha,
        w: w.into_iter().map(|v| v * ph).collect(),
        theta: th.into_iter().map(|v| v * ph).collect(),
        residual,
    })
}

/// Smallest Ra at which the rightmost growth rate crosses zero.
pub fn neutral_rayleigh(alpha: f64, p: &HydroParams, n: usize) -> Result<f64> {
    let growth = |ra: f64| -> Result<f64> { Ok(growth_rate(ra, alpha, p, n)?.re) };
    let (mut lo, mut hi) = (200.0, 2000.0);
    let mut glo = growth(lo)?;
    let mut ghi = growth(hi)?;
    let mut tries = 0;
    while glo > 0.0 && tries < 20 {
        hi = lo;
        ghi = glo;
        lo *= 0.5;
        glo = growth(lo)?;
        tries += 1;
    }
    while ghi < 0.0 && tries < 40 {
        lo = hi;
        glo = ghi;
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::Bracket { lo, hi });
        }
        ghi = growth(hi)?;
        tries += 1;
    }
    if !(glo < 0.0 && ghi >= 0.0) {
        return Err(Error::Bracket { lo, hi });
    }
    // Illinois regula falsi; the growth rate is smooth in Ra.
    let mut side = 0;
    for _ in 0..100 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = (lo * ghi - hi * glo) / (ghi - glo);
        let gm = growth(mid)?;
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm < 0.0 {
            lo = mid;
            glo = gm;
            if side == -1 {
                ghi *= 0.5;
            }
            side = -1;
        } else {
            hi = mid;
            ghi = gm;
            if side == 1 {
                glo *= 0.5;
            }
            side = 1;
        }
        if gm.abs() < 1e-14 {
            return Ok(mid);
        }
    }
    Ok((lo * ghi - hi * glo) / (ghi - glo))
}

/// Neutral curve at the listed wavenumbers.
pub fn neutral_curve(alphas: &[f64], p: &HydroParams, n: usize) -> Result<Vec<(f64, f64)>> {
    alphas
        .iter()
        .map(|&a| {
            if a <= 0.0 {
                return Err(Error::Config(format!("alpha must be positive, got {a}")));
            }
            Ok((a, neutral_rayleigh(a, p, n)?))
        })
        .collect()
}

/// Critical point of the linear problem.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalLinear {
    pub ra_c: f64,
    pub alpha_c: f64,
}

/// Golden-section minimization of the neutral curve.
pub fn critical_linear(p: &HydroParams, n: usize) -> Result<CriticalLinear> {
    let f = |a: f64| neutral_rayleigh(a, p, n);
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = match p.walls {
        WallKind::Rigid => (2.6, 3.7),
        WallKind::StressFree => (1.6, 2.9),
    };
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > 1e-6 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d)?;
        }
    }
    let alpha_c = 0.5 * (a + b);
    Ok(CriticalLinear { ra_c: f(alpha_c)?, alpha_c })
}

/// Closed-form stress-free neutral curve (pi^2 + a^2)^3 / a^2.
pub fn stress_free_neutral(alpha: f64) -> f64 {
    (PI * PI + alpha * alpha).powi(3) / (alpha * alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(walls: WallKind) -> HydroParams {
        HydroParams { walls, ..Default::default() }
    }

    #[test]
    fn stress_free_matches_closed_form() {
        let p = params(WallKind::StressFree);
        let a = PI / 2f64.sqrt();
        let ra = neutral_rayleigh(a, &p, 32).unwrap();
        assert!((ra - 27.0 * PI.powi(4) / 4.0).abs() < 1e-3, "{ra}");
        let ra2 = neutral_rayleigh(2.0, &p, 32).unwrap();
        assert!((ra2 - stress_free_neutral(2.0)).abs() < 1e-6 * ra2);
    }

    #[test]
    fn subcritical_modes_decay() {
        let p = params(WallKind::Rigid);
        for a in [2.0, 3.0, 4.0] {
            let m = least_eigenpair(0.5 * 1707.76, a, &p, 32).unwrap();
            assert!(m.growth_rate.re < 0.0);
            assert!(m.residual < 1e-8);
        }
    }

    #[test]
    fn neutral_curve_is_convex_near_minimum() {
        let p = params(WallKind::Rigid);
        let c = neutral_curve(&[2.0, 3.1, 4.0], &p, 32).unwrap();
        assert!(c[1].1 < c[0].1 && c[1].1 < c[2].1);
    }

    #[test]
    fn eigenvector_satisfies_walls() {
        let p = params(WallKind::Rigid);
        let m = least_eigenpair(1800.0, 3.1, &p, 32).unwrap();
        assert!(m.w_at(PI).norm() < 1e-10 && m.w_at(-PI).norm() < 1e-10);
        assert!(m.theta_at(PI).norm() < 1e-10);
        assert!(m.growth_rate.re > 0.0);
    }

    // Independent oracle: shoot the even sixth-order neutral ODE
    // (D^2 - a^2)^3 W = -Ra a^2 W on the unit gap, W = DW = (D^2-a^2)^2 W = 0
    // at z = 1/2.
    fn shoot_det(ra: f64, a: f64) -> f64 {
        let rhs = |y: &[f64; 6]| -> [f64; 6] {
            // y = W, W', ..., W^(5); expand (D^2-a^2)^3 = D^6 - 3a^2 D^4 + 3a^4 D^2 - a^6
            let a2 = a * a;
            let d6 = 3.0 * a2 * y[4] - 3.0 * a2 * a2 * y[2] + a2 * a2 * a2 * y[0] - ra * a2 * y[0];
            [y[1], y[2], y[3], y[4], y[5], d6]
        };
        let steps = 2000;
        let h = 0.5 / steps as f64;
        let mut cols = vec![];
        for start in [0usize, 2, 4] {
            let mut y = [0.0; 6];
            y[start] = 1.0;
            for _ in 0..steps {
                let k1 = rhs(&y);
                let add = |y: &[f64; 6], k: &[f64; 6], s: f64| {
                    let mut o = *y;
                    for i in 0..6 {
                        o[i] += s * k[i];
                    }
                    o
                };
                let k2 = rhs(&add(&y, &k1, 0.5 * h));
                let k3 = rhs(&add(&y, &k2, 0.5 * h));
                let k4 = rhs(&add(&y, &k3, h));
                for i in 0..6 {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            let a2 = a * a;
            cols.push([y[0], y[1], y[4] - 2.0 * a2 * y[2] + a2 * a2 * y[0]]);
        }
        let m = nalgebra::Matrix3::from_fn(|i, j| cols[j][i]);
        m.determinant()
    }

    fn shoot_neutral(a: f64) -> f64 {
        let (mut lo, mut hi) = (1200.0, 2600.0);
        let flo = shoot_det(lo, a);
        assert!(flo * shoot_det(hi, a) < 0.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if shoot_det(mid, a) * flo > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn rigid_neutral_matches_shooting() {
        let p = params(WallKind::Rigid);
        for a in [2.5, 3.116, 4.0] {
            let tau = neutral_rayleigh(a, &p, 32).unwrap();
            let shoot = shoot_neutral(a);
            assert!((tau / shoot - 1.0).abs() < 1e-6, "alpha {a}: {tau} vs {shoot}");
        }
    }

    #[test]
    fn rigid_critical_point() {
        let p = params(WallKind::Rigid);
        let c = critical_linear(&p, 32).unwrap();
        assert!((c.ra_c - 1707.76).abs() < 0.01, "{}", c.ra_c);
        assert!((c.alpha_c - 3.116).abs() < 1e-3, "{}", c.alpha_c);
        let c64 = critical_linear(&p, 64).unwrap();
        assert!((c64.ra_c / c.ra_c - 1.0).abs() < 1e-3);
        let m = least_eigenpair(c.ra_c, c.alpha_c, &p, 32).unwrap();
        assert!(m.growth_rate.norm() < 1e-6);
    }
}
