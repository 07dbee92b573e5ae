//! Streamfunction-vorticity DNS: Crank-Nicolson diffusion, Adams-Bashforth
//! advection and buoyancy, 2/3-dealiased Fourier by Chebyshev collocation.
//!
//! The wall rows carry `psi = d_z psi = theta = 0`; the interior rows are
//! exactly those of the steady residual in [`super::rolls`], so steady
//! states of one are fixed points of the other.

use super::rolls::Packing;
use super::spectral::{Modal, Spectral};
use super::{HydroParams, HydroState};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector, LU};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Default step: 1e-3 of the viscous time across the gap.
pub fn default_dt(params: &HydroParams) -> f64 {
    1e-3 * (2.0 * PI).powi(2) / params.eta
}

#[derive(Clone, Debug)]
pub struct DnsOptions {
    pub dt: f64,
    pub t_final: f64,
    /// Record the energy every this many steps.
    pub sample_every: usize,
    /// Keep a full snapshot every this many samples (0 = none).
    pub snapshot_every: usize,
    /// Energies are measured relative to this state when given.
    pub reference: Option<HydroState>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub snapshots: Vec<(f64, HydroState)>,
    pub final_state: HydroState,
    pub max_divergence: f64,
    pub max_wall: f64,
}

struct ModeSolver {
    psi_lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    psi_rhs: DMatrix<f64>,
    th_lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    th_rhs: DMatrix<f64>,
}

fn solve_complex(lu: &LU<f64, nalgebra::Dyn, nalgebra::Dyn>, b: &DVector<Complex64>) -> DVector<Complex64> {
    let n = b.len();
    let mut rhs = DMatrix::zeros(n, 2);
    for i in 0..n {
        rhs[(i, 0)] = b[i].re;
        rhs[(i, 1)] = b[i].im;
    }
    let x = lu.solve(&rhs).expect("mode matrix is invertible");
    DVector::from_fn(n, |i, _| Complex64::new(x[(i, 0)], x[(i, 1)]))
}

fn mode_solvers(sp: &Spectral, p: &HydroParams, dt: f64) -> Vec<ModeSolver> {
    let n = sp.geom.nz;
    let n1 = n + 1;
    let id = DMatrix::<f64>::identity(n1, n1);
    (0..=sp.geom.modes())
        .map(|m| {
            let k2 = sp.kappa(m).powi(2);
            let lap = &sp.d2 - &id * k2;
            let lap2 = &lap * &lap;
            let mut a = &lap - &lap2 * (0.5 * dt * p.eta);
            let psi_rhs = &lap + &lap2 * (0.5 * dt * p.eta);
            for (row, src) in [(0usize, None), (n, None), (1, Some(0usize)), (n - 1, Some(n))] {
                a.row_mut(row).fill(0.0);
                match src {
                    None => a[(row, row)] = 1.0,
                    Some(j) => a.row_mut(row).copy_from(&sp.d1.row(j)),
                }
            }
            let mut t = &id - &lap * (0.5 * dt * p.kappa);
            let th_rhs = &id + &lap * (0.5 * dt * p.kappa);
            for row in [0, n] {
                t.row_mut(row).fill(0.0);
                t[(row, row)] = 1.0;
            }
            ModeSolver { psi_lu: a.lu(), psi_rhs, th_lu: t.lu(), th_rhs }
        })
        .collect()
}

/// Explicit parts `G i k theta - N(omega)` and `lambda_eff i k psi - N(theta)`.
fn explicit_terms(sp: &Spectral, p: &HydroParams, le: f64, s: &HydroState) -> (Modal, Modal) {
    let omega = sp.laplacian(&s.psi);
    let nw = sp.advect(&s.psi, &omega);
    let nt = sp.advect(&s.psi, &s.theta);
    let mut e = sp.zeros();
    let mut f = sp.zeros();
    for m in 0..e.len() {
        let ik = Complex64::new(0.0, sp.kappa(m));
        e[m] = &s.theta[m] * (ik * p.g) - &nw[m];
        f[m] = &s.psi[m] * (ik * le) - &nt[m];
    }
    (e, f)
}

fn cfl(sp: &Spectral, s: &HydroState, dt: f64) -> f64 {
    let (ux, uz) = s.velocity(sp);
    let ux = sp.to_physical(&ux);
    let uz = sp.to_physical(&uz);
    let dx = sp.geom.length() / sp.geom.nx as f64;
    let n = sp.geom.nz;
    let mut c: f64 = 0.0;
    for j in 0..=n {
        let dz = if j == 0 {
            sp.z[0] - sp.z[1]
        } else if j == n {
            sp.z[n - 1] - sp.z[n]
        } else {
            0.5 * (sp.z[j - 1] - sp.z[j + 1])
        };
        for i in 0..sp.geom.nx {
            c = c.max(dt * (ux[(j, i)].abs() / dx + uz[(j, i)].abs() / dz));
        }
    }
    c
}

/// Integrate the Oberbeck-Boussinesq equations from `initial` at Rayleigh
/// number `ra`.
pub fn evolve_ob(initial: &HydroState, params: &HydroParams, ra: f64, opts: &DnsOptions) -> Result<Trajectory> {
    if !(opts.dt > 0.0) || !(opts.t_final >= 0.0) {
        return Err(Error::Config(format!("need dt > 0 and T >= 0, got dt = {}, T = {}", opts.dt, opts.t_final)));
    }
    let sp = Spectral::new(initial.geometry);
    let le = params.lambda_eff(ra);
    let solvers = mode_solvers(&sp, params, opts.dt);
    let n = sp.geom.nz;
    let steps = (opts.t_final / opts.dt).round() as usize;
    let every = opts.sample_every.max(1);
    let mut s = initial.clone();
    let energy_of = |st: &HydroState| match &opts.reference {
        Some(r) => st.combine(1.0, r, -1.0).energy(&sp),
        None => st.energy(&sp),
    };
    let mut traj = Trajectory {
        times: vec![0.0],
        energies: vec![energy_of(&s)],
        snapshots: vec![],
        final_state: s.clone(),
        max_divergence: s.divergence_max(&sp),
        max_wall: s.wall_max(&sp),
    };
    if opts.snapshot_every > 0 {
        traj.snapshots.push((0.0, s.clone()));
    }
    let mut prev: Option<(Modal, Modal)> = None;
    for step in 1..=steps {
        let (e, f) = explicit_terms(&sp, params, le, &s);
        let (ea, fa) = match &prev {
            Some((e0, f0)) => (
                super::spectral::axpby(1.5, &e, -0.5, e0),
                super::spectral::axpby(1.5, &f, -0.5, f0),
            ),
            None => (e.clone(), f.clone()),
        };
        for (m, sol) in solvers.iter().enumerate() {
            let mut rp = Spectral::apply(&sol.psi_rhs, &s.psi[m]) + &ea[m] * Complex64::new(opts.dt, 0.0);
            for j in [0, 1, n - 1, n] {
                rp[j] = Complex64::new(0.0, 0.0);
            }
            let mut rt = Spectral::apply(&sol.th_rhs, &s.theta[m]) + &fa[m] * Complex64::new(opts.dt, 0.0);
            rt[0] = Complex64::new(0.0, 0.0);
            rt[n] = Complex64::new(0.0, 0.0);
            s.psi[m] = solve_complex(&sol.psi_lu, &rp);
            s.theta[m] = solve_complex(&sol.th_lu, &rt);
        }
        for v in [&mut s.psi[0], &mut s.theta[0]] {
            v.iter_mut().for_each(|c| c.im = 0.0);
        }
        prev = Some((e, f));
        if !s.is_finite() {
            return Err(Error::Blowup { step });
        }
        if step % every == 0 || step == steps {
            if cfl(&sp, &s, opts.dt) > 0.5 {
                return Err(Error::Blowup { step });
            }
            let t = step as f64 * opts.dt;
            let en = energy_of(&s);
            if !en.is_finite() {
                return Err(Error::Blowup { step });
            }
            traj.times.push(t);
            traj.energies.push(en);
            traj.max_divergence = traj.max_divergence.max(s.divergence_max(&sp));
            traj.max_wall = traj.max_wall.max(s.wall_max(&sp));
            if opts.snapshot_every > 0 && (traj.times.len() - 1).is_multiple_of(opts.snapshot_every) {
                traj.snapshots.push((t, s.clone()));
            }
        }
    }
    traj.final_state = s;
    Ok(traj)
}

/// Small smooth random perturbation satisfying the wall conditions, on
/// Fourier modes `1..=min(3, M)` and the mean temperature.
///
/// With `symmetric` it lies in the reflection-symmetric subspace used by
/// the roll solver, which excludes the neutral translation of the rolls.
pub fn random_perturbation(sp: &Spectral, amplitude: f64, seed: u64, symmetric: bool) -> HydroState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mm = sp.geom.modes().min(3);
    let mut s = HydroState::zeros(sp);
    let shape = |rng: &mut ChaCha8Rng, power: i32| -> DVector<f64> {
        let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DVector::from_iterator(
            sp.npts(),
            sp.z.iter().map(|&z| {
                let x = z / PI;
                let poly = c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x;
                (1.0 - x * x).powi(power) * poly
            }),
        )
    };
    let t0 = shape(&mut rng, 1);
    s.theta[0] = t0.map(|v| Complex64::new(v, 0.0));
    for m in 1..=mm {
        let (a, b) = (shape(&mut rng, 2), shape(&mut rng, 1));
        let (a2, b2) = (shape(&mut rng, 2), shape(&mut rng, 1));
        for j in 0..sp.npts() {
            s.psi[m][j] = Complex64::new(a[j], a2[j]);
            s.theta[m][j] = Complex64::new(b2[j], b[j]);
        }
    }
    if symmetric {
        let pk = Packing::new(sp);
        s = pk.unpack(&pk.pack_state(&s), sp.geom);
    }
    let e = s.energy(sp).sqrt();
    s.scaled(amplitude / e)
}

/// Least-squares fit of `log E(t)` over the tail window.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DecayFit {
    /// Slope of `log E`; negative when decaying.
    pub rate: f64,
    /// Coefficient of determination of the fit.
    pub r2: f64,
    /// Set when the series does not decay.
    pub unstable: bool,
}

/// Fit the exponential rate of an energy series over its last
/// `tail_fraction` of samples.
pub fn decay_rate(times: &[f64], energies: &[f64], tail_fraction: f64) -> Result<DecayFit> {
    if times.len() != energies.len() {
        return Err(Error::Config("times and energies differ in length".into()));
    }
    let start = ((1.0 - tail_fraction.clamp(0.0, 1.0)) * times.len() as f64).floor() as usize;
    let (t, e) = (&times[start..], &energies[start..]);
    if t.len() < 10 {
        return Err(Error::Config(format!("need at least 10 samples in the tail window, got {}", t.len())));
    }
    if e.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Config("energy series must be positive".into()));
    }
    let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = t.iter().map(|v| (v - tm).powi(2)).sum();
    let sxy: f64 = t.iter().zip(&y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let syy: f64 = y.iter().map(|v| (v - ym).powi(2)).sum();
    let rate = sxy / sxx;
    let r2 = if syy <= 1e-300 * n { 1.0 } else { (sxy * sxy / (sxx * syy)).min(1.0) };
    let rate = if rate.abs() < 1e-14 { 0.0 } else { rate };
    Ok(DecayFit { rate, r2, unstable: rate >= 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydro::spectral::Geometry;

    #[test]
    fn decay_fit_examples() {
        let t: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let e: Vec<f64> = t.iter().map(|t| (-2.0 * t).exp()).collect();
        let f = decay_rate(&t, &e, 1.0).unwrap();
        assert!((f.rate + 2.0).abs() < 1e-8 && (f.r2 - 1.0).abs() < 1e-12 && !f.unstable);
        let c = vec![3.0; 40];
        let f = decay_rate(&t, &c, 1.0).unwrap();
        assert!(f.rate == 0.0 && f.unstable);
        assert!(decay_rate(&t[..5], &e[..5], 1.0).is_err());
    }

    #[test]
    fn zero_stays_zero() {
        let sp = Spectral::new(Geometry::new(2.0, 12, 16).unwrap());
        let p = HydroParams::default();
        let opts = DnsOptions { dt: default_dt(&p), t_final: 0.5, sample_every: 1, snapshot_every: 0, reference: None };
        let tr = evolve_ob(&HydroState::zeros(&sp), &p, 1000.0, &opts).unwrap();
        assert!(tr.energies.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn perturbations_respect_walls() {
        let sp = Spectral::new(Geometry::new(2.0, 12, 16).unwrap());
        let s = random_perturbation(&sp, 1e-3, 7, false);
        assert!(s.wall_max(&sp) < 1e-14 && s.divergence_max(&sp) < 1e-12);
        assert!((s.energy(&sp).sqrt() - 1e-3).abs() < 1e-15);
        let p = HydroParams::default();
        let opts = DnsOptions { dt: default_dt(&p), t_final: 1.0, sample_every: 5, snapshot_every: 0, reference: None };
        let tr = evolve_ob(&s, &p, 1500.0, &opts).unwrap();
        assert!(tr.max_divergence < 1e-10 && tr.max_wall < 1e-10);
    }
}
