//! One function per command. Each writes its artifacts and returns a JSON
//! summary for the manifest.

use crate::config::{Command, MilneIndata, Resolved, RunConfig, SlabMode};
use crate::io::Artifacts;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rb_kinetic::expansion::*;
use rb_kinetic::field::{KineticField, SpaceGrid};
use rb_kinetic::hydro::dns::{decay_rate, default_dt, evolve_ob, random_perturbation, DnsOptions};
use rb_kinetic::hydro::linear::{critical_linear, neutral_curve};
use rb_kinetic::hydro::rolls::critical_point;
use rb_kinetic::hydro::spectral::{Geometry, Spectral};
use rb_kinetic::hydro::HydroParams;
use rb_kinetic::milne::{distance_profile, solve_milne, ForceProfile, MilneConfig};
use rb_kinetic::slab::*;
use rb_kinetic::*;
use serde_json::{json, Value};
use std::f64::consts::PI;

/// Failure of a pipeline: either a module error or an output problem.
#[derive(Debug)]
pub enum PipelineError {
    Module(Error),
    Io(std::io::Error),
}

impl std::fmt::Display for PipelineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PipelineError::Module(e) => write!(f, "{e}"),
            PipelineError::Io(e) => write!(f, "writing output: {e}"),
        }
    }
}

impl From<Error> for PipelineError {
    fn from(e: Error) -> Self {
        PipelineError::Module(e)
    }
}

impl From<std::io::Error> for PipelineError {
    fn from(e: std::io::Error) -> Self {
        PipelineError::Io(e)
    }
}

type Out = std::result::Result<Value, PipelineError>;

pub fn dispatch(c: &RunConfig, r: &Resolved, art: &mut Artifacts) -> Out {
    let p = c.physics.hydro(r.g);
    match c.command {
        Command::Critical => critical(c, &p, art),
        Command::NeutralCurve => curve(c, &p, art),
        Command::Rolls => rolls(c, r, &p, art),
        Command::Evolve => evolve(c, r, &p, art),
        Command::Expand => expand(c, r, &p, art),
        Command::Milne => milne(c, art),
        Command::Gap => gap(c, r, art),
        Command::Slab => slab(c, r, art),
        Command::Picard => picard(c, r, art),
    }
}

fn velocity(c: &RunConfig) -> Result<(VelocityGrid, LinearOperator)> {
    let grid = build_velocity_grid(c.discretization.velocity_order, VelocityScheme::GaussHermiteTensor)?;
    let op = assemble_linearized_operator(&grid, c.discretization.model)?;
    Ok((grid, op))
}

fn critical(c: &RunConfig, p: &HydroParams, art: &mut Artifacts) -> Out {
    let cl = critical_linear(p, c.discretization.nz)?;
    let out = json!({
        "ra_c": cl.ra_c,
        "alpha_c": cl.alpha_c,
        "lambda_eff_c": p.lambda_eff(cl.ra_c),
        "lambda_c": p.lambda(cl.ra_c),
        "walls": p.walls,
        "chebyshev_n": c.discretization.nz,
    });
    art.json("critical.json", &out)?;
    Ok(out)
}

fn curve(c: &RunConfig, p: &HydroParams, art: &mut Artifacts) -> Out {
    let d = &c.discretization;
    let alphas: Vec<f64> = (0..d.n_alpha).map(|i| d.alpha_min + (d.alpha_max - d.alpha_min) * i as f64 / (d.n_alpha - 1) as f64).collect();
    let pts = neutral_curve(&alphas, p, d.nz)?;
    art.csv("neutral_curve.csv", &["alpha", "ra"], pts.iter().map(|&(a, ra)| vec![a, ra]))?;
    let (a_min, ra_min) = pts.iter().copied().fold((f64::NAN, f64::INFINITY), |best, x| if x.1 < best.1 { x } else { best });
    Ok(json!({ "points": pts.len(), "alpha_at_min": a_min, "ra_min": ra_min }))
}

fn roll_rayleigh(c: &RunConfig, r: &Resolved, b: &rb_kinetic::hydro::rolls::BifurcationPoint) -> f64 {
    match (c.physics.delta, c.physics.ra) {
        (Some(d), None) => b.rayleigh_at(d),
        _ => r.ra,
    }
}

fn rolls(c: &RunConfig, r: &Resolved, p: &HydroParams, art: &mut Artifacts) -> Out {
    let d = &c.discretization;
    let b = critical_point(p, d.nx, d.nz)?;
    let ra = roll_rayleigh(c, r, &b);
    let roll = b.steady_roll(ra, c.physics.branch)?;
    let sp = b.spectral();
    let delta = b.delta_for(ra).ok();
    let theta = roll.theta_physical(&sp);
    let x = sp.geom.x_nodes();
    art.csv(
        "roll_theta.csv",
        &["x", "z", "theta"],
        (0..theta.nrows()).flat_map(|j| {
            let (x, z, t) = (&x, sp.z[j], &theta);
            (0..t.ncols()).map(move |i| vec![x[i], z, t[(j, i)]])
        }),
    )?;
    let out = json!({
        "critical": b.summary(),
        "ra": ra,
        "delta": delta,
        "branch": c.physics.branch,
        "steady_residual": delta.map(|dl| b.steady_residual(&roll, dl)),
        "energy": roll.energy(&sp),
        "max_divergence": roll.divergence_max(&sp),
        "max_wall": roll.wall_max(&sp),
    });
    art.json("bifurcation.json", &out)?;
    Ok(out)
}

fn evolve(c: &RunConfig, r: &Resolved, p: &HydroParams, art: &mut Artifacts) -> Out {
    let d = &c.discretization;
    let mu = match c.physics.mu {
        Some(m) => m,
        None => 2.0 * PI / critical_linear(p, 32)?.alpha_c,
    };
    let sp = Spectral::new(Geometry::new(mu, d.nx, d.nz)?);
    let s0 = random_perturbation(&sp, c.perturbation, c.seed, false);
    let dt = d.dt.unwrap_or_else(|| default_dt(p));
    let steps = (d.t_final / dt).ceil() as usize;
    let opts = DnsOptions { dt, t_final: d.t_final, sample_every: (steps / 200).max(1), snapshot_every: 0, reference: None };
    let tr = evolve_ob(&s0, p, r.ra, &opts)?;
    art.csv("energy.csv", &["t", "energy"], tr.times.iter().zip(&tr.energies).map(|(&t, &e)| vec![t, e]))?;
    let out = json!({
        "ra": r.ra,
        "mu": mu,
        "dt": dt,
        "fit": decay_rate(&tr.times, &tr.energies, 0.5).ok(),
        "final_energy": tr.energies.last(),
        "max_divergence": tr.max_divergence,
        "max_wall": tr.max_wall,
    });
    art.json("evolve.json", &out)?;
    Ok(out)
}

fn expand(c: &RunConfig, r: &Resolved, p: &HydroParams, art: &mut Artifacts) -> Out {
    let d = &c.discretization;
    let b = critical_point(p, d.nx, d.nz)?;
    let ra = roll_rayleigh(c, r, &b);
    let roll = b.steady_roll(ra, c.physics.branch)?;
    let sp = b.spectral();
    let (grid, op) = velocity(c)?;
    let ctx = ExpansionContext::new(grid, op, SpaceGrid::new(sp.geom.mu, 2 * d.nx, d.nz)?, r.g)?;
    let m = fluid_moments(&ctx, &sp, &roll, Background::for_rayleigh(p, ra))?;
    let terms = stationary_expansion(&ctx, &m, d.max_order)?;
    let mut residuals = vec![];
    let mut slopes = vec![];
    for n in 1..=d.max_order {
        let res: Vec<f64> = d.eps_scan.iter().map(|&e| assemble_truncated(&ctx, &terms, e, n).map(|a| a.residual)).collect::<Result<_>>()?;
        slopes.push(log_slope(&d.eps_scan, &res));
        residuals.push(res);
    }
    let solvability: Option<Vec<f64>> = (terms.len() >= 2).then(|| {
        solvability_residuals(&ctx, &terms[0].bulk, &terms[1].bulk, None).iter().map(|f| ctx.space.interior_norm(f)).collect()
    });
    let out = json!({
        "ra": ra,
        "orders": (1..=d.max_order).collect::<Vec<_>>(),
        "eps": d.eps_scan,
        "residuals": residuals,
        "slopes": slopes,
        "solvability": solvability,
        "layer_tails": terms.iter().map(|t| t.exp_small).collect::<Vec<_>>(),
    });
    art.json("expansion.json", &out)?;
    Ok(out)
}

fn milne(c: &RunConfig, art: &mut Artifacts) -> Out {
    let (grid, op) = velocity(c)?;
    let indata = match c.milne.indata {
        MilneIndata::Zero => DVector::zeros(grid.len()),
        MilneIndata::Shear => grid.eval(|v| v[0] * (1.0 + v[2])),
        MilneIndata::Thermal => grid.eval(|v| v[2] * v[2] - 1.0 + v[0]),
    };
    let force = if c.milne.force_g == 0.0 {
        ForceProfile::None
    } else {
        ForceProfile::Exponential { g: c.milne.force_g, rate: c.milne.force_rate }
    };
    let cfg = MilneConfig {
        z_max: c.discretization.z_max,
        eps: c.physics.eps,
        force,
        tol: c.tolerances.milne_tol,
        max_iter: c.tolerances.milne_max_iter,
        ..MilneConfig::default()
    };
    let s = solve_milne(&grid, &op, &indata, None, &cfg)?;
    let dist = distance_profile(&s.h, &grid, &s.q_infinity);
    art.csv(
        "milne_profile.csv",
        &["z", "psi0", "psi1", "psi2", "psi3", "psi4", "distance"],
        s.z.iter().enumerate().map(|(j, &z)| {
            let k = grid.kernel_coeffs(&s.h.point_vec(j, 0));
            vec![z, k[0], k[1], k[2], k[3], k[4], dist[j]]
        }),
    )?;
    let out = json!({
        "q_infinity": s.q_infinity,
        "decay_rate": s.decay_rate,
        "tail_r2": s.tail_r2,
        "flux": s.flux,
        "multiplier": s.multiplier,
        "residual": s.residual,
        "iterations": s.iterations,
        "nodes": s.z.len(),
    });
    art.json("milne.json", &out)?;
    Ok(out)
}

fn gap(c: &RunConfig, r: &Resolved, art: &mut Artifacts) -> Out {
    let (grid, op) = velocity(c)?;
    let g = spectral_gap(&op)?;
    let (nu_lo, nu_hi) = op.nu_bounds(&grid);
    // L_J with the conduction-state q at the hotter wall
    let q = grid.from_coeffs(&QProfile::Laminar { lambda: r.lambda }.coeffs(-PI, r.g));
    let lj = build_lj(&grid, &op, &q, c.physics.eps)?;
    let gj = spectral_gap(&lj)?;
    let out = json!({
        "model": c.discretization.model,
        "velocity_order": c.discretization.velocity_order,
        "gap": g.gap,
        "certificate": g.certificate,
        "reduced_dim": g.reduced_dim,
        "symmetry_defect": op.symmetry_defect(&grid),
        "nu_bounds": [nu_lo, nu_hi],
        "lj_gap": gj.gap,
        "lj_certificate": gj.certificate,
    });
    art.json("gap.json", &out)?;
    Ok(out)
}

/// Smooth random field `sum_k c_k(z) phi_k(v)` with trigonometric
/// coefficients of wavenumber up to 2.
struct RandomProfile {
    coeffs: Vec<[f64; 5]>,
}

impl RandomProfile {
    const BASIS: usize = 6;

    fn new(seed: u64, amplitude: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { coeffs: (0..Self::BASIS).map(|_| std::array::from_fn(|_| amplitude * rng.gen_range(-1.0..1.0))).collect() }
    }

    fn at(&self, grid: &VelocityGrid, z: f64) -> DVector<f64> {
        let c: Vec<f64> = self.coeffs.iter().map(|a| a[0] + a[1] * z.cos() + a[2] * z.sin() + a[3] * (2.0 * z).cos() + a[4] * (2.0 * z).sin()).collect();
        grid.eval(|v| {
            let v2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
            c[0] * v[0] * v[2] + c[1] * v[2] * (v2 - 5.0) + c[2] * v[0] * v[1] + c[3] * (v[2] * v[2] - v2 / 3.0) + c[4] * (v2 - 3.0) / 2.0 + c[5] * v[2]
        })
    }

    /// Non-hydrodynamic part on the slab nodes.
    fn perp_field(&self, prob: &SlabProblem) -> KineticField {
        let z = prob.z();
        KineticField::from_points(z.len(), 1, prob.grid.len(), |j, _| prob.grid.project_perp(&self.at(&prob.grid, z[j])))
    }
}

fn slab_problem(c: &RunConfig, r: &Resolved) -> Result<SlabProblem> {
    let (grid, op) = velocity(c)?;
    let mut prob = SlabProblem::new(grid, op, c.physics.eps, r.g, r.lambda, c.discretization.nz)?;
    prob.bc = c.slab.wall;
    if c.slab.laminar_q {
        prob.q = QProfile::Laminar { lambda: r.lambda };
    }
    prob.validate()?;
    Ok(prob)
}

fn profile_rows(z: &[f64], m: &[[f64; 3]]) -> Vec<Vec<f64>> {
    z.iter().zip(m).map(|(&z, m)| vec![z, m[0], m[1], m[2]]).collect()
}

fn slab(c: &RunConfig, r: &Resolved, art: &mut Artifacts) -> Out {
    let mut prob = slab_problem(c, r)?;
    let profile = RandomProfile::new(c.seed, c.slab.amplitude);
    match c.slab.mode {
        SlabMode::Stationary => {
            prob.source = profile.perp_field(&prob);
            let solver = SlabSolver::new(&prob)?;
            let s = solver.solve()?;
            let green = solver.green_balance(&s.f, &prob.source);
            art.csv("slab_moments.csv", &["z", "rho", "u_z", "theta"], profile_rows(&s.z, &moment_profile(&prob.grid, &s.f)))?;
            art.field("slab_field.bin", &s.f)?;
            let out = json!({
                "mode": "stationary",
                "wall": prob.bc,
                "residual": s.residual,
                "flux": s.flux,
                "mass": s.mass,
                "gauge": s.gauge,
                "green": green,
                "norm_q22": prob.norm(&s.f, NormKind::Q22)?,
                "norm_inf2": prob.norm(&s.f, NormKind::Inf2)?,
            });
            art.json("slab.json", &out)?;
            Ok(out)
        }
        SlabMode::Evolve => {
            let cfg = EvolveConfig {
                cells: c.discretization.cells,
                dt: c.discretization.dt,
                t_final: c.discretization.t_final,
                record_every: 10,
                ..EvolveConfig::default()
            };
            let grid = prob.grid.clone();
            let rep = evolve_slab(&prob, |z| profile.at(&grid, z), &cfg)?;
            art.csv(
                "slab_energy.csv",
                &["t", "norm", "perp_norm", "mass"],
                (0..rep.t.len()).map(|i| vec![rep.t[i], rep.norm[i], rep.perp_norm[i], rep.mass[i]]),
            )?;
            let out = json!({
                "mode": "evolve",
                "wall": prob.bc,
                "dt": rep.dt,
                "steps": rep.steps,
                "initial_norm": rep.norm.first(),
                "final_norm": rep.norm.last(),
                "max_flux": rep.max_flux,
                "mass_drift": rep.mass_drift,
                "energy_integral": rep.energy_integral,
                "time_norm": time_norm(&rep.t, &rep.norm)?,
            });
            art.json("slab.json", &out)?;
            Ok(out)
        }
    }
}

fn picard(c: &RunConfig, r: &Resolved, art: &mut Artifacts) -> Out {
    let prob = slab_problem(c, r)?;
    // the remainder equation carries eps A, so A itself is order one
    let a = RandomProfile::new(c.seed, 1.0).perp_field(&prob);
    let solver = SlabSolver::new(&prob)?;
    let cfg = PicardConfig { max_iter: c.tolerances.picard_max_iter, tol: c.tolerances.picard_tol };
    let rep = picard_remainder(&solver, &a, &cfg)?;
    art.csv("picard_moments.csv", &["z", "rho", "u_z", "theta"], profile_rows(solver.z(), &moment_profile(&prob.grid, &rep.r)))?;
    let out = json!({
        "eps": prob.eps,
        "differences": rep.differences,
        "ratios": rep.ratios,
        "contraction": rep.contraction,
        "iterations": rep.iterations,
        "residual": rep.residual,
        "nu_norm": solver.nu_norm(&rep.r),
    });
    art.json("picard.json", &out)?;
    Ok(out)
}
