//! Oberbeck-Boussinesq hydrodynamics on the strip `x in [-mu pi, mu pi)`,
//! `z in [-pi, pi]`.
//!
//! Conventions used throughout:
//!
//! * `u_t + u.grad u = eta Lap u - grad p + G theta e_z`
//! * `theta_t + u.grad theta - lambda_eff u_z = kappa Lap theta`
//! * `Ra = G lambda_eff (2 pi)^4 / (eta kappa)` is the standard unit-gap
//!   Rayleigh number, so the rigid-rigid threshold is Ra_c = 1707.76.
//! * `lambda_eff` depends on how the `-G u_z` term of the kinetic temperature
//!   equation is handled, see [`GravityTerm`].
//! * Wavenumbers `alpha` are unit-gap; the physical horizontal wavenumber is
//!   `alpha / (2 pi)`.

pub mod dns;
pub mod linear;
pub mod rolls;
pub mod spectral;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
pub use spectral::{Geometry, Modal, Spectral};

/// Gap width of the slab in the internal length unit.
pub const GAP: f64 = 2.0 * std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallKind {
    Rigid,
    StressFree,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HydroParams {
    /// Gravity G.
    pub g: f64,
    /// Kinematic viscosity eta-hat.
    pub eta: f64,
    /// Heat diffusivity k-hat.
    pub kappa: f64,
    pub walls: WallKind,
    pub gravity: GravityTerm,
}

/// Treatment of the extra `-G u_z` term in the temperature equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GravityTerm {
    /// Keep it: `lambda_eff = lambda - 2G/5`.
    Explicit,
    /// Absorb it into the wall temperatures: `lambda_eff = lambda (1 - G)`.
    ShiftedBoundary,
    /// Plain Oberbeck-Boussinesq, `lambda_eff = lambda`.
    Omitted,
}

impl Default for HydroParams {
    fn default() -> Self {
        Self { g: 0.1, eta: 1.0, kappa: 1.0, walls: WallKind::Rigid, gravity: GravityTerm::Explicit }
    }
}

impl HydroParams {
    /// Effective temperature gradient for a given Rayleigh number.
    pub fn lambda_eff(&self, ra: f64) -> f64 {
        ra * self.eta * self.kappa / (self.g * GAP.powi(4))
    }

    pub fn rayleigh(&self, lambda_eff: f64) -> f64 {
        self.g * lambda_eff * GAP.powi(4) / (self.eta * self.kappa)
    }

    /// Kinetic temperature gradient lambda for a given Rayleigh number.
    pub fn lambda(&self, ra: f64) -> f64 {
        self.lambda_from_eff(self.lambda_eff(ra))
    }

    pub fn lambda_from_eff(&self, le: f64) -> f64 {
        match self.gravity {
            GravityTerm::Explicit => le + 0.4 * self.g,
            GravityTerm::ShiftedBoundary => le / (1.0 - self.g),
            GravityTerm::Omitted => le,
        }
    }

    pub fn eff_from_lambda(&self, lambda: f64) -> f64 {
        match self.gravity {
            GravityTerm::Explicit => lambda - 0.4 * self.g,
            GravityTerm::ShiftedBoundary => lambda * (1.0 - self.g),
            GravityTerm::Omitted => lambda,
        }
    }
}

/// Streamfunction and temperature deviation in modal form.
///
/// The velocity is `u = (-d_z psi, d_x psi)`, so `div u = 0` holds by
/// construction. The pressure is never needed by the streamfunction
/// formulation and is not stored.
#[derive(Clone, Debug)]
pub struct HydroState {
    pub geometry: Geometry,
    pub psi: Modal,
    pub theta: Modal,
}

impl HydroState {
    pub fn zeros(sp: &Spectral) -> Self {
        Self { geometry: sp.geom, psi: sp.zeros(), theta: sp.zeros() }
    }

    /// Modal velocity components (u_x, u_z).
    pub fn velocity(&self, sp: &Spectral) -> (Modal, Modal) {
        let ux = sp.dz(&self.psi).into_iter().map(|v| -v).collect();
        (ux, sp.dx(&self.psi))
    }

    /// `|u|^2 + (5/2) |theta|^2` over the box.
    pub fn energy(&self, sp: &Spectral) -> f64 {
        let (ux, uz) = self.velocity(sp);
        sp.inner(&ux, &ux) + sp.inner(&uz, &uz) + 2.5 * sp.inner(&self.theta, &self.theta)
    }

    /// Energy-norm distance to another state.
    pub fn distance(&self, other: &Self, sp: &Spectral) -> f64 {
        self.combine(1.0, other, -1.0).energy(sp).sqrt()
    }

    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        Self {
            geometry: self.geometry,
            psi: spectral::axpby(a, &self.psi, b, &other.psi),
            theta: spectral::axpby(a, &self.theta, b, &other.theta),
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.combine(a, self, 0.0)
    }

    /// Mirror image under `x -> -x`: `(psi, theta)(x) -> (-psi(-x), theta(-x))`.
    pub fn reflect(&self) -> Self {
        Self {
            geometry: self.geometry,
            psi: self.psi.iter().map(|v| v.map(|c| -c.conj())).collect(),
            theta: self.theta.iter().map(|v| v.map(|c| c.conj())).collect(),
        }
    }

    /// max |div u| on the physical grid.
    pub fn divergence_max(&self, sp: &Spectral) -> f64 {
        let (ux, uz) = self.velocity(sp);
        let div: Modal = sp.dx(&ux).iter().zip(sp.dz(&uz)).map(|(a, b)| a + b).collect();
        sp.to_physical(&div).amax()
    }

    /// max of |u| and |theta| at z = +-pi.
    pub fn wall_max(&self, sp: &Spectral) -> f64 {
        let (ux, uz) = self.velocity(sp);
        let n = sp.geom.nz;
        let mut m: f64 = 0.0;
        for f in [&ux, &uz, &self.theta] {
            let g = sp.to_physical(f);
            m = m.max(g.row(0).amax()).max(g.row(n).amax());
        }
        m
    }

    /// Temperature deviation on the physical grid (row per z node).
    pub fn theta_physical(&self, sp: &Spectral) -> nalgebra::DMatrix<f64> {
        sp.to_physical(&self.theta)
    }

    pub fn is_finite(&self) -> bool {
        let ok = |f: &Modal| f.iter().all(|v| v.iter().all(|c: &Complex64| c.re.is_finite() && c.im.is_finite()));
        ok(&self.psi) && ok(&self.theta)
    }
}
