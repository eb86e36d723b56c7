use serde::{Deserialize, Serialize};

use crate::linalg::{Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Fluid,
    Solid,
}

impl Phase {
    pub fn as_u8(self) -> u8 {
        match self {
            Phase::Fluid => 0,
            Phase::Solid => 1,
        }
    }
}

/// Lagrangian carrier of mass and velocity.
///
/// `affine_derivs[α]` holds the per-axis derivative vector of the MAC
/// formulation, so `affine_derivs[α][β] = ∂v_α/∂x_β`; read as a matrix it is
/// the velocity gradient used by the configuration map.
/// `poly_coeffs[r][α]` is the coefficient of scalar mode `r` on axis `α`.
#[derive(Clone, Debug, PartialEq)]
pub struct Particle<const D: usize> {
    pub position: Vector<D>,
    pub prev_position: Vector<D>,
    pub velocity: Vector<D>,
    pub mass: f64,
    pub phase: Phase,
    pub affine_derivs: Matrix<D>,
    pub poly_coeffs: Vec<Vector<D>>,
    pub absorbed_fluid_mass: f64,
}

impl<const D: usize> Particle<D> {
    pub fn new(phase: Phase, position: Vector<D>, velocity: Vector<D>, mass: f64, n_modes: usize) -> Self {
        debug_assert!(mass > 0.0);
        let mut poly_coeffs = vec![[0.0; D]; n_modes.max(1)];
        poly_coeffs[0] = velocity;
        Self {
            position,
            prev_position: position,
            velocity,
            mass,
            phase,
            affine_derivs: [[0.0; D]; D],
            poly_coeffs,
            absorbed_fluid_mass: 0.0,
        }
    }

    pub fn fluid(position: Vector<D>, velocity: Vector<D>, mass: f64, n_modes: usize) -> Self {
        Self::new(Phase::Fluid, position, velocity, mass, n_modes)
    }

    pub fn solid(position: Vector<D>, velocity: Vector<D>, mass: f64, n_modes: usize) -> Self {
        Self::new(Phase::Solid, position, velocity, mass, n_modes)
    }

    /// Mass carried to the grid: own mass plus any absorbed fluid.
    #[inline]
    pub fn transfer_mass(&self) -> f64 {
        self.mass + self.absorbed_fluid_mass
    }

    pub fn is_fluid(&self) -> bool {
        self.phase == Phase::Fluid
    }

    pub fn is_solid(&self) -> bool {
        self.phase == Phase::Solid
    }

    /// Resizes the coefficient table, keeping existing leading rows.
    pub fn resize_modes(&mut self, n_modes: usize) {
        self.poly_coeffs.resize(n_modes.max(1), [0.0; D]);
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|x| x.is_finite())
            && self.velocity.iter().all(|x| x.is_finite())
            && self.affine_derivs.iter().flatten().all(|x| x.is_finite())
            && self.poly_coeffs.iter().flatten().all(|x| x.is_finite())
            && self.mass.is_finite()
            && self.absorbed_fluid_mass.is_finite()
    }
}
