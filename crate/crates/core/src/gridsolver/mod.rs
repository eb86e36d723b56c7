//! Grid stage between the two transfers: external forces, incompressibility
//! projection of the fluid grid, wall conditions and the fluid–solid velocity
//! blend. Everything here writes the intermediate channel `velocity_star`.
//!
//! The fluid–solid blend is a simple stand-in for a full two-continua
//! momentum exchange.

mod pressure;

pub use pressure::{divergence, pressure_project, NotConverged, PressureSolve};

use crate::kernels::{stencil_size, AxisStencil};
use crate::linalg::Vector;
use crate::state::{MacGrid, OpenSides, Particle, MASS_EPSILON};

/// Faces whose normal crosses a closed side's wall layer: the domain edge
/// plane and the plane between the wall layer and the interior.
pub fn is_wall_face<const D: usize>(grid: &MacGrid<D>, sides: &OpenSides<D>, axis: usize, idx: &[usize; D]) -> bool {
    let i = idx[axis];
    (i <= 1 && !sides.is_open(axis, false)) || (i + 1 >= grid.dims[axis] && !sides.is_open(axis, true))
}

/// `ṽ = v + dt·g` on faces carrying mass; other faces copy `v`.
pub fn apply_gravity<const D: usize>(grid: &mut MacGrid<D>, gravity: &Vector<D>, dt: f64) {
    for (axis, f) in grid.faces.iter_mut().enumerate() {
        let dv = dt * gravity[axis];
        for ((s, &v), &m) in f.velocity_star.iter_mut().zip(&f.velocity).zip(&f.mass) {
            *s = if m > MASS_EPSILON { v + dv } else { v };
        }
    }
}

/// Zeroes the normal velocity on wall faces. Tangential components are left
/// alone (free slip).
pub fn enforce_boundaries<const D: usize>(grid: &mut MacGrid<D>, sides: &OpenSides<D>) {
    for axis in 0..D {
        let layout = *grid.face_layout(axis);
        for f in 0..layout.len {
            if is_wall_face(grid, sides, axis, &layout.unflat(f)) {
                grid.faces[axis].velocity_star[f] = 0.0;
            }
        }
    }
}

/// Fills faces outside `valid` with the average of valid neighbors, one
/// layer per pass.
pub fn extrapolate_velocities<const D: usize>(grid: &mut MacGrid<D>, valid: &mut [Vec<bool>; D], layers: usize) {
    for axis in 0..D {
        let layout = *grid.face_layout(axis);
        let mask = &mut valid[axis];
        let vel = &mut grid.faces[axis].velocity_star;
        for _ in 0..layers {
            let mut updates = Vec::new();
            for f in 0..layout.len {
                if mask[f] {
                    continue;
                }
                let idx = layout.unflat(f);
                let mut sum = 0.0;
                let mut count = 0usize;
                for b in 0..D {
                    let s = layout.strides[b];
                    if idx[b] > 0 && mask[f - s] {
                        sum += vel[f - s];
                        count += 1;
                    }
                    if idx[b] + 1 < layout.dims[b] && mask[f + s] {
                        sum += vel[f + s];
                        count += 1;
                    }
                }
                if count > 0 {
                    updates.push((f, sum / count as f64));
                }
            }
            if updates.is_empty() {
                break;
            }
            for (f, v) in updates {
                vel[f] = v;
                mask[f] = true;
            }
        }
    }
}

/// Per-face force `F_iα = Σ_p w_ipα f_pα`, the same weights used for mass.
pub fn scatter_forces<const D: usize>(
    grid: &MacGrid<D>,
    particles: &[Particle<D>],
    forces: &[Vector<D>],
) -> [Vec<f64>; D] {
    std::array::from_fn(|axis| {
        let layout = grid.face_layout(axis);
        let mut out = vec![0.0; layout.len];
        for (p, f) in particles.iter().zip(forces) {
            if f[axis] == 0.0 {
                continue;
            }
            let st = AxisStencil::new(&p.position, axis, grid.dx);
            for n in 0..stencil_size(D) {
                let k = AxisStencil::<D>::local(n);
                if let Some(face) = layout.flat_checked(&st.index(&k)) {
                    out[face] += st.weight(&k) * f[axis];
                }
            }
        }
        out
    })
}

/// `ṽ += dt·F/m` on the solid grid's massive faces.
pub fn apply_fabric_forces<const D: usize>(
    grid: &mut MacGrid<D>,
    particles: &[Particle<D>],
    forces: &[Vector<D>],
    dt: f64,
) {
    let face_forces = scatter_forces(grid, particles, forces);
    for (f, force) in grid.faces.iter_mut().zip(face_forces) {
        for ((s, &m), fi) in f.velocity_star.iter_mut().zip(&f.mass).zip(force) {
            if m > MASS_EPSILON {
                *s += dt * fi / m;
            }
        }
    }
}

/// Relaxes both phases toward their mass-averaged velocity on faces where
/// both carry mass: `v ← v + λ(v̄ − v)`. Face momentum `m_f v_f + m_s v_s` is
/// unchanged.
pub fn couple_phases<const D: usize>(fluid: &mut MacGrid<D>, solid: &mut MacGrid<D>, strength: f64) {
    let lambda = strength.clamp(0.0, 1.0);
    for (ff, sf) in fluid.faces.iter_mut().zip(solid.faces.iter_mut()) {
        for i in 0..ff.layout.len {
            let (mf, ms) = (ff.mass[i], sf.mass[i]);
            if mf <= MASS_EPSILON || ms <= MASS_EPSILON {
                continue;
            }
            let (vf, vs) = (ff.velocity_star[i], sf.velocity_star[i]);
            let avg = (mf * vf + ms * vs) / (mf + ms);
            ff.velocity_star[i] = vf + lambda * (avg - vf);
            sf.velocity_star[i] = vs + lambda * (avg - vs);
        }
    }
}

#[cfg(test)]
mod tests;
