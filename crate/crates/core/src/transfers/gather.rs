use rayon::prelude::*;

use super::{Selection, TransferSettings, TransferStats};
use crate::kernels::{stencil_size, AxisStencil};
use crate::state::{MacGrid, Particle, TransferScheme};

/// Visits every in-range stencil face of `axis` with its weight and gradient.
#[inline]
pub(crate) fn for_each_face<const D: usize>(
    grid: &MacGrid<D>,
    x: &[f64; D],
    axis: usize,
    mut f: impl FnMut([i64; D], usize, f64, &AxisStencil<D>, &[usize; D]),
) {
    let layout = grid.face_layout(axis);
    let stencil = AxisStencil::new(x, axis, grid.dx);
    for n in 0..stencil_size(D) {
        let k = AxisStencil::<D>::local(n);
        let idx = stencil.index(&k);
        if let Some(face) = layout.flat_checked(&idx) {
            let w = stencil.weight(&k);
            f(idx, face, w, &stencil, &k);
        }
    }
}

/// PIC gather: `v_pα = Σ_i w_ipα ṽ_iα`. Positions are untouched.
pub fn g2p_pic<const D: usize>(grid: &MacGrid<D>, particles: &mut [Particle<D>]) {
    particles.par_iter_mut().for_each(|p| gather_velocity(grid, p));
}

fn gather_velocity<const D: usize>(grid: &MacGrid<D>, p: &mut Particle<D>) {
    let mut v = [0.0; D];
    for (axis, va) in v.iter_mut().enumerate() {
        let vstar = &grid.faces[axis].velocity_star;
        let mut sum = 0.0;
        for_each_face(grid, &p.position, axis, |_, face, w, _, _| sum += w * vstar[face]);
        *va = sum;
    }
    p.velocity = v;
}

/// `c_pα = Σ_i ∇w_ipα ṽ_iα`, the gradient of the interpolated intermediate
/// velocity at the particle.
pub fn update_affine_derivs<const D: usize>(grid: &MacGrid<D>, particles: &mut [Particle<D>]) {
    particles.par_iter_mut().for_each(|p| gather_derivs(grid, p));
}

fn gather_derivs<const D: usize>(grid: &MacGrid<D>, p: &mut Particle<D>) {
    for axis in 0..D {
        let vstar = &grid.faces[axis].velocity_star;
        let mut c = [0.0; D];
        for_each_face(grid, &p.position, axis, |_, face, _, stencil, k| {
            let g = stencil.gradient(k);
            for b in 0..D {
                c[b] += g[b] * vstar[face];
            }
        });
        p.affine_derivs[axis] = c;
    }
}

/// Scheme-dispatched grid-to-particle transfer for the selected particles.
pub fn g2p<const D: usize>(
    settings: &TransferSettings<D>,
    grid: &MacGrid<D>,
    particles: &mut [Particle<D>],
    selection: Selection,
) -> TransferStats {
    let scheme = settings.scheme;
    particles
        .par_iter_mut()
        .filter(|p| selection.includes(p))
        .map_init(super::polypic::FitScratch::default, |scratch, p| {
            gather_velocity(grid, p);
            match scheme {
                TransferScheme::Pic => {
                    p.affine_derivs = [[0.0; D]; D];
                    p.poly_coeffs.truncate(1);
                    p.poly_coeffs[0] = p.velocity;
                    TransferStats::default()
                }
                TransferScheme::Apic => {
                    gather_derivs(grid, p);
                    p.poly_coeffs.truncate(1);
                    p.poly_coeffs[0] = p.velocity;
                    TransferStats::default()
                }
                TransferScheme::PolyPic { .. } => {
                    gather_derivs(grid, p);
                    super::polypic::fit_particle(grid, p, settings.basis_for(p.phase), scratch)
                }
            }
        })
        .reduce(TransferStats::default, |mut a, b| {
            a += b;
            a
        })
}
