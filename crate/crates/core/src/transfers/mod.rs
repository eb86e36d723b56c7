//! Particle↔grid transfers for PIC, APIC and PolyPIC, plus the mixture
//! variants used for fluid–fabric coupling.
//!
//! Every particle-to-grid transfer scatters `m_ip = m_p · w_ip` and a momentum
//! `m_ip · u_ip`, where the per-face velocity model `u_ip` is what
//! distinguishes the schemes:
//!
//! * PIC: `u = e_α·v_p`
//! * APIC: `u = e_α·v_p + c_pα·(x_iα − x_p)`
//! * PolyPIC: `u = Σ_r s_r(z) c_prα`, with `z` the face position pulled back
//!   through the particle's configuration map.
//!
//! Grid-to-particle always gathers the PIC velocity; APIC and PolyPIC also
//! refresh the velocity derivatives, and PolyPIC fits its mode coefficients by
//! mass-weighted least squares.

mod gather;
mod polypic;
mod scatter;

use std::ops::AddAssign;

pub use gather::{g2p, g2p_pic, update_affine_derivs};
pub use polypic::{
    compute_polypic_coefficients, fit_axis_coefficients, AxisFit, FitPath, GRAM_DIAGONAL_TOLERANCE, RANK_TOLERANCE,
};
pub use scatter::{PairContribution, TransferScratch};

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::kernels::{ConfigurationMap, ModeBasis};
use crate::linalg::Vector;
use crate::state::{MacGrid, MapKind, MapReference, Particle, Phase, TransferScheme};

/// Everything a transfer needs besides particles and grid.
#[derive(Clone, Debug)]
pub struct TransferSettings<const D: usize> {
    pub scheme: TransferScheme,
    pub fluid_basis: ModeBasis<D>,
    pub solid_basis: ModeBasis<D>,
    /// Time step used by the configuration map.
    pub dt: f64,
    pub map_reference: MapReference,
    pub solid_map: MapKind,
    /// Worker count; fixes the reduction partition of the scatter.
    pub workers: usize,
}

impl<const D: usize> TransferSettings<D> {
    pub fn new(scheme: TransferScheme, dt: f64) -> Self {
        let fluid = scheme.modes_for(Phase::Fluid).min(ModeBasis::<D>::MAX_MODES);
        let solid = scheme.modes_for(Phase::Solid).min(ModeBasis::<D>::MAX_MODES);
        Self {
            scheme,
            fluid_basis: ModeBasis::new(fluid, true),
            solid_basis: ModeBasis::new(solid, true),
            dt,
            map_reference: MapReference::Previous,
            solid_map: MapKind::Affine,
            workers: 1,
        }
    }

    pub fn with_orthogonalize(mut self, on: bool) -> Self {
        self.fluid_basis.orthogonalize = on;
        self.solid_basis.orthogonalize = on;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn with_map_reference(mut self, r: MapReference) -> Self {
        self.map_reference = r;
        self
    }

    pub fn with_solid_map(mut self, kind: MapKind) -> Self {
        self.solid_map = kind;
        self
    }

    /// Step length the configuration map of `phase` is built with; zero
    /// turns it into a translation.
    pub fn map_dt(&self, phase: Phase) -> f64 {
        match (phase, self.solid_map) {
            (Phase::Solid, MapKind::Translation) => 0.0,
            _ => self.dt,
        }
    }

    pub fn basis_for(&self, phase: Phase) -> &ModeBasis<D> {
        match phase {
            Phase::Fluid => &self.fluid_basis,
            Phase::Solid => &self.solid_basis,
        }
    }
}

/// Degeneracy counters reported by the transfers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TransferStats {
    /// Configuration maps that fell back to a pure translation.
    pub map_fallbacks: usize,
    /// Per-axis coefficient solves truncated to a leading mode block.
    pub truncated_solves: usize,
    /// Per-axis coefficient solves that used the dense least-squares path.
    pub dense_solves: usize,
}

impl AddAssign for TransferStats {
    fn add_assign(&mut self, o: Self) {
        self.map_fallbacks += o.map_fallbacks;
        self.truncated_solves += o.truncated_solves;
        self.dense_solves += o.dense_solves;
    }
}

/// Which particles a transfer includes and which mass they carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    /// Every particle with its own mass.
    All,
    /// Fluid particles only.
    Fluid,
    /// Solid particles with their own mass.
    Solid,
    /// Solid particles with own plus absorbed mass.
    SolidCombined,
}

impl Selection {
    fn includes<const D: usize>(self, p: &Particle<D>) -> bool {
        match self {
            Selection::All => true,
            Selection::Fluid => p.is_fluid(),
            Selection::Solid | Selection::SolidCombined => p.is_solid(),
        }
    }

    fn mass<const D: usize>(self, p: &Particle<D>) -> f64 {
        match self {
            Selection::SolidCombined => p.transfer_mass(),
            _ => p.mass,
        }
    }
}

#[inline]
fn pic_velocity<const D: usize>(p: &Particle<D>, axis: usize) -> f64 {
    p.velocity[axis]
}

#[inline]
fn apic_velocity<const D: usize>(p: &Particle<D>, axis: usize, xf: &Vector<D>) -> f64 {
    let c = &p.affine_derivs[axis];
    let mut u = p.velocity[axis];
    for b in 0..D {
        u += c[b] * (xf[b] - p.position[b]);
    }
    u
}

/// Per-particle data for the PolyPIC scatter.
pub(crate) struct PolyPrep<'b, const D: usize> {
    map: ConfigurationMap<D>,
    /// `x_prev − x_now` when offsets are taken against the current position.
    shift: Vector<D>,
    basis: &'b ModeBasis<D>,
}

impl<'b, const D: usize> PolyPrep<'b, D> {
    fn new(p: &Particle<D>, basis: &'b ModeBasis<D>, dt: f64, reference: MapReference) -> Self {
        let map = ConfigurationMap::new(p, dt);
        let shift = match reference {
            MapReference::Previous => [0.0; D],
            MapReference::Current => std::array::from_fn(|b| p.prev_position[b] - p.position[b]),
        };
        Self { map, shift, basis }
    }

    /// Local mode coordinate of a face: `ξ(x_face) − x_ref`.
    #[inline]
    pub(crate) fn local_offset(&self, xf: &Vector<D>) -> Vector<D> {
        let z = self.map.pulled_back_offset(xf);
        std::array::from_fn(|b| z[b] + self.shift[b])
    }
}

#[inline]
fn poly_velocity<const D: usize>(
    p: &Particle<D>,
    prep: &PolyPrep<'_, D>,
    axis: usize,
    xf: &Vector<D>,
    w: f64,
    dx: f64,
) -> f64 {
    let z = prep.local_offset(xf);
    let n = prep.basis.len().min(p.poly_coeffs.len());
    let mut u = 0.0;
    for r in 0..n {
        u += crate::kernels::scalar_mode(prep.basis, r, &z, w, dx) * p.poly_coeffs[r][axis];
    }
    u
}

/// Scheme-dispatched particle-to-grid transfer over a particle selection.
/// Overwrites the grid's mass, momentum and velocity channels.
pub fn p2g_selected<const D: usize>(
    settings: &TransferSettings<D>,
    particles: &[Particle<D>],
    grid: &mut MacGrid<D>,
    selection: Selection,
) -> TransferStats {
    let include = |p: &Particle<D>| selection.includes(p);
    let mass_of = |p: &Particle<D>| selection.mass(p);
    let workers = settings.workers;
    match settings.scheme {
        TransferScheme::Pic => {
            scatter::scatter(
                particles,
                grid,
                workers,
                include,
                mass_of,
                |_| (),
                |p, _, a, _, _| pic_velocity(p, a),
            );
            TransferStats::default()
        }
        TransferScheme::Apic => {
            scatter::scatter(
                particles,
                grid,
                workers,
                include,
                mass_of,
                |_| (),
                |p, _, a, xf, _| apic_velocity(p, a, xf),
            );
            TransferStats::default()
        }
        TransferScheme::PolyPic { .. } => {
            let fallbacks = AtomicUsize::new(0);
            let dx = grid.dx;
            scatter::scatter(
                particles,
                grid,
                workers,
                include,
                mass_of,
                |p| {
                    let prep = PolyPrep::new(
                        p,
                        settings.basis_for(p.phase),
                        settings.map_dt(p.phase),
                        settings.map_reference,
                    );
                    if prep.map.degenerate {
                        fallbacks.fetch_add(1, Ordering::Relaxed);
                    }
                    prep
                },
                |p, prep, a, xf, w| poly_velocity(p, prep, a, xf, w, dx),
            );
            TransferStats {
                map_fallbacks: fallbacks.into_inner(),
                ..Default::default()
            }
        }
    }
}

/// Plain particle-to-grid transfer of every particle with its own mass.
pub fn p2g<const D: usize>(
    settings: &TransferSettings<D>,
    particles: &[Particle<D>],
    grid: &mut MacGrid<D>,
) -> TransferStats {
    p2g_selected(settings, particles, grid, Selection::All)
}

/// PIC scatter: `(mv)_iα = Σ_p m_p w_ipα v_pα`.
pub fn p2g_pic<const D: usize>(particles: &[Particle<D>], grid: &mut MacGrid<D>, workers: usize) {
    scatter::scatter(
        particles,
        grid,
        workers,
        |_| true,
        |p| p.mass,
        |_| (),
        |p, _, a, _, _| pic_velocity(p, a),
    );
}

/// APIC scatter with the affine correction `c_pα·(x_iα − x_p)`.
pub fn p2g_apic<const D: usize>(particles: &[Particle<D>], grid: &mut MacGrid<D>, workers: usize) {
    scatter::scatter(
        particles,
        grid,
        workers,
        |_| true,
        |p| p.mass,
        |_| (),
        |p, _, a, xf, _| apic_velocity(p, a, xf),
    );
}

/// PolyPIC scatter using each particle's mode coefficients. `settings.scheme`
/// only selects the bases; the PolyPIC velocity model is always used.
pub fn p2g_polypic<const D: usize>(
    settings: &TransferSettings<D>,
    particles: &[Particle<D>],
    grid: &mut MacGrid<D>,
) -> TransferStats {
    let mut s = settings.clone();
    if !matches!(s.scheme, TransferScheme::PolyPic { .. }) {
        s.scheme = TransferScheme::PolyPic {
            fluid_modes: s.fluid_basis.len(),
            solid_modes: s.solid_basis.len(),
        };
    }
    p2g_selected(&s, particles, grid, Selection::All)
}

/// Fluid half of the mixture transfer: only fluid-tagged particles scatter.
pub fn p2g_mixture_fluid<const D: usize>(
    settings: &TransferSettings<D>,
    particles: &[Particle<D>],
    grid: &mut MacGrid<D>,
) -> TransferStats {
    p2g_selected(settings, particles, grid, Selection::Fluid)
}

/// Solid half of the mixture transfer: solid particles scatter with their
/// own plus absorbed fluid mass, and face velocities divide by the
/// face-summed combined mass.
pub fn p2g_mixture_solid<const D: usize>(
    settings: &TransferSettings<D>,
    particles: &[Particle<D>],
    grid: &mut MacGrid<D>,
) -> TransferStats {
    p2g_selected(settings, particles, grid, Selection::SolidCombined)
}

/// Pair contributions of a single particle, for inspection and audits.
pub fn particle_pairs<const D: usize>(
    settings: &TransferSettings<D>,
    particle: &Particle<D>,
    grid: &MacGrid<D>,
    selection: Selection,
) -> TransferScratch {
    let mut scratch = TransferScratch::default();
    let mass = selection.mass(particle);
    let dx = grid.dx;
    match settings.scheme {
        TransferScheme::Pic => scatter::collect_pairs(
            particle,
            mass,
            &(),
            grid,
            &|p: &Particle<D>, _: &(), a, _: &Vector<D>, _| pic_velocity(p, a),
            &mut scratch,
        ),
        TransferScheme::Apic => scatter::collect_pairs(
            particle,
            mass,
            &(),
            grid,
            &|p: &Particle<D>, _: &(), a, xf: &Vector<D>, _| apic_velocity(p, a, xf),
            &mut scratch,
        ),
        TransferScheme::PolyPic { .. } => {
            let prep = PolyPrep::new(
                particle,
                settings.basis_for(particle.phase),
                settings.map_dt(particle.phase),
                settings.map_reference,
            );
            scatter::collect_pairs(
                particle,
                mass,
                &prep,
                grid,
                &|p: &Particle<D>, pr: &PolyPrep<'_, D>, a, xf: &Vector<D>, w| poly_velocity(p, pr, a, xf, w, dx),
                &mut scratch,
            )
        }
    }
    scratch
}

/// Linear momentum one particle's scatter carries, per axis, when its whole
/// stencil lies inside the grid.
///
/// PIC and APIC carry `m v`. A PolyPIC mode `∏_{b∈S} z_b` carries
/// `m c_r E[∏_{b∈S} z_b]`, where `E` averages over the kernel weights and
/// `z = A y + s` is the mapped face offset (`A` the inverse deformation, `y`
/// the raw offset, `s` the reference shift). The quadratic B-spline has zero
/// first moments and second moments of exactly `Δx²/4` per axis, so
/// `E[z_b] = s_b` and `E[z_b z_c] = s_b s_c + (Δx²/4)(AAᵀ)_bc`. Modes with a
/// squared factor or more than two factors have no closed form, giving `None`.
pub fn particle_momentum<const D: usize>(
    settings: &TransferSettings<D>,
    p: &Particle<D>,
    mass: f64,
    dx: f64,
) -> Option<Vector<D>> {
    if !matches!(settings.scheme, TransferScheme::PolyPic { .. }) {
        return Some(std::array::from_fn(|a| mass * p.velocity[a]));
    }
    let basis = settings.basis_for(p.phase);
    let prep = PolyPrep::new(p, basis, settings.map_dt(p.phase), settings.map_reference);
    let a = &prep.map.inverse;
    let s = &prep.shift;
    let mut total = [0.0; D];
    for (r, c) in p.poly_coeffs.iter().enumerate().take(basis.len()) {
        let factors: Vec<usize> = (0..D).filter(|&b| basis.exponents(r)[b] == 1).collect();
        if basis.is_quadratic(r) || factors.len() > 2 {
            if c.iter().all(|&x| x == 0.0) {
                continue;
            }
            return None;
        }
        let mean = match factors[..] {
            [] => 1.0,
            [b] => s[b],
            [b, q] => s[b] * s[q] + 0.25 * dx * dx * (0..D).map(|k| a[b][k] * a[q][k]).sum::<f64>(),
            _ => unreachable!(),
        };
        for (t, ca) in total.iter_mut().zip(c) {
            *t += mass * ca * mean;
        }
    }
    Some(total)
}

/// Sum of [`particle_momentum`] over a selection, with each particle's
/// selection mass.
pub fn analytic_momentum<const D: usize>(
    settings: &TransferSettings<D>,
    particles: &[Particle<D>],
    selection: Selection,
    dx: f64,
) -> Option<Vector<D>> {
    let mut total = [0.0; D];
    for p in particles.iter().filter(|p| selection.includes(p)) {
        let m = particle_momentum(settings, p, selection.mass(p), dx)?;
        for a in 0..D {
            total[a] += m[a];
        }
    }
    Some(total)
}

/// Sum of the selected particles' momentum norms, the scale for momentum
/// errors.
pub fn momentum_scale<const D: usize>(
    settings: &TransferSettings<D>,
    particles: &[Particle<D>],
    selection: Selection,
    dx: f64,
) -> f64 {
    particles
        .iter()
        .filter(|p| selection.includes(p))
        .filter_map(|p| particle_momentum(settings, p, selection.mass(p), dx))
        .map(|m| crate::linalg::norm(&m))
        .sum()
}

/// Total mass a selection scatters.
pub fn selected_mass<const D: usize>(particles: &[Particle<D>], selection: Selection) -> f64 {
    particles
        .iter()
        .filter(|p| selection.includes(p))
        .map(|p| selection.mass(p))
        .sum()
}
