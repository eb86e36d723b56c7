use rayon::prelude::*;

use crate::kernels::{stencil_face_position, stencil_size, AxisStencil};
use crate::linalg::Vector;
use crate::state::{MacGrid, Particle};

/// Contribution of one particle to one face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairContribution {
    pub axis: usize,
    /// Flat face index within the axis' face array.
    pub face: usize,
    pub weight: f64,
    /// `m_p · w`, with the particle's transfer mass.
    pub mass: f64,
    /// Momentum component along the face axis.
    pub momentum: f64,
}

/// Per-particle scratch holding every in-support (particle, face) pair.
#[derive(Clone, Debug, Default)]
pub struct TransferScratch {
    pub pairs: Vec<PairContribution>,
}

impl TransferScratch {
    pub fn clear(&mut self) {
        self.pairs.clear();
    }
}

/// Evaluates the per-face velocity model of one particle.
///
/// `velocity_at` gets the particle, its prepared per-particle data, the face
/// axis, the face position and the particle–face weight, and returns the
/// velocity component the particle carries to that face. The momentum
/// contribution is `mass · w · velocity_at(..)`.
pub(crate) fn collect_pairs<const D: usize, P>(
    particle: &Particle<D>,
    mass: f64,
    prepared: &P,
    grid: &MacGrid<D>,
    velocity_at: &(impl Fn(&Particle<D>, &P, usize, &Vector<D>, f64) -> f64 + ?Sized),
    scratch: &mut TransferScratch,
) {
    scratch.clear();
    let dx = grid.dx;
    for axis in 0..D {
        let layout = grid.face_layout(axis);
        let stencil = AxisStencil::new(&particle.position, axis, dx);
        for n in 0..stencil_size(D) {
            let k = AxisStencil::<D>::local(n);
            let idx = stencil.index(&k);
            let Some(face) = layout.flat_checked(&idx) else {
                continue;
            };
            let w = stencil.weight(&k);
            if w == 0.0 {
                continue;
            }
            let xf = stencil_face_position(&idx, axis, dx);
            let m = mass * w;
            let u = velocity_at(particle, prepared, axis, &xf, w);
            scratch.pairs.push(PairContribution {
                axis,
                face,
                weight: w,
                mass: m,
                momentum: m * u,
            });
        }
    }
}

struct Accumulator {
    mass: Vec<Vec<f64>>,
    momentum: Vec<Vec<f64>>,
}

impl Accumulator {
    fn new<const D: usize>(grid: &MacGrid<D>) -> Self {
        Self {
            mass: grid.faces.iter().map(|f| vec![0.0; f.layout.len]).collect(),
            momentum: grid.faces.iter().map(|f| vec![0.0; f.layout.len]).collect(),
        }
    }

    fn add(&mut self, scratch: &TransferScratch) {
        for p in &scratch.pairs {
            self.mass[p.axis][p.face] += p.mass;
            self.momentum[p.axis][p.face] += p.momentum;
        }
    }
}

/// Scatters mass and momentum of every included particle and finalizes face
/// velocities.
///
/// Particles are split into `workers` contiguous index ranges; each range
/// accumulates into its own buffer and the buffers are summed in range order,
/// so the result is bitwise reproducible for a fixed worker count.
pub(crate) fn scatter<const D: usize, P: Send>(
    particles: &[Particle<D>],
    grid: &mut MacGrid<D>,
    workers: usize,
    include: impl Fn(&Particle<D>) -> bool + Sync,
    mass_of: impl Fn(&Particle<D>) -> f64 + Sync,
    prepare: impl Fn(&Particle<D>) -> P + Sync,
    velocity_at: impl Fn(&Particle<D>, &P, usize, &Vector<D>, f64) -> f64 + Sync,
) {
    let run_chunk = |chunk: &[Particle<D>], acc: &mut Accumulator| {
        let mut scratch = TransferScratch::default();
        for p in chunk.iter().filter(|p| include(p)) {
            let prepared = prepare(p);
            collect_pairs(p, mass_of(p), &prepared, grid, &velocity_at, &mut scratch);
            acc.add(&scratch);
        }
    };

    let workers = workers.max(1);
    let total = if workers == 1 || particles.len() < 2 {
        let mut acc = Accumulator::new(grid);
        run_chunk(particles, &mut acc);
        acc
    } else {
        let chunk_len = particles.len().div_ceil(workers);
        let partials: Vec<Accumulator> = particles
            .par_chunks(chunk_len)
            .map(|chunk| {
                let mut acc = Accumulator::new(grid);
                run_chunk(chunk, &mut acc);
                acc
            })
            .collect();
        let mut iter = partials.into_iter();
        let mut total = iter.next().unwrap_or_else(|| Accumulator::new(grid));
        for part in iter {
            for a in 0..D {
                for (t, v) in total.mass[a].iter_mut().zip(&part.mass[a]) {
                    *t += v;
                }
                for (t, v) in total.momentum[a].iter_mut().zip(&part.momentum[a]) {
                    *t += v;
                }
            }
        }
        total
    };

    for (a, (mass, momentum)) in total.mass.into_iter().zip(total.momentum).enumerate() {
        grid.faces[a].mass = mass;
        grid.faces[a].momentum = momentum;
    }
    grid.finalize_velocities();
}
