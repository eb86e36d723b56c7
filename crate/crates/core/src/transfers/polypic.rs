//! Mode-coefficient fit for PolyPIC.
//!
//! For each particle and axis the coefficients minimize
//! `Σ_i w_i (ṽ_i − Σ_r s_r(z_i) c_r)²` over the particle's stencil, with
//! `z_i = x_iα − x_p`. When the mode Gram matrix is diagonal the solution
//! decouples into one projection per mode; otherwise the weighted design
//! matrix is solved by a truncating QR factorization.

use rayon::prelude::*;

use super::gather::for_each_face;
use super::{Selection, TransferStats};
use crate::kernels::{stencil_face_position, ModeBasis};
use crate::linalg::qr_least_squares_truncated;
use crate::state::{MacGrid, Particle};

/// Largest normalized off-diagonal Gram entry, `|G_rq| / √(G_rr G_qq)`, for
/// which the per-mode projection is used.
pub const GRAM_DIAGONAL_TOLERANCE: f64 = 1e-8;

/// Squared relative residual of a mode column, after removing the earlier
/// modes, at which the dense fit truncates.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitPath {
    /// Per-mode closed-form projection.
    Diagonal,
    /// Dense least squares.
    Dense,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AxisFit {
    pub coefficients: Vec<f64>,
    pub path: FitPath,
    /// Leading modes actually fitted.
    pub rank: usize,
}

/// Reusable buffers for the per-axis fits of one worker.
#[derive(Debug, Default)]
pub(crate) struct FitScratch<const D: usize> {
    gram: Vec<f64>,
    rhs: Vec<f64>,
    modes: Vec<f64>,
    design: Vec<f64>,
    values: Vec<f64>,
    samples: Vec<(f64, [f64; D], f64)>,
    coefficients: Vec<f64>,
}

/// Weighted least-squares fit of the modes to samples `(w, z, v)`.
pub fn fit_axis_coefficients<const D: usize>(
    basis: &ModeBasis<D>,
    samples: &[(f64, [f64; D], f64)],
    dx: f64,
) -> AxisFit {
    let mut scratch = FitScratch::default();
    let mut coefficients = vec![0.0; basis.len()];
    let (path, rank) = fit_into(basis, samples, dx, &mut scratch, &mut coefficients);
    AxisFit {
        coefficients,
        path,
        rank,
    }
}

fn fit_into<const D: usize>(
    basis: &ModeBasis<D>,
    samples: &[(f64, [f64; D], f64)],
    dx: f64,
    scratch: &mut FitScratch<D>,
    coefficients: &mut [f64],
) -> (FitPath, usize) {
    let n = basis.len();
    let FitScratch {
        gram,
        rhs,
        modes: s,
        design,
        values,
        ..
    } = scratch;
    gram.clear();
    gram.resize(n * n, 0.0);
    rhs.clear();
    rhs.resize(n, 0.0);
    s.resize(n, 0.0);
    for (w, z, v) in samples {
        basis.evaluate_all(z, *w, dx, s);
        for r in 0..n {
            let ws = w * s[r];
            rhs[r] += ws * v;
            for q in r..n {
                gram[r * n + q] += ws * s[q];
            }
        }
    }

    let mut diagonal = true;
    'outer: for r in 0..n {
        for q in r + 1..n {
            let scale = (gram[r * n + r] * gram[q * n + q]).sqrt();
            if gram[r * n + q].abs() > GRAM_DIAGONAL_TOLERANCE * scale {
                diagonal = false;
                break 'outer;
            }
        }
    }

    if diagonal {
        let mut rank = n;
        for r in 0..n {
            let g = gram[r * n + r];
            if g > 0.0 {
                coefficients[r] = rhs[r] / g;
            } else {
                rank = rank.min(r);
            }
        }
        // modes past a vanished one are dropped, matching the dense path
        for c in coefficients.iter_mut().skip(rank) {
            *c = 0.0;
        }
        (FitPath::Diagonal, rank)
    } else {
        let m = samples.len();
        design.clear();
        design.resize(m * n, 0.0);
        values.clear();
        values.resize(m, 0.0);
        for (i, (w, z, v)) in samples.iter().enumerate() {
            basis.evaluate_all(z, *w, dx, s);
            let sw = w.sqrt();
            for r in 0..n {
                design[i * n + r] = sw * s[r];
            }
            values[i] = sw * v;
        }
        let solved = qr_least_squares_truncated(design, values, m, n, RANK_TOLERANCE);
        coefficients.copy_from_slice(&solved.solution);
        (FitPath::Dense, solved.rank)
    }
}

pub(crate) fn fit_particle<const D: usize>(
    grid: &MacGrid<D>,
    p: &mut Particle<D>,
    basis: &ModeBasis<D>,
    scratch: &mut FitScratch<D>,
) -> TransferStats {
    let n = basis.len();
    p.poly_coeffs.resize(n, [0.0; D]);
    let mut stats = TransferStats::default();
    let mut samples = std::mem::take(&mut scratch.samples);
    let mut coefficients = std::mem::take(&mut scratch.coefficients);
    coefficients.resize(n, 0.0);
    for axis in 0..D {
        samples.clear();
        let vstar = &grid.faces[axis].velocity_star;
        for_each_face(grid, &p.position, axis, |idx, face, w, _, _| {
            if w > 0.0 {
                let xf = stencil_face_position(&idx, axis, grid.dx);
                let z = std::array::from_fn(|b| xf[b] - p.position[b]);
                samples.push((w, z, vstar[face]));
            }
        });
        let (path, rank) = fit_into(basis, &samples, grid.dx, scratch, &mut coefficients[..n]);
        if path == FitPath::Dense {
            stats.dense_solves += 1;
        }
        if rank < n {
            stats.truncated_solves += 1;
        }
        for (r, &c) in coefficients[..n].iter().enumerate() {
            p.poly_coeffs[r][axis] = c;
        }
    }
    scratch.samples = samples;
    scratch.coefficients = coefficients;
    stats
}

/// Refits every selected particle's mode coefficients against the grid's
/// intermediate velocities.
pub fn compute_polypic_coefficients<const D: usize>(
    grid: &MacGrid<D>,
    particles: &mut [Particle<D>],
    settings: &super::TransferSettings<D>,
    selection: Selection,
) -> TransferStats {
    particles
        .par_iter_mut()
        .filter(|p| selection.includes(p))
        .map_init(FitScratch::default, |scratch, p| {
            fit_particle(grid, p, settings.basis_for(p.phase), scratch)
        })
        .reduce(TransferStats::default, |mut a, b| {
            a += b;
            a
        })
}
