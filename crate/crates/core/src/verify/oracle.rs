//! Naive reference transfers.
//!
//! Every routine here loops over all (particle, face) pairs of the grid and
//! evaluates the kernel, modes and configuration map from scratch, without
//! the stencil machinery of the production transfers.

use crate::linalg::{Matrix, Vector};
use crate::state::{MapReference, Particle, TransferScheme};
use crate::transfers::Selection;

fn n(t: f64) -> f64 {
    let a = t.abs();
    if a < 0.5 {
        0.75 - t * t
    } else if a < 1.5 {
        (a - 1.5) * (a - 1.5) / 2.0
    } else {
        0.0
    }
}

fn dn(t: f64) -> f64 {
    let a = t.abs();
    if a < 0.5 {
        -2.0 * t
    } else if a < 1.5 {
        (a - 1.5) * t / a
    } else {
        0.0
    }
}

pub(crate) fn face_pos<const D: usize>(idx: &[usize; D], axis: usize, dx: f64) -> Vector<D> {
    std::array::from_fn(|b| {
        if b == axis {
            idx[b] as f64 * dx
        } else {
            (idx[b] as f64 + 0.5) * dx
        }
    })
}

pub(crate) fn face_dims<const D: usize>(dims: [usize; D], axis: usize) -> [usize; D] {
    let mut d = dims;
    d[axis] += 1;
    d
}

/// Row-major enumeration of every face index of an axis.
pub(crate) fn all_faces<const D: usize>(dims: [usize; D], axis: usize) -> Vec<[usize; D]> {
    let fd = face_dims(dims, axis);
    let total: usize = fd.iter().product();
    (0..total)
        .map(|mut f| {
            let mut idx = [0; D];
            for b in (0..D).rev() {
                idx[b] = f % fd[b];
                f /= fd[b];
            }
            idx
        })
        .collect()
}

pub(crate) fn weight<const D: usize>(xp: &Vector<D>, xf: &Vector<D>, dx: f64) -> f64 {
    (0..D).map(|b| n((xp[b] - xf[b]) / dx)).product()
}

fn weight_grad<const D: usize>(xp: &Vector<D>, xf: &Vector<D>, dx: f64) -> Vector<D> {
    std::array::from_fn(|b| {
        (0..D)
            .map(|c| {
                let t = (xp[c] - xf[c]) / dx;
                if c == b {
                    dn(t) / dx
                } else {
                    n(t)
                }
            })
            .product()
    })
}

/// `(I + dt·C)⁻¹` by Gauss–Jordan elimination, or `None` when the
/// determinant magnitude is below `1e-10`.
pub(crate) fn map_inverse<const D: usize>(c: &Matrix<D>, dt: f64) -> Option<Matrix<D>> {
    let mut a: Matrix<D> =
        std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 } + dt * c[i][j]));
    let mut inv: Matrix<D> = std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 }));
    let mut det = 1.0;
    for col in 0..D {
        let piv = (col..D)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        if piv != col {
            a.swap(piv, col);
            inv.swap(piv, col);
            det = -det;
        }
        let p = a[col][col];
        det *= p;
        if p == 0.0 {
            return None;
        }
        for j in 0..D {
            a[col][j] /= p;
            inv[col][j] /= p;
        }
        for r in 0..D {
            if r != col {
                let f = a[r][col];
                for j in 0..D {
                    a[r][j] -= f * a[col][j];
                    inv[r][j] -= f * inv[col][j];
                }
            }
        }
    }
    (det.abs() >= 1e-10).then_some(inv)
}

pub(crate) fn mode<const D: usize>(e: &[u8; D], z: &Vector<D>, w: f64, dx: f64, orthogonalize: bool) -> f64 {
    let mut s = 1.0;
    for b in 0..D {
        s *= match (e[b], orthogonalize) {
            (0, _) => 1.0,
            (1, _) => z[b],
            (_, false) => z[b].powi(2),
            (_, true) => w.powi(2) - w * z[b] * (dx.powi(2) - 4.0 * z[b].powi(2)) / dx.powi(2) - dx.powi(2) / 4.0,
        };
    }
    s
}

pub(crate) fn includes<const D: usize>(sel: Selection, p: &Particle<D>) -> bool {
    match sel {
        Selection::All => true,
        Selection::Fluid => p.is_fluid(),
        Selection::Solid | Selection::SolidCombined => p.is_solid(),
    }
}

pub(crate) fn mass<const D: usize>(sel: Selection, p: &Particle<D>) -> f64 {
    if sel == Selection::SolidCombined {
        p.mass + p.absorbed_fluid_mass
    } else {
        p.mass
    }
}

/// What a reference particle-to-grid transfer needs to know.
pub(crate) struct Setup<'a, const D: usize> {
    pub dims: [usize; D],
    pub dx: f64,
    pub dt: f64,
    pub scheme: TransferScheme,
    pub orthogonalize: bool,
    pub reference: MapReference,
    /// Mode exponents for fluid and solid particles.
    pub fluid_modes: &'a [[u8; D]],
    pub solid_modes: &'a [[u8; D]],
}

/// Face mass, momentum and velocity channels.
pub(crate) struct Faces<const D: usize> {
    pub mass: [Vec<f64>; D],
    pub momentum: [Vec<f64>; D],
    pub velocity: [Vec<f64>; D],
}

pub(crate) fn p2g<const D: usize>(s: &Setup<'_, D>, particles: &[Particle<D>], sel: Selection) -> Faces<D> {
    let mut out = Faces {
        mass: std::array::from_fn(|_| Vec::new()),
        momentum: std::array::from_fn(|_| Vec::new()),
        velocity: std::array::from_fn(|_| Vec::new()),
    };
    for axis in 0..D {
        for idx in all_faces(s.dims, axis) {
            let xf = face_pos(&idx, axis, s.dx);
            let (mut m, mut mv) = (0.0, 0.0);
            for p in particles.iter().filter(|p| includes(sel, p)) {
                let w = weight(&p.position, &xf, s.dx);
                if w == 0.0 {
                    continue;
                }
                let mp = mass(sel, p) * w;
                let u = match s.scheme {
                    TransferScheme::Pic => p.velocity[axis],
                    TransferScheme::Apic => {
                        p.velocity[axis]
                            + (0..D)
                                .map(|b| p.affine_derivs[axis][b] * (xf[b] - p.position[b]))
                                .sum::<f64>()
                    }
                    TransferScheme::PolyPic { .. } => {
                        let a = map_inverse(&p.affine_derivs, s.dt)
                            .unwrap_or_else(|| std::array::from_fn(|i| std::array::from_fn(|j| (i == j) as u8 as f64)));
                        let z: Vector<D> = std::array::from_fn(|i| {
                            let mut zi: f64 = (0..D).map(|j| a[i][j] * (xf[j] - p.position[j])).sum();
                            if s.reference == MapReference::Current {
                                zi += p.prev_position[i] - p.position[i];
                            }
                            zi
                        });
                        let modes = if p.is_fluid() { s.fluid_modes } else { s.solid_modes };
                        modes
                            .iter()
                            .zip(&p.poly_coeffs)
                            .map(|(e, c)| mode(e, &z, w, s.dx, s.orthogonalize) * c[axis])
                            .sum()
                    }
                };
                m += mp;
                mv += mp * u;
            }
            out.mass[axis].push(m);
            out.momentum[axis].push(mv);
            out.velocity[axis].push(if m > crate::state::MASS_EPSILON { mv / m } else { 0.0 });
        }
    }
    out
}

/// Gathered velocity and velocity gradient at `x` from a face field.
pub(crate) fn gather<const D: usize>(
    dims: [usize; D],
    dx: f64,
    field: &[Vec<f64>; D],
    x: &Vector<D>,
) -> (Vector<D>, Matrix<D>) {
    let mut v = [0.0; D];
    let mut c = [[0.0; D]; D];
    for axis in 0..D {
        for (f, idx) in all_faces(dims, axis).iter().enumerate() {
            let xf = face_pos(idx, axis, dx);
            v[axis] += weight(x, &xf, dx) * field[axis][f];
            let g = weight_grad(x, &xf, dx);
            for b in 0..D {
                c[axis][b] += g[b] * field[axis][f];
            }
        }
    }
    (v, c)
}

/// Weighted samples `(w, z, v)` of one axis around `x`, `z = x_face − x`.
pub(crate) fn samples<const D: usize>(
    dims: [usize; D],
    dx: f64,
    field: &[f64],
    x: &Vector<D>,
    axis: usize,
) -> Vec<(f64, Vector<D>, f64)> {
    all_faces(dims, axis)
        .iter()
        .enumerate()
        .filter_map(|(f, idx)| {
            let xf = face_pos(idx, axis, dx);
            let w = weight(x, &xf, dx);
            (w > 0.0).then(|| (w, std::array::from_fn(|b| xf[b] - x[b]), field[f]))
        })
        .collect()
}

/// Weighted least squares by Gram–Schmidt with one reorthogonalization pass.
///
/// Columns are admitted in order; the first column whose residual norm
/// squared falls to `1e-10` of its own norm squared, or which exceeds the
/// number of rows, ends the fit and it and later coefficients are zero.
pub(crate) fn least_squares<const D: usize>(
    modes: &[[u8; D]],
    samples: &[(f64, Vector<D>, f64)],
    dx: f64,
    orthogonalize: bool,
) -> (Vec<f64>, usize) {
    let rows = samples.len();
    let cols = modes.len();
    let column = |r: usize| -> Vec<f64> {
        samples
            .iter()
            .map(|(w, z, _)| w.sqrt() * mode(&modes[r], z, *w, dx, orthogonalize))
            .collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut r = vec![vec![0.0; cols]; cols];
    let mut rank = cols;
    for k in 0..cols {
        let a = column(k);
        let norm2 = dot(&a, &a);
        let mut u = a;
        for _ in 0..2 {
            for (j, qj) in q.iter().enumerate() {
                let c = dot(qj, &u);
                r[j][k] += c;
                for (ui, qi) in u.iter_mut().zip(qj) {
                    *ui -= c * qi;
                }
            }
        }
        let resid2 = dot(&u, &u);
        if k >= rows || !(norm2 > 0.0) || resid2 <= 1e-10 * norm2 {
            rank = k;
            break;
        }
        let len = resid2.sqrt();
        r[k][k] = len;
        q.push(u.into_iter().map(|x| x / len).collect());
    }
    let b: Vec<f64> = samples.iter().map(|(w, _, v)| w.sqrt() * v).collect();
    let qtb: Vec<f64> = q.iter().map(|qj| dot(qj, &b)).collect();
    let mut x = vec![0.0; cols];
    for i in (0..rank).rev() {
        let s: f64 = qtb[i] - (i + 1..rank).map(|j| r[i][j] * x[j]).sum::<f64>();
        x[i] = s / r[i][i];
    }
    (x, rank)
}
