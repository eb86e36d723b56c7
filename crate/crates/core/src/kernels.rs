//! Interpolation weights, polynomial scalar modes and the configuration map.
//!
//! The interpolation kernel is the tensor-product quadratic B-spline with a
//! support of 1.5 cells on each side. Scalar modes are monomials in the local
//! offset `z` (meters), with exponents in `{0, 1, 2}` per axis.

use crate::linalg::{Matrix, SmallLu, Vector};
use crate::state::Particle;

/// Quadratic B-spline in cell units.
#[inline]
pub fn bspline(t: f64) -> f64 {
    let a = t.abs();
    if a <= 0.5 {
        0.75 - a * a
    } else if a <= 1.5 {
        let b = 1.5 - a;
        0.5 * b * b
    } else {
        0.0
    }
}

/// Derivative of [`bspline`] with respect to `t`.
#[inline]
pub fn bspline_derivative(t: f64) -> f64 {
    let a = t.abs();
    if a <= 0.5 {
        -2.0 * t
    } else if a <= 1.5 {
        -(1.5 - a) * t.signum()
    } else {
        0.0
    }
}

/// `∏_β N(offset_β / dx)` where `offset = x_p − x_face`.
pub fn weight<const D: usize>(offset: &Vector<D>, dx: f64) -> f64 {
    offset.iter().map(|o| bspline(o / dx)).product()
}

/// Gradient of [`weight`] with respect to the particle position.
pub fn weight_gradient<const D: usize>(offset: &Vector<D>, dx: f64) -> Vector<D> {
    let n: Vector<D> = std::array::from_fn(|b| bspline(offset[b] / dx));
    std::array::from_fn(|b| {
        let mut g = bspline_derivative(offset[b] / dx) / dx;
        for (c, nc) in n.iter().enumerate() {
            if c != b {
                g *= nc;
            }
        }
        g
    })
}

/// The 3^d faces of one axis that a particle's kernel touches.
#[derive(Clone, Copy, Debug)]
pub struct AxisStencil<const D: usize> {
    /// Lowest face index per axis (may be negative near the domain edge).
    pub base: [i64; D],
    /// 1D weights `N(t)` for the three nodes on each axis.
    pub w: [[f64; 3]; D],
    /// 1D derivatives `N'(t) / dx`.
    pub dw: [[f64; 3]; D],
}

/// Number of faces in a stencil: 3^d.
pub const fn stencil_size(d: usize) -> usize {
    3usize.pow(d as u32)
}

impl<const D: usize> AxisStencil<D> {
    pub fn new(x: &Vector<D>, axis: usize, dx: f64) -> Self {
        let mut base = [0i64; D];
        let mut w = [[0.0; 3]; D];
        let mut dw = [[0.0; 3]; D];
        for b in 0..D {
            let shift = if b == axis { 0.0 } else { 0.5 };
            let u = x[b] / dx - shift;
            let lo = (u - 0.5).floor();
            base[b] = lo as i64;
            for k in 0..3 {
                let t = u - (lo + k as f64);
                w[b][k] = bspline(t);
                dw[b][k] = bspline_derivative(t) / dx;
            }
        }
        Self { base, w, dw }
    }

    /// Local node offsets `(k_0, …, k_{d-1})` of the `n`-th stencil entry.
    #[inline]
    pub fn local(n: usize) -> [usize; D] {
        let mut rem = n;
        let mut k = [0usize; D];
        for b in (0..D).rev() {
            k[b] = rem % 3;
            rem /= 3;
        }
        k
    }

    #[inline]
    pub fn index(&self, k: &[usize; D]) -> [i64; D] {
        std::array::from_fn(|b| self.base[b] + k[b] as i64)
    }

    #[inline]
    pub fn weight(&self, k: &[usize; D]) -> f64 {
        (0..D).map(|b| self.w[b][k[b]]).product()
    }

    #[inline]
    pub fn gradient(&self, k: &[usize; D]) -> Vector<D> {
        std::array::from_fn(|b| {
            let mut g = self.dw[b][k[b]];
            for c in 0..D {
                if c != b {
                    g *= self.w[c][k[c]];
                }
            }
            g
        })
    }
}

/// Ordered basis of scalar modes.
///
/// Modes are listed multilinear block first (every exponent in `{0, 1}`),
/// then the modes containing a square. Inside each block the order is graded:
/// by total degree, then by exponent tuple in descending lexicographic order
/// (so `x` precedes `y`). In 2D: `1, x, y, xy, x², y², x²y, xy², x²y²`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeBasis<const D: usize> {
    exponents: Vec<[u8; D]>,
    pub orthogonalize: bool,
}

impl<const D: usize> ModeBasis<D> {
    /// Largest supported basis: the full multiquadratic set, 3^d modes.
    pub const MAX_MODES: usize = stencil_size(D);
    /// Size of the multilinear (naturally mass-orthogonal) block, 2^d.
    pub const MULTILINEAR_MODES: usize = 1 << D;

    pub fn new(n_modes: usize, orthogonalize: bool) -> Self {
        assert!(
            (1..=Self::MAX_MODES).contains(&n_modes),
            "mode count {n_modes} outside 1..={}",
            Self::MAX_MODES
        );
        Self {
            exponents: Self::ordered_exponents().into_iter().take(n_modes).collect(),
            orthogonalize,
        }
    }

    pub fn ordered_exponents() -> Vec<[u8; D]> {
        let mut all: Vec<[u8; D]> = (0..Self::MAX_MODES)
            .map(|n| {
                let k = AxisStencil::<D>::local(n);
                std::array::from_fn(|b| k[b] as u8)
            })
            .collect();
        all.sort_by(|a, b| {
            let key = |e: &[u8; D]| (e.contains(&2), e.iter().map(|&x| x as u32).sum::<u32>());
            key(a).cmp(&key(b)).then_with(|| b.cmp(a))
        });
        all
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self, r: usize) -> &[u8; D] {
        &self.exponents[r]
    }

    /// True when mode `r` contains a squared factor.
    pub fn is_quadratic(&self, r: usize) -> bool {
        self.exponents[r].contains(&2)
    }

    /// Number of leading modes in the multilinear block.
    pub fn multilinear_len(&self) -> usize {
        self.exponents.iter().take_while(|e| e.iter().all(|&x| x < 2)).count()
    }

    /// Evaluates every mode at once into `out`.
    #[inline]
    pub fn evaluate_all(&self, z: &Vector<D>, w: f64, dx: f64, out: &mut [f64]) {
        let factors: [[f64; 3]; D] = std::array::from_fn(|b| {
            let sq = if self.orthogonalize {
                orthogonal_quadratic(z[b], w, dx)
            } else {
                z[b] * z[b]
            };
            [1.0, z[b], sq]
        });
        for (o, e) in out.iter_mut().zip(&self.exponents) {
            let mut s = 1.0;
            for b in 0..D {
                s *= factors[b][e[b] as usize];
            }
            *o = s;
        }
    }
}

/// Orthogonalizing substitution for a squared factor:
/// `g(z) = w² − w·z(Δx² − 4z²)/Δx² − Δx²/4`, with `w` the particle–face weight.
#[inline]
pub fn orthogonal_quadratic(z: f64, w: f64, dx: f64) -> f64 {
    let dx2 = dx * dx;
    w * w - w * z * (dx2 - 4.0 * z * z) / dx2 - dx2 / 4.0
}

/// Scalar mode `r` at local offset `z` (meters). `w` is the particle–face
/// weight, used only by orthogonalized quadratic factors.
#[inline]
pub fn scalar_mode<const D: usize>(basis: &ModeBasis<D>, r: usize, z: &Vector<D>, w: f64, dx: f64) -> f64 {
    let e = basis.exponents(r);
    let mut s = 1.0;
    for b in 0..D {
        s *= match e[b] {
            0 => 1.0,
            1 => z[b],
            _ if basis.orthogonalize => orthogonal_quadratic(z[b], w, dx),
            _ => z[b] * z[b],
        };
    }
    s
}

/// Threshold on `|det(I + Δt·C)|` below which the map falls back to a pure
/// translation.
pub const MAP_DETERMINANT_EPSILON: f64 = 1e-10;

/// Affine pull-back of positions from the current configuration to the one
/// before the last advection:
/// `ξ(x) = x_prev + (I + Δt·C)⁻¹ (x − x_now)`.
#[derive(Clone, Copy, Debug)]
pub struct ConfigurationMap<const D: usize> {
    pub from: Vector<D>,
    pub to: Vector<D>,
    /// `(I + Δt·C)⁻¹`, or identity for a degenerate map.
    pub inverse: Matrix<D>,
    pub degenerate: bool,
}

impl<const D: usize> ConfigurationMap<D> {
    pub fn new(particle: &Particle<D>, dt: f64) -> Self {
        let deformation: Matrix<D> = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                let id = if i == j { 1.0 } else { 0.0 };
                id + dt * particle.affine_derivs[i][j]
            })
        });
        let lu = SmallLu::new(&deformation);
        let degenerate = !(lu.determinant().abs() >= MAP_DETERMINANT_EPSILON);
        let inverse = if degenerate {
            crate::linalg::identity()
        } else {
            let cols: [Vector<D>; D] = std::array::from_fn(|j| {
                let e: Vector<D> = std::array::from_fn(|i| if i == j { 1.0 } else { 0.0 });
                lu.solve(&e)
            });
            std::array::from_fn(|i| std::array::from_fn(|j| cols[j][i]))
        };
        Self {
            from: particle.position,
            to: particle.prev_position,
            inverse,
            degenerate,
        }
    }

    /// Maps `x` back to the previous configuration.
    #[inline]
    pub fn apply(&self, x: &Vector<D>) -> Vector<D> {
        let d: Vector<D> = std::array::from_fn(|i| x[i] - self.from[i]);
        std::array::from_fn(|i| {
            let mut s = self.to[i];
            for j in 0..D {
                s += self.inverse[i][j] * d[j];
            }
            s
        })
    }

    /// Mapped offset `(I + Δt·C)⁻¹ (x − x_now)`, which equals `ξ(x) − x_prev`.
    #[inline]
    pub fn pulled_back_offset(&self, x: &Vector<D>) -> Vector<D> {
        let d: Vector<D> = std::array::from_fn(|i| x[i] - self.from[i]);
        std::array::from_fn(|i| (0..D).map(|j| self.inverse[i][j] * d[j]).sum())
    }
}

/// `ξ(x)` for a single point; see [`ConfigurationMap`]. The boolean reports
/// whether the degenerate fallback was taken.
pub fn configuration_map<const D: usize>(x: &Vector<D>, particle: &Particle<D>, dt: f64) -> (Vector<D>, bool) {
    let map = ConfigurationMap::new(particle, dt);
    (map.apply(x), map.degenerate)
}

/// Face position for a possibly out-of-range stencil index.
#[inline]
pub fn stencil_face_position<const D: usize>(idx: &[i64; D], axis: usize, dx: f64) -> Vector<D> {
    std::array::from_fn(|b| {
        let shift = if b == axis { 0.0 } else { 0.5 };
        (idx[b] as f64 + shift) * dx
    })
}

/// Gram matrix `G_rq = Σ_faces w · s_r(z) · s_q(z)` for a particle at `x`
/// against the faces of `axis`, using identity-map offsets `z = x_face − x`.
/// Returned row-major, `n × n`.
pub fn particle_gram<const D: usize>(basis: &ModeBasis<D>, x: &Vector<D>, axis: usize, dx: f64) -> Vec<f64> {
    let n = basis.len();
    let stencil = AxisStencil::new(x, axis, dx);
    let mut g = vec![0.0; n * n];
    let mut s = vec![0.0; n];
    for e in 0..stencil_size(D) {
        let k = AxisStencil::<D>::local(e);
        let idx = stencil.index(&k);
        let w = stencil.weight(&k);
        let xf = stencil_face_position(&idx, axis, dx);
        let z: Vector<D> = std::array::from_fn(|b| xf[b] - x[b]);
        basis.evaluate_all(&z, w, dx, &mut s);
        for r in 0..n {
            for q in 0..n {
                g[r * n + q] += w * s[r] * s[q];
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_at_center_and_beyond_support() {
        assert_eq!(weight(&[0.0, 0.0], 0.1), 0.5625);
        assert_eq!(weight(&[0.0, 0.0, 0.0], 1.0), 0.75f64.powi(3));
        assert_eq!(weight(&[0.75, 0.0], 0.5), 0.0);
        assert!(weight(&[0.15, 0.0], 0.1) < 1e-30);
        assert_eq!(weight(&[0.0, -0.2], 0.1), 0.0);
    }

    #[test]
    fn gradient_at_center_is_zero() {
        assert_eq!(weight_gradient(&[0.0, 0.0], 0.5), [0.0, 0.0]);
    }

    #[test]
    fn stencil_partition_of_unity() {
        let dx = 0.1;
        for &x in &[[0.33, 0.71], [0.25, 0.25], [0.4999, 0.5001]] {
            for axis in 0..2 {
                let st = AxisStencil::<2>::new(&x, axis, dx);
                let (mut sw, mut sg) = (0.0, [0.0; 2]);
                for n in 0..9 {
                    let k = AxisStencil::<2>::local(n);
                    sw += st.weight(&k);
                    let g = st.gradient(&k);
                    sg[0] += g[0];
                    sg[1] += g[1];
                }
                assert!((sw - 1.0).abs() < 1e-12);
                assert!(sg[0].abs() < 1e-10 && sg[1].abs() < 1e-10);
            }
        }
    }

    #[test]
    fn stencil_matches_direct_weight() {
        let dx = 0.25;
        let x = [0.61, 0.37, 0.9];
        for axis in 0..3 {
            let st = AxisStencil::<3>::new(&x, axis, dx);
            for n in 0..27 {
                let k = AxisStencil::<3>::local(n);
                let idx = st.index(&k);
                let face: [usize; 3] = std::array::from_fn(|b| idx[b] as usize);
                let xf = crate::state::face_position(&face, axis, dx);
                let off = [x[0] - xf[0], x[1] - xf[1], x[2] - xf[2]];
                assert!((st.weight(&k) - weight(&off, dx)).abs() < 1e-15);
                let g = weight_gradient(&off, dx);
                let sg = st.gradient(&k);
                for b in 0..3 {
                    assert!((g[b] - sg[b]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn mode_ordering_2d() {
        let e = ModeBasis::<2>::ordered_exponents();
        assert_eq!(
            e,
            vec![[0, 0], [1, 0], [0, 1], [1, 1], [2, 0], [0, 2], [2, 1], [1, 2], [2, 2]]
        );
    }

    #[test]
    fn mode_ordering_3d_multilinear_block_first() {
        let b = ModeBasis::<3>::new(27, false);
        assert_eq!(b.multilinear_len(), 8);
        assert_eq!(b.exponents(0), &[0, 0, 0]);
        assert_eq!(b.exponents(1), &[1, 0, 0]);
        assert_eq!(b.exponents(3), &[0, 0, 1]);
        assert_eq!(b.exponents(4), &[1, 1, 0]);
        assert_eq!(b.exponents(7), &[1, 1, 1]);
        assert!(b.is_quadratic(8));
    }

    #[test]
    fn scalar_mode_examples() {
        let b = ModeBasis::<2>::new(4, true);
        let dx = 0.1;
        assert_eq!(scalar_mode(&b, 0, &[0.3, -0.7], 0.2, dx), 1.0);
        let z = [0.3 * dx, -0.1 * dx];
        assert_eq!(scalar_mode(&b, 1, &z, 0.2, dx), 0.3 * dx);
        assert_eq!(scalar_mode(&b, 3, &z, 0.2, dx), 0.3 * dx * -0.1 * dx);
    }

    #[test]
    fn quadratic_factor_switches_with_orthogonalize() {
        let dx = 0.2;
        let z = [0.05, 0.0];
        let plain = ModeBasis::<2>::new(5, false);
        assert!((scalar_mode(&plain, 4, &z, 0.3, dx) - 0.0025).abs() < 1e-17);
        let orth = ModeBasis::<2>::new(5, true);
        assert_eq!(scalar_mode(&orth, 4, &z, 0.3, dx), orthogonal_quadratic(0.05, 0.3, dx));
    }

    #[test]
    fn map_identity_and_anchor() {
        let mut p = Particle::<2>::fluid([0.4, 0.6], [0.0; 2], 1.0, 1);
        let (y, deg) = configuration_map(&[0.1, 0.2], &p, 0.01);
        assert!(!deg);
        assert!((y[0] - 0.1).abs() < 1e-15 && (y[1] - 0.2).abs() < 1e-15);
        p.prev_position = [0.3, 0.5];
        p.affine_derivs = [[2.0, 1.0], [-1.0, 0.5]];
        let (y, _) = configuration_map(&p.position.clone(), &p, 0.01);
        assert_eq!(y, [0.3, 0.5]);
    }

    #[test]
    fn degenerate_map_falls_back_to_translation() {
        let mut p = Particle::<2>::fluid([0.4, 0.6], [0.0; 2], 1.0, 1);
        p.prev_position = [0.3, 0.6];
        // I + dt*C = [[0, 0], [0, 1]] is singular
        p.affine_derivs = [[-100.0, 0.0], [0.0, 0.0]];
        let (y, deg) = configuration_map(&[0.5, 0.7], &p, 0.01);
        assert!(deg);
        assert!((y[0] - 0.4).abs() < 1e-15 && (y[1] - 0.7).abs() < 1e-15);
    }
}
