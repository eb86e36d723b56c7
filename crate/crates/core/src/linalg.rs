//! Small dense linear algebra used by the transfers: fixed-size vector
//! helpers, a pivoted solve for the d×d configuration map, and a truncating
//! Householder QR for the per-particle least-squares systems.

pub type Vector<const D: usize> = [f64; D];
pub type Matrix<const D: usize> = [[f64; D]; D];

#[inline]
pub fn dot<const D: usize>(a: &Vector<D>, b: &Vector<D>) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sub<const D: usize>(a: &Vector<D>, b: &Vector<D>) -> Vector<D> {
    std::array::from_fn(|i| a[i] - b[i])
}

#[inline]
pub fn add<const D: usize>(a: &Vector<D>, b: &Vector<D>) -> Vector<D> {
    std::array::from_fn(|i| a[i] + b[i])
}

#[inline]
pub fn scale<const D: usize>(a: &Vector<D>, s: f64) -> Vector<D> {
    std::array::from_fn(|i| a[i] * s)
}

#[inline]
pub fn norm<const D: usize>(a: &Vector<D>) -> f64 {
    dot(a, a).sqrt()
}

pub fn identity<const D: usize>() -> Matrix<D> {
    std::array::from_fn(|i| std::array::from_fn(|j| if i == j { 1.0 } else { 0.0 }))
}

pub fn mat_vec<const D: usize>(m: &Matrix<D>, v: &Vector<D>) -> Vector<D> {
    std::array::from_fn(|i| dot(&m[i], v))
}

/// LU factorization with partial pivoting of a small square matrix.
#[derive(Clone, Debug)]
pub struct SmallLu<const D: usize> {
    lu: Matrix<D>,
    perm: [usize; D],
    det: f64,
}

impl<const D: usize> SmallLu<D> {
    pub fn new(m: &Matrix<D>) -> Self {
        let mut lu = *m;
        let mut perm: [usize; D] = std::array::from_fn(|i| i);
        let mut det = 1.0;
        for k in 0..D {
            let mut p = k;
            for r in k + 1..D {
                if lu[r][k].abs() > lu[p][k].abs() {
                    p = r;
                }
            }
            if p != k {
                lu.swap(p, k);
                perm.swap(p, k);
                det = -det;
            }
            let pivot = lu[k][k];
            det *= pivot;
            if pivot == 0.0 {
                continue;
            }
            for r in k + 1..D {
                let f = lu[r][k] / pivot;
                lu[r][k] = f;
                for c in k + 1..D {
                    lu[r][c] -= f * lu[k][c];
                }
            }
        }
        Self { lu, perm, det }
    }

    pub fn determinant(&self) -> f64 {
        self.det
    }

    pub fn solve(&self, b: &Vector<D>) -> Vector<D> {
        let mut y: Vector<D> = std::array::from_fn(|i| b[self.perm[i]]);
        for i in 0..D {
            for j in 0..i {
                y[i] -= self.lu[i][j] * y[j];
            }
        }
        for i in (0..D).rev() {
            for j in i + 1..D {
                y[i] -= self.lu[i][j] * y[j];
            }
            y[i] /= self.lu[i][i];
        }
        y
    }
}

/// Outcome of a truncating least-squares solve.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSolve {
    pub solution: Vec<f64>,
    /// Number of leading unknowns that were actually solved for; the rest are zero.
    pub rank: usize,
}

/// Minimizes `‖A x − b‖` for the row-major `m × n` matrix `a` by Householder
/// QR without column pivoting. Columns are admitted in order; the first one
/// whose squared residual after the earlier reflections drops to
/// `rel_tol` times its squared norm (or that has no row left) ends the
/// factorization. The leading block before it is solved and the remaining
/// unknowns are zero. `a` and `b` are overwritten.
pub fn qr_least_squares_truncated(a: &mut [f64], b: &mut [f64], m: usize, n: usize, rel_tol: f64) -> TruncatedSolve {
    debug_assert_eq!(a.len(), m * n);
    debug_assert_eq!(b.len(), m);
    let mut rank = n;
    let mut v = vec![0.0; m];
    for k in 0..n {
        let norm2: f64 = (0..m).map(|i| a[i * n + k] * a[i * n + k]).sum();
        let tail2: f64 = (k..m).map(|i| a[i * n + k] * a[i * n + k]).sum();
        if k >= m || !(norm2 > 0.0) || tail2 <= rel_tol * norm2 {
            rank = k;
            break;
        }
        let alpha = -a[k * n + k].signum() * tail2.sqrt();
        for i in k..m {
            v[i] = a[i * n + k];
        }
        v[k] -= alpha;
        let vv: f64 = (k..m).map(|i| v[i] * v[i]).sum();
        for j in k..n {
            let f = 2.0 * (k..m).map(|i| v[i] * a[i * n + j]).sum::<f64>() / vv;
            for i in k..m {
                a[i * n + j] -= f * v[i];
            }
        }
        let f = 2.0 * (k..m).map(|i| v[i] * b[i]).sum::<f64>() / vv;
        for i in k..m {
            b[i] -= f * v[i];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..rank).rev() {
        let mut s = b[i];
        for j in i + 1..rank {
            s -= a[i * n + j] * x[j];
        }
        x[i] = s / a[i * n + i];
    }
    TruncatedSolve { solution: x, rank }
}
