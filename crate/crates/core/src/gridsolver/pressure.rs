use crate::state::{CellMarker, MacGrid, OpenSides};

use super::is_wall_face;

/// Pressure field and solver statistics of the last projection.
#[derive(Clone, Debug, PartialEq)]
pub struct PressureSolve {
    /// Kinematic pressure `p/ρ` per cell; zero outside fluid cells.
    pub pressure: Vec<f64>,
    /// Relative max-norm residual target.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub iterations: usize,
    /// Max-norm residual relative to the right-hand side.
    pub residual: f64,
}

impl PressureSolve {
    pub fn new(tolerance: f64, max_iterations: usize) -> Self {
        Self {
            pressure: Vec::new(),
            tolerance,
            max_iterations,
            iterations: 0,
            residual: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NotConverged {
    pub iterations: usize,
    pub residual: f64,
}

const MIC_TAU: f64 = 0.97;
const MIC_SIGMA: f64 = 0.25;

/// Cell-centered Poisson system over the fluid cells.
struct System<const D: usize> {
    fluid: Vec<bool>,
    diag: Vec<f64>,
    /// `plus[b][c]` is −1 when cell `c` couples to its fluid neighbor along +b.
    plus: [Vec<f64>; D],
    strides: [usize; D],
}

impl<const D: usize> System<D> {
    fn build(grid: &MacGrid<D>, sides: &OpenSides<D>) -> Self {
        let n = grid.cells.len;
        let fluid: Vec<bool> = grid.cell_marker.iter().map(|m| *m == CellMarker::Fluid).collect();
        let mut diag = vec![0.0; n];
        let mut plus: [Vec<f64>; D] = std::array::from_fn(|_| vec![0.0; n]);
        for c in 0..n {
            if !fluid[c] {
                continue;
            }
            let idx = grid.cells.unflat(c);
            for b in 0..D {
                for upper in [false, true] {
                    let mut face = idx;
                    if upper {
                        face[b] += 1;
                    }
                    if is_wall_face(grid, sides, b, &face) {
                        continue;
                    }
                    diag[c] += 1.0;
                    if upper && idx[b] + 1 < grid.dims[b] && fluid[c + grid.cells.strides[b]] {
                        plus[b][c] = -1.0;
                    }
                }
            }
        }
        Self {
            fluid,
            diag,
            plus,
            strides: grid.cells.strides,
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for c in 0..x.len() {
            if !self.fluid[c] {
                out[c] = 0.0;
                continue;
            }
            let mut s = self.diag[c] * x[c];
            for b in 0..D {
                let st = self.strides[b];
                if self.plus[b][c] != 0.0 {
                    s += self.plus[b][c] * x[c + st];
                }
                if c >= st && self.plus[b][c - st] != 0.0 {
                    s += self.plus[b][c - st] * x[c - st];
                }
            }
            out[c] = s;
        }
    }

    fn mic0(&self) -> Vec<f64> {
        let n = self.fluid.len();
        let mut precon = vec![0.0; n];
        for c in 0..n {
            if !self.fluid[c] || self.diag[c] == 0.0 {
                continue;
            }
            let mut e = self.diag[c];
            for b in 0..D {
                let st = self.strides[b];
                if c < st {
                    continue;
                }
                let m = c - st;
                let a = self.plus[b][m];
                if a == 0.0 {
                    continue;
                }
                let pm = precon[m];
                e -= (a * pm) * (a * pm);
                let others: f64 = (0..D).filter(|&o| o != b).map(|o| self.plus[o][m]).sum();
                e -= MIC_TAU * a * others * pm * pm;
            }
            if e < MIC_SIGMA * self.diag[c] {
                e = self.diag[c];
            }
            precon[c] = 1.0 / e.sqrt();
        }
        precon
    }

    fn precondition(&self, precon: &[f64], r: &[f64], q: &mut [f64], z: &mut [f64]) {
        let n = r.len();
        for c in 0..n {
            if !self.fluid[c] {
                q[c] = 0.0;
                continue;
            }
            let mut t = r[c];
            for b in 0..D {
                let st = self.strides[b];
                if c >= st {
                    let m = c - st;
                    t -= self.plus[b][m] * precon[m] * q[m];
                }
            }
            q[c] = t * precon[c];
        }
        for c in (0..n).rev() {
            if !self.fluid[c] {
                z[c] = 0.0;
                continue;
            }
            let mut t = q[c];
            for b in 0..D {
                if self.plus[b][c] != 0.0 {
                    t -= self.plus[b][c] * precon[c] * z[c + self.strides[b]];
                }
            }
            z[c] = t * precon[c];
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Discrete divergence of `velocity_star` per cell, with wall faces read as zero.
pub fn divergence<const D: usize>(grid: &MacGrid<D>, sides: &OpenSides<D>) -> Vec<f64> {
    let mut div = vec![0.0; grid.cells.len];
    for (c, d) in div.iter_mut().enumerate() {
        let idx = grid.cells.unflat(c);
        for b in 0..D {
            let layout = grid.face_layout(b);
            let mut hi = idx;
            hi[b] += 1;
            let u_lo = if is_wall_face(grid, sides, b, &idx) {
                0.0
            } else {
                grid.faces[b].velocity_star[layout.flat(&idx)]
            };
            let u_hi = if is_wall_face(grid, sides, b, &hi) {
                0.0
            } else {
                grid.faces[b].velocity_star[layout.flat(&hi)]
            };
            *d += (u_hi - u_lo) / grid.dx;
        }
    }
    div
}

/// Projects `velocity_star` onto the discretely divergence-free fields over
/// the fluid cells. Air cells hold zero pressure; wall faces are set to zero.
///
/// Only faces bordering a fluid cell are changed, apart from the wall faces.
/// Returns the per-axis mask of those faces.
pub fn pressure_project<const D: usize>(
    grid: &mut MacGrid<D>,
    sides: &OpenSides<D>,
    dt: f64,
    solve: &mut PressureSolve,
) -> Result<[Vec<bool>; D], NotConverged> {
    let n = grid.cells.len;
    let sys = System::build(grid, sides);
    let dx2 = grid.dx * grid.dx;
    let div = divergence(grid, sides);
    let b: Vec<f64> = (0..n).map(|c| if sys.fluid[c] { -div[c] * dx2 } else { 0.0 }).collect();

    let mut phi = vec![0.0; n];
    let b_norm = max_abs(&b);
    solve.iterations = 0;
    solve.residual = 0.0;
    if b_norm > 0.0 {
        let precon = sys.mic0();
        let mut r = b.clone();
        let mut q = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut s = vec![0.0; n];
        sys.precondition(&precon, &r, &mut q, &mut z);
        s.copy_from_slice(&z);
        let mut sigma = dot(&z, &r);
        let mut converged = false;
        let mut rel = 1.0;
        for it in 1..=solve.max_iterations {
            sys.apply(&s, &mut z);
            let denom = dot(&z, &s);
            if denom <= 0.0 {
                break;
            }
            let alpha = sigma / denom;
            for c in 0..n {
                phi[c] += alpha * s[c];
                r[c] -= alpha * z[c];
            }
            rel = max_abs(&r) / b_norm;
            solve.iterations = it;
            if rel <= solve.tolerance {
                converged = true;
                break;
            }
            sys.precondition(&precon, &r, &mut q, &mut z);
            let sigma_new = dot(&z, &r);
            let beta = sigma_new / sigma;
            for c in 0..n {
                s[c] = z[c] + beta * s[c];
            }
            sigma = sigma_new;
        }
        solve.residual = rel;
        if !converged {
            return Err(NotConverged {
                iterations: solve.iterations,
                residual: rel,
            });
        }
    }

    solve.pressure = phi.iter().map(|p| p / dt).collect();

    let valid = std::array::from_fn(|axis| {
        let layout = *grid.face_layout(axis);
        let mut mask = vec![false; layout.len];
        for (f, m) in mask.iter_mut().enumerate() {
            let idx = layout.unflat(f);
            if is_wall_face(grid, sides, axis, &idx) {
                grid.faces[axis].velocity_star[f] = 0.0;
                continue;
            }
            let hi = (idx[axis] < grid.dims[axis]).then(|| grid.cells.flat(&idx));
            let lo = (idx[axis] > 0).then(|| {
                let mut c = idx;
                c[axis] -= 1;
                grid.cells.flat(&c)
            });
            let fluid_hi = hi.is_some_and(|c| sys.fluid[c]);
            let fluid_lo = lo.is_some_and(|c| sys.fluid[c]);
            if !(fluid_hi || fluid_lo) {
                continue;
            }
            let p_hi = hi.map_or(0.0, |c| phi[c]);
            let p_lo = lo.map_or(0.0, |c| phi[c]);
            grid.faces[axis].velocity_star[f] -= (p_hi - p_lo) / grid.dx;
            *m = true;
        }
        mask
    });
    Ok(valid)
}
