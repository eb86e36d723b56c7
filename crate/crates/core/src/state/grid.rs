//! Staggered marker-and-cell grid.
//!
//! Cells are indexed `i ∈ [0, dims)`; the face array of axis `α` has
//! `dims[α] + 1` entries along `α` and `dims[β]` along every other axis.
//! Face `(i, α)` sits at the cell's min corner shifted by `dx/2` along every
//! axis except `α`.

use serde::{Deserialize, Serialize};

use crate::linalg::Vector;

/// Faces whose mass is at or below this value are treated as empty.
pub const MASS_EPSILON: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellMarker {
    Air,
    Fluid,
    SolidWall,
}

/// Row-major layout of a D-dimensional index box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout<const D: usize> {
    pub dims: [usize; D],
    pub strides: [usize; D],
    pub len: usize,
}

impl<const D: usize> Layout<D> {
    pub fn new(dims: [usize; D]) -> Self {
        let mut strides = [0; D];
        let mut acc = 1;
        for a in (0..D).rev() {
            strides[a] = acc;
            acc *= dims[a];
        }
        Self {
            dims,
            strides,
            len: acc,
        }
    }

    #[inline]
    pub fn flat(&self, idx: &[usize; D]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Flat index for a signed index, or `None` when out of range.
    #[inline]
    pub fn flat_checked(&self, idx: &[i64; D]) -> Option<usize> {
        let mut f = 0;
        for a in 0..D {
            let i = idx[a];
            if i < 0 || i as usize >= self.dims[a] {
                return None;
            }
            f += i as usize * self.strides[a];
        }
        Some(f)
    }

    pub fn unflat(&self, mut flat: usize) -> [usize; D] {
        let mut idx = [0; D];
        for a in 0..D {
            idx[a] = flat / self.strides[a];
            flat %= self.strides[a];
        }
        idx
    }
}

/// Per-axis face channels.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceChannels<const D: usize> {
    pub layout: Layout<D>,
    pub mass: Vec<f64>,
    pub momentum: Vec<f64>,
    pub velocity: Vec<f64>,
    /// Post-force velocity read by the grid-to-particle transfer.
    pub velocity_star: Vec<f64>,
}

impl<const D: usize> FaceChannels<D> {
    fn new(layout: Layout<D>) -> Self {
        let n = layout.len;
        Self {
            layout,
            mass: vec![0.0; n],
            momentum: vec![0.0; n],
            velocity: vec![0.0; n],
            velocity_star: vec![0.0; n],
        }
    }

    pub fn clear(&mut self) {
        self.mass.fill(0.0);
        self.momentum.fill(0.0);
        self.velocity.fill(0.0);
        self.velocity_star.fill(0.0);
    }
}

/// Which sides of the domain box are open (particles crossing them are
/// deleted) rather than solid walls.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpenSides<const D: usize> {
    pub open: [[bool; 2]; D],
}

impl<const D: usize> OpenSides<D> {
    pub fn closed() -> Self {
        Self { open: [[false; 2]; D] }
    }

    pub fn is_open(&self, axis: usize, upper: bool) -> bool {
        self.open[axis][upper as usize]
    }
}

impl<const D: usize> Default for OpenSides<D> {
    fn default() -> Self {
        Self::closed()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacGrid<const D: usize> {
    pub dx: f64,
    pub dims: [usize; D],
    pub cells: Layout<D>,
    pub faces: [FaceChannels<D>; D],
    pub cell_marker: Vec<CellMarker>,
}

impl<const D: usize> MacGrid<D> {
    pub fn new(dims: [usize; D], dx: f64) -> Self {
        assert!(dx > 0.0, "cell size must be positive");
        let cells = Layout::new(dims);
        let faces = std::array::from_fn(|axis| {
            let mut fd = dims;
            fd[axis] += 1;
            FaceChannels::new(Layout::new(fd))
        });
        Self {
            dx,
            dims,
            cells,
            faces,
            cell_marker: vec![CellMarker::Air; cells.len],
        }
    }

    /// Zeroes every face channel; cell markers are left alone.
    pub fn clear(&mut self) {
        for f in &mut self.faces {
            f.clear();
        }
    }

    pub fn face_layout(&self, axis: usize) -> &Layout<D> {
        &self.faces[axis].layout
    }

    /// World position of face `axis` of cell `i`.
    pub fn face_position(&self, i: &[usize; D], axis: usize) -> Vector<D> {
        face_position(i, axis, self.dx)
    }

    /// Index of the face of the given axis closest to `x`, if it exists.
    pub fn nearest_face(&self, x: &Vector<D>, axis: usize) -> Option<[usize; D]> {
        let layout = self.face_layout(axis);
        let mut idx = [0usize; D];
        for b in 0..D {
            let offset = if b == axis { 0.0 } else { 0.5 };
            let k = (x[b] / self.dx - offset).round();
            if k < 0.0 || k as usize >= layout.dims[b] {
                return None;
            }
            idx[b] = k as usize;
        }
        Some(idx)
    }

    pub fn cell_of(&self, x: &Vector<D>) -> Option<[usize; D]> {
        let mut idx = [0usize; D];
        for b in 0..D {
            let k = (x[b] / self.dx).floor();
            if k < 0.0 || k as usize >= self.dims[b] {
                return None;
            }
            idx[b] = k as usize;
        }
        Some(idx)
    }

    pub fn domain_size(&self) -> Vector<D> {
        std::array::from_fn(|a| self.dims[a] as f64 * self.dx)
    }

    /// Box in which every particle has a full kernel stencil: the domain minus
    /// one boundary cell layer on each side.
    pub fn interior_bounds(&self) -> (Vector<D>, Vector<D>) {
        let lo = [self.dx; D];
        let hi = std::array::from_fn(|a| (self.dims[a] - 1) as f64 * self.dx);
        (lo, hi)
    }

    /// Recomputes `velocity = momentum / mass` on every face, zeroing faces at
    /// or below [`MASS_EPSILON`].
    pub fn finalize_velocities(&mut self) {
        for f in &mut self.faces {
            for ((v, &m), &mv) in f.velocity.iter_mut().zip(&f.mass).zip(&f.momentum) {
                *v = if m > MASS_EPSILON { mv / m } else { 0.0 };
            }
        }
    }

    pub fn copy_velocity_to_star(&mut self) {
        for f in &mut self.faces {
            f.velocity_star.copy_from_slice(&f.velocity);
        }
    }

    pub fn total_mass(&self, axis: usize) -> f64 {
        self.faces[axis].mass.iter().sum()
    }

    pub fn total_momentum(&self, axis: usize) -> f64 {
        self.faces[axis].momentum.iter().sum()
    }

    /// ½ Σ m v² over all faces using the given channel.
    pub fn kinetic_energy(&self, use_star: bool) -> f64 {
        let mut e = 0.0;
        for f in &self.faces {
            let v = if use_star { &f.velocity_star } else { &f.velocity };
            for (m, v) in f.mass.iter().zip(v) {
                e += 0.5 * m * v * v;
            }
        }
        e
    }

    /// Marks the outer cell layer as wall on every closed side and resets all
    /// other cells to air.
    pub fn reset_markers(&mut self, sides: &OpenSides<D>) {
        for flat in 0..self.cells.len {
            let idx = self.cells.unflat(flat);
            let mut wall = false;
            for a in 0..D {
                if idx[a] == 0 && !sides.is_open(a, false) {
                    wall = true;
                }
                if idx[a] + 1 == self.dims[a] && !sides.is_open(a, true) {
                    wall = true;
                }
            }
            self.cell_marker[flat] = if wall { CellMarker::SolidWall } else { CellMarker::Air };
        }
    }

    /// Marks every non-wall cell that contains at least one of `positions` as fluid.
    pub fn mark_fluid<'a>(&mut self, positions: impl Iterator<Item = &'a Vector<D>>) {
        for x in positions {
            if let Some(c) = self.cell_of(x) {
                let flat = self.cells.flat(&c);
                if self.cell_marker[flat] == CellMarker::Air {
                    self.cell_marker[flat] = CellMarker::Fluid;
                }
            }
        }
    }

    pub fn has_non_finite(&self) -> bool {
        self.faces
            .iter()
            .any(|f| f.velocity.iter().chain(&f.velocity_star).any(|v| !v.is_finite()))
    }
}

/// Face position from the staggered-layout definition.
pub fn face_position<const D: usize>(i: &[usize; D], axis: usize, dx: f64) -> Vector<D> {
    std::array::from_fn(|b| {
        let corner = i[b] as f64 * dx;
        if b == axis {
            corner
        } else {
            corner + 0.5 * dx
        }
    })
}
