//! Minimal porous solid: mass-spring strands (2D) and triangle sheets (3D)
//! built from solid particles, plus a saturating absorption reservoir per
//! solid particle.
//!
//! The mechanics and the absorption law are simple stand-ins. Their only job
//! is to exercise the mixture transfers and the mass bookkeeping.

use std::collections::HashMap;

use crate::linalg::{dot, norm, sub, Vector};
use crate::state::{retain_particles, DeletionEvent, DeletionLedger, DeletionReason, Particle, Phase, SeedResult};

/// Default absorption time scale: the rate is `capacity / ABSORPTION_TIME`.
pub const ABSORPTION_TIME: f64 = 0.1;

/// Rod segment (2 vertices) or triangle (3 vertices) with edge springs.
#[derive(Clone, Debug, PartialEq)]
pub struct FabricElement {
    pub vertices: Vec<usize>,
    /// Rest length of a rod, rest area of a triangle.
    pub rest_measure: f64,
    /// Rest length of each edge `(v_k, v_{k+1})`.
    pub edge_rest: Vec<f64>,
    pub stiffness: f64,
    pub damping: f64,
}

impl FabricElement {
    pub fn rod<const D: usize>(a: usize, b: usize, particles: &[Particle<D>], stiffness: f64, damping: f64) -> Self {
        let l = norm(&sub(&particles[b].position, &particles[a].position));
        Self {
            vertices: vec![a, b],
            rest_measure: l,
            edge_rest: vec![l],
            stiffness,
            damping,
        }
    }

    pub fn triangle<const D: usize>(v: [usize; 3], particles: &[Particle<D>], stiffness: f64, damping: f64) -> Self {
        let x = |i: usize| particles[v[i]].position;
        let e0 = sub(&x(1), &x(0));
        let e1 = sub(&x(2), &x(0));
        let (a, b, c) = (dot(&e0, &e0), dot(&e1, &e1), dot(&e0, &e1));
        let area = 0.5 * (a * b - c * c).max(0.0).sqrt();
        let edge_rest = (0..3).map(|k| norm(&sub(&x((k + 1) % 3), &x(k)))).collect();
        Self {
            vertices: v.to_vec(),
            rest_measure: area,
            edge_rest,
            stiffness,
            damping,
        }
    }

    /// Vertex pairs joined by springs.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.vertices.len();
        let count = if n == 2 { 1 } else { n };
        (0..count).map(move |k| (self.vertices[k], self.vertices[(k + 1) % n], self.edge_rest[k]))
    }
}

/// Per-particle absorption parameters and reservoir limits, aligned with the
/// particle array. Fluid entries are zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AbsorptionState {
    /// Largest absorbable fluid mass (kg).
    pub capacity: Vec<f64>,
    /// Transfer rate (kg/s).
    pub rate: Vec<f64>,
    /// Reach in meters.
    pub radius: Vec<f64>,
}

/// Outcome of one absorption pass.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AbsorptionReport {
    pub transferred: f64,
    pub deleted: usize,
}

/// All fabric of a scene.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Fabric {
    pub elements: Vec<FabricElement>,
    pub pinned: Vec<usize>,
    pub absorption: AbsorptionState,
}

impl Fabric {
    /// Builds elements and absorption parameters for every seeded sheet.
    /// Strands in 2D become rod chains; lattices in 3D are split into two
    /// triangles per quad.
    pub fn from_seed<const D: usize>(seed: &SeedResult<D>, dx: f64) -> Self {
        let ps = &seed.particles;
        let n = ps.len();
        let mut fabric = Fabric {
            elements: Vec::new(),
            pinned: Vec::new(),
            absorption: AbsorptionState {
                capacity: vec![0.0; n],
                rate: vec![0.0; n],
                radius: vec![0.0; n],
            },
        };
        for sheet in &seed.sheets {
            let s = &sheet.params;
            let base = sheet.first_particle;
            let count = s.vertex_count();
            match sheet.resolution.as_slice() {
                [m] => {
                    for i in 0..m.saturating_sub(1) {
                        fabric
                            .elements
                            .push(FabricElement::rod(base + i, base + i + 1, ps, s.stiffness, s.damping));
                    }
                }
                [m, k] => {
                    for i in 0..m.saturating_sub(1) {
                        for j in 0..k.saturating_sub(1) {
                            let v = |a: usize, b: usize| base + a * k + b;
                            fabric.elements.push(FabricElement::triangle(
                                [v(i, j), v(i + 1, j), v(i + 1, j + 1)],
                                ps,
                                s.stiffness,
                                s.damping,
                            ));
                            fabric.elements.push(FabricElement::triangle(
                                [v(i, j), v(i + 1, j + 1), v(i, j + 1)],
                                ps,
                                s.stiffness,
                                s.damping,
                            ));
                        }
                    }
                }
                _ => {}
            }
            fabric
                .pinned
                .extend(s.pinned.iter().filter(|&&v| v < count).map(|v| base + v));
            for p in base..base + count {
                let cap = s.absorption_capacity * ps[p].mass;
                fabric.absorption.capacity[p] = cap;
                fabric.absorption.rate[p] = s.absorption_rate.unwrap_or(cap / ABSORPTION_TIME);
                fabric.absorption.radius[p] = s.absorption_radius * dx;
            }
        }
        fabric.pinned.sort_unstable();
        fabric.pinned.dedup();
        fabric
    }

    /// Applies an old-to-new particle index map from a deletion. Elements that
    /// lost a vertex are dropped.
    pub fn remap(&mut self, map: &[Option<usize>]) {
        self.elements.retain_mut(|e| {
            for v in e.vertices.iter_mut() {
                match map[*v] {
                    Some(n) => *v = n,
                    None => return false,
                }
            }
            true
        });
        self.pinned = self.pinned.iter().filter_map(|&p| map[p]).collect();
        let compact = |v: &mut Vec<f64>| {
            let mut out = Vec::with_capacity(v.len());
            for (i, x) in v.iter().enumerate() {
                if map[i].is_some() {
                    out.push(*x);
                }
            }
            *v = out;
        };
        compact(&mut self.absorption.capacity);
        compact(&mut self.absorption.rate);
        compact(&mut self.absorption.radius);
    }

    /// Zeroes velocity, derivatives and mode coefficients of pinned vertices.
    pub fn hold_pinned<const D: usize>(&self, particles: &mut [Particle<D>]) {
        for &i in &self.pinned {
            let p = &mut particles[i];
            p.velocity = [0.0; D];
            p.affine_derivs = [[0.0; D]; D];
            for c in &mut p.poly_coeffs {
                *c = [0.0; D];
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty() && self.absorption.capacity.iter().all(|&c| c == 0.0)
    }
}

/// Linear spring plus dashpot along every element edge:
/// `f = k (L − L0) + c (Δv·n)`, pulling the endpoints together when stretched.
pub fn compute_spring_forces<const D: usize>(elements: &[FabricElement], particles: &[Particle<D>]) -> Vec<Vector<D>> {
    let mut forces = vec![[0.0; D]; particles.len()];
    for e in elements {
        for (a, b, rest) in e.edges() {
            let d = sub(&particles[b].position, &particles[a].position);
            let l = norm(&d);
            if l == 0.0 {
                continue;
            }
            let n: Vector<D> = std::array::from_fn(|k| d[k] / l);
            let dv = sub(&particles[b].velocity, &particles[a].velocity);
            let f = e.stiffness * (l - rest) + e.damping * dot(&dv, &n);
            for k in 0..D {
                forces[a][k] += f * n[k];
                forces[b][k] -= f * n[k];
            }
        }
    }
    forces
}

/// Moves fluid mass into nearby unsaturated solid reservoirs.
///
/// Fluid particles are visited in index order; each one feeds the
/// lowest-index unsaturated solid within that solid's radius, moving
/// `min(rate·dt, fluid mass, remaining capacity)`. Fluid particles left with
/// no mass are deleted and recorded as fully absorbed.
pub fn absorb<const D: usize>(
    particles: &mut Vec<Particle<D>>,
    fabric: &mut Fabric,
    dt: f64,
    step: u64,
    ledger: &mut DeletionLedger,
) -> AbsorptionReport {
    let abs = &fabric.absorption;
    let reach = abs.radius.iter().cloned().fold(0.0, f64::max);
    if reach <= 0.0 {
        return AbsorptionReport::default();
    }
    let bin = |x: &Vector<D>| -> [i64; D] { std::array::from_fn(|k| (x[k] / reach).floor() as i64) };
    let mut bins: HashMap<[i64; D], Vec<usize>> = HashMap::new();
    for (i, p) in particles.iter().enumerate() {
        if p.is_solid() && abs.capacity[i] > 0.0 {
            bins.entry(bin(&p.position)).or_default().push(i);
        }
    }

    let mut report = AbsorptionReport::default();
    let mut emptied = vec![false; particles.len()];
    let mut candidates = Vec::new();
    for f in 0..particles.len() {
        if !particles[f].is_fluid() || particles[f].mass <= 0.0 {
            continue;
        }
        let xf = particles[f].position;
        let home = bin(&xf);
        candidates.clear();
        for n in 0..3usize.pow(D as u32) {
            let mut key = home;
            let mut r = n;
            for k in key.iter_mut() {
                *k += (r % 3) as i64 - 1;
                r /= 3;
            }
            if let Some(list) = bins.get(&key) {
                candidates.extend_from_slice(list);
            }
        }
        candidates.sort_unstable();
        let target = candidates.iter().copied().find(|&s| {
            let p = &particles[s];
            p.absorbed_fluid_mass < abs.capacity[s] && norm(&sub(&p.position, &xf)) <= abs.radius[s]
        });
        let Some(s) = target else { continue };
        let room = abs.capacity[s] - particles[s].absorbed_fluid_mass;
        let amount = (abs.rate[s] * dt).min(particles[f].mass).min(room);
        if amount <= 0.0 {
            continue;
        }
        particles[s].absorbed_fluid_mass += amount;
        if amount == particles[f].mass {
            particles[f].mass = 0.0;
            emptied[f] = true;
        } else {
            particles[f].mass -= amount;
        }
        report.transferred += amount;
    }

    report.deleted = emptied.iter().filter(|&&e| e).count();
    if report.deleted > 0 {
        for _ in 0..report.deleted {
            ledger.record(DeletionEvent {
                step,
                reason: DeletionReason::FullyAbsorbed,
                phase: Phase::Fluid,
                mass_removed: 0.0,
            });
        }
        let map = retain_particles(particles, |i, _| !emptied[i]);
        fabric.remap(&map);
    }
    report
}
