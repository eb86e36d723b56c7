use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::state::scene::{Emitter, SceneConfig, SheetEmitter};
use crate::state::{Particle, Phase};

/// Particles belonging to one fabric sheet, stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct SeededSheet {
    pub emitter_index: usize,
    pub first_particle: usize,
    pub resolution: Vec<usize>,
    pub params: SheetEmitter,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SeedResult<const D: usize> {
    pub particles: Vec<Particle<D>>,
    pub sheets: Vec<SeededSheet>,
}

/// Fills every emitter with particles.
///
/// Volume emitters fill each interior cell whose center lies inside the
/// emitter with `particles_per_cell` samples (stratified sub-cells when the
/// count is a perfect d-th power, uniform otherwise), jittered by the scene
/// seed. Each sample carries `density · dx^d / particles_per_cell` kg.
pub fn seed_particles<const D: usize>(config: &SceneConfig) -> Result<SeedResult<D>> {
    assert_eq!(config.dim, D, "scene dimension does not match the simulation");
    let dx = config.dx();
    let dims: [usize; D] = std::array::from_fn(|a| config.grid_dims[a]);
    let domain: Vector<D> = std::array::from_fn(|a| config.domain_size[a]);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scheme = config.transfer_scheme();
    let fluid_modes = scheme.modes_for(Phase::Fluid);
    let solid_modes = scheme.modes_for(Phase::Solid);
    let default_ppc = 1usize << D;
    let cell_volume = dx.powi(D as i32);

    let mut out = SeedResult::default();
    for (index, emitter) in config.emitters.iter().enumerate() {
        let ppc = emitter.particles_per_cell().unwrap_or(default_ppc);
        let mass = emitter.density() * cell_volume / ppc as f64;
        let velocity: Vector<D> = match emitter.velocity() {
            Some(v) => std::array::from_fn(|a| v[a]),
            None => [0.0; D],
        };
        match emitter {
            Emitter::Box(b) => {
                let lo: Vector<D> = std::array::from_fn(|a| b.min[a]);
                let hi: Vector<D> = std::array::from_fn(|a| b.max[a]);
                check_inside(index, &lo, &hi, &domain)?;
                fill_cells(
                    dims,
                    dx,
                    ppc,
                    &mut rng,
                    |c| (0..D).all(|a| c[a] >= lo[a] && c[a] <= hi[a]),
                    |x| {
                        out.particles.push(Particle::fluid(x, velocity, mass, fluid_modes));
                    },
                );
            }
            Emitter::Ball(b) => {
                let lo: Vector<D> = std::array::from_fn(|a| b.center[a] - b.radius);
                let hi: Vector<D> = std::array::from_fn(|a| b.center[a] + b.radius);
                check_inside(index, &lo, &hi, &domain)?;
                let r2 = b.radius * b.radius;
                let inside = |c: &Vector<D>| (0..D).map(|a| (c[a] - b.center[a]).powi(2)).sum::<f64>() <= r2;
                fill_cells(dims, dx, ppc, &mut rng, inside, |x| {
                    out.particles.push(Particle::fluid(x, velocity, mass, fluid_modes));
                });
            }
            Emitter::Sheet(s) => {
                let first_particle = out.particles.len();
                let lo = [dx; D];
                let hi: Vector<D> = std::array::from_fn(|a| (dims[a] - 1) as f64 * dx);
                for v in 0..s.vertex_count() {
                    let x = sheet_vertex::<D>(s, v);
                    if (0..D).any(|a| x[a] < lo[a] || x[a] > hi[a]) {
                        return Err(Error::EmitterOutsideDomain {
                            index,
                            reason: format!("sheet vertex {v} at {x:?} is outside the interior box {lo:?}..{hi:?}"),
                        });
                    }
                    out.particles
                        .push(Particle::new(Phase::Solid, x, velocity, mass, solid_modes));
                }
                out.sheets.push(SeededSheet {
                    emitter_index: index,
                    first_particle,
                    resolution: s.resolution.clone(),
                    params: s.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Position of row-major vertex `v` of a sheet lattice.
pub fn sheet_vertex<const D: usize>(s: &SheetEmitter, mut v: usize) -> Vector<D> {
    let mut x: Vector<D> = std::array::from_fn(|a| s.origin[a]);
    for (j, span) in s.spans.iter().enumerate().rev() {
        let n = s.resolution[j];
        let k = v % n;
        v /= n;
        let t = k as f64 / (n - 1) as f64;
        for a in 0..D {
            x[a] += t * span[a];
        }
    }
    x
}

fn check_inside<const D: usize>(index: usize, lo: &Vector<D>, hi: &Vector<D>, domain: &Vector<D>) -> Result<()> {
    for a in 0..D {
        if lo[a] < 0.0 || hi[a] > domain[a] {
            return Err(Error::EmitterOutsideDomain {
                index,
                reason: format!("extent {lo:?}..{hi:?} exceeds the domain 0..{domain:?}"),
            });
        }
    }
    Ok(())
}

fn fill_cells<const D: usize>(
    dims: [usize; D],
    dx: f64,
    ppc: usize,
    rng: &mut ChaCha8Rng,
    contains: impl Fn(&Vector<D>) -> bool,
    mut emit: impl FnMut(Vector<D>),
) {
    let per_axis = (ppc as f64).powf(1.0 / D as f64).round() as usize;
    let stratified = per_axis.pow(D as u32) == ppc;
    // interior cells only; the outer layer is reserved for boundaries
    let interior: [usize; D] = std::array::from_fn(|a| dims[a] - 2);
    let count: usize = interior.iter().product();
    for flat in 0..count {
        let mut rem = flat;
        let mut cell = [0usize; D];
        for a in (0..D).rev() {
            cell[a] = rem % interior[a] + 1;
            rem /= interior[a];
        }
        let center: Vector<D> = std::array::from_fn(|a| (cell[a] as f64 + 0.5) * dx);
        if !contains(&center) {
            continue;
        }
        for s in 0..ppc {
            let x: Vector<D> = if stratified {
                let sub = dx / per_axis as f64;
                let mut rem = s;
                std::array::from_fn(|a| {
                    let k = rem % per_axis;
                    rem /= per_axis;
                    cell[a] as f64 * dx + (k as f64 + rng.gen::<f64>()) * sub
                })
            } else {
                std::array::from_fn(|a| (cell[a] as f64 + rng.gen::<f64>()) * dx)
            };
            emit(x);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn scene(emitters: &str) -> SceneConfig {
        let text = format!(
            r#"
dim = 2
domain_size = [1.0, 1.0]
grid_dims = [10, 10]
dt = 0.001
duration = 0.01
gravity = [0.0, -9.8]
scheme = "apic"
{emitters}
"#
        );
        SceneConfig::from_toml_str(&text, Path::new("t")).unwrap()
    }

    #[test]
    fn box_of_four_cells() {
        let c = scene(
            r#"[[emitter]]
kind = "box"
min = [0.2, 0.2]
max = [0.4, 0.4]
density = 1000.0
particles_per_cell = 4
"#,
        );
        let s = seed_particles::<2>(&c).unwrap();
        assert_eq!(s.particles.len(), 16);
        let total: f64 = s.particles.iter().map(|p| p.mass).sum();
        assert!((total - 1000.0 * 4.0 * 0.01).abs() < 1e-12);
        for p in &s.particles {
            assert!(p.position.iter().all(|&x| (0.2..=0.4).contains(&x)));
            assert_eq!(p.prev_position, p.position);
            assert_eq!(p.phase, Phase::Fluid);
        }
    }

    #[test]
    fn empty_emitters_give_empty_set() {
        let s = seed_particles::<2>(&scene("")).unwrap();
        assert!(s.particles.is_empty());
    }

    #[test]
    fn emitter_outside_domain_is_rejected_with_index() {
        let c = scene(
            r#"[[emitter]]
kind = "box"
min = [0.2, 0.2]
max = [0.4, 0.4]
density = 1.0
[[emitter]]
kind = "ball"
center = [0.95, 0.5]
radius = 0.1
density = 1.0
"#,
        );
        match seed_particles::<2>(&c) {
            Err(Error::EmitterOutsideDomain { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn seeding_is_reproducible_and_seed_dependent() {
        let text = r#"[[emitter]]
kind = "ball"
center = [0.5, 0.5]
radius = 0.25
density = 1.0
particles_per_cell = 3
"#;
        let c = scene(text);
        let a = seed_particles::<2>(&c).unwrap();
        let b = seed_particles::<2>(&c).unwrap();
        assert_eq!(a, b);
        let mut c2 = c.clone();
        c2.seed = 99;
        let d = seed_particles::<2>(&c2).unwrap();
        assert_eq!(a.particles.len(), d.particles.len());
        assert_ne!(a.particles[0].position, d.particles[0].position);
    }

    #[test]
    fn sheet_vertices_are_solid_and_laid_out_row_major() {
        let c = scene(
            r#"[[emitter]]
kind = "sheet"
origin = [0.2, 0.5]
spans = [[0.6, 0.0]]
resolution = [4]
density = 100.0
stiffness = 10.0
pinned = [0, 3]
"#,
        );
        let s = seed_particles::<2>(&c).unwrap();
        assert_eq!(s.particles.len(), 4);
        assert_eq!(s.sheets.len(), 1);
        assert!(s.particles.iter().all(|p| p.phase == Phase::Solid));
        assert!((s.particles[3].position[0] - 0.8).abs() < 1e-15);
        assert!((s.particles[1].position[0] - 0.4).abs() < 1e-15);
    }
}
