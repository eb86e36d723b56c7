use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::oracle;
use super::{Check, Tally};
use crate::kernels::{particle_gram, stencil_size, ModeBasis};
use crate::state::{MacGrid, MapReference, Particle, Phase, TransferScheme, MASS_EPSILON};
use crate::transfers::{
    analytic_momentum, g2p, momentum_scale, p2g_selected, selected_mass, Selection, TransferSettings,
};

const MASS_TOLERANCE: f64 = 1e-12;
const MOMENTUM_TOLERANCE: f64 = 1e-11;
const DEGENERACY_TOLERANCE: f64 = 1e-14;
const ORACLE_TOLERANCE: f64 = 1e-10;
const MONOTONICITY_TOLERANCE: f64 = 1e-10;
const GRAM_TOLERANCE: f64 = 1e-10;

const CONSERVATION_STATES: usize = 100;
const DEGENERACY_STATES: usize = 100;
const ORACLE_TRIALS: usize = 500;
const MONOTONICITY_STATES: usize = 50;
const GRAM_POSITIONS: usize = 1000;

/// How random particles are drawn.
struct Draw {
    dt: f64,
    speed: f64,
    deriv: f64,
    fluid_modes: usize,
    solid_modes: usize,
    /// Distance from the domain edge, in cells.
    margin: f64,
    absorbed: bool,
}

fn random_particles<const D: usize>(
    rng: &mut ChaCha8Rng,
    dims: [usize; D],
    dx: f64,
    count: usize,
    draw: &Draw,
) -> Vec<Particle<D>> {
    let exponents = ModeBasis::<D>::ordered_exponents();
    (0..count)
        .map(|_| {
            let position: [f64; D] =
                std::array::from_fn(|b| rng.gen_range(draw.margin * dx..(dims[b] as f64 - draw.margin) * dx));
            let velocity: [f64; D] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0) * draw.speed);
            let mass = rng.gen_range(0.5..1.5) * 1e-3;
            let phase = if rng.gen_bool(0.5) { Phase::Fluid } else { Phase::Solid };
            let modes = if phase == Phase::Fluid {
                draw.fluid_modes
            } else {
                draw.solid_modes
            };
            let mut p = Particle::new(phase, position, velocity, mass, modes);
            p.affine_derivs = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0) * draw.deriv));
            p.prev_position = std::array::from_fn(|b| position[b] - draw.dt * velocity[b]);
            for r in 1..modes {
                let degree: i32 = exponents[r].iter().map(|&e| e as i32).sum();
                p.poly_coeffs[r] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0) * draw.speed / dx.powi(degree));
            }
            if phase == Phase::Solid && draw.absorbed {
                p.absorbed_fluid_mass = rng.gen_range(0.0..1.0) * mass;
            }
            p
        })
        .collect()
}

fn face_positions<const D: usize>(grid: &MacGrid<D>, axis: usize) -> impl Iterator<Item = [f64; D]> + '_ {
    let layout = *grid.face_layout(axis);
    (0..layout.len).map(move |f| grid.face_position(&layout.unflat(f), axis))
}

fn selection_label(s: Selection) -> &'static str {
    match s {
        Selection::All => "plain",
        Selection::Fluid => "mixture-fluid",
        Selection::Solid => "solid",
        Selection::SolidCombined => "mixture-solid",
    }
}

/// `z`-component of the grid's angular momentum about the origin.
fn grid_angular_momentum(grid: &MacGrid<2>) -> f64 {
    let mut l = 0.0;
    for axis in 0..2 {
        for (xf, mv) in face_positions(grid, axis).zip(&grid.faces[axis].momentum) {
            l += if axis == 0 { -xf[1] * mv } else { xf[0] * mv };
        }
    }
    l
}

/// Angular momentum a PIC or APIC scatter must carry, with its error scale.
/// The affine term adds `m (Δx²/4)(c_yx − c_xy)` from the kernel's second
/// moments.
fn analytic_angular_momentum(particles: &[Particle<2>], selection: Selection, affine: bool, dx: f64) -> (f64, f64) {
    let (mut l, mut scale) = (0.0, 0.0);
    for p in particles.iter().filter(|p| oracle::includes(selection, p)) {
        let m = oracle::mass(selection, p);
        let (x, v) = (p.position, p.velocity);
        l += m * (x[0] * v[1] - x[1] * v[0]);
        scale += m * (x[0].hypot(x[1]) * v[0].hypot(v[1]));
        if affine {
            let c = p.affine_derivs;
            l += m * 0.25 * dx * dx * (c[1][0] - c[0][1]);
            scale += m * 0.25 * dx * dx * (c[1][0].abs() + c[0][1].abs());
        }
    }
    (l, scale)
}

/// Conservation of every 2D scatter. `flip_affine` scatters APIC particles
/// with negated derivatives while auditing against the originals.
pub(super) fn conservation(seed: u64, flip_affine: bool) -> Vec<Check> {
    let configs = [
        ("pic", TransferScheme::Pic, MapReference::Previous),
        ("apic", TransferScheme::Apic, MapReference::Previous),
        (
            "polypic1",
            TransferScheme::PolyPic {
                fluid_modes: 1,
                solid_modes: 1,
            },
            MapReference::Previous,
        ),
        (
            "polypic2",
            TransferScheme::PolyPic {
                fluid_modes: 2,
                solid_modes: 2,
            },
            MapReference::Previous,
        ),
        (
            "polypic4",
            TransferScheme::PolyPic {
                fluid_modes: 4,
                solid_modes: 4,
            },
            MapReference::Previous,
        ),
        (
            "polypic4-current",
            TransferScheme::PolyPic {
                fluid_modes: 4,
                solid_modes: 4,
            },
            MapReference::Current,
        ),
    ];
    let selections = [Selection::All, Selection::Fluid, Selection::SolidCombined];
    let dims = [20, 16];
    let dx = 0.05;
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (label, scheme, reference) in configs {
        let settings = TransferSettings::<2>::new(scheme, 0.01).with_map_reference(reference);
        let with_angular = !matches!(scheme, TransferScheme::PolyPic { .. });
        for selection in selections {
            let name = format!("{label}/{}", selection_label(selection));
            let mut mass = Tally::new(format!("{name}/mass"), Some(MASS_TOLERANCE));
            let mut momentum = Tally::new(format!("{name}/momentum"), Some(MOMENTUM_TOLERANCE));
            let mut angular = Tally::new(format!("{name}/angular-momentum"), Some(MOMENTUM_TOLERANCE));
            for _ in 0..CONSERVATION_STATES {
                let draw = Draw {
                    dt: settings.dt,
                    speed: 1.0,
                    deriv: 20.0,
                    fluid_modes: scheme.modes_for(Phase::Fluid),
                    solid_modes: scheme.modes_for(Phase::Solid),
                    margin: 2.0,
                    absorbed: true,
                };
                let particles = random_particles(&mut rng, dims, dx, 40, &draw);
                let mut scattered = particles.clone();
                if flip_affine && scheme == TransferScheme::Apic {
                    for p in &mut scattered {
                        p.affine_derivs = p.affine_derivs.map(|row| row.map(|c| -c));
                    }
                }
                let mut grid = MacGrid::new(dims, dx);
                p2g_selected(&settings, &scattered, &mut grid, selection);

                let m0 = selected_mass(&particles, selection);
                mass.record((0..2).map(|a| (grid.total_mass(a) - m0).abs() / m0).fold(0.0, f64::max));

                let p0 = analytic_momentum(&settings, &particles, selection, dx)
                    .expect("multilinear bases have closed-form momentum");
                let scale = momentum_scale(&settings, &particles, selection, dx);
                momentum.record(
                    (0..2)
                        .map(|a| (grid.total_momentum(a) - p0[a]).abs() / scale)
                        .fold(0.0, f64::max),
                );

                if with_angular {
                    let (l0, scale) =
                        analytic_angular_momentum(&particles, selection, scheme == TransferScheme::Apic, dx);
                    angular.record((grid_angular_momentum(&grid) - l0).abs() / scale);
                }
            }
            checks.push(mass.finish());
            checks.push(momentum.finish());
            if with_angular {
                checks.push(angular.finish());
            }
        }
    }
    checks
}

/// Largest channel difference between two grids, relative to the largest
/// magnitude of the reference channel.
fn grid_difference<const D: usize>(a: &MacGrid<D>, reference: &MacGrid<D>) -> f64 {
    let mut worst: f64 = 0.0;
    for axis in 0..D {
        let (fa, fr) = (&a.faces[axis], &reference.faces[axis]);
        for (x, r) in [
            (&fa.mass, &fr.mass),
            (&fa.momentum, &fr.momentum),
            (&fa.velocity, &fr.velocity),
        ] {
            worst = worst.max(relative_difference(x, r));
        }
    }
    worst
}

fn relative_difference(x: &[f64], reference: &[f64]) -> f64 {
    let diff = x.iter().zip(reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = reference.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if diff == 0.0 {
        0.0
    } else {
        diff / scale.max(f64::MIN_POSITIVE)
    }
}

fn degeneracy_dim<const D: usize>(rng: &mut ChaCha8Rng, dims: [usize; D], checks: &mut Vec<Check>) {
    let dx = 0.1;
    let dt = 0.01;
    let full = 1 << D;
    let suffix = format!("{D}d");
    let mut apic = Tally::new(format!("apic-zero-derivs-vs-pic-{suffix}"), Some(DEGENERACY_TOLERANCE));
    let mut poly1 = Tally::new(format!("polypic1-vs-pic-{suffix}"), Some(DEGENERACY_TOLERANCE));
    let mut dry = Tally::new(
        format!("mixture-solid-dry-vs-solid-{suffix}"),
        Some(DEGENERACY_TOLERANCE),
    );
    let mut fluid = Tally::new(
        format!("mixture-fluid-vs-fluid-subset-{suffix}"),
        Some(DEGENERACY_TOLERANCE),
    );
    let pic = TransferSettings::<D>::new(TransferScheme::Pic, dt);
    let poly = |n| {
        TransferSettings::<D>::new(
            TransferScheme::PolyPic {
                fluid_modes: n,
                solid_modes: n,
            },
            dt,
        )
    };
    for _ in 0..DEGENERACY_STATES {
        let one = Draw {
            dt,
            speed: 1.0,
            deriv: 20.0,
            fluid_modes: 1,
            solid_modes: 1,
            margin: 0.0,
            absorbed: false,
        };
        let particles = random_particles(rng, dims, dx, 24, &one);
        let mut reference = MacGrid::new(dims, dx);
        p2g_selected(&pic, &particles, &mut reference, Selection::All);

        let mut flat = particles.clone();
        for p in &mut flat {
            p.affine_derivs = [[0.0; D]; D];
        }
        let mut grid = MacGrid::new(dims, dx);
        p2g_selected(
            &TransferSettings::new(TransferScheme::Apic, dt),
            &flat,
            &mut grid,
            Selection::All,
        );
        apic.record(grid_difference(&grid, &reference));

        let mut grid = MacGrid::new(dims, dx);
        p2g_selected(&poly(1), &particles, &mut grid, Selection::All);
        poly1.record(grid_difference(&grid, &reference));

        let many = Draw {
            fluid_modes: full,
            solid_modes: full,
            ..one
        };
        let particles = random_particles(rng, dims, dx, 24, &many);
        let settings = poly(full);
        let mut plain = MacGrid::new(dims, dx);
        p2g_selected(&settings, &particles, &mut plain, Selection::Solid);
        let mut mixed = MacGrid::new(dims, dx);
        p2g_selected(&settings, &particles, &mut mixed, Selection::SolidCombined);
        dry.record(grid_difference(&mixed, &plain));

        let subset: Vec<_> = particles.iter().filter(|p| p.is_fluid()).cloned().collect();
        let mut alone = MacGrid::new(dims, dx);
        p2g_selected(&settings, &subset, &mut alone, Selection::All);
        let mut mixed = MacGrid::new(dims, dx);
        p2g_selected(&settings, &particles, &mut mixed, Selection::Fluid);
        fluid.record(grid_difference(&mixed, &alone));
    }
    checks.extend([apic.finish(), poly1.finish(), dry.finish(), fluid.finish()]);
}

pub(super) fn degeneracy(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    degeneracy_dim(&mut rng, [12, 10], &mut checks);
    degeneracy_dim(&mut rng, [6, 6, 5], &mut checks);
    checks
}

struct OracleTallies {
    p2g: Tally,
    velocity: Tally,
    derivs: Tally,
    fitted: Tally,
    coefficients: Tally,
    dense: Tally,
}

fn oracle_trial<const D: usize>(rng: &mut ChaCha8Rng, max_cells: usize, t: &mut OracleTallies) {
    let dims: [usize; D] = std::array::from_fn(|_| rng.gen_range(3..=max_cells));
    let dx = rng.gen_range(0.05..0.5);
    let dt = rng.gen_range(0.001..0.05);
    let full = stencil_size(D);
    let scheme = match rng.gen_range(0..3) {
        0 => TransferScheme::Pic,
        1 => TransferScheme::Apic,
        _ => TransferScheme::PolyPic {
            fluid_modes: rng.gen_range(1..=full),
            solid_modes: rng.gen_range(1..=full),
        },
    };
    let orthogonalize = rng.gen_bool(0.5);
    let reference = if rng.gen_bool(0.5) {
        MapReference::Previous
    } else {
        MapReference::Current
    };
    let settings = TransferSettings::<D>::new(scheme, dt)
        .with_orthogonalize(orthogonalize)
        .with_map_reference(reference);
    let selection = [Selection::All, Selection::Fluid, Selection::SolidCombined][rng.gen_range(0..3)];
    let draw = Draw {
        dt,
        speed: 1.0,
        deriv: 10.0,
        fluid_modes: scheme.modes_for(Phase::Fluid),
        solid_modes: scheme.modes_for(Phase::Solid),
        margin: 0.0,
        absorbed: true,
    };
    let count = rng.gen_range(1..=4);
    let mut particles = random_particles(rng, dims, dx, count, &draw);

    let exps = |phase| {
        let b = settings.basis_for(phase);
        (0..b.len()).map(|r| *b.exponents(r)).collect::<Vec<_>>()
    };
    let (fluid_modes, solid_modes) = (exps(Phase::Fluid), exps(Phase::Solid));
    let setup = oracle::Setup {
        dims,
        dx,
        dt,
        scheme,
        orthogonalize,
        reference,
        fluid_modes: &fluid_modes,
        solid_modes: &solid_modes,
    };
    let mut grid = MacGrid::new(dims, dx);
    p2g_selected(&settings, &particles, &mut grid, selection);
    let naive = oracle::p2g(&setup, &particles, selection);
    let mut err: f64 = 0.0;
    for a in 0..D {
        err = err
            .max(relative_difference(&grid.faces[a].mass, &naive.mass[a]))
            .max(relative_difference(&grid.faces[a].momentum, &naive.momentum[a]))
            .max(relative_difference(&grid.faces[a].velocity, &naive.velocity[a]));
    }
    t.p2g.record(err);

    for f in &mut grid.faces {
        for v in &mut f.velocity_star {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let field: [Vec<f64>; D] = std::array::from_fn(|a| grid.faces[a].velocity_star.clone());
    let vmax = field.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut stats = crate::transfers::TransferStats::default();
    for p in &mut particles {
        stats += g2p(&settings, &grid, std::slice::from_mut(p), Selection::All);
        let (v, c) = oracle::gather(dims, dx, &field, &p.position);
        t.velocity
            .record((0..D).map(|a| (p.velocity[a] - v[a]).abs()).fold(0.0, f64::max) / vmax);
        if scheme != TransferScheme::Pic {
            let e = (0..D)
                .flat_map(|a| (0..D).map(move |b| (a, b)))
                .map(|(a, b)| (p.affine_derivs[a][b] - c[a][b]).abs())
                .fold(0.0, f64::max);
            t.derivs.record(e * dx / vmax);
        }
        if let TransferScheme::PolyPic { .. } = scheme {
            let modes = if p.is_fluid() { &fluid_modes } else { &solid_modes };
            let (mut fit_err, mut coeff_err): (f64, f64) = (0.0, 0.0);
            for a in 0..D {
                let samples = oracle::samples(dims, dx, &field[a], &p.position, a);
                let (coeffs, _) = oracle::least_squares(modes, &samples, dx, orthogonalize);
                let total_w: f64 = samples.iter().map(|s| s.0).sum();
                // weighted RMS of the fitted-field difference, the norm the fit minimizes in
                let mut sq = 0.0;
                for (w, z, _) in &samples {
                    let d: f64 = modes
                        .iter()
                        .enumerate()
                        .map(|(r, e)| (p.poly_coeffs[r][a] - coeffs[r]) * oracle::mode(e, z, *w, dx, orthogonalize))
                        .sum();
                    sq += w * d * d;
                }
                fit_err = fit_err.max((sq / total_w).sqrt() / vmax);
                for (r, e) in modes.iter().enumerate() {
                    let rms = (samples
                        .iter()
                        .map(|(w, z, _)| w * oracle::mode(e, z, *w, dx, orthogonalize).powi(2))
                        .sum::<f64>()
                        / total_w)
                        .sqrt();
                    coeff_err = coeff_err.max((p.poly_coeffs[r][a] - coeffs[r]).abs() * rms / vmax);
                }
            }
            t.fitted.record(fit_err);
            t.coefficients.record(coeff_err);
            if stats.dense_solves > 0 {
                t.dense.record(fit_err);
            }
            stats = Default::default();
        }
    }
}

pub(super) fn oracle_equivalence(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = OracleTallies {
        p2g: Tally::new("p2g", Some(ORACLE_TOLERANCE)),
        velocity: Tally::new("g2p-velocity", Some(ORACLE_TOLERANCE)),
        derivs: Tally::new("g2p-derivs", Some(ORACLE_TOLERANCE)),
        fitted: Tally::new("fitted-field", Some(ORACLE_TOLERANCE)),
        coefficients: Tally::new("coefficients-per-mode", None),
        dense: Tally::new("fitted-field-dense-path", Some(ORACLE_TOLERANCE)),
    };
    for trial in 0..ORACLE_TRIALS {
        if trial % 2 == 0 {
            oracle_trial::<2>(&mut rng, 5, &mut t);
        } else {
            oracle_trial::<3>(&mut rng, 4, &mut t);
        }
    }
    vec![
        t.p2g.finish(),
        t.velocity.finish(),
        t.derivs.finish(),
        t.fitted.finish(),
        t.dense.finish(),
        t.coefficients.finish(),
    ]
}

/// Kinetic energy on the faces that carry mass.
fn face_energy<const D: usize>(grid: &MacGrid<D>, field: impl Fn(usize) -> Vec<f64>) -> f64 {
    let mut e = 0.0;
    for a in 0..D {
        let v = field(a);
        for (m, v) in grid.faces[a].mass.iter().zip(&v) {
            if *m > MASS_EPSILON {
                e += 0.5 * m * v * v;
            }
        }
    }
    e
}

/// Grid velocity after gathering `source` onto the particles and scattering
/// back with the identity map.
fn round_trip(settings: &TransferSettings<2>, source: &MacGrid<2>, particles: &[Particle<2>]) -> MacGrid<2> {
    let mut ps = particles.to_vec();
    for p in &mut ps {
        p.resize_modes(settings.fluid_basis.len());
    }
    g2p(settings, source, &mut ps, Selection::All);
    let affine = settings.scheme == TransferScheme::Apic;
    for p in &mut ps {
        if !affine {
            p.affine_derivs = [[0.0; 2]; 2];
        }
        p.prev_position = p.position;
    }
    let mut grid = MacGrid::new(source.dims, source.dx);
    p2g_selected(settings, &ps, &mut grid, Selection::All);
    grid
}

pub(super) fn monotonicity(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [16, 16];
    let dx = 1.0 / 16.0;
    let mut nondecreasing = Tally::new("retention-nondecreasing-1-2-4", Some(MONOTONICITY_TOLERANCE));
    let mut bounded = Tally::new("retention-at-most-source", Some(MONOTONICITY_TOLERANCE));
    let mut pic_point = Tally::new("pic-equals-polypic1", Some(MONOTONICITY_TOLERANCE));
    let mut apic_gap = Tally::new("apic-retention-above-polypic4", None);
    let poly = |n| {
        TransferSettings::<2>::new(
            TransferScheme::PolyPic {
                fluid_modes: n,
                solid_modes: n,
            },
            0.01,
        )
    };
    for _ in 0..MONOTONICITY_STATES {
        let mut particles = Vec::new();
        for i in 3..13 {
            for j in 3..13 {
                for _ in 0..4 {
                    let x = [
                        (i as f64 + rng.gen_range(0.0..1.0)) * dx,
                        (j as f64 + rng.gen_range(0.0..1.0)) * dx,
                    ];
                    particles.push(Particle::fluid(x, [0.0; 2], rng.gen_range(0.5..1.5) * 1e-3, 1));
                }
            }
        }
        let mut source = MacGrid::new(dims, dx);
        p2g_selected(&poly(1), &particles, &mut source, Selection::All);
        for f in &mut source.faces {
            for v in &mut f.velocity_star {
                *v = rng.gen_range(-1.0..1.0);
            }
        }
        let e0 = face_energy(&source, |a| source.faces[a].velocity_star.clone());
        let retained = |settings: &TransferSettings<2>| {
            let g = round_trip(settings, &source, &particles);
            face_energy(&g, |a| g.faces[a].velocity.clone()) / e0
        };
        let r: Vec<f64> = [1, 2, 4].into_iter().map(|n| retained(&poly(n))).collect();
        nondecreasing.record(r.windows(2).map(|w| (w[0] - w[1]).max(0.0)).fold(0.0, f64::max));
        bounded.record(r.iter().map(|x| (x - 1.0).max(0.0)).fold(0.0, f64::max));
        pic_point.record((retained(&TransferSettings::new(TransferScheme::Pic, 0.01)) - r[0]).abs());
        apic_gap.record(retained(&TransferSettings::new(TransferScheme::Apic, 0.01)) - r[2]);
    }
    vec![
        nondecreasing.finish(),
        bounded.finish(),
        pic_point.finish(),
        apic_gap.finish(),
    ]
}

/// Measured off-diagonal Gram magnitudes of one squared mode.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GramEntry {
    pub dim: usize,
    pub orthogonalize: bool,
    pub mode: String,
    /// Mode with the largest normalized coupling to `mode`.
    pub worst_partner: String,
    /// Largest `|G_rq| / √(G_rr G_qq)` over positions, axes and partners.
    pub max_normalized: f64,
    /// Mean over positions and axes of the per-sample largest coupling.
    pub mean_normalized: f64,
}

/// Name of a mode from its exponents, e.g. `x2y` for `x²y`.
pub fn mode_name(exponents: &[u8]) -> String {
    let mut s = String::new();
    for (b, &e) in exponents.iter().enumerate() {
        let axis = ['x', 'y', 'z'][b];
        match e {
            0 => {}
            1 => s.push(axis),
            _ => {
                s.push(axis);
                s.push_str(&e.to_string());
            }
        }
    }
    if s.is_empty() {
        "1".into()
    } else {
        s
    }
}

fn gram_dim<const D: usize>(rng: &mut ChaCha8Rng, checks: &mut Vec<Check>, report: &mut Vec<GramEntry>) {
    let dx = 0.1;
    let n = ModeBasis::<D>::MAX_MODES;
    let lin = ModeBasis::<D>::MULTILINEAR_MODES;
    let positions: Vec<[f64; D]> = (0..GRAM_POSITIONS)
        .map(|_| std::array::from_fn(|_| rng.gen_range(3.0 * dx..9.0 * dx)))
        .collect();
    let mut multilinear = Tally::new(format!("multilinear-offdiagonal-{D}d"), Some(GRAM_TOLERANCE));
    for orthogonalize in [true, false] {
        let basis = ModeBasis::<D>::new(n, orthogonalize);
        let mut worst = vec![(0.0f64, 0usize); n];
        let mut sums = vec![0.0; n];
        let mut samples = 0usize;
        for x in &positions {
            for axis in 0..D {
                let g = particle_gram(&basis, x, axis, dx);
                if orthogonalize {
                    let max_diag = (0..n).map(|r| g[r * n + r]).fold(0.0, f64::max);
                    let g = &g;
                    let off = (0..lin)
                        .flat_map(|r| (0..lin).filter(move |&q| q != r).map(move |q| g[r * n + q].abs()))
                        .fold(0.0, f64::max);
                    multilinear.record(off / max_diag);
                }
                samples += 1;
                for r in lin..n {
                    let mut best = (0.0, 0);
                    for q in (0..n).filter(|&q| q != r) {
                        let v = g[r * n + q].abs() / (g[r * n + r] * g[q * n + q]).sqrt();
                        if v > best.0 {
                            best = (v, q);
                        }
                    }
                    sums[r] += best.0;
                    if best.0 > worst[r].0 {
                        worst[r] = best;
                    }
                }
            }
        }
        for r in lin..n {
            report.push(GramEntry {
                dim: D,
                orthogonalize,
                mode: mode_name(basis.exponents(r)),
                worst_partner: mode_name(basis.exponents(worst[r].1)),
                max_normalized: worst[r].0,
                mean_normalized: sums[r] / samples as f64,
            });
        }
    }
    checks.push(multilinear.finish());
}

pub(super) fn gram(seed: u64) -> (Vec<Check>, Vec<GramEntry>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let mut report = Vec::new();
    gram_dim::<2>(&mut rng, &mut checks, &mut report);
    gram_dim::<3>(&mut rng, &mut checks, &mut report);
    (checks, report)
}
