use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::state::CellMarker;

fn open_all<const D: usize>() -> OpenSides<D> {
    OpenSides { open: [[true; 2]; D] }
}

fn fill<const D: usize>(grid: &mut MacGrid<D>, mut f: impl FnMut(usize, [usize; D]) -> f64) {
    for axis in 0..D {
        let layout = *grid.face_layout(axis);
        for i in 0..layout.len {
            grid.faces[axis].velocity_star[i] = f(axis, layout.unflat(i));
        }
    }
}

fn energy<const D: usize>(grid: &MacGrid<D>) -> f64 {
    grid.faces.iter().flat_map(|f| &f.velocity_star).map(|v| v * v).sum()
}

#[test]
fn gravity_on_massive_faces_only() {
    let mut g = MacGrid::<2>::new([4, 4], 0.1);
    g.faces[1].mass[5] = 1.0;
    g.faces[1].velocity[5] = 0.5;
    g.faces[1].velocity[6] = 0.25;
    apply_gravity(&mut g, &[0.0, -9.8], 0.0002);
    assert!((g.faces[1].velocity_star[5] - (0.5 - 0.00196)).abs() < 1e-15);
    assert_eq!(g.faces[1].velocity_star[6], 0.25);
    let before = g.clone();
    apply_gravity(&mut g, &[0.0, 0.0], 0.0002);
    assert_eq!(g.faces[1].velocity_star[5], before.faces[1].velocity[5]);
}

#[test]
fn gravity_work_matches_kinetic_energy_change() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = MacGrid::<2>::new([6, 6], 0.1);
    for f in &mut g.faces {
        for i in 0..f.layout.len {
            f.mass[i] = rng.gen_range(0.0..1.0);
            f.velocity[i] = rng.gen_range(-1.0..1.0);
        }
    }
    let (gv, dt) = ([0.0, -9.8], 1e-3);
    apply_gravity(&mut g, &gv, dt);
    let mut work = 0.0;
    for (a, f) in g.faces.iter().enumerate() {
        for i in 0..f.layout.len {
            work += f.mass[i] * (gv[a] * dt * f.velocity[i] + 0.5 * (gv[a] * dt).powi(2));
        }
    }
    let de = g.kinetic_energy(true) - g.kinetic_energy(false);
    assert!((de - work).abs() <= 1e-12 * g.kinetic_energy(false));
}

#[test]
fn walls_zero_normal_and_keep_tangential() {
    let mut g = MacGrid::<2>::new([6, 6], 0.1);
    let sides = OpenSides::closed();
    g.reset_markers(&sides);
    fill(&mut g, |_, _| 1.0);
    enforce_boundaries(&mut g, &sides);
    let u = &g.faces[0];
    // flow into the right wall
    assert_eq!(u.velocity_star[u.layout.flat(&[5, 3])], 0.0);
    assert_eq!(u.velocity_star[u.layout.flat(&[1, 3])], 0.0);
    // tangential along the floor
    assert_eq!(u.velocity_star[u.layout.flat(&[3, 0])], 1.0);
    assert_eq!(u.velocity_star[u.layout.flat(&[3, 1])], 1.0);
    // corner cell: both normals
    let v = &g.faces[1];
    assert_eq!(u.velocity_star[u.layout.flat(&[1, 1])], 0.0);
    assert_eq!(v.velocity_star[v.layout.flat(&[1, 1])], 0.0);
    assert_eq!(v.velocity_star[v.layout.flat(&[3, 3])], 1.0);
}

#[test]
fn uniform_flow_needs_no_correction() {
    let mut g = MacGrid::<2>::new([6, 6], 0.1);
    let sides = open_all();
    g.reset_markers(&sides);
    for c in g.cell_marker.iter_mut() {
        *c = CellMarker::Fluid;
    }
    fill(&mut g, |a, _| [0.3, -0.7][a]);
    let before = g.clone();
    let mut solve = PressureSolve::new(1e-6, 500);
    pressure_project(&mut g, &sides, 0.01, &mut solve).unwrap();
    assert_eq!(solve.iterations, 0);
    assert_eq!(g, before);
}

#[test]
fn single_fluid_cell_in_air() {
    let dx = 0.1;
    let dt = 0.01;
    let mut g = MacGrid::<2>::new([5, 5], dx);
    let sides = open_all();
    g.reset_markers(&sides);
    let c = g.cells.flat(&[2, 2]);
    g.cell_marker[c] = CellMarker::Fluid;
    let (ul, ur, vb, vt) = (0.4, -0.2, 0.1, 0.6);
    let ux = *g.face_layout(0);
    let uy = *g.face_layout(1);
    g.faces[0].velocity_star[ux.flat(&[2, 2])] = ul;
    g.faces[0].velocity_star[ux.flat(&[3, 2])] = ur;
    g.faces[1].velocity_star[uy.flat(&[2, 2])] = vb;
    g.faces[1].velocity_star[uy.flat(&[2, 3])] = vt;

    // 4φ = −div·dx², every neighbor is air
    let div = (ur - ul + vt - vb) / dx;
    let phi = -div * dx * dx / 4.0;
    let mut solve = PressureSolve::new(1e-12, 50);
    pressure_project(&mut g, &sides, dt, &mut solve).unwrap();
    assert!((solve.pressure[c] - phi / dt).abs() < 1e-12);
    assert!((g.faces[0].velocity_star[ux.flat(&[3, 2])] - (ur + phi / dx)).abs() < 1e-12);
    assert!((g.faces[0].velocity_star[ux.flat(&[2, 2])] - (ul - phi / dx)).abs() < 1e-12);
    assert!((g.faces[1].velocity_star[uy.flat(&[2, 3])] - (vt + phi / dx)).abs() < 1e-12);
    assert!(divergence(&g, &sides)[c].abs() < 1e-10);
}

#[test]
fn resting_pool_stays_at_rest() {
    let dx = 1.0 / 16.0;
    let mut g = MacGrid::<2>::new([16, 16], dx);
    let sides = OpenSides::closed();
    g.reset_markers(&sides);
    for c in 0..g.cells.len {
        let idx = g.cells.unflat(c);
        if g.cell_marker[c] == CellMarker::Air && idx[1] <= 8 {
            g.cell_marker[c] = CellMarker::Fluid;
        }
    }
    for f in &mut g.faces {
        f.mass.fill(1.0);
    }
    apply_gravity(&mut g, &[0.0, -9.8], 1e-3);
    let mut solve = PressureSolve::new(1e-8, 500);
    let mut valid = pressure_project(&mut g, &sides, 1e-3, &mut solve).unwrap();
    for (axis, mask) in valid.iter().enumerate() {
        for (i, &ok) in mask.iter().enumerate() {
            if ok {
                assert!(g.faces[axis].velocity_star[i].abs() < 1e-7, "axis {axis} face {i}");
            }
        }
    }
    extrapolate_velocities(&mut g, &mut valid, 2);
    enforce_boundaries(&mut g, &sides);
    // two extrapolated layers above the surface
    for f in &g.faces {
        for i in 0..f.layout.len {
            if f.layout.unflat(i)[1] <= 10 {
                assert!(f.velocity_star[i].abs() < 1e-7);
            }
        }
    }
}

#[test]
fn extrapolation_spreads_layer_by_layer() {
    let mut g = MacGrid::<2>::new([6, 6], 0.1);
    let layout = *g.face_layout(0);
    let mut valid: [Vec<bool>; 2] = [vec![false; layout.len], vec![false; g.face_layout(1).len]];
    let seed = layout.flat(&[3, 3]);
    g.faces[0].velocity_star[seed] = 2.0;
    valid[0][seed] = true;
    extrapolate_velocities(&mut g, &mut valid, 1);
    assert_eq!(g.faces[0].velocity_star[layout.flat(&[4, 3])], 2.0);
    assert_eq!(g.faces[0].velocity_star[layout.flat(&[5, 3])], 0.0);
    extrapolate_velocities(&mut g, &mut valid, 1);
    assert_eq!(g.faces[0].velocity_star[layout.flat(&[5, 3])], 2.0);
    assert_eq!(g.faces[0].velocity_star[layout.flat(&[4, 4])], 2.0);
}

#[test]
fn opposite_spring_forces_scatter_to_zero_net() {
    let g = MacGrid::<2>::new([10, 10], 0.1);
    let ps = vec![
        Particle::solid([0.33, 0.47], [0.0; 2], 1.0, 1),
        Particle::solid([0.52, 0.41], [0.0; 2], 1.0, 1),
    ];
    let f = [3.0, -1.5];
    let forces = vec![f, [-f[0], -f[1]]];
    let face = scatter_forces(&g, &ps, &forces);
    for axis in 0..2 {
        let net: f64 = face[axis].iter().sum();
        assert!(net.abs() < 1e-14, "{net}");
        assert!(face[axis].iter().any(|x| x.abs() > 0.1));
    }
    let mut g2 = g.clone();
    apply_fabric_forces(&mut g2, &ps, &[[0.0; 2]; 2], 0.01);
    assert_eq!(g2, g);
}

#[test]
fn coupling_conserves_face_momentum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut fl = MacGrid::<2>::new([5, 5], 0.1);
    let mut so = fl.clone();
    for (a, b) in fl.faces.iter_mut().zip(so.faces.iter_mut()) {
        for i in 0..a.layout.len {
            a.mass[i] = rng.gen_range(0.0..1.0);
            b.mass[i] = if i % 3 == 0 { 0.0 } else { rng.gen_range(0.0..1.0) };
            a.velocity_star[i] = rng.gen_range(-1.0..1.0);
            b.velocity_star[i] = rng.gen_range(-1.0..1.0);
        }
    }
    let momentum = |f: &MacGrid<2>, s: &MacGrid<2>| -> Vec<f64> {
        (0..2)
            .flat_map(|a| (0..f.faces[a].layout.len).map(move |i| (a, i)))
            .map(|(a, i)| {
                f.faces[a].mass[i] * f.faces[a].velocity_star[i] + s.faces[a].mass[i] * s.faces[a].velocity_star[i]
            })
            .collect()
    };
    let before = momentum(&fl, &so);
    let untouched = so.faces[0].velocity_star[0];
    couple_phases(&mut fl, &mut so, 1.0);
    for (x, y) in before.iter().zip(momentum(&fl, &so)) {
        assert!((x - y).abs() < 1e-14);
    }
    assert_eq!(so.faces[0].velocity_star[0], untouched);
    let i = 1;
    assert!((fl.faces[1].velocity_star[i] - so.faces[1].velocity_star[i]).abs() < 1e-14);
}

fn random_fluid_grid(seed: u64, sides: &OpenSides<2>, fill_ratio: f64) -> MacGrid<2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = MacGrid::<2>::new([9, 7], 0.1);
    g.reset_markers(sides);
    for c in 0..g.cells.len {
        let idx = g.cells.unflat(c);
        let interior = idx[0] > 0 && idx[1] > 0 && idx[0] < 8 && idx[1] < 6;
        if interior && g.cell_marker[c] == CellMarker::Air && rng.gen_bool(fill_ratio) {
            g.cell_marker[c] = CellMarker::Fluid;
        }
    }
    fill(&mut g, |_, _| rng.gen_range(-1.0..1.0));
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_never_adds_energy(seed in any::<u64>(), ratio in 0.2f64..1.0) {
        let sides = OpenSides::closed();
        let mut g = random_fluid_grid(seed, &sides, ratio);
        let before = energy(&g);
        let mut solve = PressureSolve::new(1e-12, 1000);
        pressure_project(&mut g, &sides, 0.01, &mut solve).unwrap();
        prop_assert!(energy(&g) <= before * (1.0 + 1e-10));
        let div = divergence(&g, &sides);
        for (c, d) in div.iter().enumerate() {
            if g.cell_marker[c] == CellMarker::Fluid {
                prop_assert!(d.abs() < 1e-6 / g.dx, "{}", d);
            }
        }
    }

    #[test]
    fn projection_keeps_momentum_without_walls(seed in any::<u64>(), ratio in 0.2f64..1.0) {
        let sides = open_all();
        let mut g = random_fluid_grid(seed, &sides, ratio);
        let before: Vec<f64> = g.faces.iter().map(|f| f.velocity_star.iter().sum()).collect();
        let mut solve = PressureSolve::new(1e-12, 1000);
        pressure_project(&mut g, &sides, 0.01, &mut solve).unwrap();
        for (a, f) in g.faces.iter().enumerate() {
            let after: f64 = f.velocity_star.iter().sum();
            prop_assert!((after - before[a]).abs() <= 1e-9 * before[a].abs().max(1.0));
        }
    }
}
