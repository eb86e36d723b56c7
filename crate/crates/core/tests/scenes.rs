//! Bundled scenes: parsing, seeding against frozen golden data, and short runs.
//!
//! Set `UPDATE_GOLDEN=1` to rewrite the golden files from the current build.

use std::fs;
use std::path::{Path, PathBuf};

use hybridpic::simloop::{RunOptions, Simulation};
use hybridpic::state::{seed_particles, MapKind, SceneConfig, SchemeKind};
use serde::{Deserialize, Serialize};

const GOLDEN_ROWS: usize = 20;
const GOLDEN_TOLERANCE: f64 = 1e-12;

fn scenes_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

fn scene(name: &str) -> SceneConfig {
    SceneConfig::load(&scenes_dir().join(name)).unwrap_or_else(|e| panic!("{e}"))
}

fn updating() -> bool {
    std::env::var_os("UPDATE_GOLDEN").is_some()
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct SeedGolden {
    scene: String,
    fluid: usize,
    solid: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct RowGolden {
    step: u64,
    time: f64,
    mass: f64,
    momentum: Vec<f64>,
    mean_energy: f64,
}

fn golden_path(file: &str) -> PathBuf {
    scenes_dir().join("golden").join(file)
}

fn read_or_write<T: Serialize + for<'de> Deserialize<'de>>(path: &Path, fresh: &T) -> T {
    if updating() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, serde_json::to_string_pretty(fresh).unwrap() + "\n").unwrap();
    }
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= GOLDEN_TOLERANCE * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn every_bundled_scene_parses_and_seeds() {
    let mut names: Vec<_> = fs::read_dir(scenes_dir())
        .unwrap()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "scene"))
        .collect();
    names.sort();
    assert!(names.len() >= 8, "{names:?}");
    for path in names {
        let config = SceneConfig::load(&path).unwrap_or_else(|e| panic!("{e}"));
        let (fluid, solid) = match config.dim {
            2 => {
                let s = seed_particles::<2>(&config).unwrap();
                (
                    s.particles.iter().filter(|p| p.is_fluid()).count(),
                    s.particles.iter().filter(|p| p.is_solid()).count(),
                )
            }
            3 => {
                let s = seed_particles::<3>(&config).unwrap();
                (
                    s.particles.iter().filter(|p| p.is_fluid()).count(),
                    s.particles.iter().filter(|p| p.is_solid()).count(),
                )
            }
            d => panic!("{}: dimension {d}", path.display()),
        };
        assert!(fluid > 0, "{}", path.display());
        assert_eq!(config.has_fabric(), solid > 0, "{}", path.display());
        if config.has_fabric() {
            assert_eq!(config.solid_map, MapKind::Translation, "{}", path.display());
        }
    }
}

#[test]
fn dam_break_seeding_matches_golden() {
    let config = scene("dambreak2d.scene");
    let seeded = seed_particles::<2>(&config).unwrap();
    let fresh = SeedGolden {
        scene: config.name.clone(),
        fluid: seeded.particles.iter().filter(|p| p.is_fluid()).count(),
        solid: seeded.particles.iter().filter(|p| p.is_solid()).count(),
    };
    let golden: SeedGolden = read_or_write(&golden_path("dambreak2d_seed.json"), &fresh);
    assert_eq!(fresh, golden);
}

#[test]
fn apic_dam_break_opening_rows_match_golden() {
    let mut config = scene("dambreak2d.scene");
    config.scheme = SchemeKind::Apic;
    config.duration = config.dt * GOLDEN_ROWS as f64;
    config.output.timings = false;
    config.output.audits = false;
    let summary = Simulation::<2>::new(config, 1)
        .and_then(|mut s| {
            s.run(&RunOptions {
                workers: 1,
                write_outputs: false,
            })
        })
        .unwrap();
    let fresh: Vec<RowGolden> = summary
        .records
        .iter()
        .map(|r| RowGolden {
            step: r.step,
            time: r.time,
            mass: r.mass,
            momentum: r.momentum.clone(),
            mean_energy: r.mean_energy,
        })
        .collect();
    assert_eq!(fresh.len(), GOLDEN_ROWS);
    let golden: Vec<RowGolden> = read_or_write(&golden_path("dambreak2d_apic_rows.json"), &fresh);
    assert_eq!(golden.len(), fresh.len());
    for (g, f) in golden.iter().zip(&fresh) {
        assert_eq!(g.step, f.step);
        assert!(
            close(g.time, f.time) && close(g.mass, f.mass) && close(g.mean_energy, f.mean_energy),
            "{g:?} vs {f:?}"
        );
        for (a, b) in g.momentum.iter().zip(&f.momentum) {
            assert!((a - b).abs() <= GOLDEN_TOLERANCE * f.mass, "{g:?} vs {f:?}");
        }
    }
}

#[test]
fn apic_dam_break_runs_at_a_smaller_step() {
    let mut config = scene("dambreak2d.scene");
    config.scheme = SchemeKind::Apic;
    config.dt = 2e-4;
    config.duration = 0.1;
    let summary = Simulation::<2>::new(config, 1)
        .and_then(|mut s| {
            s.run(&RunOptions {
                workers: 1,
                write_outputs: false,
            })
        })
        .unwrap();
    assert_eq!(summary.steps, 500);
    assert_eq!(summary.cfl_warnings, 0);
    assert!(summary.audit_failures.is_empty());
    assert!(summary.mass_drift().abs() < 1e-12);
}

/// A pinned strand sagging under gravity, with no fluid.
fn strand(map: &str) -> SceneConfig {
    let text = format!(
        r#"
name = "strand"
dim = 2
domain_size = [1.0, 1.0]
grid_dims = [64, 64]
dt = 2e-4
duration = 0.7
gravity = [0.0, -9.8]
scheme = "polypic"
fluid_modes = 4
solid_modes = 4
solid_map = "{map}"

[[emitter]]
kind = "sheet"
origin = [0.2, 0.45]
spans = [[0.6, 0.0]]
resolution = [49]
density = 300.0
stiffness = 1.0e5
damping = 5.0
pinned = [0, 48]

[output]
diagnostics = false
"#
    );
    SceneConfig::from_toml_str(&text, Path::new("strand.scene")).unwrap()
}

fn peak_speed(config: SceneConfig) -> f64 {
    let mut sim = Simulation::<2>::new(config, 1).unwrap();
    let mut peak: f64 = 0.0;
    for _ in 0..sim.config.n_steps() {
        if sim.step().is_err() {
            return f64::INFINITY;
        }
        for p in &sim.particles {
            peak = peak.max(p.velocity.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
    }
    peak
}

#[test]
fn strand_with_translation_map_stays_bounded() {
    let peak = peak_speed(strand("translation"));
    assert!(peak < 5.0, "peak speed {peak}");
}

#[test]
fn strand_with_affine_map_grows_across_the_strand() {
    let peak = peak_speed(strand("affine"));
    assert!(peak > 50.0, "peak speed {peak}");
}
