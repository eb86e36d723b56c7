//! Time stepping.
//!
//! One step runs these phases in order:
//!
//! 1. clear both grids;
//! 2. particle-to-grid: mixture transfers (fluid-only and solid-with-absorbed
//!    mass onto separate grids) when the scene has solids, plain otherwise;
//! 3. gravity;
//! 4. fabric spring forces on the solid grid, then the fluid–solid blend;
//! 5. pressure projection of the fluid grid with velocity extrapolation;
//! 6. wall conditions;
//! 7. grid-to-particle per scheme;
//! 8. advection `x ← x + Δt·v` with wall clamping;
//! 9. absorption;
//! 10. deletion of particles that crossed an open side;
//! 11. diagnostics.

use std::path::PathBuf;
use std::time::Instant;

use crate::diagnostics::{
    conservation_audit, AuditContract, AuditOutcome, AuditTotals, DiagnosticsRecord, DiagnosticsWriter,
};
use crate::error::{Error, Result};
use crate::fabric::{absorb, compute_spring_forces, Fabric};
use crate::gridsolver::{
    apply_fabric_forces, apply_gravity, couple_phases, enforce_boundaries, extrapolate_velocities, pressure_project,
    PressureSolve,
};
use crate::linalg::Vector;
use crate::output::write_frame;
use crate::state::{
    particle_mass, retain_particles, seed_particles, DeletionEvent, DeletionLedger, DeletionReason, MacGrid, OpenSides,
    Particle, SceneConfig,
};
use crate::transfers::{
    analytic_momentum, g2p, momentum_scale, p2g_mixture_fluid, p2g_mixture_solid, p2g_selected, selected_mass,
    Selection, TransferSettings, TransferStats,
};

/// Face layers filled by extrapolation after the projection; covers the
/// kernel support of particles in boundary fluid cells.
pub const EXTRAPOLATION_LAYERS: usize = 3;

/// Relative tolerance of the transfer mass audit.
pub const MASS_AUDIT_TOLERANCE: f64 = 1e-12;
/// Relative tolerance of the transfer momentum audit.
pub const MOMENTUM_AUDIT_TOLERANCE: f64 = 1e-11;

/// Wall time and counters of one step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepPhaseTrace {
    pub p2g_s: f64,
    pub forces_s: f64,
    pub projection_s: f64,
    pub g2p_s: f64,
    pub advect_s: f64,
    pub absorb_s: f64,
    pub diagnostics_s: f64,
    pub transfer: TransferStats,
    pub pcg_iterations: usize,
    pub exited: usize,
    pub absorbed: usize,
    pub cfl_exceeded: bool,
}

impl StepPhaseTrace {
    pub fn total_s(&self) -> f64 {
        self.p2g_s + self.forces_s + self.projection_s + self.g2p_s + self.advect_s + self.absorb_s + self.diagnostics_s
    }

    fn accumulate(&mut self, o: &StepPhaseTrace) {
        self.p2g_s += o.p2g_s;
        self.forces_s += o.forces_s;
        self.projection_s += o.projection_s;
        self.g2p_s += o.g2p_s;
        self.advect_s += o.advect_s;
        self.absorb_s += o.absorb_s;
        self.diagnostics_s += o.diagnostics_s;
        self.transfer += o.transfer;
        self.pcg_iterations += o.pcg_iterations;
        self.exited += o.exited;
        self.absorbed += o.absorbed;
        self.cfl_exceeded |= o.cfl_exceeded;
    }
}

/// How a run is executed, apart from the scene itself.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub workers: usize,
    /// Write diagnostics CSV and frames under the scene's output directory.
    pub write_outputs: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            write_outputs: true,
        }
    }
}

/// Result of a completed run.
#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub steps: u64,
    pub records: Vec<DiagnosticsRecord>,
    /// Audits that failed, with their step.
    pub audit_failures: Vec<(u64, AuditOutcome)>,
    pub totals: StepPhaseTrace,
    pub cfl_warnings: usize,
    pub ledger: DeletionLedger,
    pub initial_mass: f64,
    pub final_mass: f64,
    pub absorbed_mass: f64,
    pub wall_s: f64,
    pub diagnostics_path: Option<PathBuf>,
}

impl RunSummary {
    /// `(final + removed − initial) / initial`.
    pub fn mass_drift(&self) -> f64 {
        (self.final_mass + self.ledger.removed_mass() - self.initial_mass) / self.initial_mass
    }
}

/// Full simulation state of a `D`-dimensional scene.
pub struct Simulation<const D: usize> {
    pub config: SceneConfig,
    pub particles: Vec<Particle<D>>,
    pub fabric: Fabric,
    pub fluid_grid: MacGrid<D>,
    pub solid_grid: MacGrid<D>,
    pub settings: TransferSettings<D>,
    pub sides: OpenSides<D>,
    pub gravity: Vector<D>,
    pub pressure: PressureSolve,
    pub ledger: DeletionLedger,
    pub step_index: u64,
    /// Run audits every step; diagnostics never change the state.
    pub audits_enabled: bool,
    pub audit_failures: Vec<(u64, AuditOutcome)>,
    pub initial_mass: f64,
    /// The scene has solids: fluid and solid transfer onto separate grids.
    mixture: bool,
}

impl<const D: usize> Simulation<D> {
    /// Seeds the scene's emitters and builds its fabric.
    pub fn new(config: SceneConfig, workers: usize) -> Result<Self> {
        let seed = seed_particles::<D>(&config)?;
        let fabric = Fabric::from_seed(&seed, config.dx());
        Self::from_particles(config, seed.particles, fabric, workers)
    }

    /// Builds a simulation around an explicit particle set.
    pub fn from_particles(
        config: SceneConfig,
        particles: Vec<Particle<D>>,
        fabric: Fabric,
        workers: usize,
    ) -> Result<Self> {
        config.validate()?;
        if config.dim != D {
            return Err(Error::InvalidConfig(format!(
                "scene is {}D, simulation is {D}D",
                config.dim
            )));
        }
        let dims: [usize; D] = std::array::from_fn(|a| config.grid_dims[a]);
        let dx = config.dx();
        let flags = config.open_side_flags()?;
        let sides = OpenSides {
            open: std::array::from_fn(|a| flags[a]),
        };
        let mut fluid_grid = MacGrid::new(dims, dx);
        fluid_grid.reset_markers(&sides);
        let solid_grid = fluid_grid.clone();
        let settings = TransferSettings::new(config.transfer_scheme(), config.dt)
            .with_orthogonalize(config.orthogonalize)
            .with_map_reference(config.map_reference)
            .with_solid_map(config.solid_map)
            .with_workers(workers);
        let mut particles = particles;
        for p in &mut particles {
            let n = settings.basis_for(p.phase).len();
            p.resize_modes(n);
        }
        let mixture = particles.iter().any(|p| p.is_solid());
        let fabric = if fabric.absorption.capacity.len() == particles.len() {
            fabric
        } else {
            Fabric {
                absorption: crate::fabric::AbsorptionState {
                    capacity: vec![0.0; particles.len()],
                    rate: vec![0.0; particles.len()],
                    radius: vec![0.0; particles.len()],
                },
                ..fabric
            }
        };
        Ok(Self {
            gravity: std::array::from_fn(|a| config.gravity[a]),
            pressure: PressureSolve::new(config.pressure.tolerance, config.pressure.max_iterations),
            audits_enabled: config.output.diagnostics && config.output.audits,
            initial_mass: particle_mass(&particles),
            config,
            particles,
            fabric,
            fluid_grid,
            solid_grid,
            settings,
            sides,
            ledger: DeletionLedger::default(),
            step_index: 0,
            audit_failures: Vec::new(),
            mixture,
        })
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.config.dt
    }

    pub fn domain(&self) -> Vector<D> {
        self.fluid_grid.domain_size()
    }

    /// Diagnostics of the current state.
    pub fn measure(&self) -> DiagnosticsRecord {
        DiagnosticsRecord::measure(
            self.step_index,
            self.config.dt,
            &self.particles,
            &self.gravity,
            &self.domain(),
        )
    }

    fn audit_transfer(&mut self, grid_is_solid: bool, selection: Selection, label: &'static str) {
        let grid = if grid_is_solid {
            &self.solid_grid
        } else {
            &self.fluid_grid
        };
        let dx = grid.dx;
        let mass = selected_mass(&self.particles, selection);
        let momentum = analytic_momentum(&self.settings, &self.particles, selection, dx);
        let scale = momentum_scale(&self.settings, &self.particles, selection, dx);
        let before = AuditTotals {
            mass,
            momentum: momentum.map(|m| m.to_vec()).unwrap_or_default(),
            momentum_scale: scale,
        };
        let contract = AuditContract {
            phase: label,
            mass_tolerance: MASS_AUDIT_TOLERANCE,
            momentum_tolerance: momentum.map(|_| MOMENTUM_AUDIT_TOLERANCE),
        };
        // every face array carries the full mass
        for axis in 0..D {
            let after = AuditTotals {
                mass: grid.total_mass(axis),
                momentum: (0..D)
                    .map(|a| {
                        if a == axis {
                            grid.total_momentum(a)
                        } else {
                            before.momentum.get(a).copied().unwrap_or(0.0)
                        }
                    })
                    .collect(),
                momentum_scale: scale,
            };
            let outcome = conservation_audit(&before, &after, contract);
            if !outcome.passed {
                log::warn!(
                    "step {}: {label} audit failed on axis {axis}: mass error {:.3e}, momentum error {:.3e}",
                    self.step_index + 1,
                    outcome.mass_error,
                    outcome.momentum_error
                );
                self.audit_failures.push((self.step_index + 1, outcome));
            }
        }
    }

    fn audit_total_mass(&mut self) {
        let before = AuditTotals {
            mass: self.initial_mass,
            momentum: Vec::new(),
            momentum_scale: 0.0,
        };
        let after = AuditTotals {
            mass: particle_mass(&self.particles) + self.ledger.removed_mass(),
            momentum: Vec::new(),
            momentum_scale: 0.0,
        };
        let contract = AuditContract {
            phase: "mass ledger",
            mass_tolerance: MASS_AUDIT_TOLERANCE,
            momentum_tolerance: None,
        };
        let outcome = conservation_audit(&before, &after, contract);
        if !outcome.passed {
            log::warn!(
                "step {}: mass ledger off by {:.3e}",
                self.step_index,
                outcome.mass_error
            );
            self.audit_failures.push((self.step_index, outcome));
        }
    }

    fn check_finite(&self, what: &str) -> Result<()> {
        let grids_ok = !self.fluid_grid.has_non_finite() && !self.solid_grid.has_non_finite();
        if !grids_ok {
            return Err(Error::NonFinite {
                step: self.step_index + 1,
                what: format!("grid velocity after {what}"),
            });
        }
        if let Some(i) = self.particles.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                step: self.step_index + 1,
                what: format!("state of particle {i} after {what}"),
            });
        }
        Ok(())
    }

    /// Advances the state by one time step.
    pub fn step(&mut self) -> Result<StepPhaseTrace> {
        let mut trace = StepPhaseTrace::default();
        let dt = self.config.dt;
        let step = self.step_index + 1;

        let t = Instant::now();
        self.fluid_grid.clear();
        self.solid_grid.clear();
        if self.mixture {
            trace.transfer += p2g_mixture_fluid(&self.settings, &self.particles, &mut self.fluid_grid);
            trace.transfer += p2g_mixture_solid(&self.settings, &self.particles, &mut self.solid_grid);
        } else {
            trace.transfer += p2g_selected(&self.settings, &self.particles, &mut self.fluid_grid, Selection::All);
        }
        trace.p2g_s = t.elapsed().as_secs_f64();
        let t = Instant::now();
        if self.audits_enabled {
            if self.mixture {
                self.audit_transfer(false, Selection::Fluid, "fluid p2g");
                self.audit_transfer(true, Selection::SolidCombined, "solid p2g");
            } else {
                self.audit_transfer(false, Selection::All, "p2g");
            }
        }
        trace.diagnostics_s = t.elapsed().as_secs_f64();

        let t = Instant::now();
        apply_gravity(&mut self.fluid_grid, &self.gravity, dt);
        if self.mixture {
            apply_gravity(&mut self.solid_grid, &self.gravity, dt);
            if !self.fabric.elements.is_empty() {
                let forces = compute_spring_forces(&self.fabric.elements, &self.particles);
                apply_fabric_forces(&mut self.solid_grid, &self.particles, &forces, dt);
            }
            couple_phases(
                &mut self.fluid_grid,
                &mut self.solid_grid,
                self.config.coupling_strength,
            );
        }
        trace.forces_s = t.elapsed().as_secs_f64();

        let t = Instant::now();
        self.fluid_grid.reset_markers(&self.sides);
        self.fluid_grid
            .mark_fluid(self.particles.iter().filter(|p| p.is_fluid()).map(|p| &p.position));
        let mut valid = match pressure_project(&mut self.fluid_grid, &self.sides, dt, &mut self.pressure) {
            Ok(v) => v,
            Err(e) => {
                return Err(Error::PressureNotConverged {
                    step,
                    iterations: e.iterations,
                    residual: e.residual,
                })
            }
        };
        trace.pcg_iterations = self.pressure.iterations;
        extrapolate_velocities(&mut self.fluid_grid, &mut valid, EXTRAPOLATION_LAYERS);
        enforce_boundaries(&mut self.fluid_grid, &self.sides);
        if self.mixture {
            enforce_boundaries(&mut self.solid_grid, &self.sides);
        }
        trace.projection_s = t.elapsed().as_secs_f64();
        self.check_finite("projection")?;

        let t = Instant::now();
        if self.mixture {
            trace.transfer += g2p(&self.settings, &self.fluid_grid, &mut self.particles, Selection::Fluid);
            trace.transfer += g2p(&self.settings, &self.solid_grid, &mut self.particles, Selection::Solid);
            self.fabric.hold_pinned(&mut self.particles);
        } else {
            trace.transfer += g2p(&self.settings, &self.fluid_grid, &mut self.particles, Selection::All);
        }
        trace.g2p_s = t.elapsed().as_secs_f64();
        self.check_finite("grid-to-particle transfer")?;

        let t = Instant::now();
        let max_speed = self
            .particles
            .iter()
            .map(|p| p.velocity.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if max_speed * dt > self.fluid_grid.dx {
            trace.cfl_exceeded = true;
            log::warn!(
                "step {step}: max speed {max_speed:.3} m/s moves particles {:.2} cells per step",
                max_speed * dt / self.fluid_grid.dx
            );
        }
        let (lo, hi) = self.fluid_grid.interior_bounds();
        let sides = self.sides;
        let mut exiting = vec![false; self.particles.len()];
        for (p, gone) in self.particles.iter_mut().zip(exiting.iter_mut()) {
            p.prev_position = p.position;
            for a in 0..D {
                let x = p.position[a] + dt * p.velocity[a];
                p.position[a] = if x < lo[a] {
                    *gone |= sides.is_open(a, false);
                    lo[a]
                } else if x > hi[a] {
                    *gone |= sides.is_open(a, true);
                    hi[a]
                } else {
                    x
                };
            }
        }
        trace.advect_s = t.elapsed().as_secs_f64();

        let t = Instant::now();
        if self.mixture {
            // particles leaving this step take no part in absorption
            self.delete_exiting(&exiting, step, &mut trace);
            let report = absorb(&mut self.particles, &mut self.fabric, dt, step, &mut self.ledger);
            trace.absorbed = report.deleted;
        } else {
            self.delete_exiting(&exiting, step, &mut trace);
        }
        trace.absorb_s = t.elapsed().as_secs_f64();

        self.step_index = step;
        self.check_finite("advection")?;

        let t = Instant::now();
        if self.audits_enabled {
            self.audit_total_mass();
        }
        trace.diagnostics_s += t.elapsed().as_secs_f64();
        Ok(trace)
    }

    fn delete_exiting(&mut self, exiting: &[bool], step: u64, trace: &mut StepPhaseTrace) {
        let count = exiting.iter().filter(|&&e| e).count();
        if count == 0 {
            return;
        }
        for (p, _) in self.particles.iter().zip(exiting).filter(|(_, &e)| e) {
            self.ledger.record(DeletionEvent {
                step,
                reason: DeletionReason::ExitedDomain,
                phase: p.phase,
                mass_removed: p.transfer_mass(),
            });
        }
        let map = retain_particles(&mut self.particles, |i, _| !exiting[i]);
        self.fabric.remap(&map);
        trace.exited = count;
    }

    /// Runs the scene to its duration, writing outputs when requested.
    pub fn run(&mut self, options: &RunOptions) -> Result<RunSummary> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.workers.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start {} workers: {e}", options.workers)))?;
        pool.install(|| self.run_inner(options))
    }

    fn run_inner(&mut self, options: &RunOptions) -> Result<RunSummary> {
        let out_dir = self.config.output.dir.clone();
        let diagnostics = self.config.output.diagnostics;
        let timings = self.config.output.timings;
        let write = options.write_outputs;
        if write {
            std::fs::create_dir_all(&out_dir).map_err(|source| Error::Output {
                path: out_dir.clone(),
                source,
            })?;
        }
        let csv_path = out_dir.join("diagnostics.csv");
        let mut writer = if write && diagnostics {
            Some(DiagnosticsWriter::create(&csv_path, D)?)
        } else {
            None
        };
        let frames_dir = out_dir.join("frames");
        let interval = self.config.output.frame_interval;
        let mut next_frame = 0usize;
        let mut write_due_frame = |sim: &Self| -> Result<()> {
            if let (true, Some(every)) = (write, interval) {
                let t = sim.time();
                if t + 1e-9 * every >= next_frame as f64 * every {
                    let name = format!("frame_{next_frame:05}");
                    write_frame(
                        &frames_dir,
                        &name,
                        next_frame,
                        t,
                        &sim.particles,
                        sim.config.output.frame_csv,
                    )?;
                    next_frame += 1;
                }
            }
            Ok(())
        };
        write_due_frame(self)?;

        let mut summary = RunSummary {
            initial_mass: self.initial_mass,
            ..Default::default()
        };
        let started = Instant::now();
        let n = self.config.n_steps();
        for _ in 0..n {
            let t = Instant::now();
            let trace = match self.step() {
                Ok(trace) => trace,
                Err(e) => {
                    if write {
                        let name = format!("abort_step_{:06}", self.step_index + 1);
                        if let Err(dump) = write_frame(&out_dir, &name, 0, self.time(), &self.particles, true) {
                            log::error!("state dump failed: {dump}");
                        }
                    }
                    if let Some(w) = writer.take() {
                        w.finish()?;
                    }
                    return Err(e);
                }
            };
            let elapsed = t.elapsed().as_secs_f64();
            if trace.cfl_exceeded {
                summary.cfl_warnings += 1;
            }
            if diagnostics {
                let mut record = self.measure();
                record.wall_s = if timings { elapsed - trace.diagnostics_s } else { 0.0 };
                record.pcg_iters = trace.pcg_iterations;
                if let Some(w) = writer.as_mut() {
                    w.write(&record)?;
                }
                summary.records.push(record);
            }
            summary.totals.accumulate(&trace);
            write_due_frame(self)?;
        }
        if let Some(w) = writer {
            w.finish()?;
            summary.diagnostics_path = Some(csv_path);
        }
        summary.wall_s = started.elapsed().as_secs_f64();
        summary.steps = self.step_index;
        summary.audit_failures = self.audit_failures.clone();
        summary.ledger = self.ledger.clone();
        summary.final_mass = particle_mass(&self.particles);
        summary.absorbed_mass = self.particles.iter().fold(0.0, |acc, p| acc + p.absorbed_fluid_mass);
        Ok(summary)
    }
}

/// Seeds and runs a scene of either dimension.
pub fn run_scene(config: &SceneConfig, options: &RunOptions) -> Result<RunSummary> {
    match config.dim {
        2 => Simulation::<2>::new(config.clone(), options.workers)?.run(options),
        3 => Simulation::<3>::new(config.clone(), options.workers)?.run(options),
        d => Err(Error::InvalidConfig(format!("dim must be 2 or 3, got {d}"))),
    }
}
