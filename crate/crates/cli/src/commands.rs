use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hybridpic::diagnostics::{read_csv, step_cost_report, CostReport, RunRecords};
use hybridpic::simloop::{run_scene, RunOptions, RunSummary};
use hybridpic::state::{seed_particles, Phase, SceneConfig, SchemeKind};
use hybridpic::verify::{mode_name, run_suites, Suite, VerifySummary};
use hybridpic::Error;

use crate::args::{Command, CompareArgs, ExecArgs, Format, InfoArgs, OverrideArgs, RunArgs, SchemeChoice, VerifyArgs};

pub const EXIT_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_ABORT: u8 = 3;

/// Name of the resolved scene written next to a run's diagnostics.
pub const RESOLVED_SCENE: &str = "scene.toml";
pub const DIAGNOSTICS_CSV: &str = "diagnostics.csv";

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn failed(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_FAILED,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical_abort() { EXIT_ABORT } else { EXIT_USAGE };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = Result<(), Failure>;

pub fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Verify(a) => verify(a),
        Command::Info(a) => info(a),
    }
}

fn load_scene(path: &Path, overrides: &OverrideArgs) -> Result<SceneConfig, Failure> {
    if !path.exists() {
        return Err(Failure::usage(format!("scene file {} does not exist", path.display())));
    }
    let mut config = SceneConfig::load(path)?;
    config.apply_overrides(&overrides.to_overrides())?;
    Ok(config)
}

fn check_dimension(config: &SceneConfig, exec: &ExecArgs) -> Outcome {
    if config.dim == 3 && !exec.enable_3d {
        return Err(Failure::usage(format!(
            "scene `{}` is three-dimensional; pass --enable-3d to run it",
            config.name
        )));
    }
    Ok(())
}

fn write_resolved(config: &SceneConfig) -> Outcome {
    let dir = &config.output.dir;
    fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(RESOLVED_SCENE);
    fs::write(&path, config.to_toml_string())
        .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn scheme_label(config: &SceneConfig) -> String {
    match config.scheme {
        SchemeKind::PolyPic => format!("polypic{}", config.fluid_modes()),
        s => s.to_string(),
    }
}

fn execute(config: &SceneConfig, exec: &ExecArgs) -> Result<RunSummary, Failure> {
    write_resolved(config)?;
    log::info!(
        "running `{}` with {} for {} steps on {} worker(s)",
        config.name,
        scheme_label(config),
        config.n_steps(),
        exec.workers
    );
    let options = RunOptions {
        workers: exec.workers,
        write_outputs: true,
    };
    Ok(run_scene(config, &options)?)
}

fn print_summary(label: &str, s: &RunSummary) {
    let particles = s.records.last().map(|r| r.particle_count());
    println!("{label}: {} steps in {:.2} s", s.steps, s.wall_s);
    if let Some(n) = particles {
        println!("  particles at end: {n}");
    }
    println!("  mass drift: {:.3e}", s.mass_drift());
    println!("  absorbed mass: {:.6e} kg", s.absorbed_mass);
    println!(
        "  deletions: {} ({:.6e} kg left the domain)",
        s.ledger.count(),
        s.ledger.removed_mass()
    );
    println!(
        "  pressure iterations: {}, truncated fits: {}, dense fits: {}, map fallbacks: {}",
        s.totals.pcg_iterations,
        s.totals.transfer.truncated_solves,
        s.totals.transfer.dense_solves,
        s.totals.transfer.map_fallbacks
    );
    let t = &s.totals;
    println!(
        "  phase seconds: p2g {:.2}, forces {:.2}, projection {:.2}, g2p {:.2}, advection {:.2}, absorption {:.2}, audits {:.2}",
        t.p2g_s, t.forces_s, t.projection_s, t.g2p_s, t.advect_s, t.absorb_s, t.diagnostics_s
    );
    if s.cfl_warnings > 0 {
        println!("  steps over one cell per step: {}", s.cfl_warnings);
    }
    if let Some(p) = &s.diagnostics_path {
        println!("  diagnostics: {}", p.display());
    }
    println!("  audit failures: {}", s.audit_failures.len());
}

fn audit_verdict(label: &str, s: &RunSummary) -> Outcome {
    if s.audit_failures.is_empty() {
        return Ok(());
    }
    let mut msg = format!("{label}: {} conservation audit(s) failed", s.audit_failures.len());
    for (step, o) in s.audit_failures.iter().take(5) {
        let _ = write!(
            msg,
            "\n  step {step}, {}: mass error {:.3e}, momentum error {:.3e}",
            o.phase, o.mass_error, o.momentum_error
        );
    }
    Err(Failure::failed(msg))
}

fn run(a: RunArgs) -> Outcome {
    let config = load_scene(&a.scene, &a.overrides)?;
    check_dimension(&config, &a.exec)?;
    let summary = execute(&config, &a.exec)?;
    let label = scheme_label(&config);
    print_summary(&label, &summary);
    audit_verdict(&label, &summary)
}

/// Output directories for the two compared runs, distinct even when the
/// schemes coincide.
fn run_labels(choices: &[SchemeChoice]) -> [String; 2] {
    let a = choices[0].label();
    let b = choices[1].label();
    if a == b {
        [format!("{a}-a"), format!("{b}-b")]
    } else {
        [a, b]
    }
}

fn compare(a: CompareArgs) -> Outcome {
    if a.overrides.no_diagnostics {
        return Err(Failure::usage("compare needs diagnostics; drop --no-diagnostics"));
    }
    if let Some(dirs) = &a.runs {
        return compare_dirs(&dirs[0], &dirs[1]);
    }
    let scene = a.scene.as_deref().expect("clap requires a scene without --runs");
    let base = load_scene(scene, &a.overrides)?;
    check_dimension(&base, &a.exec)?;
    let labels = run_labels(&a.schemes);
    let mut configs = Vec::new();
    for (choice, label) in a.schemes.iter().zip(&labels) {
        let mut c = base.clone();
        c.scheme = choice.scheme;
        if choice.fluid_modes.is_some() {
            c.fluid_modes = choice.fluid_modes;
        }
        c.output.dir = base.output.dir.join(label);
        c.validate()?;
        configs.push(c);
    }
    let keys: Vec<String> = configs.iter().map(|c| c.matched_run_key()).collect();
    let mut summaries = Vec::new();
    for (c, label) in configs.iter().zip(&labels) {
        let s = execute(c, &a.exec)?;
        print_summary(label, &s);
        summaries.push(s);
    }
    let report = step_cost_report(
        RunRecords {
            label: &labels[0],
            key: &keys[0],
            records: &summaries[0].records,
        },
        RunRecords {
            label: &labels[1],
            key: &keys[1],
            records: &summaries[1].records,
        },
    )?;
    finish_report(&report, &base.output.dir)?;
    for (label, s) in labels.iter().zip(&summaries) {
        audit_verdict(label, s)?;
    }
    Ok(())
}

fn compare_dirs(a: &Path, b: &Path) -> Outcome {
    let load = |dir: &Path| -> Result<(SceneConfig, Vec<_>), Failure> {
        let scene = dir.join(RESOLVED_SCENE);
        if !scene.exists() {
            return Err(Failure::usage(format!(
                "{} is not a run directory: {} is missing",
                dir.display(),
                scene.display()
            )));
        }
        let config = SceneConfig::load(&scene)?;
        let records = read_csv(&dir.join(DIAGNOSTICS_CSV))?;
        Ok((config, records))
    };
    let (ca, ra) = load(a)?;
    let (cb, rb) = load(b)?;
    if ca.seed != cb.seed {
        return Err(Failure::usage(format!(
            "cannot compare runs with different seeds ({} vs {})",
            ca.seed, cb.seed
        )));
    }
    let (la, lb) = (scheme_label(&ca), scheme_label(&cb));
    let (ka, kb) = (ca.matched_run_key(), cb.matched_run_key());
    let report = step_cost_report(
        RunRecords {
            label: &la,
            key: &ka,
            records: &ra,
        },
        RunRecords {
            label: &lb,
            key: &kb,
            records: &rb,
        },
    )?;
    println!("{report}");
    Ok(())
}

fn finish_report(report: &CostReport, dir: &Path) -> Outcome {
    println!("{report}");
    let path: PathBuf = dir.join("cost_report.csv");
    fs::write(&path, format!("{report}\n")).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))
}

fn verify(a: VerifyArgs) -> Outcome {
    let suites: Vec<Suite> = if a.suites.is_empty() {
        Suite::ALL.to_vec()
    } else {
        a.suites.clone()
    };
    let summary = run_suites(&suites, a.seed);
    let json = summary.to_json();
    match a.format {
        Format::Json => println!("{json}"),
        Format::Text => print_verify_text(&summary),
    }
    if let Some(path) = &a.json {
        fs::write(path, format!("{json}\n"))
            .map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?;
    }
    if summary.passed {
        Ok(())
    } else {
        Err(Failure::failed(format!(
            "failed checks:\n  {}",
            summary.failures().join("\n  ")
        )))
    }
}

fn print_verify_text(summary: &VerifySummary) {
    for s in &summary.suites {
        println!("[{}] {}", s.suite, if s.passed { "pass" } else { "FAIL" });
        for c in &s.checks {
            let tol = c.tolerance.map_or("report".to_string(), |t| format!("{t:.0e}"));
            let mark = match (c.tolerance, c.passed) {
                (_, false) => "FAIL",
                (None, true) => "info",
                (Some(_), true) => "ok",
            };
            println!(
                "  {mark:<4} {:<44} max {:.3e}  tol {tol:<6}  trials {}",
                c.name, c.max_error, c.trials
            );
        }
        if !s.gram.is_empty() {
            println!(
                "  {:<4} {:<14} {:<8} {:>12} {:>12}  worst partner",
                "dim", "orthogonalize", "mode", "max", "mean"
            );
            for g in &s.gram {
                println!(
                    "  {:<4} {:<14} {:<8} {:>12.3e} {:>12.3e}  {}",
                    format!("{}d", g.dim),
                    g.orthogonalize,
                    g.mode,
                    g.max_normalized,
                    g.mean_normalized,
                    g.worst_partner
                );
            }
        }
    }
    println!(
        "seed {}: {}",
        summary.seed,
        if summary.passed {
            "all checks passed"
        } else {
            "checks failed"
        }
    );
}

fn info(a: InfoArgs) -> Outcome {
    let config = load_scene(&a.scene, &a.overrides)?;
    if a.resolved {
        print!("{}", config.to_toml_string());
        return Ok(());
    }
    let (fluid, solid) = match config.dim {
        2 => count_phases(&seed_particles::<2>(&config)?.particles),
        _ => count_phases(&seed_particles::<3>(&config)?.particles),
    };
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" x ");
    println!("scene: {}", config.name);
    println!("dimension: {}", config.dim);
    println!("domain: {} m", join(&config.domain_size));
    println!(
        "grid: {} cells, dx = {} m",
        config
            .grid_dims
            .iter()
            .map(|g| g.to_string())
            .collect::<Vec<_>>()
            .join(" x "),
        config.dx()
    );
    println!(
        "time: dt = {} s, duration = {} s, {} steps",
        config.dt,
        config.duration,
        config.n_steps()
    );
    match config.scheme {
        SchemeKind::PolyPic => println!(
            "scheme: polypic, {} fluid modes ({}), {} solid modes, orthogonalize {}, map reference {:?}, solid map {:?}",
            config.fluid_modes(),
            basis_names(config.dim, config.fluid_modes()),
            config.solid_modes(),
            config.orthogonalize,
            config.map_reference,
            config.solid_map
        ),
        s => println!("scheme: {s}"),
    }
    println!("seed: {}", config.seed);
    println!("particles: {fluid} fluid, {solid} solid");
    println!("output: {}", config.output.dir.display());
    Ok(())
}

fn count_phases<const D: usize>(particles: &[hybridpic::state::Particle<D>]) -> (usize, usize) {
    let fluid = particles.iter().filter(|p| p.phase == Phase::Fluid).count();
    (fluid, particles.len() - fluid)
}

fn basis_names(dim: usize, n: usize) -> String {
    let names: Vec<String> = match dim {
        2 => hybridpic::kernels::ModeBasis::<2>::ordered_exponents()
            .iter()
            .take(n)
            .map(|e| mode_name(e))
            .collect(),
        _ => hybridpic::kernels::ModeBasis::<3>::ordered_exponents()
            .iter()
            .take(n)
            .map(|e| mode_name(e))
            .collect(),
    };
    names.join(" ")
}
