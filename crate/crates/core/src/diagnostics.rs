//! Per-step diagnostics: conserved totals, the mean particle energy, audit
//! checks, and the CSV stream they are written to.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::{dot, Vector};
use crate::state::{particle_mass, Particle};

/// One diagnostics row. Vectors have `d` momentum components and one (2D) or
/// three (3D) angular momentum components, about the domain origin.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: u64,
    pub time: f64,
    pub mass: f64,
    pub momentum: Vec<f64>,
    pub angular_momentum: Vec<f64>,
    pub mean_energy: f64,
    pub n_fluid: usize,
    pub n_solid: usize,
    /// Wall time of the step excluding audits; zero when timing is disabled.
    pub wall_s: f64,
    pub pcg_iters: usize,
}

impl DiagnosticsRecord {
    /// Totals over the particle state. Absorbed fluid counts toward the mass
    /// and momentum of its host particle.
    pub fn measure<const D: usize>(
        step: u64,
        dt: f64,
        particles: &[Particle<D>],
        gravity: &Vector<D>,
        domain: &Vector<D>,
    ) -> Self {
        let mut momentum = vec![0.0; D];
        let mut angular = vec![0.0; if D == 3 { 3 } else { 1 }];
        let (mut n_fluid, mut n_solid) = (0, 0);
        for p in particles {
            let m = p.transfer_mass();
            for a in 0..D {
                momentum[a] += m * p.velocity[a];
            }
            let (x, v) = (&p.position, &p.velocity);
            if D == 2 {
                angular[0] += m * (x[0] * v[1] - x[1] * v[0]);
            } else if D == 3 {
                angular[0] += m * (x[1] * v[2] - x[2] * v[1]);
                angular[1] += m * (x[2] * v[0] - x[0] * v[2]);
                angular[2] += m * (x[0] * v[1] - x[1] * v[0]);
            }
            if p.is_fluid() {
                n_fluid += 1;
            } else {
                n_solid += 1;
            }
        }
        Self {
            step,
            time: step as f64 * dt,
            mass: particle_mass(particles),
            momentum,
            angular_momentum: angular,
            mean_energy: mean_particle_energy(particles, gravity, domain),
            n_fluid,
            n_solid,
            wall_s: 0.0,
            pcg_iters: 0,
        }
    }

    pub fn particle_count(&self) -> usize {
        self.n_fluid + self.n_solid
    }
}

/// Height potential `−g·x`, shifted so the lowest corner of the domain box
/// sits at zero.
fn potential_datum<const D: usize>(gravity: &Vector<D>, domain: &Vector<D>) -> f64 {
    (0..1usize << D)
        .map(|corner| {
            let c: Vector<D> = std::array::from_fn(|a| if corner >> a & 1 == 1 { domain[a] } else { 0.0 });
            -dot(gravity, &c)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Mean over particles of kinetic plus gravitational potential energy,
/// `(1/P) Σ ½ m|v|² + m |g| h`, with `h` measured from the domain floor and
/// absorbed fluid included in the mass. Zero for an empty set.
pub fn mean_particle_energy<const D: usize>(particles: &[Particle<D>], gravity: &Vector<D>, domain: &Vector<D>) -> f64 {
    if particles.is_empty() {
        return 0.0;
    }
    let datum = potential_datum(gravity, domain);
    let total: f64 = particles
        .iter()
        .map(|p| {
            let m = p.transfer_mass();
            0.5 * m * dot(&p.velocity, &p.velocity) + m * (-dot(gravity, &p.position) - datum)
        })
        .sum();
    total / particles.len() as f64
}

/// Mass and momentum on one side of an audited phase.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditTotals {
    pub mass: f64,
    pub momentum: Vec<f64>,
    /// Magnitude used to normalize momentum errors, typically `Σ m|v|`.
    pub momentum_scale: f64,
}

/// Conservation contract of one phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuditContract {
    pub phase: &'static str,
    pub mass_tolerance: f64,
    /// `None` when the phase does not conserve momentum.
    pub momentum_tolerance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditOutcome {
    pub phase: &'static str,
    pub passed: bool,
    /// Relative mass error.
    pub mass_error: f64,
    /// Largest relative momentum error over the axes.
    pub momentum_error: f64,
}

/// Compares totals across a phase against its contract.
pub fn conservation_audit(before: &AuditTotals, after: &AuditTotals, contract: AuditContract) -> AuditOutcome {
    let mass_error = (after.mass - before.mass).abs() / before.mass.abs().max(f64::MIN_POSITIVE);
    let mass_error = if before.mass == 0.0 && after.mass == 0.0 {
        0.0
    } else {
        mass_error
    };
    let scale = before
        .momentum
        .iter()
        .fold(before.momentum_scale, |s, m| s.max(m.abs()))
        .max(f64::MIN_POSITIVE);
    let momentum_error = before
        .momentum
        .iter()
        .zip(&after.momentum)
        .map(|(a, b)| if a == b { 0.0 } else { (b - a).abs() / scale })
        .fold(0.0, f64::max);
    let mut passed = mass_error <= contract.mass_tolerance;
    if let Some(tol) = contract.momentum_tolerance {
        passed &= momentum_error <= tol;
    }
    AuditOutcome {
        phase: contract.phase,
        passed,
        mass_error,
        momentum_error,
    }
}

/// Per-scheme timing summary of a completed run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunCost {
    pub label: String,
    pub mean_step_s: f64,
    pub total_s: f64,
    pub peak_particles: usize,
    pub mean_particles: f64,
}

impl RunCost {
    pub fn from_records(label: &str, records: &[DiagnosticsRecord]) -> Self {
        let total_s: f64 = records.iter().map(|r| r.wall_s).sum();
        let n = records.len().max(1) as f64;
        Self {
            label: label.to_string(),
            mean_step_s: total_s / n,
            total_s,
            peak_particles: records.iter().map(|r| r.particle_count()).max().unwrap_or(0),
            mean_particles: records.iter().map(|r| r.particle_count() as f64).sum::<f64>() / n,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub first: RunCost,
    pub second: RunCost,
    /// `second.mean_step_s / first.mean_step_s`; `None` without timings.
    pub ratio: Option<f64>,
}

impl std::fmt::Display for CostReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "scheme,mean_s_per_step,total_s,peak_particles,mean_particles")?;
        for r in [&self.first, &self.second] {
            writeln!(
                f,
                "{},{:.6e},{:.6e},{},{:.1}",
                r.label, r.mean_step_s, r.total_s, r.peak_particles, r.mean_particles
            )?;
        }
        match self.ratio {
            Some(x) => write!(f, "ratio {}/{}: {x:.3}", self.second.label, self.first.label),
            None => write!(f, "ratio unavailable: runs were not timed"),
        }
    }
}

/// A completed run as seen by the cost comparison.
#[derive(Clone, Copy, Debug)]
pub struct RunRecords<'a> {
    pub label: &'a str,
    /// Scene identity that must agree between compared runs.
    pub key: &'a str,
    pub records: &'a [DiagnosticsRecord],
}

/// Mean seconds per step of two matched runs and their ratio. Runs of
/// different scenes, seeds or lengths are rejected.
pub fn step_cost_report(first: RunRecords<'_>, second: RunRecords<'_>) -> Result<CostReport> {
    if first.key != second.key {
        return Err(Error::MismatchedRuns(format!(
            "scene keys differ: '{}' vs '{}'",
            first.key, second.key
        )));
    }
    if first.records.len() != second.records.len() {
        return Err(Error::MismatchedRuns(format!(
            "step counts differ: {} vs {}",
            first.records.len(),
            second.records.len()
        )));
    }
    let a = RunCost::from_records(first.label, first.records);
    let b = RunCost::from_records(second.label, second.records);
    let ratio = (a.mean_step_s > 0.0).then(|| b.mean_step_s / a.mean_step_s);
    Ok(CostReport {
        first: a,
        second: b,
        ratio,
    })
}

/// Column names for a `d`-dimensional run.
pub fn csv_header(dim: usize) -> String {
    let axes = ["x", "y", "z"];
    let mut cols = vec!["step".to_string(), "time".into(), "mass".into()];
    cols.extend(axes[..dim].iter().map(|a| format!("p{a}")));
    if dim == 3 {
        cols.extend(axes.iter().map(|a| format!("l{a}")));
    } else {
        cols.push("lz".into());
    }
    cols.extend(["mean_energy", "n_fluid", "n_solid", "wall_s", "pcg_iters"].map(String::from));
    cols.join(",")
}

/// Formats a record as one CSV line, floats at 17 significant digits.
pub fn csv_line(r: &DiagnosticsRecord) -> String {
    let mut s = format!("{},{:.16e},{:.16e}", r.step, r.time, r.mass);
    for v in r.momentum.iter().chain(&r.angular_momentum) {
        s.push_str(&format!(",{v:.16e}"));
    }
    s.push_str(&format!(
        ",{:.16e},{},{},{:.16e},{}",
        r.mean_energy, r.n_fluid, r.n_solid, r.wall_s, r.pcg_iters
    ));
    s
}

pub struct DiagnosticsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path, dim: usize) -> Result<Self> {
        let file = File::create(path).map_err(|source| Error::Output {
            path: path.to_path_buf(),
            source,
        })?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        };
        w.write_raw(&csv_header(dim))?;
        Ok(w)
    }

    fn write_raw(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "{line}").map_err(|source| Error::Output {
            path: self.path.clone(),
            source,
        })
    }

    pub fn write(&mut self, r: &DiagnosticsRecord) -> Result<()> {
        self.write_raw(&csv_line(r))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|source| Error::Output {
            path: self.path,
            source,
        })
    }
}

/// Reads a diagnostics CSV back into records.
pub fn read_csv(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |line: usize, what: &str| Error::MalformedOutput {
        path: path.to_path_buf(),
        message: format!("line {line}: {what}"),
    };
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(Ok(h)) => h,
        _ => return Err(bad(1, "missing header")),
    };
    let dim = match header.split(',').count() {
        11 => 2,
        14 => 3,
        n => return Err(bad(1, &format!("unexpected column count {n}"))),
    };
    let n_ang = if dim == 3 { 3 } else { 1 };
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.is_empty() {
            continue;
        }
        let lineno = k + 2;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 + dim + n_ang {
            return Err(bad(lineno, "wrong column count"));
        }
        let f = |i: usize| cols[i].parse::<f64>().map_err(|_| bad(lineno, "bad number"));
        let u = |i: usize| cols[i].parse::<u64>().map_err(|_| bad(lineno, "bad integer"));
        let o = 3 + dim + n_ang;
        out.push(DiagnosticsRecord {
            step: u(0)?,
            time: f(1)?,
            mass: f(2)?,
            momentum: (3..3 + dim).map(f).collect::<Result<_>>()?,
            angular_momentum: (3 + dim..o).map(f).collect::<Result<_>>()?,
            mean_energy: f(o)?,
            n_fluid: u(o + 1)? as usize,
            n_solid: u(o + 2)? as usize,
            wall_s: f(o + 3)?,
            pcg_iters: u(o + 4)? as usize,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    const G: [f64; 2] = [0.0, -9.8];
    const DOMAIN: [f64; 2] = [2.0, 1.0];

    fn record(wall: f64) -> DiagnosticsRecord {
        DiagnosticsRecord {
            step: 0,
            time: 0.0,
            mass: 1.0,
            momentum: vec![0.0; 2],
            angular_momentum: vec![0.0],
            mean_energy: 0.0,
            n_fluid: 3,
            n_solid: 0,
            wall_s: wall,
            pcg_iters: 0,
        }
    }

    #[test]
    fn energy_examples() {
        let rest = Particle::fluid([0.5, 0.0], [0.0; 2], 1.0, 1);
        assert_eq!(mean_particle_energy(&[rest], &G, &DOMAIN), 0.0);
        let moving = Particle::fluid([0.5, 0.0], [3.0, 0.0], 2.0, 1);
        assert_eq!(mean_particle_energy(&[moving], &G, &DOMAIN), 9.0);
        assert_eq!(mean_particle_energy::<2>(&[], &G, &DOMAIN), 0.0);
        let mut wet = Particle::solid([0.5, 0.5], [0.0; 2], 1.0, 1);
        wet.absorbed_fluid_mass = 1.0;
        assert!((mean_particle_energy(&[wet], &G, &DOMAIN) - 9.8).abs() < 1e-14);
    }

    #[test]
    fn energy_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ps: Vec<Particle<2>> = (0..200)
            .map(|_| {
                Particle::fluid(
                    [rng.gen_range(0.0..2.0), rng.gen_range(0.0..1.0)],
                    [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                    rng.gen_range(0.1..1.0),
                    1,
                )
            })
            .collect();
        let mut oracle = 0.0;
        for p in &ps {
            let (vx, vy) = (p.velocity[0], p.velocity[1]);
            oracle += 0.5 * p.mass * (vx * vx + vy * vy) + p.mass * 9.8 * p.position[1];
        }
        oracle /= 200.0;
        let e = mean_particle_energy(&ps, &G, &DOMAIN);
        assert!((e - oracle).abs() <= 1e-12 * oracle.abs());
    }

    proptest! {
        #[test]
        fn energy_ignores_particle_order(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut ps: Vec<Particle<2>> = (0..50)
                .map(|_| Particle::fluid([rng.gen_range(0.0..2.0), rng.gen_range(0.0..1.0)], [rng.gen_range(-1.0..1.0), 0.5], 1.0, 1))
                .collect();
            let e = mean_particle_energy(&ps, &G, &DOMAIN);
            ps.shuffle(&mut rng);
            let f = mean_particle_energy(&ps, &G, &DOMAIN);
            prop_assert!((e - f).abs() <= 1e-12 * e.abs());
        }
    }

    #[test]
    fn sideways_gravity_uses_lowest_corner() {
        let p = Particle::fluid([2.0, 0.3], [0.0; 2], 1.0, 1);
        assert_eq!(mean_particle_energy(&[p], &[4.0, 0.0], &DOMAIN), 0.0);
    }

    #[test]
    fn cost_ratios() {
        let same = vec![record(1.0); 3];
        let slow = vec![record(2.0); 3];
        let a = RunRecords {
            label: "apic",
            key: "k",
            records: &same,
        };
        let b = RunRecords {
            label: "polypic",
            key: "k",
            records: &slow,
        };
        assert_eq!(step_cost_report(a, a).unwrap().ratio, Some(1.0));
        let r = step_cost_report(a, b).unwrap();
        assert_eq!(r.ratio, Some(2.0));
        assert_eq!(r.first.peak_particles, 3);
        let other = RunRecords { key: "seed=2", ..b };
        assert!(matches!(step_cost_report(a, other), Err(Error::MismatchedRuns(_))));
        let untimed = vec![record(0.0); 3];
        let u = RunRecords { records: &untimed, ..a };
        assert_eq!(step_cost_report(u, u).unwrap().ratio, None);
    }

    #[test]
    fn audit_flags_injected_loss() {
        let before = AuditTotals {
            mass: 2.0,
            momentum: vec![1.0, 0.0],
            momentum_scale: 1.0,
        };
        let contract = AuditContract {
            phase: "p2g",
            mass_tolerance: 1e-12,
            momentum_tolerance: Some(1e-11),
        };
        let same = conservation_audit(&before, &before.clone(), contract);
        assert!(same.passed);
        assert_eq!(same.mass_error, 0.0);
        let lossy = AuditTotals {
            mass: 1.98,
            ..before.clone()
        };
        let out = conservation_audit(&before, &lossy, contract);
        assert!(!out.passed);
        assert!((out.mass_error - 0.01).abs() < 1e-12);
        let kicked = AuditTotals {
            momentum: vec![1.0, 1e-6],
            ..before.clone()
        };
        assert!(!conservation_audit(&before, &kicked, contract).passed);
        let loose = AuditContract {
            momentum_tolerance: None,
            ..contract
        };
        assert!(conservation_audit(&before, &kicked, loose).passed);
    }

    #[test]
    fn headers_by_dimension() {
        assert_eq!(
            csv_header(2),
            "step,time,mass,px,py,lz,mean_energy,n_fluid,n_solid,wall_s,pcg_iters"
        );
        assert_eq!(
            csv_header(3),
            "step,time,mass,px,py,pz,lx,ly,lz,mean_energy,n_fluid,n_solid,wall_s,pcg_iters"
        );
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ps: Vec<Particle<2>> = (0..10)
            .map(|_| {
                Particle::fluid(
                    [rng.gen_range(0.0..2.0), rng.gen_range(0.0..1.0)],
                    [rng.gen_range(-1.0..1.0), 0.1],
                    0.3,
                    1,
                )
            })
            .collect();
        let mut recs = Vec::new();
        let mut w = DiagnosticsWriter::create(&path, 2).unwrap();
        for step in 1..4 {
            let mut r = DiagnosticsRecord::measure(step, 1e-3, &ps, &G, &DOMAIN);
            r.wall_s = 0.0123;
            r.pcg_iters = 17;
            w.write(&r).unwrap();
            recs.push(r);
        }
        w.finish().unwrap();
        assert_eq!(read_csv(&path).unwrap(), recs);
        assert_eq!(recs[2].time, 3.0 * 1e-3);
    }
}
