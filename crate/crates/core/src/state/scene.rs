//! Declarative scene description.
//!
//! Scene files are TOML documents. Top-level keys describe the domain, time
//! stepping and transfer scheme; `[[emitter]]` blocks add particles and
//! `[output]` / `[pressure]` tables configure output and the pressure solver.
//! Unknown keys are rejected. See `scenes/README.md` for the full grammar.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Pic,
    Apic,
    #[serde(rename = "polypic")]
    PolyPic,
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::Pic => "pic",
            SchemeKind::Apic => "apic",
            SchemeKind::PolyPic => "polypic",
        })
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "pic" => Ok(SchemeKind::Pic),
            "apic" => Ok(SchemeKind::Apic),
            "polypic" => Ok(SchemeKind::PolyPic),
            other => Err(format!("unknown scheme `{other}` (expected pic, apic or polypic)")),
        }
    }
}

/// Transfer scheme with its resolved mode counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransferScheme {
    Pic,
    Apic,
    PolyPic { fluid_modes: usize, solid_modes: usize },
}

impl TransferScheme {
    pub fn kind(&self) -> SchemeKind {
        match self {
            TransferScheme::Pic => SchemeKind::Pic,
            TransferScheme::Apic => SchemeKind::Apic,
            TransferScheme::PolyPic { .. } => SchemeKind::PolyPic,
        }
    }

    /// Number of coefficient rows a particle of the given phase carries.
    pub fn modes_for(&self, phase: crate::state::Phase) -> usize {
        match (self, phase) {
            (TransferScheme::PolyPic { fluid_modes, .. }, crate::state::Phase::Fluid) => *fluid_modes,
            (TransferScheme::PolyPic { solid_modes, .. }, crate::state::Phase::Solid) => *solid_modes,
            _ => 1,
        }
    }
}

impl fmt::Display for TransferScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransferScheme::Pic => f.write_str("pic"),
            TransferScheme::Apic => f.write_str("apic"),
            TransferScheme::PolyPic {
                fluid_modes,
                solid_modes,
            } => {
                write!(f, "polypic(fluid={fluid_modes},solid={solid_modes})")
            }
        }
    }
}

/// Which particle position anchors the local mode coordinates in the
/// particle-to-grid transfer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapReference {
    /// Offsets relative to the position before the last advection.
    #[default]
    Previous,
    /// Offsets relative to the current position.
    Current,
}

/// How solid particles pull face positions back to the previous
/// configuration in the PolyPIC scatter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    /// `(I + Δt·C)⁻¹` applied to the offset.
    #[default]
    Affine,
    /// Offsets are shifted but not deformed.
    Translation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PressureConfig {
    #[serde(default = "default_pressure_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_pressure_iterations")]
    pub max_iterations: usize,
}

fn default_pressure_tolerance() -> f64 {
    1e-6
}

fn default_pressure_iterations() -> usize {
    500
}

impl Default for PressureConfig {
    fn default() -> Self {
        Self {
            tolerance: default_pressure_tolerance(),
            max_iterations: default_pressure_iterations(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Seconds of simulated time between frame dumps; no frames when absent.
    #[serde(default)]
    pub frame_interval: Option<f64>,
    #[serde(default = "default_output_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_true")]
    pub diagnostics: bool,
    /// Record per-step wall time in the diagnostics; when off the column is 0.
    #[serde(default = "default_true")]
    pub timings: bool,
    /// Audit mass and momentum of every transfer; needs `diagnostics`.
    #[serde(default = "default_true")]
    pub audits: bool,
    #[serde(default)]
    pub frame_csv: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_true() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            frame_interval: None,
            dir: default_output_dir(),
            diagnostics: true,
            timings: true,
            audits: true,
            frame_csv: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockEmitter {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub density: f64,
    #[serde(default)]
    pub particles_per_cell: Option<usize>,
    #[serde(default)]
    pub velocity: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallEmitter {
    pub center: Vec<f64>,
    pub radius: f64,
    pub density: f64,
    #[serde(default)]
    pub particles_per_cell: Option<usize>,
    #[serde(default)]
    pub velocity: Option<Vec<f64>>,
}

/// Fabric sheet (3D) or strand (2D): a regular lattice of solid particles
/// spanned by `d - 1` vectors from `origin`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SheetEmitter {
    pub origin: Vec<f64>,
    pub spans: Vec<Vec<f64>>,
    /// Vertices along each span, at least 2.
    pub resolution: Vec<usize>,
    pub density: f64,
    #[serde(default)]
    pub particles_per_cell: Option<usize>,
    #[serde(default)]
    pub velocity: Option<Vec<f64>>,
    pub stiffness: f64,
    #[serde(default)]
    pub damping: f64,
    /// Row-major vertex indices held fixed.
    #[serde(default)]
    pub pinned: Vec<usize>,
    /// Absorbable fluid mass as a fraction of the solid particle mass.
    #[serde(default = "default_capacity_ratio")]
    pub absorption_capacity: f64,
    /// kg/s per solid particle; defaults to capacity / 0.1 s.
    #[serde(default)]
    pub absorption_rate: Option<f64>,
    /// Absorption radius in cells.
    #[serde(default = "default_absorption_radius")]
    pub absorption_radius: f64,
}

fn default_capacity_ratio() -> f64 {
    0.3
}

fn default_absorption_radius() -> f64 {
    1.0
}

impl SheetEmitter {
    pub fn vertex_count(&self) -> usize {
        self.resolution.iter().product()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Emitter {
    Box(BlockEmitter),
    Ball(BallEmitter),
    Sheet(SheetEmitter),
}

impl Emitter {
    pub fn density(&self) -> f64 {
        match self {
            Emitter::Box(e) => e.density,
            Emitter::Ball(e) => e.density,
            Emitter::Sheet(e) => e.density,
        }
    }

    pub fn particles_per_cell(&self) -> Option<usize> {
        match self {
            Emitter::Box(e) => e.particles_per_cell,
            Emitter::Ball(e) => e.particles_per_cell,
            Emitter::Sheet(e) => e.particles_per_cell,
        }
    }

    pub fn velocity(&self) -> Option<&[f64]> {
        match self {
            Emitter::Box(e) => e.velocity.as_deref(),
            Emitter::Ball(e) => e.velocity.as_deref(),
            Emitter::Sheet(e) => e.velocity.as_deref(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default)]
    pub name: String,
    pub dim: usize,
    pub domain_size: Vec<f64>,
    pub grid_dims: Vec<usize>,
    pub dt: f64,
    pub duration: f64,
    pub gravity: Vec<f64>,
    pub scheme: SchemeKind,
    /// Defaults to 2^d.
    #[serde(default)]
    pub fluid_modes: Option<usize>,
    /// Defaults to 2^d.
    #[serde(default)]
    pub solid_modes: Option<usize>,
    #[serde(default)]
    pub allow_unstable_modes: bool,
    /// Replace quadratic mode factors by the orthogonalizing substitution.
    #[serde(default = "default_true")]
    pub orthogonalize: bool,
    #[serde(default)]
    pub map_reference: MapReference,
    /// Configuration map used by solid particles; fluids always use the affine map.
    #[serde(default)]
    pub solid_map: MapKind,
    #[serde(default)]
    pub seed: u64,
    /// Sides such as `"y-"` or `"x+"` through which particles leave the domain.
    #[serde(default)]
    pub open_sides: Vec<String>,
    /// Equal-velocity relaxation between the fluid and solid grids, in [0, 1].
    #[serde(default = "default_coupling")]
    pub coupling_strength: f64,
    #[serde(default)]
    pub pressure: PressureConfig,
    #[serde(default, rename = "emitter")]
    pub emitters: Vec<Emitter>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_coupling() -> f64 {
    0.5
}

/// CLI-level overrides; every field maps onto a [`SceneConfig`] field.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SceneOverrides {
    pub scheme: Option<SchemeKind>,
    pub fluid_modes: Option<usize>,
    pub solid_modes: Option<usize>,
    pub dt: Option<f64>,
    pub duration: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub allow_unstable_modes: bool,
    pub no_diagnostics: bool,
}

pub(crate) const AXIS_NAMES: [char; 3] = ['x', 'y', 'z'];

impl SceneConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let config: SceneConfig = toml::from_str(text).map_err(|e| Error::SceneParse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scene config always serializes")
    }

    pub fn fluid_modes(&self) -> usize {
        self.fluid_modes.unwrap_or(1 << self.dim)
    }

    pub fn solid_modes(&self) -> usize {
        self.solid_modes.unwrap_or(1 << self.dim)
    }

    pub fn transfer_scheme(&self) -> TransferScheme {
        match self.scheme {
            SchemeKind::Pic => TransferScheme::Pic,
            SchemeKind::Apic => TransferScheme::Apic,
            SchemeKind::PolyPic => TransferScheme::PolyPic {
                fluid_modes: self.fluid_modes(),
                solid_modes: self.solid_modes(),
            },
        }
    }

    pub fn dx(&self) -> f64 {
        self.domain_size[0] / self.grid_dims[0] as f64
    }

    pub fn n_steps(&self) -> u64 {
        (self.duration / self.dt + 1e-9).floor() as u64
    }

    pub fn has_fabric(&self) -> bool {
        self.emitters.iter().any(|e| matches!(e, Emitter::Sheet(_)))
    }

    /// Parses `open_sides` into per-axis `[lower, upper]` flags.
    pub fn open_side_flags(&self) -> Result<Vec<[bool; 2]>> {
        let mut flags = vec![[false; 2]; self.dim];
        for side in &self.open_sides {
            let mut chars = side.chars();
            let (Some(axis), Some(sign), None) = (chars.next(), chars.next(), chars.next()) else {
                return Err(Error::InvalidConfig(format!("bad open side `{side}`")));
            };
            let a = AXIS_NAMES[..self.dim]
                .iter()
                .position(|&c| c == axis)
                .ok_or_else(|| Error::InvalidConfig(format!("bad open side `{side}`")))?;
            match sign {
                '-' => flags[a][0] = true,
                '+' => flags[a][1] = true,
                _ => return Err(Error::InvalidConfig(format!("bad open side `{side}`"))),
            }
        }
        Ok(flags)
    }

    pub fn apply_overrides(&mut self, o: &SceneOverrides) -> Result<()> {
        if let Some(s) = o.scheme {
            self.scheme = s;
        }
        if let Some(n) = o.fluid_modes {
            self.fluid_modes = Some(n);
        }
        if let Some(n) = o.solid_modes {
            self.solid_modes = Some(n);
        }
        if let Some(dt) = o.dt {
            self.dt = dt;
        }
        if let Some(d) = o.duration {
            self.duration = d;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        if o.allow_unstable_modes {
            self.allow_unstable_modes = true;
        }
        if o.no_diagnostics {
            self.output.diagnostics = false;
        }
        self.validate()
    }

    /// Key identifying the physical setup, ignoring the transfer scheme and
    /// output settings. Runs are comparable only when their keys agree.
    pub fn matched_run_key(&self) -> String {
        let mut c = self.clone();
        c.scheme = SchemeKind::Pic;
        c.fluid_modes = None;
        c.solid_modes = None;
        c.allow_unstable_modes = false;
        c.output = OutputConfig::default();
        serde_json::to_string(&c).expect("scene config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if d != 2 && d != 3 {
            return bad(format!("dim must be 2 or 3, got {d}"));
        }
        if self.domain_size.len() != d || self.grid_dims.len() != d || self.gravity.len() != d {
            return bad(format!("domain_size, grid_dims and gravity need {d} components"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.duration >= self.dt) {
            return bad(format!("duration {} is shorter than dt {}", self.duration, self.dt));
        }
        if let Some(g) = self.grid_dims.iter().find(|&&g| g < 3) {
            return bad(format!("grid_dims must all be at least 3, got {g}"));
        }
        if self.domain_size.iter().any(|&s| !(s > 0.0)) {
            return bad("domain_size components must be positive".into());
        }
        let dx = self.dx();
        for a in 1..d {
            let dxa = self.domain_size[a] / self.grid_dims[a] as f64;
            if ((dxa - dx) / dx).abs() > 1e-9 {
                return bad(format!(
                    "cells must be cubic: axis 0 has dx={dx}, axis {a} has dx={dxa}"
                ));
            }
        }
        if self.gravity.iter().any(|g| !g.is_finite()) {
            return bad("gravity must be finite".into());
        }
        let multilinear = 1usize << d;
        let full = 3usize.pow(d as u32);
        if self.scheme == SchemeKind::PolyPic {
            let nf = self.fluid_modes();
            let fluid_cap = if self.allow_unstable_modes { full } else { multilinear };
            if nf < 1 || nf > fluid_cap {
                let hint = if nf > multilinear && nf <= full {
                    " (fluid modes beyond the multilinear set are unstable; set allow_unstable_modes to force)"
                } else {
                    ""
                };
                return bad(format!("fluid_modes must be in 1..={fluid_cap}, got {nf}{hint}"));
            }
            let ns = self.solid_modes();
            if ns < 1 || ns > full {
                return bad(format!("solid_modes must be in 1..={full}, got {ns}"));
            }
        }
        if !(0.0..=1.0).contains(&self.coupling_strength) {
            return bad(format!(
                "coupling_strength must lie in [0, 1], got {}",
                self.coupling_strength
            ));
        }
        if !(self.pressure.tolerance > 0.0) || self.pressure.max_iterations == 0 {
            return bad("pressure tolerance and max_iterations must be positive".into());
        }
        if let Some(fi) = self.output.frame_interval {
            if !(fi > 0.0) {
                return bad(format!("output.frame_interval must be positive, got {fi}"));
            }
        }
        self.open_side_flags()?;
        for (i, e) in self.emitters.iter().enumerate() {
            self.validate_emitter(i, e)?;
        }
        Ok(())
    }

    fn validate_emitter(&self, index: usize, e: &Emitter) -> Result<()> {
        let d = self.dim;
        let bad = |msg: String| Err(Error::InvalidConfig(format!("emitter {index}: {msg}")));
        if !(e.density() > 0.0) {
            return bad("density must be positive".into());
        }
        if e.particles_per_cell() == Some(0) {
            return bad("particles_per_cell must be at least 1".into());
        }
        if let Some(v) = e.velocity() {
            if v.len() != d {
                return bad(format!("velocity needs {d} components"));
            }
        }
        match e {
            Emitter::Box(b) => {
                if b.min.len() != d || b.max.len() != d {
                    return bad(format!("min and max need {d} components"));
                }
                if b.min.iter().zip(&b.max).any(|(lo, hi)| !(lo < hi)) {
                    return bad("min must be below max on every axis".into());
                }
            }
            Emitter::Ball(b) => {
                if b.center.len() != d {
                    return bad(format!("center needs {d} components"));
                }
                if !(b.radius > 0.0) {
                    return bad("radius must be positive".into());
                }
            }
            Emitter::Sheet(s) => {
                if s.origin.len() != d {
                    return bad(format!("origin needs {d} components"));
                }
                if s.spans.len() != d - 1 || s.resolution.len() != d - 1 {
                    return bad(format!("a sheet needs {} spans and resolutions", d - 1));
                }
                if s.spans.iter().any(|v| v.len() != d) {
                    return bad(format!("spans need {d} components each"));
                }
                if s.resolution.iter().any(|&r| r < 2) {
                    return bad("resolution must be at least 2 along every span".into());
                }
                if !(s.stiffness >= 0.0) || !(s.damping >= 0.0) {
                    return bad("stiffness and damping must be non-negative".into());
                }
                if let Some(&p) = s.pinned.iter().find(|&&p| p >= s.vertex_count()) {
                    return bad(format!("pinned vertex {p} out of range"));
                }
                if !(s.absorption_capacity >= 0.0) || !(s.absorption_radius > 0.0) {
                    return bad("absorption capacity must be >= 0 and radius > 0".into());
                }
                if let Some(r) = s.absorption_rate {
                    if !(r >= 0.0) {
                        return bad("absorption_rate must be non-negative".into());
                    }
                }
            }
        }
        Ok(())
    }
}
