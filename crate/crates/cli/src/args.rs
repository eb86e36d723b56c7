use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hybridpic::state::{SceneOverrides, SchemeKind};
use hybridpic::verify::Suite;

#[derive(Debug, Parser)]
#[command(
    name = "hybridpic",
    version,
    about = "Hybrid particle-in-cell fluid and fabric simulator"
)]
pub struct Cli {
    /// More log output; repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scene and write its diagnostics and frames.
    Run(RunArgs),
    /// Run one scene under two schemes with the same seed and compare cost.
    Compare(CompareArgs),
    /// Run the property suites.
    Verify(VerifyArgs),
    /// Describe a scene without running it.
    Info(InfoArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub scene: PathBuf,

    #[command(flatten)]
    pub overrides: OverrideArgs,

    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Scene to run twice; omit when comparing finished runs with `--runs`.
    #[arg(required_unless_present = "runs")]
    pub scene: Option<PathBuf>,

    /// The two schemes, each `pic`, `apic`, `polypic` or `polypic:N`.
    #[arg(long, num_args = 2, value_names = ["FIRST", "SECOND"], default_values = ["apic", "polypic"])]
    pub schemes: Vec<SchemeChoice>,

    /// Compare two finished run directories instead of running a scene.
    #[arg(long, num_args = 2, value_names = ["DIR_A", "DIR_B"], conflicts_with = "scene")]
    pub runs: Option<Vec<PathBuf>>,

    #[command(flatten)]
    pub overrides: OverrideArgs,

    #[command(flatten)]
    pub exec: ExecArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Suites to run; all of them when absent.
    #[arg(long = "suite", value_name = "NAME")]
    pub suites: Vec<Suite>,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,

    /// Also write the JSON summary to this file.
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    pub scene: PathBuf,

    #[command(flatten)]
    pub overrides: OverrideArgs,

    /// Print the resolved scene as TOML.
    #[arg(long)]
    pub resolved: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

/// Scene fields settable from the command line.
#[derive(Clone, Debug, Default, Args)]
pub struct OverrideArgs {
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,

    #[arg(long, visible_alias = "modes", value_name = "N")]
    pub fluid_modes: Option<usize>,

    #[arg(long, value_name = "N")]
    pub solid_modes: Option<usize>,

    #[arg(long, value_name = "S")]
    pub dt: Option<f64>,

    #[arg(long, value_name = "S")]
    pub duration: Option<f64>,

    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,

    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[arg(long)]
    pub allow_unstable_modes: bool,

    /// Skip diagnostics and audits.
    #[arg(long)]
    pub no_diagnostics: bool,
}

impl OverrideArgs {
    pub fn to_overrides(&self) -> SceneOverrides {
        SceneOverrides {
            scheme: self.scheme.map(SchemeKind::from),
            fluid_modes: self.fluid_modes,
            solid_modes: self.solid_modes,
            dt: self.dt,
            duration: self.duration,
            seed: self.seed,
            out: self.out.clone(),
            allow_unstable_modes: self.allow_unstable_modes,
            no_diagnostics: self.no_diagnostics,
        }
    }
}

#[derive(Clone, Debug, Args)]
pub struct ExecArgs {
    #[arg(long, env = "HYBRIDPIC_WORKERS", default_value_t = 1, value_name = "N")]
    pub workers: usize,

    /// Allow three-dimensional scenes.
    #[arg(long = "enable-3d")]
    pub enable_3d: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Pic,
    Apic,
    Polypic,
}

impl From<SchemeArg> for SchemeKind {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Pic => SchemeKind::Pic,
            SchemeArg::Apic => SchemeKind::Apic,
            SchemeArg::Polypic => SchemeKind::PolyPic,
        }
    }
}

/// A scheme with an optional fluid mode count, written `polypic:4`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SchemeChoice {
    pub scheme: SchemeKind,
    pub fluid_modes: Option<usize>,
}

impl SchemeChoice {
    pub fn label(&self) -> String {
        match self.fluid_modes {
            Some(n) => format!("{}{n}", self.scheme),
            None => self.scheme.to_string(),
        }
    }
}

impl std::str::FromStr for SchemeChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, modes) = match s.split_once(':') {
            Some((n, m)) => (
                n,
                Some(m.parse::<usize>().map_err(|_| format!("bad mode count in `{s}`"))?),
            ),
            None => (s, None),
        };
        let scheme: SchemeKind = name.parse()?;
        if modes.is_some() && scheme != SchemeKind::PolyPic {
            return Err(format!("only polypic takes a mode count, got `{s}`"));
        }
        Ok(Self {
            scheme,
            fluid_modes: modes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn scheme_choices_parse() {
        let c: SchemeChoice = "polypic:4".parse().unwrap();
        assert_eq!(
            c,
            SchemeChoice {
                scheme: SchemeKind::PolyPic,
                fluid_modes: Some(4)
            }
        );
        assert_eq!(c.label(), "polypic4");
        assert_eq!("APIC".parse::<SchemeChoice>().unwrap().label(), "apic");
        assert!("apic:2".parse::<SchemeChoice>().is_err());
        assert!("polypic:x".parse::<SchemeChoice>().is_err());
    }

    #[test]
    fn modes_alias_sets_fluid_modes() {
        let cli = Cli::try_parse_from(["hybridpic", "run", "a.scene", "--scheme", "polypic", "--modes", "4"]).unwrap();
        let Command::Run(r) = cli.command else {
            panic!("expected run")
        };
        assert_eq!(r.overrides.fluid_modes, Some(4));
        assert_eq!(r.overrides.to_overrides().scheme, Some(SchemeKind::PolyPic));
    }
}
