//! Property suites behind `hybridpic verify`.
//!
//! * `conservation`: mass, linear momentum and (2D, PIC/APIC) angular
//!   momentum of every particle-to-grid transfer on random states.
//! * `degeneracy`: transfers that must coincide when their extra data vanish.
//! * `oracle`: transfers and coefficient fits against the naive references
//!   in [`oracle`].
//! * `monotonicity`: energy retained by a PolyPIC grid→particle→grid round
//!   trip over nested bases.
//! * `gram`: off-diagonal Gram entries of the scalar modes.
//!
//! Every suite is deterministic for a given seed.

mod oracle;
mod suites;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

pub use suites::{mode_name, GramEntry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Conservation,
    Degeneracy,
    Oracle,
    Monotonicity,
    Gram,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Conservation,
        Suite::Degeneracy,
        Suite::Oracle,
        Suite::Monotonicity,
        Suite::Gram,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Conservation => "conservation",
            Suite::Degeneracy => "degeneracy",
            Suite::Oracle => "oracle",
            Suite::Monotonicity => "monotonicity",
            Suite::Gram => "gram",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                format!("unknown suite `{s}` (expected conservation, degeneracy, oracle, monotonicity or gram)")
            })
    }
}

/// One measured property.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub trials: usize,
    /// Largest error over the trials, in the check's own relative measure.
    pub max_error: f64,
    /// `None` for report-only measurements.
    pub tolerance: Option<f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub gram: Vec<GramEntry>,
}

impl SuiteReport {
    fn new(suite: Suite, checks: Vec<Check>, gram: Vec<GramEntry>) -> Self {
        Self {
            suite,
            passed: checks.iter().all(|c| c.passed),
            checks,
            gram,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifySummary {
    pub seed: u64,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

impl VerifySummary {
    /// `suite/check` names of every failed check.
    pub fn failures(&self) -> Vec<String> {
        self.suites
            .iter()
            .flat_map(|s| {
                s.checks
                    .iter()
                    .filter(|c| !c.passed)
                    .map(move |c| format!("{}/{}", s.suite, c.name))
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary always serializes")
    }
}

/// Accumulates the worst error of a check over its trials.
pub(crate) struct Tally {
    name: String,
    trials: usize,
    max_error: f64,
    tolerance: Option<f64>,
}

impl Tally {
    pub(crate) fn new(name: impl Into<String>, tolerance: Option<f64>) -> Self {
        Self {
            name: name.into(),
            trials: 0,
            max_error: 0.0,
            tolerance,
        }
    }

    pub(crate) fn record(&mut self, error: f64) {
        self.trials += 1;
        self.max_error = if error.is_nan() {
            f64::INFINITY
        } else {
            self.max_error.max(error)
        };
    }

    pub(crate) fn finish(self) -> Check {
        let passed = self.trials > 0 && self.tolerance.is_none_or(|t| self.max_error <= t);
        Check {
            name: self.name,
            trials: self.trials,
            max_error: self.max_error,
            tolerance: self.tolerance,
            passed,
        }
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> SuiteReport {
    match suite {
        Suite::Conservation => SuiteReport::new(suite, suites::conservation(seed, false), Vec::new()),
        Suite::Degeneracy => SuiteReport::new(suite, suites::degeneracy(seed), Vec::new()),
        Suite::Oracle => SuiteReport::new(suite, suites::oracle_equivalence(seed), Vec::new()),
        Suite::Monotonicity => SuiteReport::new(suite, suites::monotonicity(seed), Vec::new()),
        Suite::Gram => {
            let (checks, gram) = suites::gram(seed);
            SuiteReport::new(suite, checks, gram)
        }
    }
}

pub fn run_suites(list: &[Suite], seed: u64) -> VerifySummary {
    let suites: Vec<SuiteReport> = list.iter().map(|&s| run_suite(s, seed)).collect();
    VerifySummary {
        seed,
        passed: suites.iter().all(|s| s.passed),
        suites,
    }
}
