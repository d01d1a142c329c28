// SPDX-License-Identifier: Apache-2.0

//! Logic-synthesis driving and PPA (power, performance, area) handling.

mod adapter;
mod report;
mod sweep;

use std::cmp::Ordering;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::sim::Diagnostic;

pub use adapter::{
    infrastructure_diagnostic, CommandAdapter, MockAdapter, MockEntry, SynthAdapter, SynthJob, SynthOutcome,
    Synthesizer,
};
pub use report::{parse_ppa_report, scale_decimal, ParsedReport, ReportBundle, ReportDialect, TimeUnit};
pub use sweep::{sweep_clock, SweepParams, SweepResult};

/// Parsed synthesis quality triple. All three metrics are present exactly
/// when `synthesizable` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpaReport {
    pub clock_ps: Option<f64>,
    #[serde(rename = "power_uW")]
    pub power_uw: Option<f64>,
    pub area_um2: Option<f64>,
    pub synthesizable: bool,
    #[serde(default)]
    pub warnings: Vec<Diagnostic>,
    #[serde(default)]
    pub errors: Vec<Diagnostic>,
    pub source_digest: String,
}

impl PpaReport {
    pub fn new(clock_ps: f64, power_uw: f64, area_um2: f64, source_digest: impl Into<String>) -> Self {
        Self {
            clock_ps: Some(clock_ps),
            power_uw: Some(power_uw),
            area_um2: Some(area_um2),
            synthesizable: true,
            warnings: Vec::new(),
            errors: Vec::new(),
            source_digest: source_digest.into(),
        }
    }

    pub fn unsynthesizable(errors: Vec<Diagnostic>, source_digest: impl Into<String>) -> Self {
        Self {
            clock_ps: None,
            power_uw: None,
            area_um2: None,
            synthesizable: false,
            warnings: Vec::new(),
            errors,
            source_digest: source_digest.into(),
        }
    }

    pub fn is_consistent(&self) -> bool {
        let vals = [self.clock_ps, self.power_uw, self.area_um2];
        if self.synthesizable {
            vals.iter().all(|v| v.is_some_and(f64::is_finite))
                && self.clock_ps.is_some_and(|c| c > 0.0)
                && self.power_uw.is_some_and(|p| p >= 0.0)
                && self.area_um2.is_some_and(|a| a >= 0.0)
        } else {
            vals.iter().all(Option::is_none)
        }
    }

    pub fn metric(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Clock => self.clock_ps,
            Metric::Power => self.power_uw,
            Metric::Area => self.area_um2,
        }
    }

    /// Selection key; missing metrics sort last.
    fn key(&self) -> [f64; 3] {
        Metric::ALL.map(|m| self.metric(m).unwrap_or(f64::INFINITY))
    }

    /// Lexicographic (clock, power, area) order used to rank reports.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

/// Upper bounds on the PPA triple. Unset bounds never fail.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PpaConstraint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_clock_ps: Option<f64>,
    #[serde(
        default,
        rename = "max_power_uW",
        alias = "max_power_uw",
        skip_serializing_if = "Option::is_none"
    )]
    pub max_power_uw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_area_um2: Option<f64>,
}

impl PpaConstraint {
    pub fn bound(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Clock => self.max_clock_ps,
            Metric::Power => self.max_power_uw,
            Metric::Area => self.max_area_um2,
        }
    }

    pub fn has_bounds(&self) -> bool {
        Metric::ALL.iter().any(|&m| self.bound(m).is_some())
    }

    /// Metrics whose bound is set but not a positive finite number.
    pub fn invalid_bounds(&self) -> Vec<Metric> {
        Metric::ALL
            .into_iter()
            .filter(|&m| self.bound(m).is_some_and(|b| !(b.is_finite() && b > 0.0)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Clock,
    Power,
    Area,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Clock, Metric::Power, Metric::Area];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Clock => "clock_ps",
            Metric::Power => "power_uW",
            Metric::Area => "area_um2",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Metric::Clock => "clock",
            Metric::Power => "power",
            Metric::Area => "area",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub metric: Metric,
    pub achieved: f64,
    pub required: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:?} > {}", self.metric.short(), self.achieved, self.required)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GateResult {
    Satisfied,
    Violated(Vec<Violation>),
}

impl GateResult {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, GateResult::Satisfied)
    }
}

/// The PPA gate: a report passes when every set bound holds.
///
/// Unsynthesizable reports have no metrics; they fail every set bound with
/// an infinite achieved value.
pub fn check_constraints(report: &PpaReport, c: &PpaConstraint) -> GateResult {
    let violations: Vec<Violation> = Metric::ALL
        .into_iter()
        .filter_map(|m| {
            let required = c.bound(m)?;
            let achieved = report.metric(m).unwrap_or(f64::INFINITY);
            (achieved > required).then_some(Violation {
                metric: m,
                achieved,
                required,
            })
        })
        .collect();
    if violations.is_empty() {
        GateResult::Satisfied
    } else {
        GateResult::Violated(violations)
    }
}

/// Index of the best report: lexicographic minimum over
/// (clock, power, area), earliest index on ties.
pub fn select_best(reports: &[PpaReport]) -> Result<usize, SynthError> {
    reports
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.rank_cmp(b).then(i.cmp(j)))
        .map(|(i, _)| i)
        .ok_or(SynthError::EmptyReportSet)
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("synthesis tool not found: {tool}")]
    ToolMissing { tool: String },
    #[error("synthesis adapter failed without producing reports: {message}")]
    AdapterScriptFailure { message: String },
    #[error("unparseable synthesis report: missing {0}")]
    UnparseableReport(&'static str),
    #[error("design does not meet timing at the upper sweep bound {hi_ps} ps")]
    InfeasibleAtUpperBound { hi_ps: f64 },
    #[error("invalid sweep range: lo={lo_ps} hi={hi_ps} tol={tol_ps}")]
    InvalidSweep { lo_ps: f64, hi_ps: f64, tol_ps: f64 },
    #[error("requested clock period must be positive, got {0}")]
    InvalidClock(f64),
    #[error("no reports to select from")]
    EmptyReportSet,
    #[error("unknown report dialect: {0}")]
    UnknownDialect(String),
    #[error("i/o error in {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SynthError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        SynthError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
