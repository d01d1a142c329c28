// SPDX-License-Identifier: Apache-2.0

//! Report parsers for the supported synthesis flows.
//!
//! Units are normalized to ps, µW and µm². Unit conversion shifts the
//! decimal exponent of the printed number before parsing, so a value
//! printed as `6300 nW` becomes exactly the `f64` nearest to 6.3.

use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::sim::{Diagnostic, Phase};

/// Raw text of the files a flow leaves behind. Missing files are empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub timing: String,
    pub power: String,
    pub area: String,
    pub log: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReportDialect {
    /// Design Compiler style: `report_timing`, `report_power`, `report_area`.
    #[serde(rename = "dc")]
    DesignCompiler,
    /// Yosys `stat -liberty` area plus OpenSTA timing and power.
    #[serde(rename = "yosys-sta")]
    YosysSta,
}

impl FromStr for ReportDialect {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dc" => Ok(ReportDialect::DesignCompiler),
            "yosys-sta" => Ok(ReportDialect::YosysSta),
            other => Err(SynthError::UnknownDialect(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    #[default]
    Ps,
    Ns,
}

impl TimeUnit {
    fn pow10_to_ps(self) -> i32 {
        match self {
            TimeUnit::Ps => 0,
            TimeUnit::Ns => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedReport {
    pub synthesizable: bool,
    /// Worst slack in ps.
    pub slack_ps: Option<f64>,
    pub power_uw: Option<f64>,
    pub area_um2: Option<f64>,
    pub errors: Vec<Diagnostic>,
    pub warnings: Vec<Diagnostic>,
}

impl ParsedReport {
    pub fn met_timing(&self) -> Option<bool> {
        self.slack_ps.map(|s| s >= 0.0)
    }
}

const NUM: &str = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?";

static DC_SLACK: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(?m)^\s*slack\s*\((?:MET|VIOLATED)[^)]*\)\s+({NUM})\s*$")).expect("static regex")
});
static STA_SLACK: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(r"(?m)^\s*({NUM})\s+slack\s*\((?:MET|VIOLATED)[^)]*\)\s*$")).expect("static regex")
});
static TIME_UNIT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?mi)^\s*time\s*units?\s*[:=]\s*1(?:\.0+)?\s*(ps|ns)\b").expect("static regex"));
static VALUE_UNIT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"({NUM})\s*(pW|nW|uW|mW|W)\b")).expect("static regex"));
static DC_DYNAMIC: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?m)^\s*Total Dynamic Power\s*=\s*({NUM})\s*(pW|nW|uW|mW|W)\b"
    ))
    .expect("static regex")
});
static DC_LEAKAGE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?m)^\s*Cell Leakage Power\s*=\s*({NUM})\s*(pW|nW|uW|mW|W)\b"
    ))
    .expect("static regex")
});
static DC_AREA: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(&format!(r"(?m)^\s*Total cell area:\s*({NUM})\s*$")).expect("static regex"));
static YOSYS_AREA: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"(?m)^\s*Chip area for (?:top )?module\s+[^:]*:\s*({NUM})\s*$"
    ))
    .expect("static regex")
});
static LOG_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\s*(error|warning)\s*:\s*(.*)$").expect("static regex"));
static LOCATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?P<file>[^\s:]+):(?P<line>\d+):\s*(?P<msg>.*)$").expect("static regex"));

/// Multiply the decimal string `num` by 10^`pow10` and parse it.
pub fn scale_decimal(num: &str, pow10: i32) -> Option<f64> {
    let (mantissa, exp) = match num.find(['e', 'E']) {
        Some(i) => (&num[..i], num[i + 1..].parse::<i32>().ok()?),
        None => (num, 0),
    };
    format!("{mantissa}e{}", exp + pow10).parse().ok()
}

fn power_to_uw(num: &str, unit: &str) -> Option<f64> {
    let shift = match unit {
        "pW" => -6,
        "nW" => -3,
        "uW" => 0,
        "mW" => 3,
        "W" => 6,
        _ => return None,
    };
    scale_decimal(num, shift)
}

/// Parse a report bundle.
///
/// Tool errors in the log mark the design unsynthesizable and make the
/// metric fields optional. Otherwise slack, power and area are all
/// required; the first one missing is named in `UnparseableReport`.
pub fn parse_ppa_report(
    raw: &ReportBundle,
    dialect: ReportDialect,
    default_unit: TimeUnit,
) -> Result<ParsedReport, SynthError> {
    let (errors, warnings) = log_diagnostics(&raw.log);
    let unit = TIME_UNIT
        .captures(&raw.timing)
        .map(|c| {
            if c[1].eq_ignore_ascii_case("ns") {
                TimeUnit::Ns
            } else {
                TimeUnit::Ps
            }
        })
        .unwrap_or(default_unit);
    let slack_re = match dialect {
        ReportDialect::DesignCompiler => &*DC_SLACK,
        ReportDialect::YosysSta => &*STA_SLACK,
    };
    let slack_ps = slack_re
        .captures_iter(&raw.timing)
        .filter_map(|c| scale_decimal(&c[1], unit.pow10_to_ps()))
        .min_by(f64::total_cmp);
    let power_uw = match dialect {
        ReportDialect::DesignCompiler => dc_power(&raw.power),
        ReportDialect::YosysSta => sta_power(&raw.power),
    };
    let area_re = match dialect {
        ReportDialect::DesignCompiler => &*DC_AREA,
        ReportDialect::YosysSta => &*YOSYS_AREA,
    };
    let area_um2 = area_re
        .captures_iter(&raw.area)
        .last()
        .and_then(|c| c[1].parse::<f64>().ok());

    if !errors.is_empty() {
        return Ok(ParsedReport {
            synthesizable: false,
            slack_ps: None,
            power_uw: None,
            area_um2: None,
            errors,
            warnings,
        });
    }
    let slack_ps = Some(slack_ps.ok_or(SynthError::UnparseableReport("slack"))?);
    let power_uw = Some(power_uw.ok_or(SynthError::UnparseableReport("power"))?);
    let area_um2 = Some(area_um2.ok_or(SynthError::UnparseableReport("area"))?);
    Ok(ParsedReport {
        synthesizable: true,
        slack_ps,
        power_uw,
        area_um2,
        errors,
        warnings,
    })
}

/// `Total` table row (last value/unit pair), else dynamic plus leakage.
fn dc_power(text: &str) -> Option<f64> {
    let total_row = text.lines().filter(|l| is_total_row(l)).find_map(|l| {
        let c = VALUE_UNIT.captures_iter(l).last()?;
        power_to_uw(&c[1], &c[2])
    });
    if total_row.is_some() {
        return total_row;
    }
    let dynamic = DC_DYNAMIC.captures(text).and_then(|c| power_to_uw(&c[1], &c[2]))?;
    let leakage = DC_LEAKAGE
        .captures(text)
        .and_then(|c| power_to_uw(&c[1], &c[2]))
        .unwrap_or(0.0);
    Some(dynamic + leakage)
}

/// OpenSTA `report_power`: the fourth number of the `Total` row, in watts.
fn sta_power(text: &str) -> Option<f64> {
    text.lines().filter(|l| is_total_row(l)).find_map(|l| {
        let cols: Vec<&str> = l.split_whitespace().skip(1).collect();
        let total = cols.get(3)?;
        total.parse::<f64>().ok()?;
        power_to_uw(total, "W")
    })
}

fn is_total_row(line: &str) -> bool {
    let mut words = line.split_whitespace();
    words.next() == Some("Total")
        && words
            .next()
            .is_some_and(|w| w.starts_with(|c: char| c.is_ascii_digit() || c == '.' || c == '-'))
}

fn log_diagnostics(log: &str) -> (Vec<Diagnostic>, Vec<Diagnostic>) {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    for line in log.lines() {
        let Some(c) = LOG_LINE.captures(line) else { continue };
        let is_error = c[1].eq_ignore_ascii_case("error");
        let phase = if is_error {
            Phase::SynthesisError
        } else {
            Phase::SynthesisWarning
        };
        let body = c[2].trim();
        let mut d = Diagnostic::new(phase, if body.is_empty() { line.trim() } else { body }).with_raw(line);
        if let Some(loc) = LOCATION.captures(body) {
            if let Ok(n) = loc["line"].parse() {
                d.file = Some(loc["file"].to_string());
                d.line = Some(n);
                if !loc["msg"].trim().is_empty() {
                    d.message = loc["msg"].trim().to_string();
                }
            }
        }
        if is_error {
            errors.push(d);
        } else {
            warnings.push(d);
        }
    }
    (errors, warnings)
}
