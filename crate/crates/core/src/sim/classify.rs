// SPDX-License-Identifier: Apache-2.0

use regex::Regex;

use super::{Diagnostic, Phase, SimStatus};

pub const DEFAULT_PASS_PATTERN: &str = r"(?i)pass(ed)?";
pub const DEFAULT_FAIL_PATTERN: &str = r"(?i)(error|mismatch|fail)";

/// Pass/fail markers searched for in simulation output. Fail patterns
/// override pass patterns.
#[derive(Debug, Clone)]
pub struct PatternConfig {
    pass: Vec<Regex>,
    fail: Vec<Regex>,
}

impl PatternConfig {
    pub fn new<S: AsRef<str>>(pass: &[S], fail: &[S]) -> Result<Self, regex::Error> {
        let compile = |v: &[S]| v.iter().map(|p| Regex::new(p.as_ref())).collect::<Result<Vec<_>, _>>();
        Ok(Self {
            pass: compile(pass)?,
            fail: compile(fail)?,
        })
    }
}

impl Default for PatternConfig {
    fn default() -> Self {
        Self::new(&[DEFAULT_PASS_PATTERN], &[DEFAULT_FAIL_PATTERN]).expect("default patterns")
    }
}

/// Decide the simulation verdict from its captured output.
///
/// `exit_code` is `None` when the process did not exit normally. The
/// verdict is `Pass` only if a pass marker was printed, no fail marker was
/// printed and the process exited with status 0. Anything else is a
/// `FunctionalFail` carrying one diagnostic per fail line, or a single
/// generic diagnostic when no line matched.
pub fn classify_result(stdout: &str, exit_code: Option<i32>, patterns: &PatternConfig) -> (SimStatus, Vec<Diagnostic>) {
    let mut saw_pass = false;
    let mut diags = Vec::new();
    for line in stdout.lines() {
        if patterns.fail.iter().any(|r| r.is_match(line)) {
            diags.push(Diagnostic::new(Phase::Functional, line.trim()).with_raw(line));
        } else if patterns.pass.iter().any(|r| r.is_match(line)) {
            saw_pass = true;
        }
    }
    let clean_exit = exit_code == Some(0);
    if saw_pass && diags.is_empty() && clean_exit {
        return (SimStatus::Pass, Vec::new());
    }
    if !clean_exit {
        let msg = match exit_code {
            Some(code) => format!("simulation exited with status {code}"),
            None => "simulation terminated abnormally".to_string(),
        };
        diags.push(Diagnostic::new(Phase::Functional, msg));
    } else if diags.is_empty() {
        diags.push(Diagnostic::new(Phase::Functional, "no pass marker emitted"));
    }
    (SimStatus::FunctionalFail, diags)
}
