// SPDX-License-Identifier: Apache-2.0

//! Simulator-backed error detection: compile a candidate with each
//! testbench, run it, and classify what came out.

mod classify;
mod diagnostics;
mod harness;
pub mod process;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::DesignSpec;
use crate::extract::ExtractedSource;

pub use classify::{classify_result, PatternConfig, DEFAULT_FAIL_PATTERN, DEFAULT_PASS_PATTERN};
pub use diagnostics::parse_diagnostics;
pub use harness::{CompileResult, RunOutput, SimHarness, SimHarnessConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Syntax,
    Functional,
    SynthesisError,
    SynthesisWarning,
    Infrastructure,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Syntax => "Syntax error",
            Phase::Functional => "Functional error",
            Phase::SynthesisError => "Synthesis error",
            Phase::SynthesisWarning => "Synthesis warning",
            Phase::Infrastructure => "Infrastructure error",
        }
    }
}

/// One normalized tool complaint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
    pub message: String,
    /// The tool output this diagnostic was built from, verbatim.
    pub raw: String,
}

impl Diagnostic {
    pub fn new(phase: Phase, message: impl Into<String>) -> Self {
        let message = message.into();
        Self {
            phase,
            file: None,
            line: None,
            raw: message.clone(),
            message,
        }
    }

    pub fn at(mut self, file: impl Into<String>, line: Option<u32>) -> Self {
        self.file = Some(file.into());
        self.line = line;
        self
    }

    pub fn with_raw(mut self, raw: impl Into<String>) -> Self {
        self.raw = raw.into();
        self
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.file, self.line) {
            (Some(file), Some(line)) => {
                write!(f, "{} at {}:{}: {}", self.phase.label(), file, line, self.message)
            }
            (Some(file), None) => write!(f, "{} at {}: {}", self.phase.label(), file, self.message),
            _ => write!(f, "{}: {}", self.phase.label(), self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SimStatus {
    Pass,
    SyntaxFail,
    FunctionalFail,
    Timeout,
    InfraFail,
}

impl SimStatus {
    /// Compiled cleanly, whatever happened afterwards.
    pub fn syntax_ok(self) -> bool {
        !matches!(self, SimStatus::SyntaxFail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimResult {
    pub status: SimStatus,
    pub diagnostics: Vec<Diagnostic>,
    pub stdout: String,
    pub duration_ms: u64,
}

impl SimResult {
    pub fn pass(stdout: String, duration_ms: u64) -> Self {
        Self {
            status: SimStatus::Pass,
            diagnostics: Vec::new(),
            stdout,
            duration_ms,
        }
    }

    /// Check the status/diagnostic invariants.
    pub fn is_consistent(&self) -> bool {
        let has = |p: Phase| self.diagnostics.iter().any(|d| d.phase == p);
        match self.status {
            SimStatus::Pass => self.diagnostics.is_empty(),
            SimStatus::SyntaxFail => has(Phase::Syntax),
            SimStatus::FunctionalFail => has(Phase::Functional),
            SimStatus::Timeout | SimStatus::InfraFail => true,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("tool not found: {tool}")]
    ToolMissing { tool: String },
    #[error("work directory already in use: {}", .0.display())]
    WorkdirCollision(PathBuf),
    #[error("empty command template")]
    EmptyTemplate,
    #[error("i/o error in {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// The error-detection function: run every testbench of `spec` against
/// `src` and report the first failure, or `Pass`.
pub trait Verifier: Send + Sync {
    fn verify(&self, spec: &DesignSpec, src: &ExtractedSource, workdir: &Path) -> Result<SimResult, SimError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_formats() {
        let d = Diagnostic::new(Phase::Syntax, "syntax error").at("adder.v", Some(12));
        assert_eq!(d.to_string(), "Syntax error at adder.v:12: syntax error");
        let d = Diagnostic::new(Phase::Functional, "mismatch");
        assert_eq!(d.to_string(), "Functional error: mismatch");
    }

    #[test]
    fn consistency() {
        assert!(SimResult::pass(String::new(), 0).is_consistent());
        let bad = SimResult {
            status: SimStatus::SyntaxFail,
            diagnostics: vec![Diagnostic::new(Phase::Functional, "x")],
            stdout: String::new(),
            duration_ms: 0,
        };
        assert!(!bad.is_consistent());
    }
}
