// SPDX-License-Identifier: Apache-2.0

//! Deterministic stand-ins for the model and the simulator, used by tests,
//! benches and dry runs.
//!
//! A scripted response is any text; the [`ScriptedVerifier`] decides the
//! verdict from a `// verdict: <kind>` comment in the extracted source,
//! where `<kind>` is `pass`, `syntax`, `functional` or `timeout`.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::corpus::DesignSpec;
use crate::extract::ExtractedSource;
use crate::gateway::{Backend, BackendError, CompletionRequest};
use crate::sim::{Diagnostic, Phase, SimError, SimResult, SimStatus, Verifier};

/// Hands out queued responses per sample index, in order. An exhausted
/// queue is a fatal backend error.
#[derive(Default)]
pub struct ScriptedBackend {
    queues: Mutex<HashMap<u32, Vec<String>>>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn script(self, sample: u32, responses: impl IntoIterator<Item = String>) -> Self {
        let mut q: Vec<String> = responses.into_iter().collect();
        q.reverse();
        self.queues.lock().unwrap().insert(sample, q);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.queues
            .lock()
            .unwrap()
            .get_mut(&req.sample)
            .and_then(Vec::pop)
            .ok_or_else(|| BackendError::Fatal(format!("script for sample {} exhausted", req.sample)))
    }
}

/// Module text for `top` that the scripted verifier classifies as `verdict`.
/// `tag` keeps otherwise identical responses distinguishable.
pub fn scripted_module(top: &str, verdict: SimStatus, tag: &str) -> String {
    let kind = match verdict {
        SimStatus::Pass => "pass",
        SimStatus::SyntaxFail => "syntax",
        SimStatus::Timeout => "timeout",
        _ => "functional",
    };
    format!("```verilog\nmodule {top}(input a, output y);\n  // verdict: {kind}\n  // tag: {tag}\n  assign y = a;\nendmodule\n```")
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ScriptedVerifier;

impl Verifier for ScriptedVerifier {
    fn verify(&self, spec: &DesignSpec, src: &ExtractedSource, _workdir: &Path) -> Result<SimResult, SimError> {
        let verdict = src
            .text
            .lines()
            .find_map(|l| l.trim().strip_prefix("// verdict:"))
            .map(str::trim)
            .unwrap_or("functional");
        let file = format!("{}.v", spec.top_module);
        let fail = |status, diag| SimResult {
            status,
            diagnostics: vec![diag],
            stdout: String::new(),
            duration_ms: 0,
        };
        Ok(match verdict {
            "pass" => SimResult::pass("Your Design Passed\n".into(), 0),
            "syntax" => fail(
                SimStatus::SyntaxFail,
                Diagnostic::new(Phase::Syntax, "syntax error").at(file, Some(3)),
            ),
            "timeout" => fail(
                SimStatus::Timeout,
                Diagnostic::new(Phase::Functional, "simulation timed out"),
            ),
            _ => fail(
                SimStatus::FunctionalFail,
                Diagnostic::new(Phase::Functional, "ERROR: output mismatch"),
            ),
        })
    }
}
