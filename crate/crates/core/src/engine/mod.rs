// SPDX-License-Identifier: Apache-2.0

//! The two repair loops.
//!
//! [`rectify_loop`] generates a module, verifies it and feeds diagnostics
//! back until it passes or `K` corrections are spent. [`run_design`] runs
//! several such candidates, synthesizes the passing ones, picks the best
//! PPA report and, when that report misses the design's bounds, hands it
//! to [`ppa_optimize_loop`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::DesignSpec;
use crate::digest::sha256_hex;
use crate::exec::{map_ordered, Parallelism};
use crate::extract::{extract_verilog, ExtractedSource};
use crate::gateway::{Conversation, Gateway, GatewayError, GenerationParams, Role};
use crate::prompt::{select_icl_examples, IclExample, PromptError, Templates};
use crate::sim::{Diagnostic, Phase, SimError, SimStatus, Verifier};
use crate::synth::{
    check_constraints, infrastructure_diagnostic, select_best, sweep_clock, GateResult, PpaConstraint, PpaReport,
    SweepParams, SynthError, Synthesizer,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// `K`: correction rounds after the initial generation.
    pub max_corrections: u32,
    pub n_candidates: u32,
    pub ppa_rounds: u32,
    pub self_planning: bool,
    pub shots_k: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_corrections: 4,
            n_candidates: 5,
            ppa_rounds: 3,
            self_planning: false,
            shots_k: 0,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.n_candidates == 0 {
            return Err(EngineError::InvalidConfig("n_candidates must be at least 1".into()));
        }
        Ok(())
    }

    /// Upper bound on generations for one design.
    pub fn max_generations(&self) -> u64 {
        let k = u64::from(self.max_corrections);
        u64::from(self.n_candidates) * (k + 1) + u64::from(self.ppa_rounds) * (k + 2)
    }
}

/// One verification of one generated module.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptOutcome {
    pub design: String,
    /// 1-based candidate index.
    pub candidate: u32,
    /// 0 is the initial generation.
    pub attempt: u32,
    pub status: SimStatus,
    pub diagnostics: Vec<Diagnostic>,
    /// Digest of the extracted source, of the raw response when nothing
    /// could be extracted, empty when no response was obtained.
    pub source_digest: String,
}

/// A finished candidate conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRun {
    pub candidate: u32,
    pub outcomes: Vec<AttemptOutcome>,
    /// `V_final` when the last attempt passed, otherwise the last module
    /// extracted.
    pub final_source: Option<ExtractedSource>,
    pub conversation: Conversation,
}

impl CandidateRun {
    pub fn passed(&self) -> bool {
        self.outcomes.last().is_some_and(|o| o.status == SimStatus::Pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePpa {
    pub candidate: u32,
    pub report: PpaReport,
    pub sweep_runs: u32,
}

/// One round of PPA-driven optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpaRound {
    pub round: u32,
    /// Verification verdict of the round's final module.
    pub status: SimStatus,
    pub attempts: Vec<AttemptOutcome>,
    /// Present when the round produced a passing module.
    pub report: Option<PpaReport>,
    pub gate: Option<GateResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub design: String,
    pub candidates: Vec<CandidateRun>,
    /// One entry per functionally passing candidate, in candidate order.
    pub ppa_reports: Vec<CandidatePpa>,
    /// Index into `ppa_reports` of the best synthesizable report.
    pub best_report: Option<usize>,
    pub ppa_trace: Vec<PpaRound>,
    /// Best report after optimization (equal to the selected one when no
    /// optimization ran).
    pub final_report: Option<PpaReport>,
    pub final_source: Option<ExtractedSource>,
}

impl DesignResult {
    pub fn outcomes(&self) -> impl Iterator<Item = &AttemptOutcome> {
        self.candidates.iter().flat_map(|c| c.outcomes.iter())
    }

    pub fn functionally_correct(&self) -> bool {
        self.candidates.iter().any(CandidateRun::passed)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Synthesis(#[from] SynthError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("invalid loop configuration: {0}")]
    InvalidConfig(String),
    #[error("run cancelled")]
    Cancelled,
}

/// Progress hooks. Called from worker threads.
pub trait RunObserver: Send + Sync {
    fn attempt(&self, _outcome: &AttemptOutcome) {}
    fn candidate(&self, _design: &str, _run: &CandidateRun) {}
    fn cancelled(&self) -> bool {
        false
    }
}

pub struct NoObserver;

impl RunObserver for NoObserver {}

/// Everything the loops need besides the design itself.
pub struct Toolchain<'a> {
    pub gateway: &'a Gateway,
    pub params: &'a GenerationParams,
    pub verifier: &'a dyn Verifier,
    /// Without a synthesizer PPA handling is skipped.
    pub synth: Option<&'a Synthesizer>,
    pub templates: &'a Templates,
    pub sweep: SweepParams,
    pub work_root: &'a Path,
    pub icl_pool: &'a [IclExample],
    pub parallelism: Parallelism,
    pub observer: &'a dyn RunObserver,
}

impl Toolchain<'_> {
    fn design_dir(&self, spec: &DesignSpec) -> PathBuf {
        self.work_root.join(&spec.name)
    }
}

/// Result of one generate/verify/repair sequence.
struct Repair {
    outcomes: Vec<AttemptOutcome>,
    last_source: Option<ExtractedSource>,
    conversation: Conversation,
}

impl Repair {
    fn status(&self) -> SimStatus {
        self.outcomes.last().map_or(SimStatus::InfraFail, |o| o.status)
    }
}

/// Generate, verify, and feed failures back at most `k` times.
///
/// `conv` must end with the user message asking for code. Attempt `i`
/// verifies in `dir/a<i>`.
fn repair(
    spec: &DesignSpec,
    mut conv: Conversation,
    k: u32,
    tc: &Toolchain<'_>,
    candidate: u32,
    dir: &Path,
    report_attempts: bool,
) -> Result<Repair, EngineError> {
    let mut outcomes = Vec::new();
    let mut last_source = None;
    for i in 0..=k {
        if tc.observer.cancelled() {
            return Err(EngineError::Cancelled);
        }
        let response = match tc.gateway.generate(&conv, tc.params, candidate) {
            Ok(r) => r,
            Err(e) if !e.is_run_fatal() => {
                log::warn!("{} candidate {candidate}: {e}", spec.name);
                let outcome = AttemptOutcome {
                    design: spec.name.clone(),
                    candidate,
                    attempt: i,
                    status: SimStatus::SyntaxFail,
                    diagnostics: vec![Diagnostic::new(Phase::Infrastructure, e.to_string())],
                    source_digest: String::new(),
                };
                if report_attempts {
                    tc.observer.attempt(&outcome);
                }
                outcomes.push(outcome);
                break;
            }
            Err(e) => return Err(e.into()),
        };
        conv.push(Role::Assistant, &response)?;

        let (status, diagnostics, digest, feedback_source) = match extract_verilog(&response, &spec.top_module) {
            Ok(src) => {
                let res = tc.verifier.verify(spec, &src, &dir.join(format!("a{i}")))?;
                let digest = sha256_hex(src.text.as_bytes());
                let text = src.text.clone();
                last_source = Some(src);
                (res.status, res.diagnostics, digest, text)
            }
            Err(e) => (
                SimStatus::SyntaxFail,
                vec![Diagnostic::new(Phase::Syntax, e.to_string())],
                sha256_hex(response.as_bytes()),
                response.clone(),
            ),
        };
        let outcome = AttemptOutcome {
            design: spec.name.clone(),
            candidate,
            attempt: i,
            status,
            diagnostics,
            source_digest: digest,
        };
        if report_attempts {
            tc.observer.attempt(&outcome);
        }
        let diags = feedback_diagnostics(&outcome);
        outcomes.push(outcome);
        if status == SimStatus::Pass || status == SimStatus::InfraFail || i == k {
            break;
        }
        let prompt = tc.templates.rectify_prompt(&diags, &feedback_source)?;
        conv.push(Role::User, &prompt.body)?;
    }
    Ok(Repair {
        outcomes,
        last_source,
        conversation: conv,
    })
}

fn feedback_diagnostics(o: &AttemptOutcome) -> Vec<Diagnostic> {
    if !o.diagnostics.is_empty() {
        return o.diagnostics.clone();
    }
    let (phase, msg) = match o.status {
        SimStatus::SyntaxFail => (Phase::Syntax, "the code does not compile"),
        SimStatus::Timeout => (Phase::Functional, "simulation did not finish in time"),
        _ => (Phase::Functional, "the testbench reported a failure"),
    };
    vec![Diagnostic::new(phase, msg)]
}

/// Multi-round generation for one candidate.
///
/// `conv` holds the priming prompt. Returns after the first passing
/// attempt or after `cfg.max_corrections` corrections, whichever comes
/// first; a candidate-level backend failure ends the loop early with an
/// `Infrastructure` diagnostic on the last attempt.
pub fn rectify_loop(
    spec: &DesignSpec,
    conv: &Conversation,
    cfg: &LoopConfig,
    tc: &Toolchain<'_>,
    candidate: u32,
) -> Result<CandidateRun, EngineError> {
    let dir = tc.design_dir(spec).join(format!("g{candidate}"));
    let r = repair(spec, conv.clone(), cfg.max_corrections, tc, candidate, &dir, true)?;
    let run = CandidateRun {
        candidate,
        outcomes: r.outcomes,
        final_source: r.last_source,
        conversation: r.conversation,
    };
    tc.observer.candidate(&spec.name, &run);
    Ok(run)
}

/// The conversation every candidate of `spec` starts from.
pub fn initial_conversation(
    spec: &DesignSpec,
    cfg: &LoopConfig,
    tc: &Toolchain<'_>,
) -> Result<Conversation, EngineError> {
    let shots = select_icl_examples(tc.icl_pool, cfg.shots_k);
    let prompt = tc.templates.initial_prompt(spec, &shots, cfg.self_planning);
    let system = tc.templates.system.trim_end();
    let system = (!system.is_empty()).then_some(system);
    Ok(Conversation::new(system, &spec.name).append(Role::User, &prompt.body)?)
}

/// Candidate-level synthesis failures become unsynthesizable reports;
/// only missing tools and I/O trouble abort the run.
fn synthesize(
    tc: &Toolchain<'_>,
    synth: &Synthesizer,
    spec: &DesignSpec,
    src: &ExtractedSource,
    dir: &Path,
) -> Result<(PpaReport, u32), EngineError> {
    let digest = sha256_hex(src.text.as_bytes());
    match sweep_clock(synth, src, &spec.top_module, tc.sweep, dir) {
        Ok(sweep) => {
            let mut report = sweep.outcome.report;
            report.warnings.extend(sweep.warnings);
            Ok((report, sweep.runs))
        }
        Err(e @ SynthError::InfeasibleAtUpperBound { .. }) => Ok((
            PpaReport::unsynthesizable(vec![Diagnostic::new(Phase::SynthesisError, e.to_string())], digest),
            1,
        )),
        Err(e @ (SynthError::AdapterScriptFailure { .. } | SynthError::UnparseableReport(_))) => {
            log::warn!("{}: {e}", spec.name);
            Ok((
                PpaReport::unsynthesizable(vec![infrastructure_diagnostic(&e)], digest),
                1,
            ))
        }
        Err(e) => Err(e.into()),
    }
}

/// Run every candidate of one design, then the PPA stage.
///
/// Candidates present in `prior` (by index) are reused instead of rerun.
pub fn run_design(
    spec: &DesignSpec,
    cfg: &LoopConfig,
    tc: &Toolchain<'_>,
    prior: &BTreeMap<u32, CandidateRun>,
) -> Result<DesignResult, EngineError> {
    cfg.validate()?;
    let base = initial_conversation(spec, cfg, tc)?;
    let todo: Vec<u32> = (1..=cfg.n_candidates).filter(|g| !prior.contains_key(g)).collect();
    let fresh = map_ordered(&todo, tc.parallelism, |&g| rectify_loop(spec, &base, cfg, tc, g));
    let mut by_index: BTreeMap<u32, CandidateRun> = prior
        .iter()
        .filter(|(g, _)| (1..=cfg.n_candidates).contains(*g))
        .map(|(g, r)| (*g, r.clone()))
        .collect();
    for run in fresh {
        let run = run?;
        by_index.insert(run.candidate, run);
    }
    let candidates: Vec<CandidateRun> = by_index.into_values().collect();

    let mut result = DesignResult {
        design: spec.name.clone(),
        candidates,
        ppa_reports: Vec::new(),
        best_report: None,
        ppa_trace: Vec::new(),
        final_report: None,
        final_source: None,
    };
    let Some(synth) = tc.synth else {
        return Ok(result);
    };

    let passing: Vec<&CandidateRun> = result
        .candidates
        .iter()
        .filter(|c| c.passed() && c.final_source.is_some())
        .collect();
    let reports = map_ordered(&passing, tc.parallelism, |c| {
        let src = c.final_source.as_ref().expect("filtered");
        let dir = tc.design_dir(spec).join(format!("g{}", c.candidate)).join("sweep");
        synthesize(tc, synth, spec, src, &dir).map(|(report, sweep_runs)| CandidatePpa {
            candidate: c.candidate,
            report,
            sweep_runs,
        })
    });
    for r in reports {
        result.ppa_reports.push(r?);
    }

    let synthesizable: Vec<usize> = (0..result.ppa_reports.len())
        .filter(|&i| result.ppa_reports[i].report.synthesizable)
        .collect();
    let pool: Vec<PpaReport> = synthesizable
        .iter()
        .map(|&i| result.ppa_reports[i].report.clone())
        .collect();
    let Ok(best) = select_best(&pool).map(|j| synthesizable[j]) else {
        return Ok(result);
    };
    result.best_report = Some(best);
    let chosen = &result.ppa_reports[best];
    let run = result
        .candidates
        .iter()
        .find(|c| c.candidate == chosen.candidate)
        .expect("report belongs to a candidate");
    let source = run.final_source.clone().expect("passing candidate has source");
    result.final_report = Some(chosen.report.clone());
    result.final_source = Some(source.clone());

    if let Some(constraint) = &spec.ppa_constraint {
        if cfg.ppa_rounds > 0 && !check_constraints(&chosen.report, constraint).is_satisfied() {
            let out = ppa_optimize_loop(
                spec,
                &run.conversation,
                &source,
                &chosen.report,
                constraint,
                cfg,
                tc,
                chosen.candidate,
            )?;
            result.final_report = Some(out.report);
            result.final_source = Some(out.source);
            result.ppa_trace = out.trace;
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpaOutcome {
    pub source: ExtractedSource,
    pub report: PpaReport,
    pub trace: Vec<PpaRound>,
}

/// Ask for optimized modules until the PPA gate is satisfied or
/// `cfg.ppa_rounds` rounds are spent.
///
/// Each round continues `conv` with a PPA prompt, then re-verifies the
/// answer with the full rectification loop before synthesizing it. The
/// result is the best report seen under the (clock, power, area) order,
/// so it is never worse than `report`. Rounds whose module fails
/// verification are recorded and otherwise ignored. A candidate-level
/// backend failure ends the loop, keeping the best so far.
#[allow(clippy::too_many_arguments)]
pub fn ppa_optimize_loop(
    spec: &DesignSpec,
    conv: &Conversation,
    source: &ExtractedSource,
    report: &PpaReport,
    constraint: &PpaConstraint,
    cfg: &LoopConfig,
    tc: &Toolchain<'_>,
    candidate: u32,
) -> Result<PpaOutcome, EngineError> {
    if check_constraints(report, constraint).is_satisfied() {
        return Err(PromptError::NoViolations.into());
    }
    let synth = tc
        .synth
        .ok_or_else(|| EngineError::InvalidConfig("PPA optimization needs a synthesizer".into()))?;
    let mut best = (source.clone(), report.clone());
    let mut conv = conv.clone();
    let mut trace = Vec::new();
    for round in 1..=cfg.ppa_rounds {
        let prompt = tc.templates.ppa_prompt(spec, &best.1, constraint, &best.0.text)?;
        let primed = conv.append(Role::User, &prompt.body)?;
        let dir = tc.design_dir(spec).join(format!("ppa{round}"));
        let r = repair(spec, primed, cfg.max_corrections, tc, candidate, &dir, false)?;
        let status = r.status();
        let halted = r.outcomes.last().is_some_and(|o| {
            o.diagnostics.iter().any(|d| d.phase == Phase::Infrastructure) && o.source_digest.is_empty()
        });
        let mut entry = PpaRound {
            round,
            status,
            attempts: r.outcomes.clone(),
            report: None,
            gate: None,
        };
        if status == SimStatus::Pass {
            let src = r.last_source.clone().expect("passing attempt has source");
            let (rep, _) = synthesize(tc, synth, spec, &src, &dir.join("sweep"))?;
            let gate = check_constraints(&rep, constraint);
            let satisfied = gate.is_satisfied();
            if rep.synthesizable && rep.rank_cmp(&best.1).is_lt() {
                best = (src, rep.clone());
            }
            entry.report = Some(rep);
            entry.gate = Some(gate);
            trace.push(entry);
            conv = r.conversation;
            if satisfied {
                break;
            }
        } else {
            trace.push(entry);
            if halted {
                break;
            }
            conv = r.conversation;
        }
    }
    Ok(PpaOutcome {
        source: best.0,
        report: best.1,
        trace,
    })
}
