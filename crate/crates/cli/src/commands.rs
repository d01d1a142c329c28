// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use hdlrepair_core::corpus::{load_corpus, Corpus, ICL_DIR};
use hdlrepair_core::digest::sha256_hex;
use hdlrepair_core::engine::{
    run_design, AttemptOutcome, CandidateRun, DesignResult, EngineError, RunObserver, Toolchain,
};
use hdlrepair_core::exec::map_ordered;
use hdlrepair_core::extract::extract_verilog;
use hdlrepair_core::gateway::{Gateway, HttpBackend, TraceMode, TraceStore};
use hdlrepair_core::metrics::{emit_report, pass_curves, RunManifest, SUMMARY_FILE};
use hdlrepair_core::prompt::{load_icl_pool, IclExample, Templates};
use hdlrepair_core::sim::{Phase, SimHarness, SimStatus};
use hdlrepair_core::synth::{sweep_clock, CommandAdapter, MockAdapter, SynthError, Synthesizer};

use crate::config::{AdapterKind, ConfigError, RunConfig};
use crate::outcome_log::{read_log, read_log_for_resume, LogError, LogRecord, LogState, LogWriter, LOG_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFRA: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
pub const EXIT_INTERRUPTED: i32 = 130;

/// Flag values for `run`; `None` keeps the config file's setting.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub corpus: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub mode: Option<TraceMode>,
    pub trace: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub keep_artifacts: bool,
    pub dry_run: bool,
    pub resume: bool,
    pub seed: Option<u64>,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, ConfigError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// Config file plus flags (flags win).
pub fn resolve_config(o: &RunOverrides) -> Result<RunConfig, ConfigError> {
    let mut cfg = load_config(o.config.as_deref())?;
    if let Some(c) = &o.corpus {
        cfg.corpus = Some(c.clone());
    }
    if let Some(m) = o.mode {
        cfg.backend.mode = m;
    }
    if let Some(t) = &o.trace {
        cfg.backend.trace = Some(t.clone());
    }
    if let Some(out) = &o.out {
        cfg.out = out.clone();
    }
    if let Some(w) = o.workers {
        cfg.parallelism.workers = w;
    }
    if o.keep_artifacts {
        cfg.parallelism.keep_artifacts = true;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn build_synthesizer(cfg: &RunConfig) -> Result<Option<Synthesizer>, ConfigError> {
    let s = &cfg.synthesis;
    let dialect = s.dialect()?;
    let adapter: Arc<dyn hdlrepair_core::synth::SynthAdapter> = match s.adapter {
        AdapterKind::None => return Ok(None),
        AdapterKind::Command => Arc::new(CommandAdapter {
            argv: s.command.clone(),
            dialect,
            time_unit: s.time_unit,
            timeout: Duration::from_secs(s.timeout_s),
        }),
        AdapterKind::Mock => {
            let path = s.mock_table.as_ref().expect("validated");
            let text = fs::read_to_string(path)
                .map_err(|e| ConfigError::Invalid(format!("mock table {}: {e}", path.display())))?;
            Arc::new(
                MockAdapter::from_toml(&text, dialect)
                    .map_err(|e| ConfigError::Invalid(format!("mock table {}: {e}", path.display())))?,
            )
        }
    };
    Ok(Some(Synthesizer::new(adapter, cfg.parallelism.synth_slots)))
}

fn mock_table_digest(cfg: &RunConfig) -> String {
    match (&cfg.synthesis.adapter, &cfg.synthesis.mock_table) {
        (AdapterKind::Mock, Some(p)) => fs::read(p).map(sha256_hex).unwrap_or_default(),
        _ => String::new(),
    }
}

fn icl_pool(cfg: &RunConfig, corpus: &Corpus) -> Result<Vec<IclExample>, String> {
    let dir = match &cfg.prompts.icl {
        Some(d) => d.clone(),
        None => {
            let d = corpus.root.join(ICL_DIR);
            if !d.is_dir() {
                return Ok(Vec::new());
            }
            d
        }
    };
    load_icl_pool(&dir).map_err(|e| e.to_string())
}

struct LogObserver<'a> {
    writer: &'a LogWriter,
    epoch: u32,
    interrupt: &'a AtomicBool,
    abort: AtomicBool,
    write_error: Mutex<Option<LogError>>,
}

impl LogObserver<'_> {
    fn write(&self, rec: LogRecord) {
        if let Err(e) = self.writer.append(&rec) {
            self.abort.store(true, Ordering::SeqCst);
            self.write_error.lock().unwrap().get_or_insert(e);
        }
    }
}

impl RunObserver for LogObserver<'_> {
    fn attempt(&self, outcome: &AttemptOutcome) {
        log::info!(
            "{} g{} a{}: {:?}",
            outcome.design,
            outcome.candidate,
            outcome.attempt,
            outcome.status
        );
        self.write(LogRecord::Attempt {
            epoch: self.epoch,
            outcome: outcome.clone(),
        });
    }

    fn candidate(&self, design: &str, run: &CandidateRun) {
        self.write(LogRecord::Candidate {
            epoch: self.epoch,
            design: design.to_string(),
            run: run.clone(),
        });
    }

    fn cancelled(&self) -> bool {
        self.interrupt.load(Ordering::SeqCst) || self.abort.load(Ordering::SeqCst)
    }
}

/// Attempts and reports that failed because of the environment rather
/// than the generated code.
pub fn infrastructure_failures(results: &[DesignResult]) -> usize {
    let bad = |o: &AttemptOutcome| {
        o.status == SimStatus::InfraFail || o.diagnostics.iter().any(|d| d.phase == Phase::Infrastructure)
    };
    results
        .iter()
        .map(|r| {
            r.outcomes().filter(|o| bad(o)).count()
                + r.ppa_trace.iter().flat_map(|t| &t.attempts).filter(|o| bad(o)).count()
                + r.ppa_reports
                    .iter()
                    .filter(|p| p.report.errors.iter().any(|d| d.phase == Phase::Infrastructure))
                    .count()
        })
        .sum()
}

pub fn cmd_run(o: &RunOverrides, interrupt: &AtomicBool, stdout: &mut dyn Write) -> i32 {
    let cfg = match resolve_config(o) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let Some(corpus_root) = &cfg.corpus else {
        eprintln!("error: no corpus given (--corpus or `corpus` in the config)");
        return EXIT_CONFIG;
    };
    let corpus = match load_corpus(corpus_root) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let n_designs = corpus.designs.len() as u64;
    let n = u64::from(cfg.loop_.n_candidates);
    if o.dry_run {
        let _ = writeln!(
            stdout,
            "designs: {n_designs}\ncandidates per design: {n}\nplanned generations: {}\nupper bound with corrections and PPA rounds: {}",
            n_designs * n,
            n_designs * cfg.loop_.max_generations()
        );
        return EXIT_OK;
    }

    let templates = match &cfg.prompts.templates {
        Some(dir) => match Templates::with_overrides(dir) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        },
        None => Templates::builtin(),
    };
    let pool = match icl_pool(&cfg, &corpus) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: few-shot pool: {e}");
            return EXIT_CONFIG;
        }
    };
    let synth = match build_synthesizer(&cfg) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let harness = match cfg.harness_config() {
        Ok(h) => SimHarness::new(h),
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };

    if let Err(e) = fs::create_dir_all(&cfg.out) {
        eprintln!("error: cannot create {}: {e}", cfg.out.display());
        return EXIT_CONFIG;
    }
    let log_path = cfg.out.join(LOG_FILE);
    let has_log = fs::metadata(&log_path).is_ok_and(|m| m.len() > 0);
    let (state, keep) = if has_log {
        if !o.resume {
            eprintln!(
                "error: {} already holds a run; pass --resume to continue it or choose another --out",
                cfg.out.display()
            );
            return EXIT_CONFIG;
        }
        match read_log_for_resume(&log_path) {
            Ok((s, k)) => (s, Some(k)),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        }
    } else {
        (LogState::default(), None)
    };

    let pool_digest = sha256_hex(serde_json::to_vec(&pool).expect("pool serializes"));
    let mock_digest = mock_table_digest(&cfg);
    let mut manifest = RunManifest {
        manifest_version: corpus.manifest_version,
        config_digest: cfg.experiment_digest(&[templates.version(), &pool_digest, &mock_digest]),
        template_version: templates.version().to_string(),
        trace_digest: String::new(),
        model_id: cfg.generation.model_id.clone(),
        n_designs,
        n_candidates: cfg.loop_.n_candidates,
        max_corrections: cfg.loop_.max_corrections,
        designs: corpus.designs.iter().map(|d| d.name.clone()).collect(),
    };
    if let Some(prev) = &state.manifest {
        if prev.config_digest != manifest.config_digest || prev.designs != manifest.designs {
            eprintln!("error: the logged run used a different configuration or corpus; refusing to resume");
            return EXIT_CONFIG;
        }
    }

    let gateway = match build_gateway(&cfg) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INFRA;
        }
    };
    let writer = match LogWriter::open(&log_path, keep) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INFRA;
        }
    };
    let epoch = state.last_epoch.map_or(0, |e| e + 1);
    let observer = LogObserver {
        writer: &writer,
        epoch,
        interrupt,
        abort: AtomicBool::new(false),
        write_error: Mutex::new(None),
    };
    observer.write(LogRecord::Start {
        epoch,
        manifest: manifest.clone(),
    });

    let work_root = cfg.out.join("work").join(format!("e{epoch}"));
    let tc = Toolchain {
        gateway: &gateway,
        params: &cfg.generation,
        verifier: &harness,
        synth: synth.as_ref(),
        templates: &templates,
        sweep: cfg.synthesis.sweep(),
        work_root: &work_root,
        icl_pool: &pool,
        parallelism: cfg.parallelism.mode,
        observer: &observer,
    };
    let empty = BTreeMap::new();
    let run_all = || {
        map_ordered(&corpus.designs, cfg.parallelism.mode, |spec| {
            if let Some(done) = state.designs.get(&spec.name) {
                log::info!("{}: reusing logged result", spec.name);
                return Ok(done.clone());
            }
            let prior = state.candidates.get(&spec.name).unwrap_or(&empty);
            let res = run_design(spec, &cfg.loop_, &tc, prior);
            match &res {
                Ok(r) => observer.write(LogRecord::Design {
                    epoch,
                    result: r.clone(),
                }),
                Err(EngineError::Cancelled) => {}
                Err(_) => observer.abort.store(true, Ordering::SeqCst),
            }
            res
        })
    };
    let outcomes = in_pool(cfg.parallelism.workers, run_all);

    if let Some(e) = observer.write_error.lock().unwrap().take() {
        eprintln!("error: {e}");
        return EXIT_INFRA;
    }
    let mut results = Vec::with_capacity(outcomes.len());
    let mut cancelled = false;
    let mut fatal = None;
    for r in outcomes {
        match r {
            Ok(r) => results.push(r),
            Err(EngineError::Cancelled) => cancelled = true,
            Err(e) => {
                fatal.get_or_insert(e);
            }
        }
    }
    if let Some(e) = fatal {
        eprintln!("error: {e}");
        return EXIT_INFRA;
    }
    if cancelled {
        eprintln!("interrupted; completed work is in {}", log_path.display());
        return EXIT_INTERRUPTED;
    }

    manifest.trace_digest = gateway.trace().map(TraceStore::digest).unwrap_or_default();
    observer.write(LogRecord::Finish { epoch, manifest });
    if let Some(e) = observer.write_error.lock().unwrap().take() {
        eprintln!("error: {e}");
        return EXIT_INFRA;
    }
    drop(writer);
    if !cfg.parallelism.keep_artifacts {
        let _ = fs::remove_dir_all(cfg.out.join("work"));
    }

    let code = cmd_report(&log_path, &cfg.out, stdout);
    if code != EXIT_OK {
        return code;
    }
    let infra = infrastructure_failures(&results);
    if infra > 0 {
        eprintln!("{infra} attempt(s) or report(s) failed for infrastructure reasons");
        return EXIT_INFRA;
    }
    EXIT_OK
}

fn build_gateway(cfg: &RunConfig) -> Result<Gateway, String> {
    let b = &cfg.backend;
    let http = || {
        Arc::new(HttpBackend::new(
            b.endpoint.clone(),
            Some(b.api_key_env.as_str()),
            Duration::from_secs(b.timeout_s),
        ))
    };
    let trace = b.trace.as_deref();
    match b.mode {
        TraceMode::Live => Ok(Gateway::live(http(), b.retry())),
        TraceMode::Record => {
            let t = TraceStore::open_record(trace.expect("validated")).map_err(|e| e.to_string())?;
            Ok(Gateway::record(http(), t, b.retry()))
        }
        TraceMode::Replay => {
            let path = trace.expect("validated");
            if path.exists() {
                Ok(Gateway::replay(
                    TraceStore::open_replay(path).map_err(|e| e.to_string())?,
                ))
            } else {
                log::warn!("trace {} does not exist; every request will miss", path.display());
                Ok(Gateway::replay(TraceStore::in_memory()))
            }
        }
    }
}

#[cfg(feature = "parallel")]
fn in_pool<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("cannot build worker pool ({e}); using the global one");
            f()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn in_pool<R: Send>(_workers: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}

/// Rebuild every report file in `out` from the outcome log at `log`.
pub fn cmd_report(log: &Path, out: &Path, stdout: &mut dyn Write) -> i32 {
    let state = match read_log(log) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let results: Vec<DesignResult> = state.designs.into_values().collect();
    let mut manifest = state.manifest.unwrap_or_default();
    if !state.finished && !results.is_empty() {
        eprintln!(
            "warning: the logged run did not finish; reporting {} of {} designs",
            results.len(),
            manifest.n_designs
        );
        manifest.n_designs = results.len() as u64;
    }
    let outcomes: Vec<AttemptOutcome> = results.iter().flat_map(|r| r.outcomes().cloned()).collect();
    let curves = match pass_curves(
        &outcomes,
        results.len() as u64,
        manifest.n_candidates,
        manifest.max_corrections,
    ) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: outcome log is inconsistent: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = emit_report(&results, &curves, &manifest, out) {
        eprintln!("error: {e}");
        return EXIT_INFRA;
    }
    if let Ok(summary) = fs::read_to_string(out.join(SUMMARY_FILE)) {
        let _ = stdout.write_all(summary.as_bytes());
    }
    EXIT_OK
}

#[derive(Debug, Clone, Default)]
pub struct SweepArgs {
    pub config: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub design: String,
    pub source: PathBuf,
    pub lo_ps: Option<f64>,
    pub hi_ps: Option<f64>,
    pub tol_ps: Option<f64>,
    /// Where to write the report JSON; defaults to `<out>/<design>.ppa.json`.
    pub report: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub fn cmd_sweep(a: &SweepArgs, stdout: &mut dyn Write) -> i32 {
    let mut cfg = match load_config(a.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(v) = a.lo_ps {
        cfg.synthesis.lo_ps = v;
    }
    if let Some(v) = a.hi_ps {
        cfg.synthesis.hi_ps = v;
    }
    if let Some(v) = a.tol_ps {
        cfg.synthesis.tol_ps = v;
    }
    if let Some(o) = &a.out {
        cfg.out = o.clone();
    }
    let synth = match build_synthesizer(&cfg) {
        Ok(Some(s)) => s,
        Ok(None) => {
            eprintln!("error: no synthesis adapter configured");
            return EXIT_CONFIG;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let corpus_root = a.corpus.clone().or(cfg.corpus.clone());
    let top = match corpus_root.map(load_corpus) {
        Some(Ok(c)) => match c.get(&a.design) {
            Some(d) => d.top_module.clone(),
            None => {
                eprintln!("error: design {} not in corpus", a.design);
                return EXIT_CONFIG;
            }
        },
        Some(Err(e)) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
        None => a.design.clone(),
    };
    let text = match fs::read_to_string(&a.source) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", a.source.display());
            return EXIT_CONFIG;
        }
    };
    let src = match extract_verilog(&text, &top) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", a.source.display());
            return EXIT_CONFIG;
        }
    };
    let workdir = cfg.out.join("work").join(format!("sweep-{}", a.design));
    let _ = fs::remove_dir_all(&workdir);
    let result = sweep_clock(&synth, &src, &top, cfg.synthesis.sweep(), &workdir);
    if !cfg.parallelism.keep_artifacts {
        let _ = fs::remove_dir_all(&workdir);
    }
    let sweep = match result {
        Ok(s) => s,
        Err(e @ SynthError::InfeasibleAtUpperBound { .. }) => {
            eprintln!("{e}");
            return EXIT_INFEASIBLE;
        }
        Err(e @ (SynthError::InvalidSweep { .. } | SynthError::InvalidClock(_))) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INFRA;
        }
    };
    let report = &sweep.outcome.report;
    if !report.synthesizable {
        for d in &report.errors {
            eprintln!("{d}");
        }
        eprintln!("design is not synthesizable");
        return EXIT_INFEASIBLE;
    }
    let path = a
        .report
        .clone()
        .unwrap_or_else(|| cfg.out.join(format!("{}.ppa.json", a.design)));
    if let Some(parent) = path.parent() {
        let _ = fs::create_dir_all(parent);
    }
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    if let Err(e) = fs::write(&path, json) {
        eprintln!("error: {}: {e}", path.display());
        return EXIT_INFRA;
    }
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:?}"));
    let _ = writeln!(
        stdout,
        "clock_ps {}\npower_uW {}\narea_um2 {}\nruns {}",
        fmt(report.clock_ps),
        fmt(report.power_uw),
        fmt(report.area_um2),
        sweep.runs
    );
    for w in &sweep.warnings {
        eprintln!("warning: {w}");
    }
    EXIT_OK
}
