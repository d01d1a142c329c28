// SPDX-License-Identifier: Apache-2.0

//! Run configuration: one TOML document, overridable by flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use hdlrepair_core::digest::sha256_hex;
use hdlrepair_core::engine::LoopConfig;
use hdlrepair_core::exec::Parallelism;
use hdlrepair_core::gateway::{GenerationParams, RetryPolicy, TraceMode};
use hdlrepair_core::sim::{PatternConfig, SimHarnessConfig};
use hdlrepair_core::synth::{ReportDialect, SweepParams, TimeUnit};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {}: {source}", .path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {}: {message}", .path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub generation: GenerationParams,
    #[serde(rename = "loop")]
    pub loop_: LoopConfig,
    pub backend: BackendConfig,
    pub simulator: SimulatorConfig,
    pub synthesis: SynthesisConfig,
    pub parallelism: ParallelismConfig,
    pub prompts: PromptConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            out: PathBuf::from("out"),
            seed: 0,
            generation: GenerationParams::default(),
            loop_: LoopConfig::default(),
            backend: BackendConfig::default(),
            simulator: SimulatorConfig::default(),
            synthesis: SynthesisConfig::default(),
            parallelism: ParallelismConfig::default(),
            prompts: PromptConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub mode: TraceMode,
    pub trace: Option<PathBuf>,
    /// Chat-completions URL for live and record modes.
    pub endpoint: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_s: u64,
    pub retry_attempts: u32,
    pub retry_backoff_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            mode: TraceMode::Replay,
            trace: None,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_s: 120,
            retry_attempts: RetryPolicy::default().attempts,
            retry_backoff_ms: RetryPolicy::default().base_backoff_ms,
        }
    }
}

impl BackendConfig {
    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            attempts: self.retry_attempts,
            base_backoff_ms: self.retry_backoff_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorConfig {
    /// Compile command; placeholders `{sources}`, `{out}`, `{seed}`.
    pub compile: Vec<String>,
    /// Run command; placeholders `{out}`, `{seed}`.
    pub run: Vec<String>,
    pub timeout_s: f64,
    pub compile_timeout_s: f64,
    pub pass_patterns: Vec<String>,
    pub fail_patterns: Vec<String>,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        let h = SimHarnessConfig::default();
        Self {
            compile: h.compile,
            run: h.run,
            timeout_s: h.timeout.as_secs_f64(),
            compile_timeout_s: h.compile_timeout.as_secs_f64(),
            pass_patterns: vec![hdlrepair_core::sim::DEFAULT_PASS_PATTERN.into()],
            fail_patterns: vec![hdlrepair_core::sim::DEFAULT_FAIL_PATTERN.into()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterKind {
    /// Skip synthesis; no PPA reports.
    None,
    Command,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub adapter: AdapterKind,
    /// Flow command; placeholders `{source}`, `{top}`, `{clock_ps}`, `{outdir}`.
    pub command: Vec<String>,
    /// `[[entry]]` table for the mock adapter.
    pub mock_table: Option<PathBuf>,
    pub dialect: String,
    pub time_unit: TimeUnit,
    pub timeout_s: u64,
    pub lo_ps: f64,
    pub hi_ps: f64,
    pub tol_ps: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        let s = SweepParams::default();
        Self {
            adapter: AdapterKind::None,
            command: Vec::new(),
            mock_table: None,
            dialect: "yosys-sta".into(),
            time_unit: TimeUnit::Ps,
            timeout_s: 600,
            lo_ps: s.lo_ps,
            hi_ps: s.hi_ps,
            tol_ps: s.tol_ps,
        }
    }
}

impl SynthesisConfig {
    pub fn sweep(&self) -> SweepParams {
        SweepParams {
            lo_ps: self.lo_ps,
            hi_ps: self.hi_ps,
            tol_ps: self.tol_ps,
        }
    }

    pub fn dialect(&self) -> Result<ReportDialect, ConfigError> {
        self.dialect
            .parse()
            .map_err(|_| ConfigError::Invalid(format!("unknown report dialect {:?}", self.dialect)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParallelismConfig {
    /// Worker threads; 0 picks the number of cores.
    pub workers: usize,
    pub sim_slots: usize,
    pub synth_slots: usize,
    pub mode: Parallelism,
    pub keep_artifacts: bool,
}

impl Default for ParallelismConfig {
    fn default() -> Self {
        Self {
            workers: 0,
            sim_slots: 4,
            synth_slots: 2,
            mode: Parallelism::default(),
            keep_artifacts: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    /// Directory with template overrides.
    pub templates: Option<PathBuf>,
    /// Few-shot pool; defaults to `<corpus>/icl` when present.
    pub icl: Option<PathBuf>,
}

impl RunConfig {
    /// Parse a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = &mut self.corpus {
            fix(p);
        }
        fix(&mut self.out);
        for p in [
            &mut self.backend.trace,
            &mut self.synthesis.mock_table,
            &mut self.prompts.templates,
            &mut self.prompts.icl,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.generation
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.loop_.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.backend.mode != TraceMode::Live && self.backend.trace.is_none() {
            return Err(ConfigError::Invalid(format!(
                "{:?} mode needs a trace file (--trace)",
                self.backend.mode
            )));
        }
        if self.simulator.compile.is_empty() || self.simulator.run.is_empty() {
            return Err(ConfigError::Invalid("simulator commands must not be empty".into()));
        }
        if !(self.simulator.timeout_s > 0.0 && self.simulator.compile_timeout_s > 0.0) {
            return Err(ConfigError::Invalid("simulator timeouts must be positive".into()));
        }
        self.patterns()?;
        self.synthesis.dialect()?;
        match self.synthesis.adapter {
            AdapterKind::Command if self.synthesis.command.is_empty() => {
                return Err(ConfigError::Invalid(
                    "synthesis.command is required for the command adapter".into(),
                ))
            }
            AdapterKind::Mock if self.synthesis.mock_table.is_none() => {
                return Err(ConfigError::Invalid(
                    "synthesis.mock_table is required for the mock adapter".into(),
                ))
            }
            _ => {}
        }
        let s = self.synthesis.sweep();
        if !(s.lo_ps > 0.0 && s.lo_ps < s.hi_ps && s.tol_ps > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "invalid sweep range lo={} hi={} tol={}",
                s.lo_ps, s.hi_ps, s.tol_ps
            )));
        }
        if self.parallelism.sim_slots == 0 || self.parallelism.synth_slots == 0 {
            return Err(ConfigError::Invalid(
                "sim_slots and synth_slots must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn patterns(&self) -> Result<PatternConfig, ConfigError> {
        PatternConfig::new(&self.simulator.pass_patterns, &self.simulator.fail_patterns)
            .map_err(|e| ConfigError::Invalid(format!("bad simulator pattern: {e}")))
    }

    pub fn harness_config(&self) -> Result<SimHarnessConfig, ConfigError> {
        Ok(SimHarnessConfig {
            compile: self.simulator.compile.clone(),
            run: self.simulator.run.clone(),
            patterns: self.patterns()?,
            timeout: Duration::from_secs_f64(self.simulator.timeout_s),
            compile_timeout: Duration::from_secs_f64(self.simulator.compile_timeout_s),
            seed: self.seed,
            slots: self.parallelism.sim_slots,
            keep_artifacts: self.parallelism.keep_artifacts,
        })
    }

    /// Digest of the settings that can change results. Paths, worker
    /// counts and artifact retention are left out so the same experiment
    /// run from different directories digests identically.
    pub fn experiment_digest(&self, extra: &[&str]) -> String {
        #[derive(Serialize)]
        struct Experiment<'a> {
            seed: u64,
            generation: &'a GenerationParams,
            #[serde(rename = "loop")]
            loop_: &'a LoopConfig,
            simulator: &'a SimulatorConfig,
            adapter: AdapterKind,
            command: &'a [String],
            dialect: &'a str,
            time_unit: TimeUnit,
            sweep: SweepParams,
            extra: &'a [&'a str],
        }
        let e = Experiment {
            seed: self.seed,
            generation: &self.generation,
            loop_: &self.loop_,
            simulator: &self.simulator,
            adapter: self.synthesis.adapter,
            command: &self.synthesis.command,
            dialect: &self.synthesis.dialect,
            time_unit: self.synthesis.time_unit,
            sweep: self.synthesis.sweep(),
            extra,
        };
        sha256_hex(serde_json::to_string(&e).expect("serializable").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_setup() {
        let c = RunConfig::default();
        assert_eq!(c.generation.temperature, 0.7);
        assert_eq!(c.generation.context_limit, 2048);
        assert_eq!(c.loop_.max_corrections, 4);
        assert_eq!(c.loop_.n_candidates, 5);
        assert_eq!(c.backend.mode, TraceMode::Replay);
    }

    #[test]
    fn replay_needs_trace() {
        let c = RunConfig::default();
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(m)) if m.contains("trace")));
        let c = RunConfig {
            backend: BackendConfig {
                trace: Some("t.jsonl".into()),
                ..Default::default()
            },
            ..Default::default()
        };
        c.validate().unwrap();
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(
            &path,
            "corpus = \"bench\"\nout = \"/abs/out\"\n[backend]\ntrace = \"t.jsonl\"\n[loop]\nmax_corrections = 2\n",
        )
        .unwrap();
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c.corpus.unwrap(), dir.path().join("bench"));
        assert_eq!(c.out, PathBuf::from("/abs/out"));
        assert_eq!(c.backend.trace.unwrap(), dir.path().join("t.jsonl"));
        assert_eq!(c.loop_.max_corrections, 2);
        assert_eq!(c.loop_.n_candidates, 5);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "[loop]\nmax_correction = 2\n").unwrap();
        assert!(matches!(RunConfig::load(&path), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn digest_ignores_paths() {
        let a = RunConfig::default();
        let b = RunConfig {
            out: "elsewhere".into(),
            corpus: Some("c".into()),
            ..Default::default()
        };
        assert_eq!(a.experiment_digest(&[]), b.experiment_digest(&[]));
        let c = RunConfig {
            seed: 9,
            ..Default::default()
        };
        assert_ne!(a.experiment_digest(&[]), c.experiment_digest(&[]));
    }
}
