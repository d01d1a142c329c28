// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use super::process::{run_with_timeout, ProcessOutput};
use super::{
    classify_result, parse_diagnostics, Diagnostic, PatternConfig, Phase, SimError, SimResult, SimStatus, Verifier,
};
use crate::corpus::DesignSpec;
use crate::exec::Semaphore;
use crate::extract::ExtractedSource;

pub type RunOutput = ProcessOutput;

const ARTIFACT_NAME: &str = "sim.out";

#[derive(Debug, Clone)]
pub struct SimHarnessConfig {
    /// Compile command; `{sources}` expands to the design file followed by
    /// the testbench, `{out}` to the artifact path.
    pub compile: Vec<String>,
    /// Run command; `{out}` is the artifact, `{seed}` the run seed.
    pub run: Vec<String>,
    pub patterns: PatternConfig,
    pub timeout: Duration,
    pub compile_timeout: Duration,
    pub seed: u64,
    /// Bound on simultaneous simulator processes.
    pub slots: usize,
    pub keep_artifacts: bool,
}

impl Default for SimHarnessConfig {
    fn default() -> Self {
        Self {
            compile: ["iverilog", "-g2012", "-o", "{out}", "{sources}"]
                .map(String::from)
                .to_vec(),
            run: ["vvp", "-n", "{out}", "+seed={seed}"].map(String::from).to_vec(),
            patterns: PatternConfig::default(),
            timeout: Duration::from_secs(30),
            compile_timeout: Duration::from_secs(60),
            seed: 0,
            slots: 4,
            keep_artifacts: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompileResult {
    Artifact(PathBuf),
    Failed(Vec<Diagnostic>),
    TimedOut,
}

/// Drives an Icarus-style two-step compile/run simulator through command
/// templates.
#[derive(Debug)]
pub struct SimHarness {
    cfg: SimHarnessConfig,
    slots: Semaphore,
}

impl SimHarness {
    pub fn new(cfg: SimHarnessConfig) -> Self {
        let slots = Semaphore::new(cfg.slots);
        Self { cfg, slots }
    }

    pub fn config(&self) -> &SimHarnessConfig {
        &self.cfg
    }

    /// Write `src` into `workdir` and compile it together with `testbench`.
    pub fn compile_design(
        &self,
        src: &ExtractedSource,
        top: &str,
        testbench: &Path,
        workdir: &Path,
    ) -> Result<CompileResult, SimError> {
        claim_workdir(workdir)?;
        let design_file = format!("{top}.v");
        fs::write(workdir.join(&design_file), &src.text).map_err(|e| SimError::io(workdir, e))?;
        // The testbench is copied in so diagnostics and simulator output
        // carry workdir-relative names rather than host paths.
        let mut tb_file = testbench
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "testbench.v".to_string());
        if tb_file == design_file || tb_file == ARTIFACT_NAME {
            tb_file = format!("tb_{tb_file}");
        }
        fs::copy(testbench, workdir.join(&tb_file)).map_err(|e| SimError::io(testbench, e))?;
        let sources = vec![design_file, tb_file];
        let artifact = workdir.join(ARTIFACT_NAME);
        let argv = expand(&self.cfg.compile, &sources, ARTIFACT_NAME, self.cfg.seed)?;

        let out = self.spawn(&argv, workdir, self.cfg.compile_timeout)?;
        if out.timed_out {
            return Ok(CompileResult::TimedOut);
        }
        if out.exit_code == Some(0) {
            return Ok(CompileResult::Artifact(artifact));
        }
        let mut text = out.stderr;
        if !out.stdout.trim().is_empty() {
            text.push('\n');
            text.push_str(&out.stdout);
        }
        let mut diags = parse_diagnostics(&text);
        if diags.is_empty() {
            let msg = match out.exit_code {
                Some(code) => format!("compiler exited with status {code}"),
                None => "compiler terminated abnormally".to_string(),
            };
            diags.push(Diagnostic::new(Phase::Syntax, msg));
        }
        Ok(CompileResult::Failed(diags))
    }

    /// Execute a compiled artifact.
    pub fn run_testbench(&self, artifact: &Path, timeout: Duration) -> Result<RunOutput, SimError> {
        let dir = artifact.parent().unwrap_or(Path::new("."));
        let name = artifact
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| ARTIFACT_NAME.to_string());
        let argv = expand(&self.cfg.run, &[], &name, self.cfg.seed)?;
        self.spawn(&argv, dir, timeout)
    }

    fn spawn(&self, argv: &[String], cwd: &Path, timeout: Duration) -> Result<ProcessOutput, SimError> {
        let _slot = self.slots.acquire();
        run_with_timeout(argv, cwd, timeout).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied => {
                SimError::ToolMissing { tool: argv[0].clone() }
            }
            _ => SimError::io(cwd, e),
        })
    }

    fn check_one(
        &self,
        spec: &DesignSpec,
        src: &ExtractedSource,
        tb: &Path,
        dir: &Path,
    ) -> Result<SimResult, SimError> {
        let artifact = match self.compile_design(src, &spec.top_module, tb, dir)? {
            CompileResult::Artifact(a) => a,
            CompileResult::Failed(diagnostics) => {
                return Ok(SimResult {
                    status: SimStatus::SyntaxFail,
                    diagnostics,
                    stdout: String::new(),
                    duration_ms: 0,
                })
            }
            CompileResult::TimedOut => {
                return Ok(SimResult {
                    status: SimStatus::Timeout,
                    diagnostics: vec![Diagnostic::new(
                        Phase::Infrastructure,
                        format!("compilation timed out after {} s", self.cfg.compile_timeout.as_secs()),
                    )],
                    stdout: String::new(),
                    duration_ms: self.cfg.compile_timeout.as_millis() as u64,
                })
            }
        };
        let out = self.run_testbench(&artifact, self.cfg.timeout)?;
        if out.timed_out {
            return Ok(SimResult {
                status: SimStatus::Timeout,
                diagnostics: vec![Diagnostic::new(
                    Phase::Functional,
                    format!("simulation timed out after {} s", self.cfg.timeout.as_secs_f64()),
                )],
                stdout: out.stdout,
                duration_ms: out.duration_ms,
            });
        }
        let mut text = out.stdout.clone();
        text.push_str(&out.stderr);
        let (status, diagnostics) = classify_result(&text, out.exit_code, &self.cfg.patterns);
        Ok(SimResult {
            status,
            diagnostics,
            stdout: out.stdout,
            duration_ms: out.duration_ms,
        })
    }
}

impl Verifier for SimHarness {
    fn verify(&self, spec: &DesignSpec, src: &ExtractedSource, workdir: &Path) -> Result<SimResult, SimError> {
        claim_workdir(workdir)?;
        let mut stdout = String::new();
        let mut duration_ms = 0;
        for (j, tb) in spec.testbenches.iter().enumerate() {
            let dir = workdir.join(format!("tb{j}"));
            let mut res = self.check_one(spec, src, tb, &dir)?;
            duration_ms += res.duration_ms;
            stdout.push_str(&res.stdout);
            if res.status != SimStatus::Pass {
                res.stdout = stdout;
                res.duration_ms = duration_ms;
                return Ok(res);
            }
        }
        if !self.cfg.keep_artifacts {
            let _ = fs::remove_dir_all(workdir);
        }
        Ok(SimResult::pass(stdout, duration_ms))
    }
}

/// Create `dir`, refusing one that already holds files.
fn claim_workdir(dir: &Path) -> Result<(), SimError> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| SimError::io(dir, e))?;
        if entries.next().is_some() {
            return Err(SimError::WorkdirCollision(dir.to_path_buf()));
        }
        return Ok(());
    }
    fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))
}

/// Substitute placeholders in a command template. An argument that is
/// exactly `{sources}` expands to one argument per source.
fn expand(template: &[String], sources: &[String], out: &str, seed: u64) -> Result<Vec<String>, SimError> {
    if template.is_empty() {
        return Err(SimError::EmptyTemplate);
    }
    let mut argv = Vec::with_capacity(template.len() + sources.len());
    for arg in template {
        if arg == "{sources}" {
            argv.extend(sources.iter().cloned());
            continue;
        }
        argv.push(
            arg.replace("{sources}", &sources.join(" "))
                .replace("{out}", out)
                .replace("{seed}", &seed.to_string()),
        );
    }
    Ok(argv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sources_placeholder_expands_to_many_args() {
        let t: Vec<String> = ["iverilog", "-o", "{out}", "{sources}"].map(String::from).to_vec();
        let argv = expand(&t, &["a.v".into(), "/x/tb.v".into()], "sim.out", 1).unwrap();
        assert_eq!(argv, ["iverilog", "-o", "sim.out", "a.v", "/x/tb.v"]);
        let t: Vec<String> = ["vvp", "{out}", "+seed={seed}"].map(String::from).to_vec();
        assert_eq!(expand(&t, &[], "sim.out", 7).unwrap(), ["vvp", "sim.out", "+seed=7"]);
    }

    #[test]
    fn empty_template_rejected() {
        assert!(matches!(expand(&[], &[], "o", 0), Err(SimError::EmptyTemplate)));
    }

    #[test]
    fn collision_detected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("junk"), "x").unwrap();
        assert!(matches!(claim_workdir(dir.path()), Err(SimError::WorkdirCollision(_))));
        let fresh = dir.path().join("a/b");
        claim_workdir(&fresh).unwrap();
        assert!(fresh.is_dir());
    }
}
