// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::io;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::report::{parse_ppa_report, ReportBundle, ReportDialect, TimeUnit};
use super::{PpaReport, SynthError};
use crate::digest::sha256_hex;
use crate::exec::Semaphore;
use crate::extract::ExtractedSource;
use crate::sim::process::run_with_timeout;
use crate::sim::{Diagnostic, Phase};

pub const TIMING_REPORT: &str = "timing.rpt";
pub const POWER_REPORT: &str = "power.rpt";
pub const AREA_REPORT: &str = "area.rpt";
pub const SYNTH_LOG: &str = "synth.log";

/// One synthesis request. The source has already been written to `source`.
#[derive(Debug, Clone, Copy)]
pub struct SynthJob<'a> {
    pub source: &'a Path,
    pub source_text: &'a str,
    pub top: &'a str,
    pub clock_ps: f64,
    pub outdir: &'a Path,
}

/// A synthesis flow. Implementations leave `timing.rpt`, `power.rpt`,
/// `area.rpt` (and optionally `synth.log`) in the job's `outdir` and return
/// the tool's console output.
pub trait SynthAdapter: Send + Sync {
    fn dialect(&self) -> ReportDialect;

    fn time_unit(&self) -> TimeUnit {
        TimeUnit::Ps
    }

    fn synthesize(&self, job: &SynthJob<'_>) -> Result<String, SynthError>;
}

/// Result of synthesizing once at a requested clock period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOutcome {
    /// `None` when the design did not synthesize.
    pub met_timing: Option<bool>,
    pub slack_ps: Option<f64>,
    /// `clock_ps` is the requested period.
    pub report: PpaReport,
    pub raw: ReportBundle,
}

/// Shared handle over an adapter with a bound on concurrent runs.
pub struct Synthesizer {
    adapter: Arc<dyn SynthAdapter>,
    slots: Semaphore,
}

impl Synthesizer {
    pub fn new(adapter: Arc<dyn SynthAdapter>, slots: usize) -> Self {
        Self {
            adapter,
            slots: Semaphore::new(slots),
        }
    }

    pub fn adapter(&self) -> &dyn SynthAdapter {
        self.adapter.as_ref()
    }

    /// Synthesize `src` with `top` at `clock_ps` inside `workdir`.
    pub fn run_synthesis(
        &self,
        src: &ExtractedSource,
        top: &str,
        clock_ps: f64,
        workdir: &Path,
    ) -> Result<SynthOutcome, SynthError> {
        if !(clock_ps.is_finite() && clock_ps > 0.0) {
            return Err(SynthError::InvalidClock(clock_ps));
        }
        fs::create_dir_all(workdir).map_err(|e| SynthError::io(workdir, e))?;
        let source = workdir.join(format!("{top}.v"));
        fs::write(&source, &src.text).map_err(|e| SynthError::io(&source, e))?;
        let job = SynthJob {
            source: &source,
            source_text: &src.text,
            top,
            clock_ps,
            outdir: workdir,
        };
        let console = {
            let _slot = self.slots.acquire();
            self.adapter.synthesize(&job)?
        };
        let read = |name: &str| fs::read_to_string(workdir.join(name)).unwrap_or_default();
        let mut raw = ReportBundle {
            timing: read(TIMING_REPORT),
            power: read(POWER_REPORT),
            area: read(AREA_REPORT),
            log: read(SYNTH_LOG),
        };
        if !console.is_empty() {
            if !raw.log.is_empty() && !raw.log.ends_with('\n') {
                raw.log.push('\n');
            }
            raw.log.push_str(&console);
        }
        let parsed = parse_ppa_report(&raw, self.adapter.dialect(), self.adapter.time_unit())?;
        let digest = sha256_hex(&src.text);
        let mut report = if parsed.synthesizable {
            PpaReport::new(
                clock_ps,
                parsed.power_uw.unwrap_or_default(),
                parsed.area_um2.unwrap_or_default(),
                digest,
            )
        } else {
            PpaReport::unsynthesizable(parsed.errors.clone(), digest)
        };
        report.warnings = parsed.warnings.clone();
        Ok(SynthOutcome {
            met_timing: parsed.met_timing(),
            slack_ps: parsed.slack_ps,
            report,
            raw,
        })
    }
}

/// A user-supplied flow script described by a command template with the
/// placeholders `{source}`, `{top}`, `{clock_ps}` and `{outdir}`.
#[derive(Debug, Clone)]
pub struct CommandAdapter {
    pub argv: Vec<String>,
    pub dialect: ReportDialect,
    pub time_unit: TimeUnit,
    pub timeout: Duration,
}

impl SynthAdapter for CommandAdapter {
    fn dialect(&self) -> ReportDialect {
        self.dialect
    }

    fn time_unit(&self) -> TimeUnit {
        self.time_unit
    }

    fn synthesize(&self, job: &SynthJob<'_>) -> Result<String, SynthError> {
        if self.argv.is_empty() {
            return Err(SynthError::AdapterScriptFailure {
                message: "empty adapter command".into(),
            });
        }
        let clock = job.clock_ps.to_string();
        let argv: Vec<String> = self
            .argv
            .iter()
            .map(|a| {
                a.replace("{source}", &job.source.display().to_string())
                    .replace("{top}", job.top)
                    .replace("{clock_ps}", &clock)
                    .replace("{outdir}", &job.outdir.display().to_string())
            })
            .collect();
        let out = run_with_timeout(&argv, job.outdir, self.timeout).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied => {
                SynthError::ToolMissing { tool: argv[0].clone() }
            }
            _ => SynthError::io(job.outdir, e),
        })?;
        let console = format!("{}{}", out.stdout, out.stderr);
        if out.timed_out {
            return Err(SynthError::AdapterScriptFailure {
                message: format!("timed out after {} s", self.timeout.as_secs()),
            });
        }
        let have_reports = [TIMING_REPORT, POWER_REPORT, AREA_REPORT]
            .iter()
            .all(|f| job.outdir.join(f).is_file());
        let reported_errors = console
            .lines()
            .chain(
                fs::read_to_string(job.outdir.join(SYNTH_LOG))
                    .unwrap_or_default()
                    .lines(),
            )
            .any(|l| l.trim_start().to_ascii_lowercase().starts_with("error"));
        if out.exit_code != Some(0) && !have_reports && !reported_errors {
            let tail: Vec<&str> = console.lines().rev().take(5).collect();
            return Err(SynthError::AdapterScriptFailure {
                message: format!(
                    "exit status {:?}: {}",
                    out.exit_code,
                    tail.into_iter().rev().collect::<Vec<_>>().join(" | ")
                ),
            });
        }
        Ok(console)
    }
}

/// Table-driven stand-in for a synthesis flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockEntry {
    /// Top module name, or `*` for any.
    pub top: String,
    /// When set, the entry only applies to sources containing this text.
    #[serde(default)]
    pub marker: Option<String>,
    /// Timing is met iff the requested period is at least this.
    #[serde(default)]
    pub threshold_ps: f64,
    #[serde(default, rename = "power_uW", alias = "power_uw")]
    pub power_uw: f64,
    #[serde(default)]
    pub area_um2: f64,
    /// When set, synthesis fails with this error message.
    #[serde(default)]
    pub error: Option<String>,
}

impl MockEntry {
    pub fn new(top: &str, threshold_ps: f64, power_uw: f64, area_um2: f64) -> Self {
        Self {
            top: top.to_string(),
            marker: None,
            threshold_ps,
            power_uw,
            area_um2,
            error: None,
        }
    }

    pub fn with_marker(mut self, marker: &str) -> Self {
        self.marker = Some(marker.to_string());
        self
    }
}

/// Renders reports in a real dialect so the normal parser path is used.
#[derive(Debug)]
pub struct MockAdapter {
    entries: Vec<MockEntry>,
    dialect: ReportDialect,
    runs: AtomicUsize,
}

#[derive(Debug, Deserialize)]
struct MockTable {
    #[serde(default)]
    entry: Vec<MockEntry>,
}

impl MockAdapter {
    pub fn new(entries: Vec<MockEntry>, dialect: ReportDialect) -> Self {
        Self {
            entries,
            dialect,
            runs: AtomicUsize::new(0),
        }
    }

    /// Load `[[entry]]` tables from a TOML document.
    pub fn from_toml(text: &str, dialect: ReportDialect) -> Result<Self, toml::de::Error> {
        let table: MockTable = toml::from_str(text)?;
        Ok(Self::new(table.entry, dialect))
    }

    /// Number of synthesis runs performed so far.
    pub fn runs(&self) -> usize {
        self.runs.load(Ordering::SeqCst)
    }

    fn lookup(&self, top: &str, text: &str) -> Option<&MockEntry> {
        self.entries
            .iter()
            .find(|e| (e.top == "*" || e.top == top) && e.marker.as_deref().is_none_or(|m| text.contains(m)))
    }
}

impl SynthAdapter for MockAdapter {
    fn dialect(&self) -> ReportDialect {
        self.dialect
    }

    fn synthesize(&self, job: &SynthJob<'_>) -> Result<String, SynthError> {
        self.runs.fetch_add(1, Ordering::SeqCst);
        let entry = self
            .lookup(job.top, job.source_text)
            .ok_or_else(|| SynthError::AdapterScriptFailure {
                message: format!("no mock entry for top module {}", job.top),
            })?;
        let write = |name: &str, text: String| {
            let p = job.outdir.join(name);
            fs::write(&p, text).map_err(|e| SynthError::io(&p, e))
        };
        if let Some(err) = &entry.error {
            write(SYNTH_LOG, format!("Error: {err}\n"))?;
            return Ok(String::new());
        }
        let slack = job.clock_ps - entry.threshold_ps;
        let (timing, power, area) = render(self.dialect, job, entry, slack);
        write(TIMING_REPORT, timing)?;
        write(POWER_REPORT, power)?;
        write(AREA_REPORT, area)?;
        Ok(String::new())
    }
}

fn render(dialect: ReportDialect, job: &SynthJob<'_>, e: &MockEntry, slack: f64) -> (String, String, String) {
    let verdict = if slack >= 0.0 { "MET" } else { "VIOLATED" };
    match dialect {
        ReportDialect::DesignCompiler => (
            format!(
                "Report : timing\nDesign : {top}\n\n  clock clk (rise edge)        {p}\n  data required time           {p}\n  data arrival time            -{t}\n  ------------------------------------\n  slack ({verdict})            {slack}\n",
                top = job.top,
                p = job.clock_ps,
                t = e.threshold_ps,
            ),
            format!(
                "Report : power\nDesign : {top}\n\nPower Group   Internal   Switching   Leakage   Total\nTotal         {pw} uW     0 uW        0 nW      {pw} uW\n",
                top = job.top,
                pw = e.power_uw,
            ),
            format!("Report : area\nDesign : {}\n\nTotal cell area:          {}\n", job.top, e.area_um2),
        ),
        ReportDialect::YosysSta => (
            format!(
                "Startpoint: in\nEndpoint: out\n  {p}   data required time\n  -{t}   data arrival time\n  {slack}   slack ({verdict})\n",
                p = job.clock_ps,
                t = e.threshold_ps,
            ),
            format!(
                "Group                  Internal  Switching    Leakage      Total\nTotal                  {w}e-6  0  0  {w}e-6  100.0%\n",
                w = e.power_uw
            ),
            format!("   Chip area for module '\\{}': {}\n", job.top, e.area_um2),
        ),
    }
}

/// Diagnostic used when an adapter failure is reported as data.
pub fn infrastructure_diagnostic(err: &SynthError) -> Diagnostic {
    Diagnostic::new(Phase::Infrastructure, err.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::extract_verilog;

    fn src(text: &str, top: &str) -> ExtractedSource {
        extract_verilog(text, top).unwrap()
    }

    #[test]
    fn mock_adder_8bit_row() {
        let dir = tempfile::tempdir().unwrap();
        for dialect in [ReportDialect::DesignCompiler, ReportDialect::YosysSta] {
            let mock = Arc::new(MockAdapter::new(
                vec![MockEntry::new("adder_8bit", 318.5, 6.3, 38.5)],
                dialect,
            ));
            let synth = Synthesizer::new(mock.clone(), 1);
            let s = src("module adder_8bit(input a); endmodule", "adder_8bit");
            let wd = dir.path().join(format!("{dialect:?}"));
            let out = synth.run_synthesis(&s, "adder_8bit", 318.5, &wd).unwrap();
            assert_eq!(out.met_timing, Some(true));
            assert_eq!(out.report.clock_ps, Some(318.5));
            assert_eq!(out.report.power_uw, Some(6.3));
            assert_eq!(out.report.area_um2, Some(38.5));
            assert!(out.report.is_consistent());
            let out = synth.run_synthesis(&s, "adder_8bit", 300.0, &wd.join("b")).unwrap();
            assert_eq!(out.met_timing, Some(false));
            assert_eq!(mock.runs(), 2);
        }
    }

    #[test]
    fn mock_unsynthesizable_and_marker() {
        let dir = tempfile::tempdir().unwrap();
        let mock = MockAdapter::from_toml(
            r#"
[[entry]]
top = "adder_32bit"
marker = "pipelined"
threshold_ps = 180.0
power_uW = 587.31
area_um2 = 1005.67

[[entry]]
top = "adder_32bit"
threshold_ps = 500.0
power_uW = 14.2
area_um2 = 211.6

[[entry]]
top = "calendar"
error = "calendar.v:9: delay control in always block is not supported"
"#,
            ReportDialect::DesignCompiler,
        )
        .unwrap();
        let synth = Synthesizer::new(Arc::new(mock), 2);
        let fast = src("module adder_32bit(); // pipelined\nendmodule", "adder_32bit");
        let out = synth
            .run_synthesis(&fast, "adder_32bit", 200.0, &dir.path().join("f"))
            .unwrap();
        assert_eq!(out.met_timing, Some(true));
        assert_eq!(out.report.power_uw, Some(587.31));

        let bad = src("module calendar(); endmodule", "calendar");
        let out = synth
            .run_synthesis(&bad, "calendar", 500.0, &dir.path().join("c"))
            .unwrap();
        assert!(!out.report.synthesizable);
        assert_eq!(out.met_timing, None);
        assert_eq!(out.report.errors[0].line, Some(9));
        assert!(out.report.is_consistent());

        let unknown = src("module mystery(); endmodule", "mystery");
        assert!(matches!(
            synth.run_synthesis(&unknown, "mystery", 500.0, &dir.path().join("m")),
            Err(SynthError::AdapterScriptFailure { .. })
        ));
    }

    #[test]
    fn command_adapter_missing_tool() {
        let dir = tempfile::tempdir().unwrap();
        let adapter = CommandAdapter {
            argv: vec!["no-such-synth-tool-xyz".into(), "{source}".into()],
            dialect: ReportDialect::DesignCompiler,
            time_unit: TimeUnit::Ps,
            timeout: Duration::from_secs(5),
        };
        let synth = Synthesizer::new(Arc::new(adapter), 1);
        let s = src("module m(); endmodule", "m");
        assert!(matches!(
            synth.run_synthesis(&s, "m", 100.0, dir.path()),
            Err(SynthError::ToolMissing { .. })
        ));
    }

    #[cfg(unix)]
    #[test]
    fn command_adapter_script_writes_reports() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("flow.sh");
        fs::write(
            &script,
            "#!/bin/sh\nout=$4\nprintf '  slack (MET)   %s\\n' 1.5 > $out/timing.rpt\nprintf 'Total 1 uW 1 uW 1 nW 2.5 uW\\n' > $out/power.rpt\nprintf 'Total cell area: 12.25\\n' > $out/area.rpt\necho \"synthesized $2 at $3\"\n",
        )
        .unwrap();
        let adapter = CommandAdapter {
            argv: [
                "sh",
                script.to_str().unwrap(),
                "{source}",
                "{top}",
                "{clock_ps}",
                "{outdir}",
            ]
            .map(String::from)
            .to_vec(),
            dialect: ReportDialect::DesignCompiler,
            time_unit: TimeUnit::Ps,
            timeout: Duration::from_secs(10),
        };
        let synth = Synthesizer::new(Arc::new(adapter), 1);
        let s = src("module m(); endmodule", "m");
        let out = synth.run_synthesis(&s, "m", 250.0, &dir.path().join("w")).unwrap();
        assert_eq!(out.slack_ps, Some(1.5));
        assert_eq!(out.report.power_uw, Some(2.5));
        assert_eq!(out.report.area_um2, Some(12.25));
        assert!(out.raw.log.contains("synthesized m at 250"));
    }

    #[cfg(unix)]
    #[test]
    fn command_adapter_silent_failure() {
        let dir = tempfile::tempdir().unwrap();
        let adapter = CommandAdapter {
            argv: ["sh", "-c", "echo license checkout failed; exit 7"]
                .map(String::from)
                .to_vec(),
            dialect: ReportDialect::DesignCompiler,
            time_unit: TimeUnit::Ps,
            timeout: Duration::from_secs(10),
        };
        let synth = Synthesizer::new(Arc::new(adapter), 1);
        let s = src("module m(); endmodule", "m");
        let err = synth.run_synthesis(&s, "m", 250.0, dir.path()).unwrap_err();
        assert!(err.to_string().contains("license checkout failed"));
    }
}
