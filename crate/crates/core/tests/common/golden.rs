// SPDX-License-Identifier: Apache-2.0

// Golden-corpus checks for the compiler, simulation and synthesis report
// parsers. Shared with the cli acceptance target via `#[path]`.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use hdlrepair_core::sim::{classify_result, parse_diagnostics, Diagnostic, PatternConfig, Phase, SimStatus};
use hdlrepair_core::synth::{parse_ppa_report, ReportBundle, ReportDialect, SynthError, TimeUnit};
use serde::Deserialize;

pub fn golden_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

#[derive(Debug, Default)]
pub struct GoldenTally {
    pub compile_cases: usize,
    pub run_cases: usize,
    pub synth_cases: usize,
    pub unsynthesizable_cases: usize,
    pub failures: Vec<String>,
}

#[derive(Deserialize)]
struct Located {
    file: Option<String>,
    line: Option<u32>,
    message: String,
}

#[derive(Deserialize)]
struct RunExpect {
    exit_code: Option<i32>,
    status: SimStatus,
    messages: Vec<String>,
}

#[derive(Deserialize)]
struct BundleMeta {
    dialect: ReportDialect,
    #[serde(default)]
    time_unit: TimeUnit,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SynthExpect {
    Unparseable {
        unparseable: String,
    },
    Parsed {
        synthesizable: bool,
        slack_ps: Option<f64>,
        power_uw: Option<f64>,
        area_um2: Option<f64>,
        errors: Vec<Located>,
        warnings: usize,
    },
}

fn files_with_ext(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    v
}

fn read_json<T: serde::de::DeserializeOwned>(p: &Path) -> T {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn same_located(got: &[Diagnostic], want: &[Located], phase: Phase) -> bool {
    got.len() == want.len()
        && got
            .iter()
            .zip(want)
            .all(|(g, w)| g.phase == phase && g.file == w.file && g.line == w.line && g.message == w.message)
}

pub fn check_golden(root: &Path) -> GoldenTally {
    let mut t = GoldenTally::default();

    for input in files_with_ext(&root.join("compile"), "stderr") {
        let want: Vec<Located> = read_json(&input.with_extension("json"));
        let got = parse_diagnostics(&fs::read_to_string(&input).unwrap());
        t.compile_cases += 1;
        if !same_located(&got, &want, Phase::Syntax) {
            t.failures.push(format!("{}: got {got:?}", input.display()));
        }
    }

    let patterns = PatternConfig::default();
    for input in files_with_ext(&root.join("run"), "out") {
        let want: RunExpect = read_json(&input.with_extension("json"));
        let (status, diags) = classify_result(&fs::read_to_string(&input).unwrap(), want.exit_code, &patterns);
        let messages: Vec<&str> = diags.iter().map(|d| d.message.as_str()).collect();
        t.run_cases += 1;
        let phases_ok = diags.iter().all(|d| d.phase == Phase::Functional);
        if status != want.status || messages != want.messages || !phases_ok {
            t.failures
                .push(format!("{}: got {status:?} {messages:?}", input.display()));
        }
    }

    let mut bundles: Vec<PathBuf> = fs::read_dir(root.join("synth"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    bundles.sort();
    for dir in bundles {
        let meta: BundleMeta = toml::from_str(&fs::read_to_string(dir.join("bundle.toml")).unwrap()).unwrap();
        let read = |n: &str| fs::read_to_string(dir.join(n)).unwrap_or_default();
        let raw = ReportBundle {
            timing: read("timing.rpt"),
            power: read("power.rpt"),
            area: read("area.rpt"),
            log: read("synth.log"),
        };
        let got = parse_ppa_report(&raw, meta.dialect, meta.time_unit);
        t.synth_cases += 1;
        let ok = match (read_json::<SynthExpect>(&dir.join("expected.json")), &got) {
            (SynthExpect::Unparseable { unparseable }, Err(SynthError::UnparseableReport(what))) => {
                unparseable == *what
            }
            (
                SynthExpect::Parsed {
                    synthesizable,
                    slack_ps,
                    power_uw,
                    area_um2,
                    errors,
                    warnings,
                },
                Ok(p),
            ) => {
                if !synthesizable {
                    t.unsynthesizable_cases += 1;
                }
                p.synthesizable == synthesizable
                    && p.slack_ps == slack_ps
                    && p.power_uw == power_uw
                    && p.area_um2 == area_um2
                    && same_located(&p.errors, &errors, Phase::SynthesisError)
                    && p.warnings.len() == warnings
            }
            _ => false,
        };
        if !ok {
            t.failures.push(format!("{}: got {got:?}", dir.display()));
        }
    }
    t
}
