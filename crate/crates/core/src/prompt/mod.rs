// SPDX-License-Identifier: Apache-2.0

//! Prompt construction for the three conversation steps (initial request,
//! simulator-driven repair, PPA-driven optimization) and few-shot example
//! selection.

mod templates;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{DesignSpec, CONSTRAINT_FILE, DESCRIPTION_FILE};
use crate::extract::declared_modules;
use crate::sim::{Diagnostic, Phase};
use crate::synth::{check_constraints, GateResult, PpaConstraint, PpaReport};

pub use templates::{render, TemplateError, Templates, TEMPLATE_VERSION};

/// Category given to pool entries that do not declare one.
pub const DEFAULT_CATEGORY: &str = "general";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IclExample {
    pub name: String,
    pub description: String,
    pub verilog: String,
    pub category: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PromptKind {
    Initial,
    Rectify,
    PpaOptimize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub kind: PromptKind,
    pub body: String,
    pub shots: Vec<IclExample>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PromptError {
    #[error("rectify prompt needs at least one diagnostic")]
    EmptyDiagnostics,
    #[error("PPA prompt needs a constraint with at least one bound")]
    NoBoundsSet,
    #[error("report satisfies every bound; nothing to optimize")]
    NoViolations,
    #[error("report is not synthesizable; PPA prompting needs a synthesized design")]
    NotSynthesizable,
}

#[derive(Debug, thiserror::Error)]
pub enum IclError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("few-shot example {name}: {problem}")]
    Invalid { name: String, problem: String },
}

#[derive(Deserialize, Default)]
struct IclMeta {
    icl_category: Option<String>,
}

/// Load a few-shot pool: one folder per example holding
/// `design_description.txt`, a reference implementation (`reference.v`, or
/// the only non-testbench `.v` file) and optionally `constraint.toml` with
/// `icl_category`. Examples come back sorted by name.
pub fn load_icl_pool(dir: &Path) -> Result<Vec<IclExample>, IclError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| IclError::Io { path, source }
    };
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();

    let mut pool = Vec::with_capacity(dirs.len());
    for d in dirs {
        let name = d
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let invalid = |problem: &str| IclError::Invalid {
            name: name.clone(),
            problem: problem.to_string(),
        };
        let description = fs::read_to_string(d.join(DESCRIPTION_FILE)).map_err(io(&d.join(DESCRIPTION_FILE)))?;
        let reference = reference_file(&d)
            .map_err(io(&d))?
            .ok_or_else(|| invalid("no reference .v file"))?;
        let verilog = fs::read_to_string(&reference).map_err(io(&reference))?;
        let meta: IclMeta = match fs::read_to_string(d.join(CONSTRAINT_FILE)) {
            Ok(text) => toml::from_str(&text).map_err(|e| invalid(&e.to_string()))?,
            Err(_) => IclMeta::default(),
        };
        let ex = IclExample {
            name: name.clone(),
            description: description.trim_end().to_string(),
            verilog: verilog.trim_end().to_string(),
            category: meta.icl_category.unwrap_or_else(|| DEFAULT_CATEGORY.to_string()),
        };
        if let Some(problem) = icl_problem(&ex) {
            return Err(invalid(problem));
        }
        pool.push(ex);
    }
    Ok(pool)
}

fn reference_file(dir: &Path) -> std::io::Result<Option<PathBuf>> {
    let preferred = dir.join("reference.v");
    if preferred.is_file() {
        return Ok(Some(preferred));
    }
    let mut candidates: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "v"))
        .filter(|p| {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            stem != "testbench" && !stem.ends_with("_tb")
        })
        .collect();
    candidates.sort();
    Ok((candidates.len() == 1).then(|| candidates.remove(0)))
}

fn icl_problem(ex: &IclExample) -> Option<&'static str> {
    if ex.description.trim().is_empty() {
        Some("empty description")
    } else if ex.category.trim().is_empty() {
        Some("empty category")
    } else if declared_modules(&ex.verilog).is_empty() || !ex.verilog.contains("endmodule") {
        Some("reference has no module..endmodule span")
    } else {
        None
    }
}

/// Pick up to `k` examples, spreading over categories: one per category
/// per round, categories in lexicographic order, examples within a
/// category by name. The result does not depend on pool order.
pub fn select_icl_examples(pool: &[IclExample], k: usize) -> Vec<IclExample> {
    let mut by_cat: BTreeMap<&str, Vec<&IclExample>> = BTreeMap::new();
    for ex in pool {
        by_cat.entry(ex.category.as_str()).or_default().push(ex);
    }
    for v in by_cat.values_mut() {
        v.sort_by(|a, b| (&a.name, &a.description, &a.verilog).cmp(&(&b.name, &b.description, &b.verilog)));
    }
    let mut out = Vec::with_capacity(k.min(pool.len()));
    let mut round = 0;
    while out.len() < k.min(pool.len()) {
        for v in by_cat.values() {
            if out.len() == k {
                break;
            }
            if let Some(ex) = v.get(round) {
                out.push((*ex).clone());
            }
        }
        round += 1;
    }
    out
}

impl Templates {
    pub fn initial_prompt(&self, spec: &DesignSpec, shots: &[IclExample], self_planning: bool) -> PromptBundle {
        let shots_text: String = shots
            .iter()
            .enumerate()
            .map(|(i, ex)| {
                render(
                    &self.shot,
                    &[
                        ("index", &(i + 1).to_string()),
                        ("description", ex.description.trim_end()),
                        ("verilog", ex.verilog.trim_end()),
                    ],
                )
            })
            .collect();
        let planning = if self_planning { self.planning.as_str() } else { "" };
        let body = render(
            &self.initial,
            &[
                ("planning", planning),
                ("shots", &shots_text),
                ("description", spec.description.trim_end()),
                ("top_module", &spec.top_module),
            ],
        );
        PromptBundle {
            kind: PromptKind::Initial,
            body,
            shots: shots.to_vec(),
        }
    }

    /// Diagnostics are listed syntax-first, otherwise in input order. For
    /// located diagnostics in the failing source itself the offending line
    /// is quoted.
    pub fn rectify_prompt(&self, diags: &[Diagnostic], prev_source: &str) -> Result<PromptBundle, PromptError> {
        if diags.is_empty() {
            return Err(PromptError::EmptyDiagnostics);
        }
        let modules = declared_modules(prev_source);
        let lines: Vec<&str> = prev_source.lines().collect();
        let ordered = diags
            .iter()
            .filter(|d| d.phase == Phase::Syntax)
            .chain(diags.iter().filter(|d| d.phase != Phase::Syntax));
        let mut listing = String::new();
        for (i, d) in ordered.enumerate() {
            listing.push_str(&format!("{}. {}\n", i + 1, d));
            if let Some(code) = quoted_line(d, &modules, &lines) {
                listing.push_str(&format!("   line {}: {}\n", d.line.unwrap_or(0), code));
            }
        }
        let body = render(
            &self.rectify,
            &[("diagnostics", listing.trim_end()), ("source", prev_source.trim_end())],
        );
        Ok(PromptBundle {
            kind: PromptKind::Rectify,
            body,
            shots: Vec::new(),
        })
    }

    pub fn ppa_prompt(
        &self,
        spec: &DesignSpec,
        report: &PpaReport,
        constraint: &PpaConstraint,
        source: &str,
    ) -> Result<PromptBundle, PromptError> {
        if !constraint.has_bounds() {
            return Err(PromptError::NoBoundsSet);
        }
        if !report.synthesizable {
            return Err(PromptError::NotSynthesizable);
        }
        let violations = match check_constraints(report, constraint) {
            GateResult::Satisfied => return Err(PromptError::NoViolations),
            GateResult::Violated(v) => v,
        };
        let listing: Vec<String> = violations
            .iter()
            .map(|v| {
                format!(
                    "- {}: achieved {:?}, required ≤ {:?}",
                    v.metric.label(),
                    v.achieved,
                    v.required
                )
            })
            .collect();
        let body = render(
            &self.ppa,
            &[
                ("top_module", &spec.top_module),
                ("violations", &listing.join("\n")),
                ("source", source.trim_end()),
            ],
        );
        Ok(PromptBundle {
            kind: PromptKind::PpaOptimize,
            body,
            shots: Vec::new(),
        })
    }
}

fn quoted_line<'a>(d: &Diagnostic, modules: &[String], lines: &[&'a str]) -> Option<&'a str> {
    let stem = Path::new(d.file.as_deref()?).file_stem()?.to_str()?;
    let line = d.line? as usize;
    if line == 0 || !modules.iter().any(|m| m == stem) {
        return None;
    }
    lines.get(line - 1).map(|l| l.trim()).filter(|l| !l.is_empty())
}

pub fn build_initial_prompt(spec: &DesignSpec, shots: &[IclExample], self_planning: bool) -> PromptBundle {
    Templates::builtin().initial_prompt(spec, shots, self_planning)
}

pub fn build_rectify_prompt(diags: &[Diagnostic], prev_source: &str) -> Result<PromptBundle, PromptError> {
    Templates::builtin().rectify_prompt(diags, prev_source)
}

pub fn build_ppa_prompt(
    spec: &DesignSpec,
    report: &PpaReport,
    constraint: &PpaConstraint,
    source: &str,
) -> Result<PromptBundle, PromptError> {
    Templates::builtin().ppa_prompt(spec, report, constraint, source)
}
