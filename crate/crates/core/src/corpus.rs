// SPDX-License-Identifier: Apache-2.0

//! Benchmark corpus loading.
//!
//! Layout, one folder per design:
//!
//! ```text
//! <root>/manifest.toml                  optional: version = N
//! <root>/<design>/design_description.txt
//! <root>/<design>/testbench/*.v         every file is run
//! <root>/<design>/constraint.toml       optional
//! <root>/icl/                           few-shot pool, skipped here
//! ```
//!
//! `constraint.toml` may set `top_module`, `icl_category`, `name`, and the
//! PPA bounds `max_clock_ps`, `max_power_uW`, `max_area_um2`. Designs that
//! keep RTLLM's flat layout (`testbench.v` or `*_tb.v` next to the
//! description) are accepted too.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::synth::PpaConstraint;

pub const DESCRIPTION_FILE: &str = "design_description.txt";
pub const TESTBENCH_DIR: &str = "testbench";
pub const CONSTRAINT_FILE: &str = "constraint.toml";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const ICL_DIR: &str = "icl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub name: String,
    pub description: String,
    pub testbenches: Vec<PathBuf>,
    pub top_module: String,
    #[serde(default)]
    pub ppa_constraint: Option<PpaConstraint>,
    #[serde(default)]
    pub icl_category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub root: PathBuf,
    pub designs: Vec<DesignSpec>,
    pub manifest_version: u32,
}

impl Corpus {
    pub fn get(&self, name: &str) -> Option<&DesignSpec> {
        self.designs.iter().find(|d| d.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Violation {
    EmptyName,
    EmptyDescription,
    NoTestbench,
    IllegalModuleName,
    InvalidConstraint,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("corpus root {} is not a directory", .0.display())]
    NotADirectory(PathBuf),
    #[error("corpus has no designs")]
    EmptyCorpus,
    #[error("design {0}: missing or empty {DESCRIPTION_FILE}")]
    MissingDescription(String),
    #[error("design {0}: no testbench found")]
    MissingTestbench(String),
    #[error("duplicate design name {0}")]
    DuplicateDesignName(String),
    #[error("design {design}: bad {CONSTRAINT_FILE}: {message}")]
    BadConstraintFile { design: String, message: String },
    #[error("design {design}: invalid spec {violations:?}")]
    InvalidSpec { design: String, violations: Vec<Violation> },
    #[error("bad {MANIFEST_FILE}: {0}")]
    BadManifest(String),
    #[error("i/o error in {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Default, Deserialize)]
struct ConstraintFile {
    name: Option<String>,
    top_module: Option<String>,
    icl_category: Option<String>,
    #[serde(flatten)]
    ppa: PpaConstraint,
}

#[derive(Debug, Deserialize)]
struct ManifestFile {
    version: u32,
}

/// Load and validate every design folder under `root`, sorted by name.
pub fn load_corpus(root: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(CorpusError::NotADirectory(root.to_path_buf()));
    }
    let manifest_version = match fs::read_to_string(root.join(MANIFEST_FILE)) {
        Ok(text) => {
            toml::from_str::<ManifestFile>(&text)
                .map_err(|e| CorpusError::BadManifest(e.to_string()))?
                .version
        }
        Err(_) => 1,
    };

    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| !n.starts_with('.') && n != ICL_DIR)
        })
        .collect();
    dirs.sort();

    let mut designs = Vec::with_capacity(dirs.len());
    for dir in &dirs {
        designs.push(load_design(dir)?);
    }
    if designs.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    designs.sort_by(|a, b| a.name.cmp(&b.name));
    let mut seen = BTreeSet::new();
    for d in &designs {
        if !seen.insert(d.name.as_str()) {
            return Err(CorpusError::DuplicateDesignName(d.name.clone()));
        }
    }
    Ok(Corpus {
        root: root.to_path_buf(),
        designs,
        manifest_version,
    })
}

fn load_design(dir: &Path) -> Result<DesignSpec, CorpusError> {
    let folder = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let description = fs::read_to_string(dir.join(DESCRIPTION_FILE)).unwrap_or_default();
    if description.trim().is_empty() {
        return Err(CorpusError::MissingDescription(folder));
    }
    let constraint = match fs::read_to_string(dir.join(CONSTRAINT_FILE)) {
        Ok(text) => toml::from_str::<ConstraintFile>(&text).map_err(|e| CorpusError::BadConstraintFile {
            design: folder.clone(),
            message: e.to_string(),
        })?,
        Err(_) => ConstraintFile::default(),
    };
    let testbenches = find_testbenches(dir)?;
    if testbenches.is_empty() {
        return Err(CorpusError::MissingTestbench(folder));
    }
    let spec = DesignSpec {
        name: constraint.name.unwrap_or_else(|| folder.clone()),
        description,
        testbenches,
        top_module: constraint.top_module.unwrap_or(folder),
        ppa_constraint: constraint.ppa.has_bounds().then_some(constraint.ppa),
        icl_category: constraint.icl_category,
    };
    let violations = validate_spec(&spec);
    if !violations.is_empty() {
        return Err(CorpusError::InvalidSpec {
            design: spec.name,
            violations,
        });
    }
    Ok(spec)
}

fn find_testbenches(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let is_hdl = |p: &Path| matches!(p.extension().and_then(|e| e.to_str()), Some("v" | "sv"));
    let tb_dir = dir.join(TESTBENCH_DIR);
    let mut found: Vec<PathBuf> = if tb_dir.is_dir() {
        fs::read_dir(&tb_dir)
            .map_err(io_err(&tb_dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_hdl(p))
            .collect()
    } else {
        fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_hdl(p))
            .filter(|p| {
                let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("");
                stem == "testbench" || stem.ends_with("_tb")
            })
            .collect()
    };
    found.sort();
    Ok(found)
}

/// Legal plain Verilog identifier (escaped identifiers are not accepted).
pub fn is_verilog_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$')
}

/// Check the spec invariants; an empty list means valid.
pub fn validate_spec(spec: &DesignSpec) -> Vec<Violation> {
    let mut v = Vec::new();
    if spec.name.trim().is_empty() {
        v.push(Violation::EmptyName);
    }
    if spec.description.trim().is_empty() {
        v.push(Violation::EmptyDescription);
    }
    if spec.testbenches.is_empty() {
        v.push(Violation::NoTestbench);
    }
    if !is_verilog_identifier(&spec.top_module) {
        v.push(Violation::IllegalModuleName);
    }
    if spec.ppa_constraint.is_some_and(|c| !c.invalid_bounds().is_empty()) {
        v.push(Violation::InvalidConstraint);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> DesignSpec {
        DesignSpec {
            name: "adder_8bit".into(),
            description: "An 8-bit adder.".into(),
            testbenches: vec![PathBuf::from("tb.v")],
            top_module: "adder_8bit".into(),
            ppa_constraint: None,
            icl_category: None,
        }
    }

    fn design(root: &Path, name: &str, tb: bool) {
        let d = root.join(name);
        fs::create_dir_all(d.join(TESTBENCH_DIR)).unwrap();
        fs::write(d.join(DESCRIPTION_FILE), format!("Module name: {name}")).unwrap();
        if tb {
            fs::write(
                d.join(TESTBENCH_DIR).join(format!("{name}_tb.v")),
                "module tb; endmodule",
            )
            .unwrap();
        }
    }

    #[test]
    fn validate_examples() {
        assert!(validate_spec(&spec()).is_empty());
        let mut s = spec();
        s.description = "  ".into();
        assert_eq!(validate_spec(&s), [Violation::EmptyDescription]);
        let mut s = spec();
        s.top_module = "adder 8bit".into();
        assert_eq!(validate_spec(&s), [Violation::IllegalModuleName]);
    }

    #[test]
    fn identifiers() {
        assert!(is_verilog_identifier("_a$1"));
        assert!(!is_verilog_identifier("1abc"));
        assert!(!is_verilog_identifier(""));
    }

    #[test]
    fn loads_sorted_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        for n in ["zeta", "alpha", "mid"] {
            design(dir.path(), n, true);
        }
        fs::create_dir_all(dir.path().join(ICL_DIR)).unwrap();
        fs::write(
            dir.path().join("mid").join(CONSTRAINT_FILE),
            "top_module = \"mid_top\"\nmax_clock_ps = 300.0\nicl_category = \"fsm\"\n",
        )
        .unwrap();
        let c = load_corpus(dir.path()).unwrap();
        let names: Vec<_> = c.designs.iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names, ["alpha", "mid", "zeta"]);
        let mid = c.get("mid").unwrap();
        assert_eq!(mid.top_module, "mid_top");
        assert_eq!(mid.ppa_constraint.unwrap().max_clock_ps, Some(300.0));
        assert_eq!(mid.icl_category.as_deref(), Some("fsm"));
        assert_eq!(c.get("alpha").unwrap().top_module, "alpha");
        assert_eq!(c.manifest_version, 1);
        assert_eq!(load_corpus(dir.path()).unwrap(), c);
        assert!(c.designs.iter().all(|d| validate_spec(d).is_empty()));
    }

    #[test]
    fn empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_corpus(dir.path()), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn missing_testbench_names_design() {
        let dir = tempfile::tempdir().unwrap();
        design(dir.path(), "adder_8bit", false);
        match load_corpus(dir.path()) {
            Err(CorpusError::MissingTestbench(n)) => assert_eq!(n, "adder_8bit"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_description() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("x/testbench")).unwrap();
        assert!(matches!(load_corpus(dir.path()), Err(CorpusError::MissingDescription(n)) if n == "x"));
    }

    #[test]
    fn duplicate_names() {
        let dir = tempfile::tempdir().unwrap();
        design(dir.path(), "a", true);
        design(dir.path(), "b", true);
        fs::write(dir.path().join("b").join(CONSTRAINT_FILE), "name = \"a\"\n").unwrap();
        assert!(matches!(load_corpus(dir.path()), Err(CorpusError::DuplicateDesignName(n)) if n == "a"));
    }

    #[test]
    fn flat_rtllm_layout() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("fsm");
        fs::create_dir_all(&d).unwrap();
        fs::write(d.join(DESCRIPTION_FILE), "fsm").unwrap();
        fs::write(d.join("testbench.v"), "").unwrap();
        fs::write(d.join("reference.v"), "").unwrap();
        let c = load_corpus(dir.path()).unwrap();
        assert_eq!(c.designs[0].testbenches.len(), 1);
        assert!(c.designs[0].testbenches[0].ends_with("testbench.v"));
    }

    #[test]
    fn manifest_version_read() {
        let dir = tempfile::tempdir().unwrap();
        design(dir.path(), "a", true);
        fs::write(dir.path().join(MANIFEST_FILE), "version = 3\n").unwrap();
        assert_eq!(load_corpus(dir.path()).unwrap().manifest_version, 3);
    }

    #[test]
    fn bad_bound_rejected() {
        let dir = tempfile::tempdir().unwrap();
        design(dir.path(), "a", true);
        fs::write(dir.path().join("a").join(CONSTRAINT_FILE), "max_area_um2 = -5.0\n").unwrap();
        assert!(matches!(load_corpus(dir.path()), Err(CorpusError::InvalidSpec { .. })));
    }
}
