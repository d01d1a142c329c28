// SPDX-License-Identifier: Apache-2.0

//! Pass-rate curves over correction attempts and the report files.
//!
//! Syntax correctness is counted per generated code, functional
//! correctness per design (a design counts once any of its codes passes).
//! Both are cumulative over attempts. Percentages are truncated, not
//! rounded, to two decimals.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::engine::{AttemptOutcome, DesignResult};
use crate::sim::SimStatus;

pub const CURVES_FILE: &str = "curves.csv";
pub const PPA_FILE: &str = "ppa.csv";
pub const MANIFEST_FILE: &str = "run.json";
pub const SUMMARY_FILE: &str = "summary.txt";

/// A percentage held exactly in hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Percent(u32);

impl Percent {
    pub fn hundredths(self) -> u32 {
        self.0
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl FromStr for Percent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (int, frac) = s.split_once('.').ok_or_else(|| format!("not a percentage: {s}"))?;
        if frac.len() != 2 {
            return Err(format!("expected two decimals: {s}"));
        }
        let int: u32 = int.parse().map_err(|_| format!("not a percentage: {s}"))?;
        let frac: u32 = frac.parse().map_err(|_| format!("not a percentage: {s}"))?;
        Ok(Percent(int * 100 + frac))
    }
}

impl Serialize for Percent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Percent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("percentage of zero total")]
    ZeroDenominator,
    #[error("count {num} exceeds total {den}")]
    CountExceedsTotal { num: u64, den: u64 },
    #[error("duplicate outcome for {design} candidate {candidate} attempt {attempt}")]
    DuplicateOutcome {
        design: String,
        candidate: u32,
        attempt: u32,
    },
    #[error("incomplete outcomes: {0}")]
    IncompleteOutcomes(String),
    #[error("cannot write {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// `floor(10000 * num / den) / 100`, exactly.
pub fn format_percent(num: u64, den: u64) -> Result<Percent, MetricsError> {
    if den == 0 {
        return Err(MetricsError::ZeroDenominator);
    }
    if num > den {
        return Err(MetricsError::CountExceedsTotal { num, den });
    }
    Ok(Percent((u128::from(num) * 10_000 / u128::from(den)) as u32))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassCurves {
    /// Indexed by attempt, `0..=K`.
    pub syntax_pct: Vec<Percent>,
    pub functional_pct: Vec<Percent>,
    pub syntax_counts: Vec<u64>,
    pub functional_counts: Vec<u64>,
    pub codes_total: u64,
    pub designs_total: u64,
}

impl PassCurves {
    /// Curves of a run with no designs: no rows.
    pub fn empty() -> Self {
        Self {
            syntax_pct: Vec::new(),
            functional_pct: Vec::new(),
            syntax_counts: Vec::new(),
            functional_counts: Vec::new(),
            codes_total: 0,
            designs_total: 0,
        }
    }
}

/// Running counts, fed one outcome at a time.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    max_corrections: u32,
    seen: BTreeSet<(String, u32, u32)>,
    /// Earliest attempt at which each (design, candidate) compiled.
    first_syntax_ok: BTreeMap<(String, u32), u32>,
    /// Earliest attempt at which each design had a passing code.
    first_pass: BTreeMap<String, u32>,
}

impl MetricsAccumulator {
    pub fn new(max_corrections: u32) -> Self {
        Self {
            max_corrections,
            seen: BTreeSet::new(),
            first_syntax_ok: BTreeMap::new(),
            first_pass: BTreeMap::new(),
        }
    }

    pub fn record_outcome(&mut self, o: &AttemptOutcome) -> Result<(), MetricsError> {
        if o.attempt > self.max_corrections {
            return Err(MetricsError::IncompleteOutcomes(format!(
                "{} candidate {} has attempt {} beyond K={}",
                o.design, o.candidate, o.attempt, self.max_corrections
            )));
        }
        if !self.seen.insert((o.design.clone(), o.candidate, o.attempt)) {
            return Err(MetricsError::DuplicateOutcome {
                design: o.design.clone(),
                candidate: o.candidate,
                attempt: o.attempt,
            });
        }
        if o.status != SimStatus::SyntaxFail {
            let e = self
                .first_syntax_ok
                .entry((o.design.clone(), o.candidate))
                .or_insert(o.attempt);
            *e = (*e).min(o.attempt);
        }
        if o.status == SimStatus::Pass {
            let e = self.first_pass.entry(o.design.clone()).or_insert(o.attempt);
            *e = (*e).min(o.attempt);
        }
        Ok(())
    }

    /// Codes that compiled at some attempt `<= i`, for each `i`.
    pub fn syntax_counts(&self) -> Vec<u64> {
        cumulative(self.first_syntax_ok.values(), self.max_corrections)
    }

    /// Designs with a passing code at some attempt `<= i`, for each `i`.
    pub fn functional_counts(&self) -> Vec<u64> {
        cumulative(self.first_pass.values(), self.max_corrections)
    }

    pub fn curves(&self, n_designs: u64, n_candidates: u64) -> Result<PassCurves, MetricsError> {
        if n_designs == 0 {
            return Ok(PassCurves::empty());
        }
        let codes_total = n_designs * n_candidates;
        let syntax_counts = self.syntax_counts();
        let functional_counts = self.functional_counts();
        Ok(PassCurves {
            syntax_pct: syntax_counts
                .iter()
                .map(|&c| format_percent(c, codes_total))
                .collect::<Result<_, _>>()?,
            functional_pct: functional_counts
                .iter()
                .map(|&c| format_percent(c, n_designs))
                .collect::<Result<_, _>>()?,
            syntax_counts,
            functional_counts,
            codes_total,
            designs_total: n_designs,
        })
    }
}

fn cumulative<'a>(firsts: impl Iterator<Item = &'a u32>, k: u32) -> Vec<u64> {
    let mut per = vec![0u64; k as usize + 1];
    for &a in firsts {
        per[a as usize] += 1;
    }
    per.iter()
        .scan(0, |acc, n| {
            *acc += n;
            Some(*acc)
        })
        .collect()
}

/// Compute the curves after checking that `outcomes` is a complete record
/// of `n_designs` designs with `n_candidates` candidates each.
pub fn pass_curves(
    outcomes: &[AttemptOutcome],
    n_designs: u64,
    n_candidates: u32,
    max_corrections: u32,
) -> Result<PassCurves, MetricsError> {
    let mut acc = MetricsAccumulator::new(max_corrections);
    let mut per_candidate: BTreeMap<(&str, u32), Vec<&AttemptOutcome>> = BTreeMap::new();
    for o in outcomes {
        acc.record_outcome(o)?;
        if !(1..=n_candidates).contains(&o.candidate) {
            return Err(MetricsError::IncompleteOutcomes(format!(
                "{} has candidate index {} outside 1..={n_candidates}",
                o.design, o.candidate
            )));
        }
        per_candidate.entry((&o.design, o.candidate)).or_default().push(o);
    }
    let designs: BTreeSet<&str> = per_candidate.keys().map(|(d, _)| *d).collect();
    if designs.len() as u64 != n_designs {
        return Err(MetricsError::IncompleteOutcomes(format!(
            "outcomes cover {} designs, expected {n_designs}",
            designs.len()
        )));
    }
    for d in &designs {
        for g in 1..=n_candidates {
            let Some(list) = per_candidate.get_mut(&(*d, g)) else {
                return Err(MetricsError::IncompleteOutcomes(format!(
                    "{d} candidate {g} has no outcomes"
                )));
            };
            list.sort_by_key(|o| o.attempt);
            for (i, o) in list.iter().enumerate() {
                if o.attempt as usize != i {
                    return Err(MetricsError::IncompleteOutcomes(format!(
                        "{d} candidate {g} skips attempt {i}"
                    )));
                }
                if o.status == SimStatus::Pass && i + 1 != list.len() {
                    return Err(MetricsError::IncompleteOutcomes(format!(
                        "{d} candidate {g} continues after passing at attempt {i}"
                    )));
                }
            }
        }
    }
    acc.curves(n_designs, u64::from(n_candidates))
}

/// Run-level facts recorded next to the report.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub config_digest: String,
    pub template_version: String,
    pub trace_digest: String,
    pub model_id: String,
    pub n_designs: u64,
    pub n_candidates: u32,
    pub max_corrections: u32,
    pub designs: Vec<String>,
}

const SENTINEL: &str = "-";

fn ppa_cells(r: &DesignResult) -> [String; 3] {
    match r.final_report.as_ref().filter(|rep| rep.synthesizable) {
        Some(rep) => [rep.clock_ps, rep.power_uw, rep.area_um2]
            .map(|v| v.map_or_else(|| SENTINEL.to_string(), |x| format!("{x:?}"))),
        None => [SENTINEL; 3].map(str::to_string),
    }
}

pub fn curves_csv(curves: &PassCurves) -> String {
    let mut out = String::from("attempt,syntax_pct,functional_pct\n");
    for (i, (s, f)) in curves.syntax_pct.iter().zip(&curves.functional_pct).enumerate() {
        out.push_str(&format!("{i},{s},{f}\n"));
    }
    out
}

pub fn ppa_csv(results: &[DesignResult]) -> String {
    let mut out = String::from("design,clock_ps,power_uW,area_um2\n");
    for r in sorted(results) {
        let [c, p, a] = ppa_cells(r);
        out.push_str(&format!("{},{c},{p},{a}\n", r.design));
    }
    out
}

fn sorted(results: &[DesignResult]) -> Vec<&DesignResult> {
    let mut v: Vec<&DesignResult> = results.iter().collect();
    v.sort_by(|a, b| a.design.cmp(&b.design));
    v
}

fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.first().map_or(0, Vec::len);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn summary_text(results: &[DesignResult], curves: &PassCurves, manifest: &RunManifest) -> String {
    let mut out = format!(
        "model {}  designs {}  candidates {}  K {}\n\n",
        manifest.model_id, manifest.n_designs, manifest.n_candidates, manifest.max_corrections
    );
    let mut rows = vec![vec![
        "attempt".to_string(),
        format!("syntax % (of {})", curves.codes_total),
        format!("functional % (of {})", curves.designs_total),
    ]];
    for i in 0..curves.syntax_pct.len() {
        rows.push(vec![
            i.to_string(),
            format!("{} ({})", curves.syntax_pct[i], curves.syntax_counts[i]),
            format!("{} ({})", curves.functional_pct[i], curves.functional_counts[i]),
        ]);
    }
    out.push_str(&table(&rows));
    out.push('\n');
    let mut rows = vec![["design", "passing", "clock (ps)", "power (uW)", "area (um2)"]
        .map(str::to_string)
        .to_vec()];
    for r in sorted(results) {
        let passing = r.candidates.iter().filter(|c| c.passed()).count();
        let [c, p, a] = ppa_cells(r);
        rows.push(vec![
            r.design.clone(),
            format!("{passing}/{}", r.candidates.len()),
            c,
            p,
            a,
        ]);
    }
    out.push_str(&table(&rows));
    out
}

/// Write `curves.csv`, `ppa.csv`, `run.json` and `summary.txt` into `out`.
/// Output bytes depend only on the arguments.
pub fn emit_report(
    results: &[DesignResult],
    curves: &PassCurves,
    manifest: &RunManifest,
    out: &Path,
) -> Result<(), MetricsError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| MetricsError::Io { path, source }
    };
    fs::create_dir_all(out).map_err(io(out))?;
    let mut json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    json.push('\n');
    let files = [
        (CURVES_FILE, curves_csv(curves)),
        (PPA_FILE, ppa_csv(results)),
        (MANIFEST_FILE, json),
        (SUMMARY_FILE, summary_text(results, curves, manifest)),
    ];
    for (name, text) in files {
        let path = out.join(name);
        fs::write(&path, text).map_err(io(&path))?;
    }
    Ok(())
}
