// SPDX-License-Identifier: Apache-2.0

//! Bisection over the requested clock period for the fastest one that
//! still meets timing.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SynthError, SynthOutcome, Synthesizer};
use crate::extract::ExtractedSource;
use crate::sim::{Diagnostic, Phase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    pub lo_ps: f64,
    pub hi_ps: f64,
    pub tol_ps: f64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            lo_ps: 10.0,
            hi_ps: 2000.0,
            tol_ps: 1.0,
        }
    }
}

impl SweepParams {
    /// Worst-case synthesis runs: one per bound plus one per halving.
    pub fn max_runs(&self) -> u32 {
        ((self.hi_ps - self.lo_ps) / self.tol_ps).log2().ceil().max(0.0) as u32 + 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Fastest period observed to meet timing.
    pub clock_ps: f64,
    /// Outcome of the run at `clock_ps`; its report carries that period.
    pub outcome: SynthOutcome,
    pub runs: u32,
    pub warnings: Vec<Diagnostic>,
}

/// Find the smallest feasible period in `[lo, hi]` to within `tol`.
///
/// The upper bound is tried first and must meet timing. If the lower bound
/// also meets timing it is returned directly. Otherwise the bracket
/// (infeasible, feasible] is halved until narrower than `tol`. A design
/// that fails to synthesize at the upper bound is returned as-is with its
/// unsynthesizable report.
///
/// Feasibility is assumed monotone in the period. When a probe fails at a
/// period at least `tol` above the critical delay implied by an earlier
/// passing probe (period minus slack), a `NonMonotoneObserved` warning is
/// attached and the search carries on.
pub fn sweep_clock(
    synth: &Synthesizer,
    src: &ExtractedSource,
    top: &str,
    params: SweepParams,
    workdir: &Path,
) -> Result<SweepResult, SynthError> {
    let SweepParams { lo_ps, hi_ps, tol_ps } = params;
    if !(lo_ps > 0.0 && lo_ps < hi_ps && tol_ps > 0.0 && hi_ps.is_finite()) {
        return Err(SynthError::InvalidSweep { lo_ps, hi_ps, tol_ps });
    }
    let mut probe = Probe {
        synth,
        src,
        top,
        workdir,
        tol_ps,
        runs: 0,
        min_feasible_delay: f64::INFINITY,
        max_infeasible: f64::NEG_INFINITY,
        warnings: Vec::new(),
    };

    let at_hi = probe.run(hi_ps)?;
    if !at_hi.report.synthesizable {
        return Ok(probe.finish(hi_ps, at_hi));
    }
    if at_hi.met_timing != Some(true) {
        return Err(SynthError::InfeasibleAtUpperBound { hi_ps });
    }
    let at_lo = probe.run(lo_ps)?;
    if at_lo.met_timing == Some(true) {
        return Ok(probe.finish(lo_ps, at_lo));
    }

    let (mut bad, mut good, mut best) = (lo_ps, hi_ps, at_hi);
    while good - bad > tol_ps {
        let mid = bad + (good - bad) / 2.0;
        let out = probe.run(mid)?;
        if out.met_timing == Some(true) {
            good = mid;
            best = out;
        } else {
            bad = mid;
        }
    }
    Ok(probe.finish(good, best))
}

struct Probe<'a> {
    synth: &'a Synthesizer,
    src: &'a ExtractedSource,
    top: &'a str,
    workdir: &'a Path,
    tol_ps: f64,
    runs: u32,
    min_feasible_delay: f64,
    max_infeasible: f64,
    warnings: Vec<Diagnostic>,
}

impl Probe<'_> {
    fn run(&mut self, clock_ps: f64) -> Result<SynthOutcome, SynthError> {
        let dir = self.workdir.join(format!("run{:02}", self.runs));
        self.runs += 1;
        let out = self.synth.run_synthesis(self.src, self.top, clock_ps, &dir)?;
        match (out.met_timing, out.slack_ps) {
            (Some(true), Some(slack)) => {
                self.min_feasible_delay = self.min_feasible_delay.min(clock_ps - slack);
            }
            _ => self.max_infeasible = self.max_infeasible.max(clock_ps),
        }
        if self.warnings.is_empty() && self.max_infeasible >= self.min_feasible_delay + self.tol_ps {
            self.warnings.push(Diagnostic::new(
                Phase::SynthesisWarning,
                format!(
                    "NonMonotoneObserved: timing failed at {} ps although a passing run implied a critical delay of {} ps",
                    self.max_infeasible, self.min_feasible_delay
                ),
            ));
        }
        Ok(out)
    }

    fn finish(self, clock_ps: f64, outcome: SynthOutcome) -> SweepResult {
        SweepResult {
            clock_ps,
            outcome,
            runs: self.runs,
            warnings: self.warnings,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::extract_verilog;
    use crate::synth::{MockAdapter, MockEntry, ReportDialect, SynthAdapter, SynthJob};
    use std::sync::Arc;

    fn setup(threshold: f64) -> (Synthesizer, Arc<MockAdapter>, ExtractedSource) {
        let mock = Arc::new(MockAdapter::new(
            vec![MockEntry::new("adder_32bit", threshold, 587.31, 1005.67)],
            ReportDialect::DesignCompiler,
        ));
        let src = extract_verilog("module adder_32bit(); endmodule", "adder_32bit").unwrap();
        (Synthesizer::new(mock.clone(), 1), mock, src)
    }

    #[test]
    fn finds_published_optimized_clock() {
        let dir = tempfile::tempdir().unwrap();
        let (synth, mock, src) = setup(180.0);
        let p = SweepParams {
            lo_ps: 50.0,
            hi_ps: 500.0,
            tol_ps: 1.0,
        };
        let r = sweep_clock(&synth, &src, "adder_32bit", p, dir.path()).unwrap();
        assert!((180.0..=181.0).contains(&r.clock_ps), "{}", r.clock_ps);
        assert_eq!(r.outcome.met_timing, Some(true));
        assert_eq!(r.outcome.report.clock_ps, Some(r.clock_ps));
        assert!(r.runs <= p.max_runs());
        assert_eq!(mock.runs() as u32, r.runs);
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn feasible_everywhere_returns_lo() {
        let dir = tempfile::tempdir().unwrap();
        let (synth, _, src) = setup(5.0);
        let r = sweep_clock(&synth, &src, "adder_32bit", SweepParams::default(), dir.path()).unwrap();
        assert_eq!(r.clock_ps, 10.0);
        assert_eq!(r.runs, 2);
    }

    #[test]
    fn infeasible_at_hi() {
        let dir = tempfile::tempdir().unwrap();
        let (synth, _, src) = setup(5000.0);
        let err = sweep_clock(&synth, &src, "adder_32bit", SweepParams::default(), dir.path()).unwrap_err();
        assert!(matches!(err, SynthError::InfeasibleAtUpperBound { .. }));
    }

    #[test]
    fn bad_range_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (synth, _, src) = setup(100.0);
        let p = SweepParams {
            lo_ps: 500.0,
            hi_ps: 50.0,
            tol_ps: 1.0,
        };
        assert!(matches!(
            sweep_clock(&synth, &src, "adder_32bit", p, dir.path()),
            Err(SynthError::InvalidSweep { .. })
        ));
    }

    #[test]
    fn smaller_tolerance_costs_more_runs() {
        let dir = tempfile::tempdir().unwrap();
        let (synth, _, src) = setup(180.0);
        let coarse = SweepParams {
            lo_ps: 50.0,
            hi_ps: 500.0,
            tol_ps: 1.0,
        };
        let fine = SweepParams { tol_ps: 0.5, ..coarse };
        let a = sweep_clock(&synth, &src, "adder_32bit", coarse, &dir.path().join("a")).unwrap();
        let b = sweep_clock(&synth, &src, "adder_32bit", fine, &dir.path().join("b")).unwrap();
        assert!(b.runs > a.runs);
        assert!(b.clock_ps - 180.0 <= 0.5);
    }

    /// Feasible at and above 180 ps except inside 250..300 ps, where the
    /// reported slack is slightly negative.
    struct Notched;

    impl SynthAdapter for Notched {
        fn dialect(&self) -> ReportDialect {
            ReportDialect::DesignCompiler
        }

        fn synthesize(&self, job: &SynthJob<'_>) -> Result<String, SynthError> {
            let p = job.clock_ps;
            let slack = if (250.0..300.0).contains(&p) { -1.0 } else { p - 180.0 };
            let verdict = if slack >= 0.0 { "MET" } else { "VIOLATED" };
            std::fs::write(job.outdir.join("timing.rpt"), format!("slack ({verdict}) {slack}\n")).unwrap();
            std::fs::write(job.outdir.join("power.rpt"), "Total 1 uW 1 uW 1 uW 1 uW\n").unwrap();
            std::fs::write(job.outdir.join("area.rpt"), "Total cell area: 1\n").unwrap();
            Ok(String::new())
        }
    }

    #[test]
    fn non_monotone_is_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let synth = Synthesizer::new(Arc::new(Notched), 1);
        let src = extract_verilog("module m(); endmodule", "m").unwrap();
        let p = SweepParams {
            lo_ps: 50.0,
            hi_ps: 500.0,
            tol_ps: 1.0,
        };
        let r = sweep_clock(&synth, &src, "m", p, dir.path()).unwrap();
        assert_eq!(r.warnings.len(), 1);
        assert!(r.warnings[0].message.starts_with("NonMonotoneObserved"));
        assert_eq!(r.outcome.met_timing, Some(true));
    }
}
