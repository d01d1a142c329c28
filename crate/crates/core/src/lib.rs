// SPDX-License-Identifier: Apache-2.0

//! Generate-and-repair orchestration for LLM-written Verilog.
//!
//! A design description is turned into a prompt, sent to a text-generation
//! backend, and the returned module is repaired in two nested loops:
//!
//! * simulator feedback ([`engine::rectify_loop`]): compile and run the
//!   candidate against its testbenches, feed syntax and functional
//!   diagnostics back into the conversation, retry up to `K` times;
//! * synthesis feedback ([`engine::ppa_optimize_loop`]): sweep the clock
//!   constraint for the fastest feasible period, gate the resulting
//!   power/performance/area triple against per-design bounds and ask the
//!   model for an optimized module when a bound is violated.
//!
//! [`metrics`] turns the per-attempt outcomes into cumulative pass-rate
//! curves and PPA tables.

pub mod corpus;
pub mod digest;
pub mod engine;
pub mod exec;
pub mod extract;
pub mod gateway;
pub mod metrics;
pub mod prompt;
pub mod scripted;
pub mod sim;
pub mod synth;

pub use corpus::{load_corpus, validate_spec, Corpus, DesignSpec};
pub use engine::{run_design, LoopConfig, Toolchain};
pub use extract::{extract_verilog, ExtractedSource};
pub use gateway::{Conversation, Gateway, GenerationParams};
pub use metrics::{pass_curves, PassCurves, Percent};
pub use sim::{Diagnostic, Phase, SimResult, SimStatus};
pub use synth::{PpaConstraint, PpaReport};
