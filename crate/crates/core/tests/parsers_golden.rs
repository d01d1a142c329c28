// SPDX-License-Identifier: Apache-2.0

mod common {
    pub mod golden;
}

use common::golden::{check_golden, golden_root};

#[test]
fn golden_corpus_extracts_every_field() {
    let t = check_golden(&golden_root());
    assert!(t.compile_cases >= 20, "only {} compiler captures", t.compile_cases);
    assert!(t.synth_cases >= 10, "only {} synthesis bundles", t.synth_cases);
    assert!(t.unsynthesizable_cases >= 1);
    assert!(t.failures.is_empty(), "{:#?}", t.failures);
}
