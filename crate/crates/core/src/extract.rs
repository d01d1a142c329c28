// SPDX-License-Identifier: Apache-2.0

//! Pull one Verilog source unit out of free-form model output.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtractionRule {
    FencedBlock,
    ModuleSpan,
    WholeResponse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExtractWarning {
    /// The expected top module is not declared in the extracted text.
    MissingExpectedTop { expected: String },
    /// Several modules declared and none matched the expected name.
    MultiModule { chosen: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedSource {
    pub text: String,
    pub rule: ExtractionRule,
    /// Declared module names, in declaration order.
    pub top_modules: Vec<String>,
    pub warnings: Vec<ExtractWarning>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no Verilog module found in the response")]
pub struct NoVerilogFound;

static MODULE_DECL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\bmodule\s+([A-Za-z_][A-Za-z0-9_$]*)").expect("static regex"));
static KEYWORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(module|endmodule)\b").expect("static regex"));

/// Extract the Verilog the model meant to hand back.
///
/// Rules, first match wins: the last fenced code block holding a balanced
/// `module`..`endmodule` unit; otherwise the span from the first `module`
/// to the last `endmodule` (reported as `WholeResponse` when that span is
/// the entire trimmed response). The returned text is always a contiguous
/// slice of `response`.
pub fn extract_verilog(response: &str, expected_top: &str) -> Result<ExtractedSource, NoVerilogFound> {
    let (text, rule) = match fenced_blocks(response).into_iter().rev().find(|b| is_balanced_unit(b)) {
        Some(block) => (block, ExtractionRule::FencedBlock),
        None => {
            let span = module_span(response).ok_or(NoVerilogFound)?;
            let rule = if span == response.trim() {
                ExtractionRule::WholeResponse
            } else {
                ExtractionRule::ModuleSpan
            };
            (span, rule)
        }
    };
    let top_modules = declared_modules(text);
    if top_modules.is_empty() {
        return Err(NoVerilogFound);
    }
    let mut warnings = Vec::new();
    if !top_modules.iter().any(|m| m == expected_top) {
        warnings.push(ExtractWarning::MissingExpectedTop {
            expected: expected_top.to_string(),
        });
    }
    Ok(ExtractedSource {
        text: text.to_string(),
        rule,
        top_modules,
        warnings,
    })
}

/// Pick the module a testbench or synthesis run should treat as top.
pub fn top_module_name(src: &ExtractedSource, expected: &str) -> (String, Option<ExtractWarning>) {
    if src.top_modules.iter().any(|m| m == expected) {
        return (expected.to_string(), None);
    }
    match src.top_modules.as_slice() {
        [only] => (only.clone(), None),
        [.., last] => (last.clone(), Some(ExtractWarning::MultiModule { chosen: last.clone() })),
        [] => (expected.to_string(), None),
    }
}

/// Module names declared outside comments and strings.
pub fn declared_modules(text: &str) -> Vec<String> {
    let masked = mask_comments(text);
    MODULE_DECL.captures_iter(&masked).map(|c| c[1].to_string()).collect()
}

fn fenced_blocks(response: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut open: Option<usize> = None;
    let mut offset = 0;
    for line in response.split_inclusive('\n') {
        let is_fence = line.trim_start().starts_with("```");
        match (is_fence, open) {
            (true, None) => open = Some(offset + line.len()),
            (true, Some(start)) => {
                let end = offset.max(start);
                let body = &response[start..end];
                blocks.push(body.strip_suffix('\n').unwrap_or(body));
                open = None;
            }
            _ => {}
        }
        offset += line.len();
    }
    blocks
}

fn is_balanced_unit(text: &str) -> bool {
    let masked = mask_comments(text);
    let mut depth = 0i32;
    let mut units = 0;
    for m in KEYWORD.find_iter(&masked) {
        if m.as_str() == "module" {
            depth += 1;
        } else {
            depth -= 1;
            if depth < 0 {
                return false;
            }
            if depth == 0 {
                units += 1;
            }
        }
    }
    depth == 0 && units > 0
}

fn module_span(response: &str) -> Option<&str> {
    let masked = mask_comments(response);
    let first = KEYWORD.find_iter(&masked).find(|m| m.as_str() == "module")?;
    let last = KEYWORD
        .find_iter(&masked)
        .filter(|m| m.as_str() == "endmodule" && m.start() > first.start())
        .last()?;
    let span = &response[first.start()..last.end()];
    is_balanced_unit(span).then_some(span)
}

/// Replace comment and string contents with spaces, keeping byte offsets.
fn mask_comments(text: &str) -> String {
    let bytes = text.as_bytes();
    let mut out = bytes.to_vec();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    out[i] = b' ';
                    i += 1;
                }
            }
            b'/' if bytes.get(i + 1) == Some(&b'*') => {
                let start = i;
                i += 2;
                while i < bytes.len() && !(bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/')) {
                    i += 1;
                }
                let end = (i + 2).min(bytes.len());
                for b in &mut out[start..end] {
                    if *b != b'\n' {
                        *b = b' ';
                    }
                }
                i = end;
            }
            b'"' => {
                out[i] = b' ';
                i += 1;
                while i < bytes.len() && bytes[i] != b'"' && bytes[i] != b'\n' {
                    if bytes[i] == b'\\' && i + 1 < bytes.len() {
                        out[i] = b' ';
                        i += 1;
                    }
                    out[i] = b' ';
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'"' {
                    out[i] = b' ';
                    i += 1;
                }
            }
            _ => i += 1,
        }
    }
    // Only ASCII bytes were overwritten with ASCII spaces, but multibyte
    // sequences inside comments may have been partially blanked.
    String::from_utf8(out).unwrap_or_else(|e| {
        e.into_bytes()
            .into_iter()
            .map(|b| if b.is_ascii() { b as char } else { ' ' })
            .collect()
    })
}
