// SPDX-License-Identifier: Apache-2.0

use std::sync::LazyLock;

use regex::Regex;

use super::{Diagnostic, Phase};

/// `file:line: message`, with an optional `:column` after the line.
static LOCATED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?P<file>[^\s:][^:]*):(?P<line>\d+):(?:(?P<col>\d+):)?\s*(?P<msg>.*)$").expect("static regex")
});

/// Verilator-style severity tag in front of the location.
static SEVERITY_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^%(?P<tag>Error|Warning)(?:-(?P<code>[A-Za-z0-9_]+))?:\s*").expect("static regex"));

/// Convert compiler error output into diagnostics, one per non-blank line,
/// in order. Lines without a `file:line:` prefix keep only their raw text.
pub fn parse_diagnostics(tool_stderr: &str) -> Vec<Diagnostic> {
    tool_stderr
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_line)
        .collect()
}

fn parse_line(line: &str) -> Diagnostic {
    // Warnings keep their tag so they are not mistaken for errors.
    let (body, warning) = match SEVERITY_TAG.captures(line) {
        Some(t) => {
            let warning = (&t["tag"] == "Warning").then(|| match t.name("code") {
                Some(c) => format!("Warning-{}", c.as_str()),
                None => "Warning".to_string(),
            });
            (&line[t.get(0).map_or(0, |m| m.end())..], warning)
        }
        None => (line, None),
    };
    if let Some(caps) = LOCATED.captures(body) {
        if let Ok(lineno) = caps["line"].parse::<u32>() {
            let msg = caps["msg"].trim();
            let message = match (msg.is_empty(), warning) {
                (true, _) => line.trim().to_string(),
                (false, Some(w)) => format!("{w}: {msg}"),
                (false, None) => msg.to_string(),
            };
            return Diagnostic {
                phase: Phase::Syntax,
                file: Some(caps["file"].to_string()),
                line: Some(lineno),
                message,
                raw: line.to_string(),
            };
        }
    }
    Diagnostic {
        phase: Phase::Syntax,
        file: None,
        line: None,
        message: line.trim().to_string(),
        raw: line.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn located_line() {
        let d = parse_diagnostics("adder.v:12: syntax error");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].phase, Phase::Syntax);
        assert_eq!(d[0].file.as_deref(), Some("adder.v"));
        assert_eq!(d[0].line, Some(12));
        assert_eq!(d[0].message, "syntax error");
    }

    #[test]
    fn empty_input() {
        assert!(parse_diagnostics("").is_empty());
    }

    #[test]
    fn multi_line_order_and_unlocated() {
        let text = "a.v:3: syntax error\na.v:3: error: Invalid module item.\nI give up.\n";
        let d = parse_diagnostics(text);
        assert_eq!(d.len(), 3);
        assert_eq!(d[1].message, "error: Invalid module item.");
        assert_eq!(d[2].file, None);
        assert_eq!(d[2].message, "I give up.");
    }

    #[test]
    fn column_is_skipped() {
        let d = parse_diagnostics("top.sv:7:14: error: unexpected ';'");
        assert_eq!(d[0].line, Some(7));
        assert_eq!(d[0].message, "error: unexpected ';'");
    }

    #[test]
    fn severity_tag_stripped() {
        let d = parse_diagnostics(
            "%Error: alu.v:12:5: syntax error, unexpected ';'\n%Warning-WIDTH: alu.v:20:9: width mismatch",
        );
        assert_eq!(d[0].file.as_deref(), Some("alu.v"));
        assert_eq!(d[0].line, Some(12));
        assert_eq!(d[0].message, "syntax error, unexpected ';'");
        assert_eq!(d[1].message, "Warning-WIDTH: width mismatch");
    }

    proptest! {
        #[test]
        fn lossless_and_total(lines in proptest::collection::vec("[ -~]{0,40}", 0..12)) {
            let text = lines.join("\n");
            let diags = parse_diagnostics(&text);
            let kept: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
            let raws: Vec<&str> = diags.iter().map(|d| d.raw.as_str()).collect();
            prop_assert_eq!(raws, kept);
            prop_assert!(diags.iter().all(|d| !d.message.is_empty()));
        }
    }
}
