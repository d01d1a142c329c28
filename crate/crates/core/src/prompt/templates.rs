// SPDX-License-Identifier: Apache-2.0

//! Prompt templates: plain text with `{{name}}` placeholders.

use std::fs;
use std::path::{Path, PathBuf};

use crate::digest::sha256_hex;

/// Version tag of the templates compiled into the binary. Bump whenever a
/// file under `templates/` changes.
pub const TEMPLATE_VERSION: &str = "builtin-1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub system: String,
    pub planning: String,
    pub shot: String,
    pub initial: String,
    pub rectify: String,
    pub ppa: String,
    version: String,
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("template {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("template {file} uses unknown placeholder {{{{{name}}}}}")]
    UnknownPlaceholder { file: &'static str, name: String },
}

const FILES: [(&str, &[&str]); 6] = [
    ("system.txt", &[]),
    ("planning.txt", &[]),
    ("shot.txt", &["index", "description", "verilog"]),
    ("initial.txt", &["planning", "shots", "description", "top_module"]),
    ("rectify.txt", &["diagnostics", "source"]),
    ("ppa.txt", &["top_module", "violations", "source"]),
];

impl Default for Templates {
    fn default() -> Self {
        Self::builtin()
    }
}

impl Templates {
    pub fn builtin() -> Self {
        Self {
            system: include_str!("../../templates/system.txt").to_string(),
            planning: include_str!("../../templates/planning.txt").to_string(),
            shot: include_str!("../../templates/shot.txt").to_string(),
            initial: include_str!("../../templates/initial.txt").to_string(),
            rectify: include_str!("../../templates/rectify.txt").to_string(),
            ppa: include_str!("../../templates/ppa.txt").to_string(),
            version: TEMPLATE_VERSION.to_string(),
        }
    }

    /// Builtin templates with any same-named file in `dir` substituted.
    /// The version becomes a digest of the effective texts when anything
    /// was overridden.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut t = Self::builtin();
        let mut overridden = false;
        for (file, allowed) in FILES {
            let path = dir.join(file);
            if !path.is_file() {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|source| TemplateError::Io { path, source })?;
            if let Some(name) = placeholders(&text).into_iter().find(|n| !allowed.contains(&n.as_str())) {
                return Err(TemplateError::UnknownPlaceholder { file, name });
            }
            *t.slot(file) = text;
            overridden = true;
        }
        if overridden {
            let all = [&t.system, &t.planning, &t.shot, &t.initial, &t.rectify, &t.ppa]
                .map(|s| s.as_str())
                .join("\u{0}");
            t.version = format!("custom-{}", &sha256_hex(all.as_bytes())[..12]);
        }
        Ok(t)
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    fn slot(&mut self, file: &str) -> &mut String {
        match file {
            "system.txt" => &mut self.system,
            "planning.txt" => &mut self.planning,
            "shot.txt" => &mut self.shot,
            "initial.txt" => &mut self.initial,
            "rectify.txt" => &mut self.rectify,
            _ => &mut self.ppa,
        }
    }
}

/// Substitute `{{name}}` placeholders in one pass. Substituted text is not
/// rescanned, so Verilog replications like `{{4{a}}}` inside values are
/// left alone. Unknown names are kept verbatim.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + vars.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let name = &after[..end];
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[start..start + 2 + end + 2]),
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn placeholders(template: &str) -> Vec<String> {
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else { break };
        names.push(after[..end].to_string());
        rest = &after[end + 2..];
    }
    names
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pass_substitution() {
        let out = render("a={{a}} b={{b}} c={{c}}", &[("a", "{{b}}"), ("b", "2")]);
        assert_eq!(out, "a={{b}} b=2 c={{c}}");
    }

    #[test]
    fn unterminated_placeholder_is_literal() {
        assert_eq!(render("x {{y", &[("y", "1")]), "x {{y");
    }

    #[test]
    fn builtin_templates_use_only_known_placeholders() {
        let t = Templates::builtin();
        for (file, allowed) in FILES {
            let text = match file {
                "system.txt" => &t.system,
                "planning.txt" => &t.planning,
                "shot.txt" => &t.shot,
                "initial.txt" => &t.initial,
                "rectify.txt" => &t.rectify,
                _ => &t.ppa,
            };
            for name in placeholders(text) {
                assert!(allowed.contains(&name.as_str()), "{file}: {name}");
            }
        }
        assert_eq!(t.version(), TEMPLATE_VERSION);
    }

    #[test]
    fn overrides_change_version() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("system.txt"), "be terse").unwrap();
        let t = Templates::with_overrides(dir.path()).unwrap();
        assert_eq!(t.system, "be terse");
        assert!(t.version().starts_with("custom-"));
        assert_eq!(t.rectify, Templates::builtin().rectify);

        fs::write(dir.path().join("ppa.txt"), "{{nonsense}}").unwrap();
        assert!(matches!(
            Templates::with_overrides(dir.path()),
            Err(TemplateError::UnknownPlaceholder { file: "ppa.txt", .. })
        ));
    }

    #[test]
    fn empty_override_dir_keeps_builtin_version() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(Templates::with_overrides(dir.path()).unwrap(), Templates::builtin());
    }
}
