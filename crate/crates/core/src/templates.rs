//! Prompt templates with `{name}` placeholders.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const BUILTIN: &[(&str, &str)] = &[
    ("qa", include_str!("../templates/qa.txt")),
    ("closed_book", include_str!("../templates/closed_book.txt")),
    ("rewrite", include_str!("../templates/rewrite.txt")),
    ("decompose", include_str!("../templates/decompose.txt")),
    ("hyde", include_str!("../templates/hyde.txt")),
    ("summarize", include_str!("../templates/summarize.txt")),
    ("classify", include_str!("../templates/classify.txt")),
    ("judge", include_str!("../templates/judge.txt")),
];

#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            templates: BUILTIN
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl TemplateSet {
    /// Built-in templates overridden by every `*.txt` file in `dir`; the
    /// file stem is the template name.
    pub fn with_overrides(dir: &Path) -> Result<Self> {
        let mut set = Self::default();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("txt") {
                if let Some(name) = path.file_stem().and_then(|s| s.to_str()) {
                    set.templates.insert(name.to_string(), fs::read_to_string(&path)?);
                }
            }
        }
        Ok(set)
    }

    pub fn insert(&mut self, name: impl Into<String>, body: impl Into<String>) {
        self.templates.insert(name.into(), body.into());
    }

    pub fn get(&self, name: &str) -> Result<&str> {
        self.templates
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| Error::UnknownTemplate(name.to_string()))
    }

    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String> {
        Ok(render(self.get(name)?, vars))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

/// Single-pass substitution: text inserted for one placeholder is never
/// scanned for further placeholders. Unknown `{...}` sequences are kept.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let replaced = after.find('}').and_then(|close| {
            let name = &after[..close];
            vars.iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| (*v, close))
        });
        match replaced {
            Some((value, close)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pass_substitution() {
        let out = render("Q: {query} C: {context} {other}", &[("query", "{context}"), ("context", "x")]);
        assert_eq!(out, "Q: {context} C: x {other}");
    }

    #[test]
    fn builtins_have_placeholders() {
        let t = TemplateSet::default();
        for name in ["qa", "rewrite", "decompose", "hyde", "summarize", "classify"] {
            assert!(t.get(name).unwrap().contains("{query}"), "{name}");
        }
        assert!(t.get("qa").unwrap().contains("{context}"));
        assert!(matches!(t.get("nope"), Err(Error::UnknownTemplate(_))));
    }

    #[test]
    fn directory_overrides() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("qa.txt"), "custom {query}").unwrap();
        fs::write(dir.path().join("mine.txt"), "{context}!").unwrap();
        let t = TemplateSet::with_overrides(dir.path()).unwrap();
        assert_eq!(t.render("qa", &[("query", "q")]).unwrap(), "custom q");
        assert_eq!(t.render("mine", &[("context", "c")]).unwrap(), "c!");
        assert!(t.get("hyde").is_ok());
    }
}
