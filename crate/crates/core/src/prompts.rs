//! Named prompt templates with `{placeholder}` substitution.
//!
//! Templates are data, not code: the defaults are bundled as a JSON resource
//! and can be replaced wholesale from a file. Every template set has a stable
//! fingerprint so reports can record exactly which wording produced a run.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cues::CueCategory;

const BUNDLED_PROMPTS: &str = include_str!("../resources/prompts.json");

/// Template names every prompt set must provide.
pub const REQUIRED_TEMPLATES: [&str; 14] = [
    "io",
    "cot_reason",
    "cot_answer",
    "coc_step1",
    "coc_step2",
    "coc_step3",
    "goc_analyze",
    "goc_gate",
    "goc_final",
    "boc_predict",
    "toc_extract",
    "prompt_away",
    "requery",
    "demo_block",
];

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt set file error: {0}")]
    Io(#[from] std::io::Error),
    #[error("prompt set parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("prompt set is missing template '{0}'")]
    MissingTemplate(String),
    #[error("template '{template}' references unknown placeholder '{placeholder}'")]
    UnknownPlaceholder { template: String, placeholder: String },
    #[error("unterminated placeholder in template '{0}'")]
    UnterminatedPlaceholder(String),
}

/// A named set of prompt templates plus the system prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub version: u32,
    pub system: String,
    templates: BTreeMap<String, String>,
}

impl PromptSet {
    /// The bundled default templates.
    pub fn bundled() -> PromptSet {
        Self::from_json(BUNDLED_PROMPTS).expect("bundled prompt resource is valid")
    }

    pub fn from_json(json: &str) -> Result<PromptSet, PromptError> {
        let set: PromptSet = serde_json::from_str(json)?;
        for name in REQUIRED_TEMPLATES {
            if !set.templates.contains_key(name) {
                return Err(PromptError::MissingTemplate(name.to_string()));
            }
        }
        Ok(set)
    }

    pub fn from_path(path: &Path) -> Result<PromptSet, PromptError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn template(&self, name: &str) -> Option<&str> {
        self.templates.get(name).map(String::as_str)
    }

    /// Renders a template, substituting every `{placeholder}` from `vars`.
    ///
    /// Placeholders missing from `vars` are an error; values are inserted
    /// verbatim and never re-scanned, so they may safely contain braces.
    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
        let template = self
            .template(name)
            .ok_or_else(|| PromptError::MissingTemplate(name.to_string()))?;
        let mut out = String::with_capacity(template.len());
        let mut rest = template;
        while let Some(start) = rest.find('{') {
            out.push_str(&rest[..start]);
            let after = &rest[start + 1..];
            let end = after
                .find('}')
                .ok_or_else(|| PromptError::UnterminatedPlaceholder(name.to_string()))?;
            let key = &after[..end];
            let value = vars
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| PromptError::UnknownPlaceholder {
                    template: name.to_string(),
                    placeholder: key.to_string(),
                })?;
            out.push_str(value);
            rest = &after[end + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }

    /// Renders k demonstration blocks followed by a blank line, or "" for k=0.
    pub fn render_demos(&self, demos: &[(String, String)]) -> Result<String, PromptError> {
        if demos.is_empty() {
            return Ok(String::new());
        }
        let blocks: Result<Vec<String>, PromptError> = demos
            .iter()
            .map(|(text, label)| {
                self.render("demo_block", &[("text", text.as_str()), ("label", label.as_str())])
            })
            .collect();
        Ok(format!("{}\n\n", blocks?.join("\n\n")))
    }

    /// The prompt-away sentence for ablating one cue category.
    pub fn render_prompt_away(&self, removed: CueCategory) -> Result<String, PromptError> {
        let kept: Vec<&str> = CueCategory::ALL
            .iter()
            .filter(|c| **c != removed)
            .map(|c| c.prompt_name())
            .collect();
        self.render(
            "prompt_away",
            &[
                ("kept_a", kept[0]),
                ("kept_b", kept[1]),
                ("removed", removed.prompt_name()),
            ],
        )
    }

    /// Stable digest over the whole template set; changes whenever any
    /// template or the system prompt changes.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("prompt set serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex::encode(hasher.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_set_has_all_templates() {
        let set = PromptSet::bundled();
        for name in REQUIRED_TEMPLATES {
            assert!(set.template(name).is_some(), "missing {name}");
        }
        assert_eq!(set.system, "You are an expert in sarcasm detection.");
    }

    #[test]
    fn render_substitutes_placeholders() {
        let set = PromptSet::bundled();
        let p = set
            .render("io", &[("demos", ""), ("text", "great, rain again")])
            .unwrap();
        assert!(p.contains("[great, rain again]"));
        assert!(p.ends_with("]"));
        assert_eq!(p.matches("great, rain again").count(), 1);
    }

    #[test]
    fn render_rejects_missing_placeholder() {
        let set = PromptSet::bundled();
        let err = set.render("io", &[("demos", "")]).unwrap_err();
        assert!(matches!(err, PromptError::UnknownPlaceholder { .. }));
    }

    #[test]
    fn values_with_braces_are_not_rescanned() {
        let set = PromptSet::bundled();
        let p = set
            .render(
                "goc_gate",
                &[
                    ("analyses", "- keywords: fine"),
                    ("threshold_pct", "95"),
                    ("remaining", "{rhetorical_devices, punctuation}"),
                    ("text", "x"),
                ],
            )
            .unwrap();
        assert!(p.contains("remaining cues {rhetorical_devices, punctuation}"));
    }

    #[test]
    fn demo_rendering() {
        let set = PromptSet::bundled();
        assert_eq!(set.render_demos(&[]).unwrap(), "");
        let demos = vec![
            ("so fun".to_string(), "Sarcastic".to_string()),
            ("nice day".to_string(), "Not Sarcastic".to_string()),
        ];
        let block = set.render_demos(&demos).unwrap();
        assert_eq!(block.matches("Text: ").count(), 2);
        assert_eq!(block.matches("Label: ").count(), 2);
        assert!(block.ends_with("\n\n"));
    }

    #[test]
    fn prompt_away_names_categories_not_display_names() {
        let set = PromptSet::bundled();
        let s = set.render_prompt_away(CueCategory::Linguistic).unwrap();
        assert_eq!(
            s,
            "You can only use the contextual cues and emotional cues, and do not use any linguistic information here."
        );
        // the sentence never mentions individual cue display names
        assert!(!s.contains("keywords"));
    }

    #[test]
    fn fingerprint_changes_with_any_template() {
        let a = PromptSet::bundled();
        let mut b = a.clone();
        b.templates.insert("io".into(), "changed {text}{demos}".into());
        assert_ne!(a.fingerprint(), b.fingerprint());
        let mut c = a.clone();
        c.system = "different".into();
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint(), PromptSet::bundled().fingerprint());
    }
}
