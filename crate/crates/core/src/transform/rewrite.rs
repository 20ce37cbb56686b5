use std::sync::OnceLock;

use regex::Regex;

use super::Query;
use crate::client::{ChatClient, ChatRequest};
use crate::outcome::Outcome;
use crate::templates::TemplateSet;

pub const MAX_SUBQUERIES: usize = 8;
const REWRITE_MAX_TOKENS: usize = 128;
const DECOMPOSE_MAX_TOKENS: usize = 256;

/// Rewritten query text; any failure yields the original text with a
/// fallback reason.
pub fn rewrite_query(client: &dyn ChatClient, templates: &TemplateSet, query: &Query) -> Outcome<String> {
    let prompt = match templates.render("rewrite", &[("query", &query.text)]) {
        Ok(p) => p,
        Err(e) => return Outcome::fallback(query.text.clone(), e.to_string()),
    };
    let req = ChatRequest::new(prompt, REWRITE_MAX_TOKENS, 0.0).with_context(vec![query.text.clone()]);
    match client.complete(&req) {
        Ok(text) if !text.trim().is_empty() => Outcome::ok(text.trim().to_string()),
        Ok(_) => Outcome::fallback(query.text.clone(), "rewrite returned empty text"),
        Err(e) => Outcome::fallback(query.text.clone(), format!("rewrite failed: {e}")),
    }
}

fn list_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*\u{2022}]+|\(?\d+[.):]|\(?[a-z][.)])\s*").expect("valid regex"))
}

/// One sub-question per non-empty line, list markers stripped, capped at
/// [`MAX_SUBQUERIES`].
pub fn parse_subqueries(output: &str) -> Vec<String> {
    output
        .lines()
        .map(|l| list_marker().replace(l, "").trim().to_string())
        .filter(|l| !l.is_empty())
        .take(MAX_SUBQUERIES)
        .collect()
}

pub fn decompose_query(client: &dyn ChatClient, templates: &TemplateSet, query: &Query) -> Outcome<Vec<String>> {
    let original = || vec![query.text.clone()];
    let prompt = match templates.render("decompose", &[("query", &query.text)]) {
        Ok(p) => p,
        Err(e) => return Outcome::fallback(original(), e.to_string()),
    };
    let req = ChatRequest::new(prompt, DECOMPOSE_MAX_TOKENS, 0.0).with_context(vec![query.text.clone()]);
    match client.complete(&req) {
        Ok(text) => {
            let subs = parse_subqueries(&text);
            if subs.is_empty() {
                Outcome::fallback(original(), "decomposition produced no sub-questions")
            } else {
                Outcome::ok(subs)
            }
        }
        Err(e) => Outcome::fallback(original(), format!("decomposition failed: {e}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{MockBehavior, MockChat};

    fn q() -> Query {
        Query::new("q", "Who directed the film that won best picture in 1998?")
    }

    #[test]
    fn echo_rewrite_is_identity() {
        let out = rewrite_query(&MockChat::echo(), &TemplateSet::default(), &q());
        assert_eq!(out.value, q().text);
        assert!(!out.is_fallback());
    }

    #[test]
    fn empty_rewrite_falls_back() {
        let out = rewrite_query(&MockChat::fixed("   "), &TemplateSet::default(), &q());
        assert_eq!(out.value, q().text);
        assert!(out.is_fallback());
        let out = rewrite_query(&MockChat::failing("x"), &TemplateSet::default(), &q());
        assert!(out.is_fallback());
    }

    #[test]
    fn rewrite_prompt_contains_query() {
        struct Capture(std::sync::Mutex<String>);
        impl ChatClient for Capture {
            fn complete(&self, r: &ChatRequest) -> Result<String, crate::client::ClientError> {
                *self.0.lock().unwrap() = r.prompt.clone();
                Ok("x".into())
            }
            fn model_tag(&self) -> String {
                "cap".into()
            }
        }
        let cap = Capture(Default::default());
        rewrite_query(&cap, &TemplateSet::default(), &q());
        assert!(cap.0.lock().unwrap().contains(&q().text));
    }

    #[test]
    fn decomposition_parsing() {
        let two = MockChat::fixed("1. Which film won best picture in 1998?\n2. Who directed it?");
        let out = decompose_query(&two, &TemplateSet::default(), &q());
        assert_eq!(out.value, vec!["Which film won best picture in 1998?", "Who directed it?"]);

        let many = (1..=12).map(|i| format!("- sub {i}")).collect::<Vec<_>>().join("\n");
        let out = decompose_query(&MockChat::fixed(many), &TemplateSet::default(), &q());
        assert_eq!(out.value.len(), MAX_SUBQUERIES);
        assert_eq!(out.value[0], "sub 1");

        let out = decompose_query(&MockChat::fixed(""), &TemplateSet::default(), &q());
        assert_eq!(out.value, vec![q().text]);
        assert!(out.is_fallback());

        let out = decompose_query(&MockChat::new(MockBehavior::Fail("x".into())), &TemplateSet::default(), &q());
        assert_eq!(out.value, vec![q().text]);
    }
}
