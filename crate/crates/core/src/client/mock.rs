use serde::{Deserialize, Serialize};

use super::{ChatClient, ChatRequest, ClientError};
use crate::corpus::sentences;

/// What an offline chat backend answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum MockBehavior {
    /// The first grounding text verbatim, or the prompt without one.
    Echo,
    /// The first sentence of the first grounding text.
    EchoTopDoc,
    Fixed(String),
    /// `responses[sample_index % len]`.
    Cycle(Vec<String>),
    Fail(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockChat {
    pub behavior: MockBehavior,
    #[serde(default = "default_tag")]
    pub tag: String,
}

fn default_tag() -> String {
    "mock".to_string()
}

impl MockChat {
    pub fn new(behavior: MockBehavior) -> Self {
        Self {
            behavior,
            tag: default_tag(),
        }
    }

    pub fn echo() -> Self {
        Self::new(MockBehavior::Echo)
    }

    pub fn echo_top_doc() -> Self {
        Self::new(MockBehavior::EchoTopDoc)
    }

    pub fn fixed(text: impl Into<String>) -> Self {
        Self::new(MockBehavior::Fixed(text.into()))
    }

    pub fn failing(reason: impl Into<String>) -> Self {
        Self::new(MockBehavior::Fail(reason.into()))
    }
}

impl ChatClient for MockChat {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        match &self.behavior {
            MockBehavior::Echo => Ok(request
                .context
                .first()
                .cloned()
                .unwrap_or_else(|| request.prompt.clone())),
            MockBehavior::EchoTopDoc => Ok(request
                .context
                .first()
                .and_then(|doc| sentences(doc).first().map(|s| s.to_string()))
                .unwrap_or_default()),
            MockBehavior::Fixed(text) => Ok(text.clone()),
            MockBehavior::Cycle(items) if items.is_empty() => Ok(String::new()),
            MockBehavior::Cycle(items) => Ok(items[request.sample_index % items.len()].clone()),
            MockBehavior::Fail(reason) => Err(ClientError::Unavailable(reason.clone())),
        }
    }

    fn model_tag(&self) -> String {
        self.tag.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn behaviors() {
        let req = ChatRequest::new("prompt", 10, 0.0)
            .with_context(vec!["First one. Second one.".into(), "Other.".into()]);
        assert_eq!(MockChat::echo().complete(&req).unwrap(), "First one. Second one.");
        assert_eq!(MockChat::echo_top_doc().complete(&req).unwrap(), "First one.");
        assert_eq!(MockChat::fixed("x").complete(&req).unwrap(), "x");
        assert!(MockChat::failing("down").complete(&req).is_err());
        let cyc = MockChat::new(MockBehavior::Cycle(vec!["a".into(), "b".into()]));
        assert_eq!(cyc.complete(&req.clone().with_sample(3)).unwrap(), "b");
        let bare = ChatRequest::new("just the prompt", 10, 0.0);
        assert_eq!(MockChat::echo().complete(&bare).unwrap(), "just the prompt");
        assert_eq!(MockChat::echo_top_doc().complete(&bare).unwrap(), "");
    }

    #[test]
    fn behavior_serializes_tagged() {
        let json = serde_json::to_string(&MockBehavior::Fixed("x".into())).unwrap();
        assert_eq!(json, r#"{"kind":"fixed","value":"x"}"#);
        let back: MockBehavior = serde_json::from_str(r#"{"kind":"echo_top_doc"}"#).unwrap();
        assert_eq!(back, MockBehavior::EchoTopDoc);
    }
}
