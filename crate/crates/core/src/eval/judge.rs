use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::client::{ChatClient, ChatRequest, ClientError};
use crate::corpus::tokenize_terms;
use crate::dense::{embed, Embedder};
use crate::error::{Error, Result};
use crate::outcome::Outcome;
use crate::templates::TemplateSet;

/// Decides whether one context sentence is relevant to a question.
pub trait RelevanceJudge: Send + Sync {
    fn is_relevant(&self, query: &str, sentence: &str) -> std::result::Result<bool, ClientError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMetric {
    Faithfulness,
    AnswerRelevancy,
    AnswerCorrectness,
}

impl JudgeMetric {
    pub fn name(self) -> &'static str {
        match self {
            Self::Faithfulness => "faithfulness",
            Self::AnswerRelevancy => "answer_relevancy",
            Self::AnswerCorrectness => "answer_correctness",
        }
    }
}

/// Scores an answer on one capability, returning a value in `[0, 1]`.
pub trait CapabilityJudge: Send + Sync {
    fn judge(
        &self,
        metric: JudgeMetric,
        query: &str,
        context: &str,
        answer: &str,
        reference: &str,
    ) -> std::result::Result<f64, ClientError>;
}

const STOPWORDS: &str = include_str!("../../data/stopwords.txt");

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS.split_whitespace().collect())
}

/// Offline heuristic: a sentence is relevant iff it contains at least one
/// non-stopword query token.
#[derive(Debug, Clone, Copy, Default)]
pub struct OverlapJudge;

impl OverlapJudge {
    fn content_terms(text: &str) -> HashSet<String> {
        tokenize_terms(text)
            .into_iter()
            .filter(|t| !stopwords().contains(t.as_str()))
            .collect()
    }
}

impl RelevanceJudge for OverlapJudge {
    fn is_relevant(&self, query: &str, sentence: &str) -> std::result::Result<bool, ClientError> {
        let q = Self::content_terms(query);
        Ok(tokenize_terms(sentence).iter().any(|t| q.contains(t)))
    }
}

impl CapabilityJudge for OverlapJudge {
    /// Fraction of the content terms of the compared text found in the
    /// answer: the context for faithfulness, the query for relevancy and
    /// the reference for correctness.
    fn judge(
        &self,
        metric: JudgeMetric,
        query: &str,
        context: &str,
        answer: &str,
        reference: &str,
    ) -> std::result::Result<f64, ClientError> {
        let answer_terms = Self::content_terms(answer);
        let (source, target) = match metric {
            JudgeMetric::Faithfulness => (answer_terms, Self::content_terms(context)),
            JudgeMetric::AnswerRelevancy => (Self::content_terms(query), answer_terms),
            JudgeMetric::AnswerCorrectness => (Self::content_terms(reference), answer_terms),
        };
        if source.is_empty() {
            return Ok(0.0);
        }
        Ok(source.intersection(&target).count() as f64 / source.len() as f64)
    }
}

/// Judge backed by a chat model answering with a number in `[0, 1]`.
pub struct LlmJudge<C> {
    client: C,
    templates: TemplateSet,
}

impl<C: ChatClient> LlmJudge<C> {
    pub fn new(client: C, templates: TemplateSet) -> Self {
        Self { client, templates }
    }

    pub fn parse(answer: &str) -> Option<f64> {
        static RE: OnceLock<Regex> = OnceLock::new();
        let re = RE.get_or_init(|| Regex::new(r"\d+(?:\.\d+)?|\.\d+").expect("valid regex"));
        re.find(answer)
            .and_then(|m| m.as_str().parse::<f64>().ok())
            .filter(|v| (0.0..=1.0).contains(v))
    }

    fn ask(&self, metric: &str, query: &str, context: &str, answer: &str, reference: &str) -> std::result::Result<f64, ClientError> {
        let prompt = self
            .templates
            .render(
                "judge",
                &[
                    ("metric", metric),
                    ("query", query),
                    ("context", context),
                    ("answer", answer),
                    ("reference", reference),
                ],
            )
            .map_err(|e| ClientError::Unavailable(e.to_string()))?;
        let request = ChatRequest::new(prompt, 8, 0.0).with_context(vec![context.to_string()]);
        let text = self.client.complete(&request)?;
        Self::parse(&text).ok_or_else(|| ClientError::Decode(format!("judge answer `{text}` is not a number in [0, 1]")))
    }
}

impl<C: ChatClient> RelevanceJudge for LlmJudge<C> {
    fn is_relevant(&self, query: &str, sentence: &str) -> std::result::Result<bool, ClientError> {
        Ok(self.ask("context_relevancy", query, sentence, "", "")? >= 0.5)
    }
}

impl<C: ChatClient> CapabilityJudge for LlmJudge<C> {
    fn judge(
        &self,
        metric: JudgeMetric,
        query: &str,
        context: &str,
        answer: &str,
        reference: &str,
    ) -> std::result::Result<f64, ClientError> {
        self.ask(metric.name(), query, context, answer, reference)
    }
}

/// Share of `sentences` the judge accepts. An empty context scores 0 and
/// a sentence the judge fails on counts as irrelevant; both are flagged.
pub fn context_relevancy(query: &str, sentences: &[&str], judge: &dyn RelevanceJudge) -> Outcome<f64> {
    if sentences.is_empty() {
        return Outcome::fallback(0.0, "empty context");
    }
    let mut relevant = 0usize;
    let mut failures = 0usize;
    for s in sentences {
        match judge.is_relevant(query, s) {
            Ok(true) => relevant += 1,
            Ok(false) => {}
            Err(_) => failures += 1,
        }
    }
    let value = relevant as f64 / sentences.len() as f64;
    if failures > 0 {
        Outcome::fallback(value, format!("judge failed on {failures} sentence(s)"))
    } else {
        Outcome::ok(value)
    }
}

/// Mean over retrieved documents of the best cosine against any gold
/// document, both embedded by `backend`.
pub fn retrieval_similarity(backend: &dyn Embedder, retrieved: &[String], gold: &[String]) -> Result<f64> {
    if retrieved.is_empty() || gold.is_empty() {
        return Err(Error::invalid("retrieval similarity needs retrieved and gold documents"));
    }
    let r = embed(backend, retrieved)?;
    let g = embed(backend, gold)?;
    let mut total = 0.0;
    for v in &r {
        let mut best = f64::NEG_INFINITY;
        for w in &g {
            best = best.max(v.cosine(w)?);
        }
        total += best;
    }
    Ok(total / r.len() as f64)
}

/// The five capability scores averaged into the RAG score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RagComponents {
    pub faithfulness: Option<f64>,
    pub context_relevancy: Option<f64>,
    pub answer_relevancy: Option<f64>,
    pub answer_correctness: Option<f64>,
    pub retrieval_similarity: Option<f64>,
}

impl RagComponents {
    pub fn all(values: [f64; 5]) -> Self {
        let [a, b, c, d, e] = values;
        Self {
            faithfulness: Some(a),
            context_relevancy: Some(b),
            answer_relevancy: Some(c),
            answer_correctness: Some(d),
            retrieval_similarity: Some(e),
        }
    }

    fn named(&self) -> [(&'static str, Option<f64>); 5] {
        [
            ("faithfulness", self.faithfulness),
            ("context_relevancy", self.context_relevancy),
            ("answer_relevancy", self.answer_relevancy),
            ("answer_correctness", self.answer_correctness),
            ("retrieval_similarity", self.retrieval_similarity),
        ]
    }
}

/// Arithmetic mean of all five components; any missing one is an error.
pub fn rag_score(components: &RagComponents) -> Result<f64> {
    let mut sum = 0.0;
    for (name, value) in components.named() {
        let v = value.ok_or_else(|| Error::MissingComponent(name.to_string()))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("{name} = {v} lies outside [0, 1]")));
        }
        sum += v;
    }
    Ok(sum / 5.0)
}
