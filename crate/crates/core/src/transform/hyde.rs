use super::Query;
use crate::client::{ChatClient, ChatRequest, ClientError};
use crate::dense::{embed, Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::outcome::Outcome;
use crate::templates::TemplateSet;

pub const HYDE_TEMPERATURE: f64 = 0.7;
pub const HYDE_MAX_TOKENS: usize = 512;

/// Samples `n` hypothetical answer passages concurrently, in request order.
///
/// Failed or empty samples are dropped; the call errors only when none
/// succeed.
pub fn hyde_generate(
    client: &dyn ChatClient,
    templates: &TemplateSet,
    query: &Query,
    n: usize,
) -> Result<Outcome<Vec<String>>> {
    if n == 0 {
        return Err(Error::invalid("HyDE needs at least one pseudo-document"));
    }
    let prompt = templates.render("hyde", &[("query", &query.text)])?;
    let results: Vec<std::result::Result<String, ClientError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..n)
            .map(|i| {
                let req = ChatRequest::new(prompt.clone(), HYDE_MAX_TOKENS, HYDE_TEMPERATURE)
                    .with_sample(i)
                    .with_context(vec![query.text.clone()]);
                s.spawn(move || client.complete(&req))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(ClientError::Unavailable("HyDE worker panicked".into())))
            })
            .collect()
    });
    let mut docs = Vec::new();
    let mut last_err = None;
    for r in results {
        match r {
            Ok(text) if !text.trim().is_empty() => docs.push(text.trim().to_string()),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    match (docs.len(), last_err) {
        (0, Some(e)) => Err(e.into()),
        (0, None) => Err(Error::invalid("HyDE produced only empty pseudo-documents")),
        (got, _) if got < n => Ok(Outcome::fallback(docs, format!("HyDE produced {got} of {n} pseudo-documents"))),
        _ => Ok(Outcome::ok(docs)),
    }
}

/// Normalized mean of the pseudo-document embeddings, plus the query
/// embedding when `include_query` is set.
pub fn hyde_combine(
    backend: &dyn Embedder,
    query: &Query,
    pseudo_docs: &[String],
    include_query: bool,
) -> Result<EmbeddingVector> {
    let mut texts: Vec<String> = pseudo_docs.to_vec();
    if include_query {
        texts.push(query.text.clone());
    }
    if texts.is_empty() {
        return Err(Error::invalid("HyDE combination needs pseudo-documents or the query"));
    }
    let vectors = embed(backend, &texts)?;
    EmbeddingVector::mean_normalized(&vectors)
}
