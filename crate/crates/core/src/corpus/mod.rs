//! Documents, tokenization, sentence splitting and chunking.

mod chunking;
mod sentences;
mod tokenize;

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use chunking::{
    build_small2big, chunk_sentences, chunk_tokens, Small2Big, DEFAULT_BIG_CHUNK,
    DEFAULT_OVERLAP, DEFAULT_SENTENCE_TARGET, DEFAULT_SMALL_CHUNK,
};
pub use sentences::{sentences, split_sentences, SentenceSpan};
pub use tokenize::{is_punctuation, token_count, tokenize, tokenize_terms, Token};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: None,
            text: text.into(),
            source: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("document id is empty"));
        }
        if self.text.trim().is_empty() {
            return Err(Error::invalid(format!("document `{}` has empty text", self.id)));
        }
        Ok(())
    }
}

/// A contiguous span of a document, the unit of retrieval.
///
/// Token offsets are half-open and count reference-tokenizer tokens of
/// the parent document. Sentence offsets likewise index the document's
/// sentence list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub doc_id: String,
    pub text: String,
    pub token_start: usize,
    pub token_end: usize,
    pub sentence_start: usize,
    pub sentence_end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    pub position: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

impl Chunk {
    pub fn token_len(&self) -> usize {
        self.token_end - self.token_start
    }

    pub fn contains_span(&self, other: &Chunk) -> bool {
        self.doc_id == other.doc_id
            && self.token_start <= other.token_start
            && other.token_end <= self.token_end
    }
}

/// Validates ids and returns the documents in input order.
pub fn validate_corpus(docs: &[Document]) -> Result<()> {
    let mut seen = HashSet::new();
    for doc in docs {
        doc.validate()?;
        if !seen.insert(doc.id.as_str()) {
            return Err(Error::DuplicateId(doc.id.clone()));
        }
    }
    Ok(())
}

/// Reads a JSONL corpus, one document per line. Blank lines are skipped.
pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    let docs: Vec<Document> = read_jsonl(path)?;
    validate_corpus(&docs)?;
    Ok(docs)
}

pub fn read_chunks(path: &Path) -> Result<Vec<Chunk>> {
    read_jsonl(path)
}

pub fn write_chunks(path: &Path, chunks: &[Chunk]) -> Result<()> {
    write_jsonl(path, chunks)
}

pub fn write_documents(path: &Path, docs: &[Document]) -> Result<()> {
    write_jsonl(path, docs)
}

pub(crate) fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Id-addressable chunk collection shared by rerankers and prompt assembly.
#[derive(Debug, Clone, Default)]
pub struct ChunkStore {
    chunks: BTreeMap<String, Chunk>,
}

impl ChunkStore {
    pub fn new(chunks: impl IntoIterator<Item = Chunk>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for c in chunks {
            if map.contains_key(&c.id) {
                return Err(Error::DuplicateId(c.id));
            }
            map.insert(c.id.clone(), c);
        }
        Ok(Self { chunks: map })
    }

    pub fn get(&self, id: &str) -> Option<&Chunk> {
        self.chunks.get(id)
    }

    pub fn text(&self, id: &str) -> Result<&str> {
        self.get(id)
            .map(|c| c.text.as_str())
            .ok_or_else(|| Error::UnknownChunk(id.to_string()))
    }

    /// The small2big parent of `id`, or the chunk itself when it has none.
    pub fn expand_to_parent(&self, id: &str) -> Result<&Chunk> {
        let chunk = self.get(id).ok_or_else(|| Error::UnknownChunk(id.to_string()))?;
        match &chunk.parent_id {
            Some(parent) => self
                .get(parent)
                .ok_or_else(|| Error::UnknownChunk(parent.clone())),
            None => Ok(chunk),
        }
    }

    /// Document id for a chunk id, if known.
    pub fn doc_id(&self, id: &str) -> Option<&str> {
        self.get(id).map(|c| c.doc_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Chunk> {
        self.chunks.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_validation() {
        let docs = vec![Document::new("a", "x"), Document::new("a", "y")];
        assert!(matches!(validate_corpus(&docs), Err(Error::DuplicateId(_))));
        assert!(Document::new("", "x").validate().is_err());
        assert!(Document::new("a", "  ").validate().is_err());
    }

    #[test]
    fn jsonl_round_trip_and_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("docs.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"d1\",\"title\":\"T\",\"text\":\"Hello.\",\"source\":\"wiki\"}\n\n{\"id\":\"d2\",\"text\":\"World.\"}\n",
        )
        .unwrap();
        let docs = read_documents(&path).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].title.as_deref(), Some("T"));
        assert_eq!(docs[1].source, None);

        std::fs::write(&path, "{\"id\":\"d1\",\"text\":\"ok\"}\nnot json\n").unwrap();
        match read_documents(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn store_expands_small_to_parent() {
        let doc = Document::new("d", "w ".repeat(512));
        let s2b = build_small2big(&doc, 175, 512, 20).unwrap();
        let store = ChunkStore::new(s2b.bigs.iter().chain(&s2b.smalls).cloned()).unwrap();
        for small in &s2b.smalls {
            let parent = store.expand_to_parent(&small.id).unwrap();
            assert!(parent.contains_span(small));
        }
        assert!(store.expand_to_parent("nope").is_err());
    }
}
