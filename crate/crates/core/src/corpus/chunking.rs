use crate::error::{Error, Result};

use super::sentences::split_sentences;
use super::tokenize::{tokenize, Token};
use super::{Chunk, Document};

pub const DEFAULT_OVERLAP: usize = 20;
pub const DEFAULT_SENTENCE_TARGET: usize = 512;
pub const DEFAULT_SMALL_CHUNK: usize = 175;
pub const DEFAULT_BIG_CHUNK: usize = 512;

/// Tokens of a document together with the sentence index of each token.
struct Analysed<'a> {
    doc: &'a Document,
    tokens: Vec<Token>,
    sentence_of: Vec<usize>,
    sentence_count: usize,
}

impl<'a> Analysed<'a> {
    fn new(doc: &'a Document) -> Self {
        let tokens = tokenize(&doc.text);
        let spans = split_sentences(&doc.text);
        let mut sentence_of = Vec::with_capacity(tokens.len());
        let mut s = 0;
        for tok in &tokens {
            while s + 1 < spans.len() && spans[s].end <= tok.start {
                s += 1;
            }
            sentence_of.push(s);
        }
        Self {
            doc,
            tokens,
            sentence_of,
            sentence_count: spans.len(),
        }
    }

    fn chunk(&self, id: String, start: usize, end: usize, position: usize) -> Chunk {
        debug_assert!(start < end && end <= self.tokens.len());
        let text = &self.doc.text[self.tokens[start].start..self.tokens[end - 1].end];
        Chunk {
            id,
            doc_id: self.doc.id.clone(),
            text: text.to_string(),
            token_start: start,
            token_end: end,
            sentence_start: self.sentence_of[start],
            sentence_end: self.sentence_of[end - 1] + 1,
            parent_id: None,
            position,
            title: self.doc.title.clone(),
        }
    }
}

/// Stride-window spans over `len` tokens: `[i*(size-overlap), +size)`.
fn window_spans(len: usize, size: usize, overlap: usize) -> Vec<(usize, usize)> {
    let stride = size - overlap;
    let mut spans = Vec::new();
    let mut start = 0;
    while start < len {
        let end = (start + size).min(len);
        spans.push((start, end));
        if end == len {
            break;
        }
        start += stride;
    }
    spans
}

fn check_window(size: usize, overlap: usize) -> Result<()> {
    if size == 0 {
        return Err(Error::invalid("chunk size must be at least 1"));
    }
    if overlap >= size {
        return Err(Error::invalid(format!(
            "overlap {overlap} must be smaller than chunk size {size}"
        )));
    }
    Ok(())
}

/// Fixed-size token windows with `overlap` tokens shared between neighbours.
pub fn chunk_tokens(doc: &Document, size: usize, overlap: usize) -> Result<Vec<Chunk>> {
    check_window(size, overlap)?;
    let a = Analysed::new(doc);
    Ok(window_spans(a.tokens.len(), size, overlap)
        .into_iter()
        .enumerate()
        .map(|(pos, (s, e))| a.chunk(format!("{}#{pos}", doc.id), s, e, pos))
        .collect())
}

/// Greedy sentence packing up to `target_size` tokens per chunk.
///
/// Sentences are never split; one longer than the target becomes its own
/// chunk. Sentences without tokens ride along with their neighbours.
pub fn chunk_sentences(doc: &Document, target_size: usize) -> Result<Vec<Chunk>> {
    if target_size == 0 {
        return Err(Error::invalid("sentence chunk target must be at least 1"));
    }
    let a = Analysed::new(doc);
    if a.tokens.is_empty() {
        return Ok(Vec::new());
    }
    // Token range of each sentence; sentences are contiguous in token order.
    let mut bounds = vec![(usize::MAX, 0usize); a.sentence_count];
    for (t, &s) in a.sentence_of.iter().enumerate() {
        if bounds[s].0 == usize::MAX {
            bounds[s].0 = t;
        }
        bounds[s].1 = t + 1;
    }

    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    for &(s, e) in bounds.iter().filter(|(s, _)| *s != usize::MAX) {
        match current {
            Some((cs, ce)) if ce - cs + (e - s) > target_size => {
                spans.push((cs, ce));
                current = Some((s, e));
            }
            Some((cs, _)) => current = Some((cs, e)),
            None => current = Some((s, e)),
        }
    }
    spans.extend(current);

    let mut chunks: Vec<Chunk> = spans
        .into_iter()
        .enumerate()
        .map(|(pos, (s, e))| a.chunk(format!("{}#{pos}", doc.id), s, e, pos))
        .collect();
    // Token-less sentences at the tail belong to the last chunk.
    if let Some(last) = chunks.last_mut() {
        last.sentence_end = last.sentence_end.max(a.sentence_count);
    }
    if let Some(first) = chunks.first_mut() {
        first.sentence_start = 0;
    }
    Ok(chunks)
}

/// Small retrieval chunks nested inside big generation chunks.
#[derive(Debug, Clone, PartialEq)]
pub struct Small2Big {
    pub smalls: Vec<Chunk>,
    pub bigs: Vec<Chunk>,
}

impl Small2Big {
    pub fn parent_of(&self, small: &Chunk) -> Option<&Chunk> {
        let parent = small.parent_id.as_deref()?;
        self.bigs.iter().find(|b| b.id == parent)
    }

    pub fn into_all(self) -> Vec<Chunk> {
        let mut all = self.bigs;
        all.extend(self.smalls);
        all
    }
}

/// Big chunks tile the document like [`chunk_tokens`]; small chunks are cut
/// inside each big chunk with the same overlap and point to it as parent.
pub fn build_small2big(
    doc: &Document,
    small: usize,
    big: usize,
    overlap: usize,
) -> Result<Small2Big> {
    if small >= big {
        return Err(Error::invalid(format!(
            "small chunk size {small} must be below big chunk size {big}"
        )));
    }
    check_window(small, overlap)?;
    check_window(big, overlap)?;
    let a = Analysed::new(doc);
    let mut bigs = Vec::new();
    let mut smalls = Vec::new();
    for (bpos, (bs, be)) in window_spans(a.tokens.len(), big, overlap).into_iter().enumerate() {
        let big_chunk = a.chunk(format!("{}#big{bpos}", doc.id), bs, be, bpos);
        for (ss, se) in window_spans(be - bs, small, overlap) {
            let pos = smalls.len();
            let mut c = a.chunk(format!("{}#{pos}", doc.id), bs + ss, bs + se, pos);
            c.parent_id = Some(big_chunk.id.clone());
            smalls.push(c);
        }
        bigs.push(big_chunk);
    }
    Ok(Small2Big { smalls, bigs })
}
