use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{write_jsonl, Document};
use crate::error::{Error, Result};
use crate::transform::Query;

/// Which documents accompany a training query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FinetuneMode {
    /// The gold document alone.
    Dg,
    /// One random document.
    Dr,
    /// Gold then random.
    Dgr,
    /// Two copies of gold.
    Dgg,
    /// No context.
    Dempty,
}

impl FinetuneMode {
    pub fn needs_random(self) -> bool {
        matches!(self, Self::Dr | Self::Dgr)
    }
}

/// One training example, exported as `{x, contexts, y, mode}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinetuneEntry {
    pub x: String,
    pub contexts: Vec<String>,
    pub y: String,
    pub mode: FinetuneMode,
}

/// Builds the context composition for `mode`. The random document is drawn
/// uniformly from corpus documents whose id differs from the gold one, using
/// a ChaCha generator seeded with `seed`. The target `y` is the query's
/// first gold answer.
pub fn compose_finetune_context(
    query: &Query,
    gold: &Document,
    corpus: &[Document],
    mode: FinetuneMode,
    seed: u64,
) -> Result<FinetuneEntry> {
    let y = query
        .gold_answers
        .first()
        .cloned()
        .ok_or_else(|| Error::invalid(format!("query `{}` has no gold answer", query.id)))?;
    let random = || -> Result<String> {
        let pool: Vec<&Document> = corpus.iter().filter(|d| d.id != gold.id).collect();
        if pool.is_empty() {
            return Err(Error::CorpusTooSmall(format!(
                "mode {mode:?} needs a document other than `{}`",
                gold.id
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(pool[rng.gen_range(0..pool.len())].text.clone())
    };
    let contexts = match mode {
        FinetuneMode::Dg => vec![gold.text.clone()],
        FinetuneMode::Dr => vec![random()?],
        FinetuneMode::Dgr => vec![gold.text.clone(), random()?],
        FinetuneMode::Dgg => vec![gold.text.clone(), gold.text.clone()],
        FinetuneMode::Dempty => vec![],
    };
    Ok(FinetuneEntry {
        x: query.text.clone(),
        contexts,
        y,
        mode,
    })
}

pub fn write_finetune_jsonl(path: &Path, entries: &[FinetuneEntry]) -> Result<()> {
    write_jsonl(path, entries)
}
