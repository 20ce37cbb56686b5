//! Synthetic corpus with planted relevance: every query has two relevant
//! documents that share both its exact terms and its character trigrams,
//! plus one lexical and one trigram decoy.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ragpipe::corpus::Document;
use ragpipe::transform::Query;

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn word(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    (0..syllables)
        .flat_map(|_| {
            [
                CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char,
                VOWELS[rng.gen_range(0..VOWELS.len())] as char,
            ]
        })
        .collect()
}

fn unique_words(rng: &mut ChaCha8Rng, n: usize, syllables: usize, taken: &mut HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = word(rng, syllables);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn filler(rng: &mut ChaCha8Rng, vocab: &[String], sentences: usize) -> Vec<String> {
    (0..sentences)
        .map(|_| {
            let n = rng.gen_range(6..12);
            let words: Vec<&str> = (0..n).map(|_| vocab.choose(rng).unwrap().as_str()).collect();
            format!("{}.", words.join(" "))
        })
        .collect()
}

pub struct Planted {
    pub docs: Vec<Document>,
    pub queries: Vec<Query>,
}

/// `queries` queries over `4 × queries` documents.
pub fn planted_corpus(queries: usize, seed: u64) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken = HashSet::new();
    let vocab = unique_words(&mut rng, 400, 2, &mut taken);
    let mut docs = Vec::new();
    let mut qs = Vec::new();
    for i in 0..queries {
        let keys = unique_words(&mut rng, 2, 4, &mut taken);
        let context: Vec<String> = (0..2).map(|_| vocab.choose(&mut rng).unwrap().clone()).collect();
        let text = format!("{} {} {} {}", keys[0], context[0], keys[1], context[1]);
        let mut relevant = Vec::new();
        for r in 0..2 {
            let mut sents = { let n = rng.gen_range(3..7); filler(&mut rng, &vocab, n) };
            let planted = format!("{} {} {} {}.", context[r], keys[0], keys[1], context[1 - r]);
            let at = rng.gen_range(0..=sents.len());
            sents.insert(at, planted);
            let id = format!("q{i:03}-rel{r}");
            docs.push(Document::new(id.clone(), sents.join(" ")));
            relevant.push(id);
        }
        // Exact-term decoy: one key repeated in a short document.
        let mut sents = filler(&mut rng, &vocab, 1);
        sents.push(format!("{k} {k} {k}.", k = keys[rng.gen_range(0..2)]));
        docs.push(Document::new(format!("q{i:03}-lex"), sents.join(" ")));
        // Trigram decoy: inflected keys that share most trigrams but no term.
        let mut sents = filler(&mut rng, &vocab, 1);
        sents.push(format!("{}s {}s {}ed.", keys[0], keys[1], keys[0]));
        docs.push(Document::new(format!("q{i:03}-tri"), sents.join(" ")));

        qs.push(Query {
            gold_doc_ids: relevant,
            gold_answers: vec![keys[0].clone()],
            ..Query::new(format!("q{i:03}"), text)
        });
    }
    docs.shuffle(&mut rng);
    Planted { docs, queries: qs }
}
