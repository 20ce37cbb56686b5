//! On-disk layout: `<dir>/postings.bin` plus `<dir>/manifest.json`.
//!
//! `postings.bin` (all integers LEB128 varints, strings length-prefixed):
//!
//! ```text
//! magic "RPSX" | version | N | N × (chunk id, doc length)
//! | vocab size | per term: term, posting count, count × (doc delta, tf)
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::varint::{read_string, read_u64, write_bytes, write_u64};
use super::{mean_length, Bm25Params, Posting, SparseIndex};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RPSX";
const VERSION: u64 = 1;
pub const POSTINGS_FILE: &str = "postings.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseManifest {
    pub format_version: u64,
    pub documents: usize,
    pub vocabulary: usize,
    pub postings: usize,
    pub avg_doc_length: f64,
    pub k1: f64,
    pub b: f64,
}

impl SparseIndex {
    pub fn manifest(&self) -> SparseManifest {
        let (postings, _, _) = self.parts();
        SparseManifest {
            format_version: VERSION,
            documents: self.len(),
            vocabulary: postings.len(),
            postings: postings.values().map(Vec::len).sum(),
            avg_doc_length: self.avg_doc_length(),
            k1: self.params().k1,
            b: self.params().b,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let (postings, ids, lengths) = self.parts();
        let mut w = BufWriter::new(File::create(dir.join(POSTINGS_FILE))?);
        w.write_all(MAGIC)?;
        write_u64(&mut w, VERSION)?;
        write_u64(&mut w, ids.len() as u64)?;
        for (id, &len) in ids.iter().zip(lengths) {
            write_bytes(&mut w, id.as_bytes())?;
            write_u64(&mut w, u64::from(len))?;
        }
        write_u64(&mut w, postings.len() as u64)?;
        for (term, list) in postings {
            write_bytes(&mut w, term.as_bytes())?;
            write_u64(&mut w, list.len() as u64)?;
            let mut prev = 0u32;
            for p in list {
                write_u64(&mut w, u64::from(p.doc - prev))?;
                write_u64(&mut w, u64::from(p.tf))?;
                prev = p.doc;
            }
        }
        w.flush()?;
        fs::write(
            dir.join(MANIFEST_FILE),
            serde_json::to_string_pretty(&self.manifest())?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: SparseManifest =
            serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        let path = dir.join(POSTINGS_FILE);
        let corrupt = |message: String| Error::Corrupt {
            path: path.clone(),
            message,
        };
        let mut r = BufReader::new(File::open(&path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(corrupt("bad magic".into()));
        }
        let version = read_u64(&mut r)?;
        if version != VERSION || manifest.format_version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let n = read_u64(&mut r)? as usize;
        let mut ids = Vec::with_capacity(n);
        let mut lengths = Vec::with_capacity(n);
        for _ in 0..n {
            ids.push(read_string(&mut r)?);
            lengths.push(to_u32(read_u64(&mut r)?).ok_or_else(|| corrupt("length overflow".into()))?);
        }
        let vocab = read_u64(&mut r)? as usize;
        let mut postings = BTreeMap::new();
        for _ in 0..vocab {
            let term = read_string(&mut r)?;
            let count = read_u64(&mut r)? as usize;
            let mut list = Vec::with_capacity(count);
            let mut doc = 0u32;
            for i in 0..count {
                let delta = to_u32(read_u64(&mut r)?).ok_or_else(|| corrupt("doc overflow".into()))?;
                if i > 0 && delta == 0 {
                    return Err(corrupt(format!("non-increasing postings for `{term}`")));
                }
                doc = doc
                    .checked_add(delta)
                    .filter(|&d| (d as usize) < n)
                    .ok_or_else(|| corrupt(format!("posting out of range for `{term}`")))?;
                let tf = to_u32(read_u64(&mut r)?).filter(|&t| t >= 1);
                let tf = tf.ok_or_else(|| corrupt(format!("invalid tf for `{term}`")))?;
                list.push(Posting { doc, tf });
            }
            postings.insert(term, list);
        }
        if manifest.documents != n || manifest.vocabulary != vocab {
            return Err(corrupt("manifest disagrees with postings file".into()));
        }
        if n == 0 || mean_length(&lengths) != manifest.avg_doc_length {
            return Err(corrupt("average document length mismatch".into()));
        }
        let params = Bm25Params {
            k1: manifest.k1,
            b: manifest.b,
        };
        SparseIndex::from_parts(postings, ids, lengths, manifest.avg_doc_length, params)
    }
}

fn to_u32(v: u64) -> Option<u32> {
    u32::try_from(v).ok()
}
