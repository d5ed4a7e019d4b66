//! Persistent inverted index with BM25 ranking over a sentence corpus.
//!
//! Documents are corpus sentences, one per input line, with dense ids
//! assigned in ingest order. The index is immutable after build, so
//! concurrent searches need no coordination.

use crate::binio::{BinReader, BinWriter};
use crate::error::{Error, Result};
use crate::tokenize;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter};
use std::path::Path;

const INDEX_MAGIC: &[u8; 4] = b"QIDX";
const INDEX_VERSION: u32 = 1;

/// BM25 hyperparameters: `k1` controls term-frequency saturation, `b`
/// controls document-length normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(Error::Config(format!("bm25 k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Config(format!("bm25 b must be in [0,1], got {}", self.b)));
        }
        Ok(())
    }
}

/// One indexed sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: u32,
    pub text: String,
    /// Token count after normalization; >= 1 for every indexed document.
    pub length: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Posting {
    doc_id: u32,
    term_frequency: u32,
}

/// One ranked search hit. Results are ordered by `(score desc, doc_id asc)`
/// and zero-overlap documents are never returned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub doc_id: u32,
    pub score: f64,
    /// 1-based position in the result list.
    pub rank: u32,
}

/// Immutable inverted index with per-term postings and corpus statistics.
#[derive(Debug)]
pub struct Index {
    params: Bm25Params,
    postings: HashMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    doc_store: Vec<String>,
    avg_doc_len: f64,
    /// Content digest over (params, accepted docs); keys the retrieval cache.
    digest: [u8; 32],
}

/// Result of a build: the index plus how many empty documents were skipped.
#[derive(Debug)]
pub struct IndexBuild {
    pub index: Index,
    pub skipped_empty: usize,
}

impl Index {
    /// Builds an index over `docs` in input order. Empty documents (no
    /// tokens) are skipped and counted; an all-empty corpus is an error.
    pub fn build<I, S>(docs: I, params: Bm25Params) -> Result<IndexBuild>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        params.validate()?;
        let mut builder = Builder::new(params);
        for text in docs {
            builder.push(text.as_ref());
        }
        builder.finish()
    }

    /// Sharded build: tokenizes shards in parallel, then merges in shard
    /// order. Produces an index identical to [`Index::build`] regardless of
    /// shard count.
    pub fn build_sharded(docs: &[String], params: Bm25Params, shards: usize) -> Result<IndexBuild> {
        params.validate()?;
        let shards = shards.max(1);
        let chunk = docs.len().div_ceil(shards).max(1);
        let tokenized: Vec<Vec<Vec<String>>> = docs
            .par_chunks(chunk)
            .map(|chunk| chunk.iter().map(|t| tokenize::norms(t)).collect())
            .collect();
        let mut builder = Builder::new(params);
        for (chunk_docs, chunk_tokens) in docs.chunks(chunk).zip(tokenized) {
            for (text, tokens) in chunk_docs.iter().zip(chunk_tokens) {
                builder.push_tokenized(text, tokens);
            }
        }
        builder.finish()
    }

    /// Builds from a UTF-8 text file, one sentence per line.
    pub fn build_from_file(path: &Path, params: Bm25Params, shards: usize) -> Result<IndexBuild> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = Vec::new();
        for line in BufReader::new(file).lines() {
            lines.push(line.map_err(|e| Error::io(path, e))?);
        }
        Self::build_sharded(&lines, params, shards)
    }

    pub fn doc_count(&self) -> u32 {
        self.doc_lengths.len() as u32
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    /// Hex content digest; stable across save/load of the same build.
    pub fn digest_hex(&self) -> String {
        self.digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn doc_text(&self, doc_id: u32) -> Result<&str> {
        self.doc_store
            .get(doc_id as usize)
            .map(|s| s.as_str())
            .ok_or(Error::DocNotFound {
                doc_id,
                doc_count: self.doc_count(),
            })
    }

    pub fn document(&self, doc_id: u32) -> Result<Document> {
        let text = self.doc_text(doc_id)?;
        Ok(Document {
            doc_id,
            text: text.to_string(),
            length: self.doc_lengths[doc_id as usize],
        })
    }

    /// BM25 score of `doc_id` for the given normalized query terms.
    ///
    /// Per distinct term: `idf = ln(1 + (N - df + 0.5)/(df + 0.5))` and
    /// `tf_part = tf*(k1+1) / (tf + k1*(1 - b + b*dl/avgdl))`. Duplicate
    /// query terms are counted once; terms absent from the document
    /// contribute zero.
    pub fn bm25_score(&self, query_terms: &[String], doc_id: u32) -> Result<f64> {
        if doc_id as usize >= self.doc_lengths.len() {
            return Err(Error::DocNotFound {
                doc_id,
                doc_count: self.doc_count(),
            });
        }
        let dl = self.doc_lengths[doc_id as usize] as f64;
        let mut seen: Vec<&str> = Vec::with_capacity(query_terms.len());
        let mut score = 0.0;
        for term in query_terms {
            if seen.contains(&term.as_str()) {
                continue;
            }
            seen.push(term);
            if let Some(postings) = self.postings.get(term) {
                if let Ok(pos) = postings.binary_search_by_key(&doc_id, |p| p.doc_id) {
                    let tf = postings[pos].term_frequency as f64;
                    score += self.idf(postings.len() as u64) * self.tf_part(tf, dl);
                }
            }
        }
        Ok(score)
    }

    fn idf(&self, df: u64) -> f64 {
        let n = self.doc_count() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn tf_part(&self, tf: f64, dl: f64) -> f64 {
        let Bm25Params { k1, b } = self.params;
        tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / self.avg_doc_len))
    }

    /// Top-`k` documents for a free-text query. Only documents sharing at
    /// least one term with the query are candidates; ties break by ascending
    /// doc_id. An empty query (after tokenization) returns no results.
    pub fn search(&self, query: &str, k: usize) -> Vec<RetrievalResult> {
        let mut terms = tokenize::norms(query);
        terms.sort_unstable();
        terms.dedup();

        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            if let Some(postings) = self.postings.get(term) {
                let idf = self.idf(postings.len() as u64);
                for p in postings {
                    let dl = self.doc_lengths[p.doc_id as usize] as f64;
                    *scores.entry(p.doc_id).or_insert(0.0) +=
                        idf * self.tf_part(p.term_frequency as f64, dl);
                }
            }
        }

        let mut hits: Vec<(u32, f64)> = scores.into_iter().filter(|(_, s)| *s > 0.0).collect();
        hits.sort_unstable_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        hits.truncate(k);
        hits.into_iter()
            .enumerate()
            .map(|(i, (doc_id, score))| RetrievalResult {
                doc_id,
                score,
                rank: (i + 1) as u32,
            })
            .collect()
    }

    /// Writes the index to `<dir>/index.bin`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("index.bin");
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BinWriter::new(BufWriter::new(file), INDEX_MAGIC, INDEX_VERSION)
            .map_err(|e| Error::io(&path, e))?;
        (|| -> std::io::Result<()> {
            w.f64(self.params.k1)?;
            w.f64(self.params.b)?;
            w.bytes(&self.digest)?;
            w.f64(self.avg_doc_len)?;
            w.u32(self.doc_count())?;
            for len in &self.doc_lengths {
                w.u32(*len)?;
            }
            for text in &self.doc_store {
                w.str(text)?;
            }
            // Terms written in sorted order so saved bytes are deterministic.
            let mut terms: Vec<&String> = self.postings.keys().collect();
            terms.sort_unstable();
            w.u64(terms.len() as u64)?;
            for term in terms {
                w.str(term)?;
                let postings = &self.postings[term];
                w.u32(postings.len() as u32)?;
                for p in postings {
                    w.u32(p.doc_id)?;
                    w.u32(p.term_frequency)?;
                }
            }
            w.finish()
        })()
        .map_err(|e| Error::io(&path, e))
    }

    /// Loads an index previously written by [`Index::save`].
    pub fn load(dir: &Path) -> Result<Index> {
        let path = dir.join("index.bin");
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut r = BinReader::new(BufReader::new(file), &path, INDEX_MAGIC, INDEX_VERSION)?;
        let params = Bm25Params {
            k1: r.f64()?,
            b: r.f64()?,
        };
        let digest_bytes = r.bytes(32)?;
        let mut digest = [0u8; 32];
        digest.copy_from_slice(&digest_bytes);
        let avg_doc_len = r.f64()?;
        let doc_count = r.u32()? as usize;
        let mut doc_lengths = Vec::with_capacity(doc_count);
        for _ in 0..doc_count {
            doc_lengths.push(r.u32()?);
        }
        let mut doc_store = Vec::with_capacity(doc_count);
        for _ in 0..doc_count {
            doc_store.push(r.str()?);
        }
        let term_count = r.u64()?;
        let mut postings = HashMap::with_capacity(term_count as usize);
        for _ in 0..term_count {
            let term = r.str()?;
            let n = r.u32()? as usize;
            let mut list = Vec::with_capacity(n);
            let mut prev: Option<u32> = None;
            for _ in 0..n {
                let doc_id = r.u32()?;
                let term_frequency = r.u32()?;
                if doc_id as usize >= doc_count {
                    return Err(r.error(format!("posting doc_id {doc_id} out of range")));
                }
                if term_frequency == 0 {
                    return Err(r.error("zero term frequency in posting"));
                }
                if prev.is_some_and(|p| p >= doc_id) {
                    return Err(r.error(format!("postings for '{term}' not strictly ascending")));
                }
                prev = Some(doc_id);
                list.push(Posting {
                    doc_id,
                    term_frequency,
                });
            }
            postings.insert(term, list);
        }
        Ok(Index {
            params,
            postings,
            doc_lengths,
            doc_store,
            avg_doc_len,
            digest,
        })
    }
}

struct Builder {
    params: Bm25Params,
    postings: HashMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    doc_store: Vec<String>,
    total_len: u64,
    skipped_empty: usize,
    hasher: Sha256,
}

impl Builder {
    fn new(params: Bm25Params) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(params.k1.to_bits().to_le_bytes());
        hasher.update(params.b.to_bits().to_le_bytes());
        Builder {
            params,
            postings: HashMap::new(),
            doc_lengths: Vec::new(),
            doc_store: Vec::new(),
            total_len: 0,
            skipped_empty: 0,
            hasher,
        }
    }

    fn push(&mut self, text: &str) {
        let tokens = tokenize::norms(text);
        self.push_tokenized(text, tokens);
    }

    fn push_tokenized(&mut self, text: &str, tokens: Vec<String>) {
        if tokens.is_empty() {
            self.skipped_empty += 1;
            return;
        }
        let doc_id = self.doc_lengths.len() as u32;
        let mut tf: HashMap<&str, u32> = HashMap::new();
        for t in &tokens {
            *tf.entry(t.as_str()).or_insert(0) += 1;
        }
        // Sorted term order keeps the build deterministic.
        let mut pairs: Vec<(&str, u32)> = tf.into_iter().collect();
        pairs.sort_unstable();
        for (term, freq) in pairs {
            self.postings.entry(term.to_string()).or_default().push(Posting {
                doc_id,
                term_frequency: freq,
            });
        }
        self.doc_lengths.push(tokens.len() as u32);
        self.total_len += tokens.len() as u64;
        self.hasher.update(text.as_bytes());
        self.hasher.update([0u8]);
        self.doc_store.push(text.to_string());
    }

    fn finish(self) -> Result<IndexBuild> {
        if self.doc_lengths.is_empty() {
            return Err(Error::Corpus(format!(
                "no indexable documents ({} empty lines skipped)",
                self.skipped_empty
            )));
        }
        let avg_doc_len = self.total_len as f64 / self.doc_lengths.len() as f64;
        let digest: [u8; 32] = self.hasher.finalize().into();
        Ok(IndexBuild {
            index: Index {
                params: self.params,
                postings: self.postings,
                doc_lengths: self.doc_lengths,
                doc_store: self.doc_store,
                avg_doc_len,
                digest,
            },
            skipped_empty: self.skipped_empty,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Index {
        Index::build(["a b a", "b c"], Bm25Params::default()).unwrap().index
    }

    #[test]
    fn build_counts_terms_and_lengths() {
        let idx = tiny();
        assert_eq!(idx.doc_count(), 2);
        assert_eq!(idx.avg_doc_len(), 2.5);
        assert_eq!(idx.postings["a"], vec![Posting { doc_id: 0, term_frequency: 2 }]);
        assert_eq!(
            idx.postings["b"],
            vec![
                Posting { doc_id: 0, term_frequency: 1 },
                Posting { doc_id: 1, term_frequency: 1 }
            ]
        );
        assert_eq!(idx.postings["c"], vec![Posting { doc_id: 1, term_frequency: 1 }]);
    }

    #[test]
    fn single_doc_corpus() {
        let idx = Index::build(["x"], Bm25Params::default()).unwrap().index;
        assert_eq!(idx.doc_count(), 1);
        assert_eq!(idx.avg_doc_len(), 1.0);
    }

    #[test]
    fn empty_docs_skipped_with_count() {
        let built = Index::build(["", "a"], Bm25Params::default()).unwrap();
        assert_eq!(built.skipped_empty, 1);
        assert_eq!(built.index.doc_count(), 1);
        assert_eq!(built.index.doc_text(0).unwrap(), "a");
    }

    #[test]
    fn all_empty_corpus_is_an_error() {
        let err = Index::build(["", "  "], Bm25Params::default()).unwrap_err();
        assert!(matches!(err, Error::Corpus(_)));
    }

    #[test]
    fn hand_computed_bm25_score() {
        let idx = tiny();
        let score = idx.bm25_score(&["a".into()], 0).unwrap();
        assert!((score - 0.902346).abs() < 1e-6, "score = {score}");
    }

    #[test]
    fn absent_term_scores_zero() {
        let idx = tiny();
        assert_eq!(idx.bm25_score(&["z".into()], 0).unwrap(), 0.0);
        assert_eq!(idx.bm25_score(&["z".into()], 1).unwrap(), 0.0);
    }

    #[test]
    fn duplicate_query_terms_counted_once() {
        let idx = tiny();
        let once = idx.bm25_score(&["a".into()], 0).unwrap();
        let twice = idx.bm25_score(&["a".into(), "a".into()], 0).unwrap();
        assert_eq!(once.to_bits(), twice.to_bits());
    }

    #[test]
    fn unknown_doc_id_is_an_error() {
        let idx = tiny();
        assert!(matches!(
            idx.bm25_score(&["a".into()], 7),
            Err(Error::DocNotFound { doc_id: 7, .. })
        ));
    }

    #[test]
    fn search_returns_only_overlapping_docs() {
        let idx = tiny();
        let hits = idx.search("a", 10);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].doc_id, 0);
        assert_eq!(hits[0].rank, 1);
    }

    #[test]
    fn search_k1_takes_higher_scoring_doc() {
        let idx = tiny();
        // Both docs contain "b"; doc 1 is shorter so it scores higher.
        let s0 = idx.bm25_score(&["b".into()], 0).unwrap();
        let s1 = idx.bm25_score(&["b".into()], 1).unwrap();
        assert!(s1 > s0);
        let hits = idx.search("b", 1);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].doc_id, 1);
    }

    #[test]
    fn oov_query_returns_empty() {
        let idx = tiny();
        assert!(idx.search("q w e", 5).is_empty());
        assert!(idx.search("", 5).is_empty());
    }

    #[test]
    fn sharded_build_matches_sequential() {
        let docs: Vec<String> = (0..40)
            .map(|i| format!("tok{} tok{} shared word{}", i % 7, i % 3, i))
            .chain(["".to_string()])
            .collect();
        let seq = Index::build(docs.iter().map(|s| s.as_str()), Bm25Params::default()).unwrap();
        for shards in [1, 2, 3, 8, 64] {
            let sh = Index::build_sharded(&docs, Bm25Params::default(), shards).unwrap();
            assert_eq!(sh.skipped_empty, seq.skipped_empty);
            assert_eq!(sh.index.digest, seq.index.digest, "shards={shards}");
            assert_eq!(sh.index.doc_lengths, seq.index.doc_lengths);
            assert_eq!(sh.index.postings, seq.index.postings);
        }
    }

    #[test]
    fn concurrent_searches_are_safe() {
        let idx = tiny();
        std::thread::scope(|s| {
            for _ in 0..4 {
                s.spawn(|| {
                    for _ in 0..100 {
                        let hits = idx.search("b c", 2);
                        assert_eq!(hits[0].doc_id, 1);
                    }
                });
            }
        });
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let idx = tiny();
        idx.save(dir.path()).unwrap();
        let loaded = Index::load(dir.path()).unwrap();
        assert_eq!(loaded.digest, idx.digest);
        for query in ["a", "b", "a b c", "c b a"] {
            let h1 = idx.search(query, 10);
            let h2 = loaded.search(query, 10);
            assert_eq!(h1.len(), h2.len());
            for (a, b) in h1.iter().zip(&h2) {
                assert_eq!(a.doc_id, b.doc_id);
                assert_eq!(a.score.to_bits(), b.score.to_bits());
            }
        }
    }

    #[test]
    fn load_missing_file_reports_cause() {
        let dir = tempfile::tempdir().unwrap();
        let err = Index::load(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn load_corrupt_file_reports_cause() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("index.bin"), b"garbage").unwrap();
        let err = Index::load(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Persist { .. }));
    }
}
