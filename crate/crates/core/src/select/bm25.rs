//! Okapi BM25 over the sentences of a context pool, max-normalized to [0, 1]
//! so it can stand in for cosine similarity under the same threshold.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::segment::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone)]
struct Doc {
    tf: HashMap<String, usize>,
    len: usize,
}

impl Doc {
    fn new(text: &str) -> Self {
        let mut tf = HashMap::new();
        let mut len = 0;
        for tok in tokenize(text) {
            *tf.entry(tok).or_insert(0) += 1;
            len += 1;
        }
        Self { tf, len }
    }
}

/// Document frequencies and lengths for one pool of sentences.
#[derive(Debug, Clone)]
pub struct CorpusStats {
    params: Bm25Params,
    docs: Vec<Doc>,
    doc_freq: HashMap<String, usize>,
    avg_len: f64,
}

impl CorpusStats {
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a str>, params: Bm25Params) -> Self {
        let docs: Vec<Doc> = sentences.into_iter().map(Doc::new).collect();
        let mut doc_freq = HashMap::new();
        for d in &docs {
            for term in d.tf.keys() {
                *doc_freq.entry(term.clone()).or_insert(0) += 1;
            }
        }
        let total: usize = docs.iter().map(|d| d.len).sum();
        let avg_len = if docs.is_empty() { 0.0 } else { total as f64 / docs.len() as f64 };
        Self {
            params,
            docs,
            doc_freq,
            avg_len,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    /// `ln(1 + (N - n + 0.5) / (n + 0.5))`, which stays non-negative.
    pub fn idf(&self, term: &str) -> f64 {
        let n = *self.doc_freq.get(term).unwrap_or(&0) as f64;
        let big_n = self.docs.len() as f64;
        (1.0 + (big_n - n + 0.5) / (n + 0.5)).ln()
    }

    fn raw(&self, query_terms: &BTreeSet<String>, doc: &Doc) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let len_norm = if self.avg_len > 0.0 { doc.len as f64 / self.avg_len } else { 0.0 };
        query_terms
            .iter()
            .filter_map(|term| {
                let tf = *doc.tf.get(term)? as f64;
                let n = *self.doc_freq.get(term)?;
                if n == 0 {
                    return None;
                }
                Some(self.idf(term) * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len_norm)))
            })
            .fold(0.0, |acc, s| acc + s)
    }

    /// Unnormalized BM25 of arbitrary text against this corpus.
    pub fn raw_score(&self, query: &str, text: &str) -> f64 {
        self.raw(&query_terms(query), &Doc::new(text))
    }

    /// Unnormalized BM25 of every corpus document, in corpus order.
    pub fn raw_scores(&self, query: &str) -> Vec<f64> {
        let terms = query_terms(query);
        self.docs.iter().map(|d| self.raw(&terms, d)).collect()
    }

    /// Scores divided by the corpus maximum; all zeros when nothing matches.
    pub fn normalized_scores(&self, query: &str) -> Vec<f64> {
        let raw = self.raw_scores(query);
        let max = raw.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            raw.into_iter().map(|s| s / max).collect()
        } else {
            vec![0.0; raw.len()]
        }
    }
}

fn query_terms(query: &str) -> BTreeSet<String> {
    tokenize(query).collect()
}

/// Normalized BM25 relevance of `sentence` to `query` within `stats`.
pub fn bm25_score(query: &str, sentence: &str, stats: &CorpusStats) -> f64 {
    let max = stats.raw_scores(query).into_iter().fold(0.0, f64::max);
    if max > 0.0 {
        stats.raw_score(query, sentence) / max
    } else {
        0.0
    }
}
