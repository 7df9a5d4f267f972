//! Plain CIDEr (no length penalty).
//!
//! For `n = 1..=4` each sentence becomes a TF-IDF vector with
//! `idf = ln(|corpus| / (1 + df))`. Negative IDF values are clamped to zero,
//! so n-grams present in nearly every corpus document carry no weight.

use std::collections::HashMap;

use crate::error::{Error, Result};

use super::NGramCounts;

pub const CIDER_MAX_N: usize = 4;

/// Document frequencies per n-gram order, built once over the reference corpus.
#[derive(Debug, Clone)]
pub struct IdfTable {
    doc_freq: Vec<HashMap<Vec<String>, usize>>,
    num_docs: usize,
}

impl IdfTable {
    pub fn new(corpus_refs: &[Vec<String>]) -> Result<Self> {
        if corpus_refs.is_empty() {
            return Err(Error::Config("CIDEr needs a non-empty reference corpus".into()));
        }
        let mut doc_freq = vec![HashMap::new(); CIDER_MAX_N];
        for doc in corpus_refs {
            for (n, df) in (1..=CIDER_MAX_N).zip(doc_freq.iter_mut()) {
                for gram in NGramCounts::new(doc, n).grams() {
                    *df.entry(gram.to_vec()).or_insert(0) += 1;
                }
            }
        }
        Ok(Self {
            doc_freq,
            num_docs: corpus_refs.len(),
        })
    }

    pub fn idf(&self, gram: &[String]) -> f64 {
        let df = self.doc_freq[gram.len() - 1].get(gram).copied().unwrap_or(0);
        (self.num_docs as f64 / (1.0 + df as f64)).ln().max(0.0)
    }

    fn vector(&self, tokens: &[String], n: usize) -> HashMap<Vec<String>, f64> {
        NGramCounts::new(tokens, n)
            .iter()
            .map(|(g, &c)| (g.to_vec(), c as f64 * self.idf(g)))
            .filter(|(_, w)| *w > 0.0)
            .collect()
    }

    /// `10 * mean_n cos(tfidf_n(candidate), tfidf_n(reference))`.
    pub fn sentence_score(&self, candidate: &[String], reference: &[String]) -> f64 {
        let mut total = 0.0;
        for n in 1..=CIDER_MAX_N {
            let c = self.vector(candidate, n);
            let r = self.vector(reference, n);
            total += cosine(&c, &r);
        }
        10.0 * total / CIDER_MAX_N as f64
    }
}

fn cosine(a: &HashMap<Vec<String>, f64>, b: &HashMap<Vec<String>, f64>) -> f64 {
    let norm = |v: &HashMap<Vec<String>, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().filter_map(|(g, x)| b.get(g).map(|y| x * y)).sum();
    (dot / (na * nb)).min(1.0)
}

/// Mean sentence CIDEr over aligned candidate/reference lists.
pub fn cider(candidates: &[Vec<String>], references: &[Vec<String>], corpus_refs: &[Vec<String>]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::Config(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::Config("CIDEr needs at least one candidate".into()));
    }
    let idf = IdfTable::new(corpus_refs)?;
    let sum: f64 = candidates
        .iter()
        .zip(references)
        .map(|(c, r)| idf.sentence_score(c, r))
        .sum();
    Ok(sum / candidates.len() as f64)
}
