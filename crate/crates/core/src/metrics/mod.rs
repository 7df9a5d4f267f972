//! Caption evaluation: BLEU-1..4, ROUGE-L, METEOR and CIDEr.

mod bleu;
mod cider;
mod meteor;
mod rouge;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use bleu::{bleu, brevity_penalty, clipped_counts, sentence_bleu};
pub use cider::{cider, IdfTable, CIDER_MAX_N};
pub use meteor::{align, meteor, meteor_from_alignment, Alignment};
pub use rouge::{lcs_length, rouge_l, ROUGE_BETA};

use crate::error::{Error, Result};
use crate::tokenizer::tokenize;

/// Multiset of the contiguous n-grams of one token sequence.
#[derive(Debug, Clone)]
pub struct NGramCounts<'a> {
    n: usize,
    counts: HashMap<&'a [String], usize>,
}

impl<'a> NGramCounts<'a> {
    pub fn new(tokens: &'a [String], n: usize) -> Self {
        assert!(n >= 1, "n-gram order must be positive");
        let mut counts = HashMap::new();
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
        Self { n, counts }
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn count(&self, gram: &[String]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'a [String], &usize)> {
        self.counts.iter().map(|(g, c)| (*g, c))
    }

    pub fn grams(&self) -> impl Iterator<Item = &'a [String]> + '_ {
        self.counts.keys().copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScores {
    /// Smoothed sentence BLEU-1..4.
    pub bleu: [f64; 4],
    pub cider: f64,
    pub meteor: f64,
    pub rouge_l: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// Corpus BLEU-1..4.
    pub bleu: [f64; 4],
    pub cider: f64,
    pub meteor: f64,
    pub rouge_l: f64,
    pub per_sentence: Option<Vec<SentenceScores>>,
}

#[derive(Serialize, Deserialize)]
struct ReportJson {
    bleu1: f64,
    bleu2: f64,
    bleu3: f64,
    bleu4: f64,
    cider: f64,
    meteor: f64,
    rouge_l: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    per_sentence: Option<Vec<SentenceScores>>,
}

impl MetricReport {
    /// JSON with keys `bleu1, bleu2, bleu3, bleu4, cider, meteor, rouge_l` in
    /// that order, followed by `per_sentence` when requested.
    pub fn to_json(&self, include_sentences: bool) -> String {
        let j = ReportJson {
            bleu1: self.bleu[0],
            bleu2: self.bleu[1],
            bleu3: self.bleu[2],
            bleu4: self.bleu[3],
            cider: self.cider,
            meteor: self.meteor,
            rouge_l: self.rouge_l,
            per_sentence: if include_sentences { self.per_sentence.clone() } else { None },
        };
        serde_json::to_string_pretty(&j).expect("report serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let j: ReportJson = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        Ok(Self {
            bleu: [j.bleu1, j.bleu2, j.bleu3, j.bleu4],
            cider: j.cider,
            meteor: j.meteor,
            rouge_l: j.rouge_l,
            per_sentence: j.per_sentence,
        })
    }
}

/// Scores already-tokenised candidate/reference pairs. The CIDEr document
/// frequencies come from the references themselves.
pub fn evaluate_tokens(candidates: &[Vec<String>], references: &[Vec<String>]) -> Result<MetricReport> {
    if candidates.is_empty() {
        return Err(Error::Config("cannot evaluate an empty set of pairs".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::Config(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    let mut corpus_bleu = [0.0; 4];
    for (n, b) in corpus_bleu.iter_mut().enumerate() {
        *b = bleu(candidates, references, n + 1)?;
    }
    let idf = IdfTable::new(references)?;
    let mut per_sentence = Vec::with_capacity(candidates.len());
    for (c, r) in candidates.iter().zip(references) {
        let mut sb = [0.0; 4];
        for (n, b) in sb.iter_mut().enumerate() {
            *b = sentence_bleu(c, r, n + 1)?;
        }
        per_sentence.push(SentenceScores {
            bleu: sb,
            cider: idf.sentence_score(c, r),
            meteor: meteor(c, r),
            rouge_l: rouge_l(c, r),
        });
    }
    let k = per_sentence.len() as f64;
    Ok(MetricReport {
        bleu: corpus_bleu,
        cider: per_sentence.iter().map(|s| s.cider).sum::<f64>() / k,
        meteor: per_sentence.iter().map(|s| s.meteor).sum::<f64>() / k,
        rouge_l: per_sentence.iter().map(|s| s.rouge_l).sum::<f64>() / k,
        per_sentence: Some(per_sentence),
    })
}

/// Tokenises `(candidate, reference)` text pairs and scores them.
pub fn evaluate_corpus<A: AsRef<str>, B: AsRef<str>>(pairs: &[(A, B)]) -> Result<MetricReport> {
    let (cands, refs): (Vec<_>, Vec<_>) = pairs
        .iter()
        .map(|(c, r)| (tokenize(c.as_ref()), tokenize(r.as_ref())))
        .unzip();
    evaluate_tokens(&cands, &refs)
}

#[cfg(test)]
pub(crate) fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ngram_totals() {
        let t = words("a b a b");
        assert_eq!(NGramCounts::new(&t, 2).total(), 3);
        assert_eq!(NGramCounts::new(&t, 2).count(&words("a b")), 2);
        assert_eq!(NGramCounts::new(&t, 5).total(), 0);
    }

    #[test]
    fn identical_corpus_report() {
        let pairs = [
            ("The heart is normal in size.", "The heart is normal in size."),
            ("No pleural effusion or pneumothorax.", "No pleural effusion or pneumothorax."),
            ("Mild degenerative changes of the spine.", "Mild degenerative changes of the spine."),
        ];
        let r = evaluate_corpus(&pairs).unwrap();
        assert_eq!(r.bleu, [1.0; 4]);
        assert_eq!(r.rouge_l, 1.0);
        assert!(r.meteor > 0.99);
        assert!(r.cider > 0.0 && r.cider <= 10.0);
    }

    #[test]
    fn json_key_order_is_fixed() {
        let r = evaluate_corpus(&[("a b c", "a b d")]).unwrap();
        let json = r.to_json(false);
        let keys = ["bleu1", "bleu2", "bleu3", "bleu4", "cider", "meteor", "rouge_l"];
        let positions: Vec<usize> = keys.iter().map(|k| json.find(&format!("\"{k}\"")).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
        assert!(!json.contains("per_sentence"));
        assert_eq!(json, r.to_json(false));
        assert!(r.to_json(true).contains("per_sentence"));
        let back = MetricReport::from_json(&r.to_json(true)).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn empty_pairs_rejected() {
        let empty: [(&str, &str); 0] = [];
        assert!(matches!(evaluate_corpus(&empty), Err(Error::Config(_))));
    }

    #[test]
    fn pretokenised_equals_tokenised() {
        let pairs = [("No acute disease; heart (normal).", "Heart normal, no acute disease.")];
        let a = evaluate_corpus(&pairs).unwrap();
        let cand = tokenize(pairs[0].0).join(" ");
        let refr = tokenize(pairs[0].1).join(" ");
        let b = evaluate_corpus(&[(cand, refr)]).unwrap();
        assert_eq!(a, b);
    }
}
