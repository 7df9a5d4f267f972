use crate::error::{Error, Result};

use super::NGramCounts;

/// Clipped n-gram matches and the candidate n-gram total.
pub fn clipped_counts(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let cand = NGramCounts::new(candidate, n);
    let refc = NGramCounts::new(reference, n);
    let clipped = cand
        .iter()
        .map(|(gram, &c)| c.min(refc.count(gram)))
        .sum();
    (clipped, cand.total())
}

fn check_max_n(max_n: usize) -> Result<()> {
    if !(1..=4).contains(&max_n) {
        return Err(Error::Config(format!("BLEU order must be in 1..=4, got {max_n}")));
    }
    Ok(())
}

/// Corpus-level cumulative BLEU-`max_n`: n-gram counts pooled over the corpus,
/// uniform weights, brevity penalty `exp(1 - r/c)` when `c < r`.
pub fn bleu(candidates: &[Vec<String>], references: &[Vec<String>], max_n: usize) -> Result<f64> {
    check_max_n(max_n)?;
    if candidates.len() != references.len() {
        return Err(Error::Config(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (clipped, total) = candidates
            .iter()
            .zip(references)
            .map(|(c, r)| clipped_counts(c, r, n))
            .fold((0, 0), |(a, b), (c, t)| (a + c, b + t));
        if clipped == 0 || total == 0 {
            return Ok(0.0);
        }
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let c: usize = candidates.iter().map(Vec::len).sum();
    let r: usize = references.iter().map(Vec::len).sum();
    Ok(brevity_penalty(c, r) * (log_sum / max_n as f64).exp())
}

pub fn brevity_penalty(candidate_len: usize, reference_len: usize) -> f64 {
    if candidate_len == 0 {
        0.0
    } else if candidate_len < reference_len {
        (1.0 - reference_len as f64 / candidate_len as f64).exp()
    } else {
        1.0
    }
}

/// Sentence-level BLEU-`max_n` with add-one smoothing on orders `n >= 2`.
pub fn sentence_bleu(candidate: &[String], reference: &[String], max_n: usize) -> Result<f64> {
    check_max_n(max_n)?;
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (clipped, total) = clipped_counts(candidate, reference, n);
        let p = if n == 1 {
            if total == 0 {
                0.0
            } else {
                clipped as f64 / total as f64
            }
        } else {
            (clipped + 1) as f64 / (total + 1) as f64
        };
        if p == 0.0 {
            return Ok(0.0);
        }
        log_sum += p.ln();
    }
    Ok(brevity_penalty(candidate.len(), reference.len()) * (log_sum / max_n as f64).exp())
}
