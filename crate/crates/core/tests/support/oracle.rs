//! Brute-force caption metrics used as a reference in tests.
//!
//! Everything here is deliberately naive: n-grams are plain vectors scanned
//! linearly, the LCS is found by unmemoised recursion and METEOR alignments
//! are enumerated exhaustively. Only suitable for short sentences.
#![allow(dead_code)]

type Gram = Vec<String>;

pub fn ngrams(tokens: &[String], n: usize) -> Vec<Gram> {
    let mut out = Vec::new();
    if tokens.len() >= n {
        for start in 0..=tokens.len() - n {
            out.push(tokens[start..start + n].to_vec());
        }
    }
    out
}

fn occurrences(list: &[Gram], gram: &Gram) -> usize {
    list.iter().filter(|g| *g == gram).count()
}

fn distinct(list: &[Gram]) -> Vec<Gram> {
    let mut out: Vec<Gram> = Vec::new();
    for g in list {
        if !out.contains(g) {
            out.push(g.clone());
        }
    }
    out
}

/// (clipped matches, candidate n-gram count)
pub fn clipped(cand: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let c = ngrams(cand, n);
    let r = ngrams(reference, n);
    let matched = distinct(&c)
        .iter()
        .map(|g| occurrences(&c, g).min(occurrences(&r, g)))
        .sum();
    (matched, c.len())
}

fn brevity(c: usize, r: usize) -> f64 {
    if c == 0 {
        0.0
    } else if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

pub fn corpus_bleu(cands: &[Vec<String>], refs: &[Vec<String>], max_n: usize) -> f64 {
    let mut product = 1.0;
    for n in 1..=max_n {
        let mut num = 0;
        let mut den = 0;
        for (c, r) in cands.iter().zip(refs) {
            let (m, t) = clipped(c, r, n);
            num += m;
            den += t;
        }
        if num == 0 {
            return 0.0;
        }
        product *= num as f64 / den as f64;
    }
    let c: usize = cands.iter().map(|s| s.len()).sum();
    let r: usize = refs.iter().map(|s| s.len()).sum();
    brevity(c, r) * product.powf(1.0 / max_n as f64)
}

pub fn sentence_bleu(cand: &[String], reference: &[String], max_n: usize) -> f64 {
    let mut product = 1.0;
    for n in 1..=max_n {
        let (m, t) = clipped(cand, reference, n);
        let p = if n == 1 {
            if t == 0 {
                0.0
            } else {
                m as f64 / t as f64
            }
        } else {
            (m + 1) as f64 / (t + 1) as f64
        };
        product *= p;
    }
    if product == 0.0 {
        return 0.0;
    }
    brevity(cand.len(), reference.len()) * product.powf(1.0 / max_n as f64)
}

pub fn lcs(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    if a[0] == b[0] {
        return 1 + lcs(&a[1..], &b[1..]);
    }
    lcs(&a[1..], b).max(lcs(a, &b[1..]))
}

pub fn rouge_l(cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let l = lcs(cand, reference) as f64;
    if l == 0.0 {
        return 0.0;
    }
    let p = l / cand.len() as f64;
    let r = l / reference.len() as f64;
    let beta2 = 1.2f64 * 1.2;
    (1.0 + beta2) * p * r / (r + beta2 * p)
}

/// Every one-to-one exact-match alignment, as `(cand index, ref index)` pairs
/// sorted by candidate index.
fn all_alignments(cand: &[String], reference: &[String]) -> Vec<Vec<(usize, usize)>> {
    fn rec(
        i: usize,
        cand: &[String],
        reference: &[String],
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if i == cand.len() {
            out.push(cur.clone());
            return;
        }
        rec(i + 1, cand, reference, used, cur, out);
        for j in 0..reference.len() {
            if !used[j] && cand[i] == reference[j] {
                used[j] = true;
                cur.push((i, j));
                rec(i + 1, cand, reference, used, cur, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(0, cand, reference, &mut vec![false; reference.len()], &mut Vec::new(), &mut out);
    out
}

fn chunks_of(alignment: &[(usize, usize)]) -> usize {
    let mut chunks = 0;
    for (k, &(i, j)) in alignment.iter().enumerate() {
        let continues = k > 0 && alignment[k - 1] == (i.wrapping_sub(1), j.wrapping_sub(1));
        if !continues {
            chunks += 1;
        }
    }
    chunks
}

/// (matches, chunks) of the best alignment.
pub fn meteor_alignment(cand: &[String], reference: &[String]) -> (usize, usize) {
    let all = all_alignments(cand, reference);
    let m = all.iter().map(|a| a.len()).max().unwrap_or(0);
    let chunks = all
        .iter()
        .filter(|a| a.len() == m)
        .map(|a| chunks_of(a))
        .min()
        .unwrap_or(0);
    (m, chunks)
}

pub fn meteor(cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let (m, chunks) = meteor_alignment(cand, reference);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / cand.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f = 10.0 * p * r / (r + 9.0 * p);
    let frag = chunks as f64 / m as f64;
    f * (1.0 - 0.5 * frag * frag * frag)
}

fn idf(corpus: &[Vec<String>], gram: &Gram) -> f64 {
    let n = gram.len();
    let df = corpus.iter().filter(|doc| ngrams(doc, n).contains(gram)).count();
    let v = (corpus.len() as f64 / (1.0 + df as f64)).ln();
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Term frequency normalised by the number of n-grams, times IDF.
fn tfidf(tokens: &[String], n: usize, corpus: &[Vec<String>]) -> Vec<(Gram, f64)> {
    let grams = ngrams(tokens, n);
    distinct(&grams)
        .into_iter()
        .map(|g| {
            let tf = occurrences(&grams, &g) as f64 / grams.len() as f64;
            let w = tf * idf(corpus, &g);
            (g, w)
        })
        .collect()
}

fn weight_of(v: &[(Gram, f64)], g: &Gram) -> f64 {
    v.iter().find(|(h, _)| h == g).map(|(_, w)| *w).unwrap_or(0.0)
}

pub fn cider_sentence(cand: &[String], reference: &[String], corpus: &[Vec<String>]) -> f64 {
    let mut total = 0.0;
    for n in 1..=4 {
        let a = tfidf(cand, n, corpus);
        let b = tfidf(reference, n, corpus);
        let na: f64 = a.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if na > 0.0 && nb > 0.0 {
            let dot: f64 = a.iter().map(|(g, w)| w * weight_of(&b, g)).sum();
            total += dot / (na * nb);
        }
    }
    10.0 * total / 4.0
}

/// Corpus scores in report order: bleu1..4, cider, meteor, rouge_l.
pub fn report(cands: &[Vec<String>], refs: &[Vec<String>]) -> [f64; 7] {
    let k = cands.len() as f64;
    let mean = |f: &dyn Fn(&[String], &[String]) -> f64| -> f64 {
        cands.iter().zip(refs).map(|(c, r)| f(c, r)).sum::<f64>() / k
    };
    [
        corpus_bleu(cands, refs, 1),
        corpus_bleu(cands, refs, 2),
        corpus_bleu(cands, refs, 3),
        corpus_bleu(cands, refs, 4),
        mean(&|c, r| cider_sentence(c, r, refs)),
        mean(&meteor),
        mean(&rouge_l),
    ]
}

/// Short random sentences over a tiny vocabulary so that repeats (and
/// therefore clipping and ambiguous alignments) are common.
pub fn random_pairs(seed: u64, count: usize) -> Vec<(Vec<String>, Vec<String>)> {
    use rand::{Rng, SeedableRng};
    const WORDS: [&str; 6] = ["the", "lung", "is", "clear", "no", "effusion"];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let sentence = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<String> {
        let len = rng.gen_range(1..=8);
        (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string()).collect()
    };
    (0..count)
        .map(|_| {
            let c = sentence(&mut rng);
            let r = sentence(&mut rng);
            (c, r)
        })
        .collect()
}
