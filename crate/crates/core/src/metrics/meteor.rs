//! Exact-match METEOR.
//!
//! The alignment maximises the number of matched unigrams, then minimises the
//! number of chunks (maximal runs contiguous and in order in both sentences).
//! Minimising chunks is a search problem once words repeat, so it is solved
//! by branch and bound; the search is capped at [`SEARCH_BUDGET`] nodes, after
//! which the best alignment found so far is used.

use std::collections::HashMap;

pub const SEARCH_BUDGET: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
}

pub fn meteor(candidate: &[String], reference: &[String]) -> f64 {
    match (candidate.is_empty(), reference.is_empty()) {
        (true, true) => return 1.0,
        (true, _) | (_, true) => return 0.0,
        _ => {}
    }
    let Alignment { matches, chunks } = align(candidate, reference);
    meteor_from_alignment(matches, chunks, candidate.len(), reference.len())
}

pub fn meteor_from_alignment(matches: usize, chunks: usize, cand_len: usize, ref_len: usize) -> f64 {
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let p = m / cand_len as f64;
    let r = m / ref_len as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m).powi(3);
    f_mean * (1.0 - penalty)
}

struct Search<'a> {
    cand: &'a [u32],
    ref_positions: Vec<Vec<usize>>,
    /// `potential[i]`: positions `>= i` that could extend a chunk at all.
    potential: Vec<usize>,
    need: Vec<usize>,
    remaining: Vec<usize>,
    used: Vec<bool>,
    best: usize,
    nodes: usize,
}

impl Search<'_> {
    fn run(&mut self, i: usize, prev: Option<usize>, continuations: usize) {
        if continuations > self.best || i == self.cand.len() {
            self.best = self.best.max(continuations);
        }
        if i == self.cand.len() || self.nodes >= SEARCH_BUDGET {
            return;
        }
        self.nodes += 1;
        if continuations + self.potential[i] <= self.best {
            return;
        }
        let w = self.cand[i] as usize;
        self.remaining[w] -= 1;
        if self.need[w] > 0 {
            let follow = prev.map(|p| p + 1);
            let mut options: Vec<usize> = self.ref_positions[w]
                .iter()
                .copied()
                .filter(|&j| !self.used[j])
                .collect();
            if let Some(pos) = follow.and_then(|f| options.iter().position(|&j| j == f)) {
                options.swap(0, pos);
                options[1..].sort_unstable();
            }
            for j in options {
                self.used[j] = true;
                self.need[w] -= 1;
                let gain = usize::from(follow == Some(j));
                self.run(i + 1, Some(j), continuations + gain);
                self.need[w] += 1;
                self.used[j] = false;
            }
        }
        if self.remaining[w] >= self.need[w] {
            self.run(i + 1, None, continuations);
        }
        self.remaining[w] += 1;
    }
}

fn intern<'a>(tokens: &'a [String], ids: &mut HashMap<&'a str, u32>) -> Vec<u32> {
    tokens
        .iter()
        .map(|s| {
            let next = ids.len() as u32;
            *ids.entry(s.as_str()).or_insert(next)
        })
        .collect()
}

/// Maximum-match, minimum-chunk exact alignment.
pub fn align(candidate: &[String], reference: &[String]) -> Alignment {
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let cand = intern(candidate, &mut ids);
    let refr = intern(reference, &mut ids);
    let vocab = ids.len();

    let mut ref_positions = vec![Vec::new(); vocab];
    for (j, &w) in refr.iter().enumerate() {
        ref_positions[w as usize].push(j);
    }
    let mut cand_count = vec![0usize; vocab];
    for &w in &cand {
        cand_count[w as usize] += 1;
    }
    let need: Vec<usize> = (0..vocab)
        .map(|w| cand_count[w].min(ref_positions[w].len()))
        .collect();
    let matches: usize = need.iter().sum();
    if matches == 0 {
        return Alignment { matches: 0, chunks: 0 };
    }

    let mut potential = vec![0usize; cand.len() + 1];
    for i in (0..cand.len()).rev() {
        let extendable = i > 0 && refr.windows(2).any(|w| w[0] == cand[i - 1] && w[1] == cand[i]);
        potential[i] = potential[i + 1] + usize::from(extendable);
    }

    let mut search = Search {
        cand: &cand,
        ref_positions,
        potential,
        need,
        remaining: cand_count,
        used: vec![false; refr.len()],
        best: 0,
        nodes: 0,
    };
    search.run(0, None, 0);
    if search.nodes >= SEARCH_BUDGET {
        log::warn!("METEOR alignment search hit its budget; chunk count may not be minimal");
    }
    Alignment {
        matches,
        chunks: matches - search.best,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::words;

    #[test]
    fn identical_six_tokens() {
        let s = words("the lungs are clear bilaterally today");
        assert_eq!(align(&s, &s), Alignment { matches: 6, chunks: 1 });
        let expected = 1.0 - 0.5 / 216.0;
        assert!((meteor(&s, &s) - expected).abs() < 1e-15);
        assert!((meteor(&s, &s) - 0.99769).abs() < 1e-5);
    }

    #[test]
    fn no_overlap_and_single_token() {
        assert_eq!(meteor(&words("a b"), &words("c d")), 0.0);
        assert_eq!(meteor(&words("a"), &words("a")), 0.5);
        assert_eq!(meteor(&[], &[]), 1.0);
        assert_eq!(meteor(&words("a"), &[]), 0.0);
    }

    #[test]
    fn repeated_words_prefer_contiguous_alignment() {
        // greedy left-to-right matching of "the" would split the chunk
        let cand = words("the mat the cat");
        let refr = words("the cat on the mat");
        let a = align(&cand, &refr);
        assert_eq!(a.matches, 4);
        // "the mat" -> ref 3,4 and "the cat" -> ref 0,1: two chunks
        assert_eq!(a.chunks, 2);
    }

    #[test]
    fn swapped_halves() {
        let a = align(&words("c d a b"), &words("a b c d"));
        assert_eq!(a, Alignment { matches: 4, chunks: 2 });
    }

    #[test]
    fn long_repetitive_sentence_finishes() {
        let cand: Vec<String> = (0..60).map(|i| ["the", "is", "no", "."][i % 4].to_string()).collect();
        let refr: Vec<String> = (0..50).map(|i| ["is", "the", ".", "no"][i % 4].to_string()).collect();
        let a = align(&cand, &refr);
        assert_eq!(a.matches, 50);
        assert!(a.chunks >= 1 && a.chunks <= 50);
    }
}
