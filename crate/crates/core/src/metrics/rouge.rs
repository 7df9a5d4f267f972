pub const ROUGE_BETA: f64 = 1.2;

pub fn lcs_length(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure with `beta = 1.2`.
pub fn rouge_l(candidate: &[String], reference: &[String]) -> f64 {
    match (candidate.is_empty(), reference.is_empty()) {
        (true, true) => return 1.0,
        (true, _) | (_, true) => return 0.0,
        _ => {}
    }
    let lcs = lcs_length(candidate, reference);
    if lcs == 0 {
        return 0.0;
    }
    let r = lcs as f64 / reference.len() as f64;
    let p = lcs as f64 / candidate.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * r * p / (r + b2 * p)
}
