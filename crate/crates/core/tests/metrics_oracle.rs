#[path = "support/oracle.rs"]
mod oracle;

use proptest::prelude::*;
use radcap_core::metrics::{
    align, bleu, clipped_counts, evaluate_tokens, lcs_length, meteor, rouge_l, sentence_bleu, IdfTable,
    MetricReport, NGramCounts,
};

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

#[test]
fn sentence_scores_match_oracle() {
    let pairs = oracle::random_pairs(2024, 50);
    let refs: Vec<Vec<String>> = pairs.iter().map(|p| p.1.clone()).collect();
    let idf = IdfTable::new(&refs).unwrap();
    for (c, r) in &pairs {
        for n in 1..=4 {
            assert_eq!(clipped_counts(c, r, n), oracle::clipped(c, r, n));
            let got = sentence_bleu(c, r, n).unwrap();
            assert!(close(got, oracle::sentence_bleu(c, r, n)), "bleu{n} {c:?} {r:?}");
        }
        assert_eq!(lcs_length(c, r), oracle::lcs(c, r));
        assert!(close(rouge_l(c, r), oracle::rouge_l(c, r)));
        let a = align(c, r);
        assert_eq!((a.matches, a.chunks), oracle::meteor_alignment(c, r), "{c:?} {r:?}");
        assert!(close(meteor(c, r), oracle::meteor(c, r)));
        assert!(close(idf.sentence_score(c, r), oracle::cider_sentence(c, r, &refs)));
    }
}

#[test]
fn corpus_report_matches_oracle() {
    for seed in [1, 2, 3] {
        let pairs = oracle::random_pairs(seed, 50);
        let (cands, refs): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let report = evaluate_tokens(&cands, &refs).unwrap();
        let expected = oracle::report(&cands, &refs);
        let got = [
            report.bleu[0],
            report.bleu[1],
            report.bleu[2],
            report.bleu[3],
            report.cider,
            report.meteor,
            report.rouge_l,
        ];
        for (g, e) in got.iter().zip(expected) {
            assert!(close(*g, e), "{got:?} vs {expected:?}");
        }
    }
}

#[test]
fn clipping_case_is_exact() {
    let cand = words("the the the the the the the");
    let refr = words("the cat is on the mat");
    assert_eq!(clipped_counts(&cand, &refr, 1), (2, 7));
    assert_eq!(bleu(&[cand], &[refr], 1).unwrap(), 2.0 / 7.0);
}

#[test]
fn rouge_hand_example() {
    let f = rouge_l(&words("the cat sat"), &words("the cat on the mat sat"));
    assert!((f - 2.44 * 0.5 / 1.94).abs() < 1e-12);
    assert!((f - 0.6289).abs() < 1e-4);
}

#[test]
fn cider_degenerate_single_document() {
    let s = words("heart size is normal");
    let idf = IdfTable::new(std::slice::from_ref(&s)).unwrap();
    assert_eq!(idf.sentence_score(&s, &s), 0.0);
    let other = words("lungs are clear bilaterally");
    let idf = IdfTable::new(&[s.clone(), other.clone(), words("no effusion")]).unwrap();
    assert!((idf.sentence_score(&s, &s) - 10.0).abs() < 1e-12);
    assert_eq!(idf.sentence_score(&s, &other), 0.0);
}

#[test]
fn report_json_key_order() {
    let s = vec![words("a b c d")];
    let json = evaluate_tokens(&s, &s).unwrap().to_json(false);
    let keys = ["bleu1", "bleu2", "bleu3", "bleu4", "cider", "meteor", "rouge_l"];
    let positions: Vec<usize> = keys.iter().map(|k| json.find(&format!("\"{k}\"")).unwrap()).collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]), "{json}");
    assert!(!json.contains("per_sentence"));
    let back = MetricReport::from_json(&json).unwrap();
    assert_eq!(back.bleu, [1.0; 4]);
}

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 0..10)
        .prop_map(|v| v.into_iter().map(str::to_string).collect())
}

proptest! {
    #[test]
    fn ngram_total_matches_length(tokens in sentence(), n in 1usize..5) {
        let counts = NGramCounts::new(&tokens, n);
        prop_assert_eq!(counts.total(), (tokens.len() + 1).saturating_sub(n));
    }

    #[test]
    fn scores_stay_in_range(c in sentence(), r in sentence(), other in sentence()) {
        for n in 1..=4 {
            let b = sentence_bleu(&c, &r, n).unwrap();
            prop_assert!((0.0..=1.0).contains(&b));
        }
        prop_assert!((0.0..=1.0).contains(&rouge_l(&c, &r)));
        prop_assert!((0.0..=1.0).contains(&meteor(&c, &r)));
        let idf = IdfTable::new(&[r.clone(), other]).unwrap();
        prop_assert!((0.0..=10.0).contains(&idf.sentence_score(&c, &r)));
    }

    #[test]
    fn truncation_never_adds_unigram_matches(c in sentence(), r in sentence(), cut in 0usize..10) {
        let short = &c[..cut.min(c.len())];
        prop_assert!(clipped_counts(short, &r, 1).0 <= clipped_counts(&c, &r, 1).0);
    }

    #[test]
    fn pretokenized_equals_tokenized_text(c in sentence(), r in sentence()) {
        prop_assume!(!c.is_empty() && !r.is_empty());
        let text = radcap_core::metrics::evaluate_corpus(&[(c.join(" "), r.join(" "))]).unwrap();
        let toks = evaluate_tokens(&[c], &[r]).unwrap();
        prop_assert_eq!(text, toks);
    }
}
