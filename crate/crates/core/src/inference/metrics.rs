use crate::corpus::TokenSequence;

/// Fraction of adjacent token pairs that repeat a token (`y[i-1] == y[i]`),
/// pooled over all sequences. Zero when there are no pairs.
pub fn bigram_repetition_rate(seqs: &[TokenSequence]) -> f64 {
    let (mut rep, mut pairs) = (0usize, 0usize);
    for s in seqs {
        let toks = s.tokens();
        for w in toks.windows(2) {
            pairs += 1;
            rep += usize::from(w[0] == w[1]);
        }
    }
    if pairs == 0 {
        0.0
    } else {
        rep as f64 / pairs as f64
    }
}

/// Share of hypotheses identical to their reference.
pub fn exact_match_rate(hyps: &[TokenSequence], refs: &[TokenSequence]) -> f64 {
    if hyps.is_empty() {
        return 0.0;
    }
    let hits = hyps.iter().zip(refs).filter(|(h, r)| h == r).count();
    hits as f64 / hyps.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> TokenSequence {
        TokenSequence::new(s.split_whitespace().map(String::from).collect()).unwrap()
    }

    #[test]
    fn repetition_rate_counts_adjacent_duplicates() {
        assert_eq!(bigram_repetition_rate(&[seq("how to post post data")]), 0.25);
        assert_eq!(bigram_repetition_rate(&[seq("a b"), seq("c c")]), 0.5);
        assert_eq!(bigram_repetition_rate(&[seq("a")]), 0.0);
    }

    #[test]
    fn exact_match() {
        assert_eq!(exact_match_rate(&[seq("a b"), seq("c")], &[seq("a b"), seq("d")]), 0.5);
    }
}
