//! Majority voting, random cue-subset sampling and confidence parsing.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::StrategyError;
use crate::cues::CuePool;
use crate::types::Label;

/// Strict majority wins; an exact tie resolves to NotSarcastic with the tie
/// flag set.
pub fn majority_vote(labels: &[Label]) -> Result<(Label, bool), StrategyError> {
    if labels.is_empty() {
        return Err(StrategyError::EmptyVote);
    }
    let sarcastic = labels.iter().filter(|l| l.is_sarcastic()).count();
    let not_sarcastic = labels.len() - sarcastic;
    match sarcastic.cmp(&not_sarcastic) {
        std::cmp::Ordering::Greater => Ok((Label::Sarcastic, false)),
        std::cmp::Ordering::Less => Ok((Label::NotSarcastic, false)),
        std::cmp::Ordering::Equal => Ok((Label::NotSarcastic, true)),
    }
}

/// Draws `t` independent subsets of `q` distinct cue ids, sampled without
/// replacement from the pool. Deterministic under the seed.
pub fn sample_subsets(
    pool: &CuePool,
    t: usize,
    q: usize,
    seed: u64,
) -> Result<Vec<Vec<String>>, StrategyError> {
    if pool.is_empty() {
        return Err(StrategyError::EmptyPool);
    }
    if q < 1 || q > pool.len() {
        return Err(StrategyError::InvalidArity { q, pool: pool.len() });
    }
    if t < 1 {
        return Err(StrategyError::InvalidSubsetCount);
    }
    let ids: Vec<String> = pool.ids().map(str::to_string).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let subsets = (0..t)
        .map(|_| {
            let mut shuffled = ids.clone();
            shuffled.shuffle(&mut rng);
            shuffled.truncate(q);
            shuffled
        })
        .collect();
    Ok(subsets)
}

/// Extracts the first number in the text as a confidence in [0, 1].
///
/// Values in (1, 100] are read as percentages. Anything else (no number,
/// negative, > 100) is Missing; callers treat Missing as 0.
pub fn parse_confidence(raw: &str) -> Option<f64> {
    let bytes = raw.as_bytes();
    let start = bytes.iter().position(|b| b.is_ascii_digit())?;
    let negative = start > 0 && bytes[start - 1] == b'-';
    let mut end = start;
    let mut seen_dot = false;
    while end < bytes.len() {
        match bytes[end] {
            b'0'..=b'9' => end += 1,
            b'.' if !seen_dot && end + 1 < bytes.len() && bytes[end + 1].is_ascii_digit() => {
                seen_dot = true;
                end += 1;
            }
            _ => break,
        }
    }
    let value: f64 = raw[start..end].parse().ok()?;
    if negative {
        return None;
    }
    if (0.0..=1.0).contains(&value) {
        Some(value)
    } else if value <= 100.0 {
        Some(value / 100.0)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cues::CuePool;
    use proptest::prelude::*;
    use Label::{NotSarcastic as N, Sarcastic as S};

    #[test]
    fn majority_basic_cases() {
        assert_eq!(majority_vote(&[S, N, S]).unwrap(), (S, false));
        assert_eq!(majority_vote(&[S, N]).unwrap(), (N, true));
        assert_eq!(majority_vote(&[N, N, N, N, N]).unwrap(), (N, false));
        assert!(matches!(majority_vote(&[]), Err(StrategyError::EmptyVote)));
    }

    // Exhaustive check of every label list of length 1..=5 (62 cases)
    // against a counting oracle.
    #[test]
    fn majority_matches_counting_oracle_exhaustively() {
        let mut cases = 0usize;
        for len in 1usize..=5 {
            for bits in 0u32..(1 << len) {
                let labels: Vec<Label> = (0..len)
                    .map(|i| if bits & (1 << i) != 0 { S } else { N })
                    .collect();
                let sarcastic = bits.count_ones() as usize;
                let not_sarcastic = len - sarcastic;
                let expected = if sarcastic > not_sarcastic {
                    (S, false)
                } else if not_sarcastic > sarcastic {
                    (N, false)
                } else {
                    (N, true)
                };
                assert_eq!(majority_vote(&labels).unwrap(), expected, "labels={labels:?}");
                cases += 1;
            }
        }
        assert_eq!(cases, 62);
    }

    proptest! {
        #[test]
        fn majority_is_order_invariant(mut labels in proptest::collection::vec(prop_oneof![Just(S), Just(N)], 1..12), swaps in proptest::collection::vec((0usize..12, 0usize..12), 0..10)) {
            let original = majority_vote(&labels).unwrap();
            for (i, j) in swaps {
                let (i, j) = (i % labels.len(), j % labels.len());
                labels.swap(i, j);
            }
            prop_assert_eq!(majority_vote(&labels).unwrap(), original);
        }
    }

    #[test]
    fn subsets_have_exact_arity_and_distinct_ids() {
        let pool = CuePool::standard();
        let subsets = sample_subsets(&pool, 5, 3, 7).unwrap();
        assert_eq!(subsets.len(), 5);
        for subset in &subsets {
            assert_eq!(subset.len(), 3);
            let distinct: std::collections::HashSet<&String> = subset.iter().collect();
            assert_eq!(distinct.len(), 3);
            for id in subset {
                assert!(pool.contains(id));
            }
        }
    }

    #[test]
    fn full_pool_subset_is_forced() {
        let pool = CuePool::standard();
        let subsets = sample_subsets(&pool, 1, 10, 0).unwrap();
        let mut ids = subsets[0].clone();
        ids.sort();
        let mut expected: Vec<String> = pool.ids().map(str::to_string).collect();
        expected.sort();
        assert_eq!(ids, expected);
    }

    #[test]
    fn subsets_deterministic_under_seed() {
        let pool = CuePool::standard();
        assert_eq!(
            sample_subsets(&pool, 4, 3, 99).unwrap(),
            sample_subsets(&pool, 4, 3, 99).unwrap()
        );
        assert_ne!(
            sample_subsets(&pool, 4, 3, 99).unwrap(),
            sample_subsets(&pool, 4, 3, 100).unwrap()
        );
    }

    #[test]
    fn subset_arity_guards() {
        let pool = CuePool::standard();
        assert!(matches!(
            sample_subsets(&pool, 5, 11, 0),
            Err(StrategyError::InvalidArity { q: 11, pool: 10 })
        ));
        assert!(matches!(
            sample_subsets(&pool, 5, 0, 0),
            Err(StrategyError::InvalidArity { q: 0, pool: 10 })
        ));
        assert!(matches!(
            sample_subsets(&pool, 0, 3, 0),
            Err(StrategyError::InvalidSubsetCount)
        ));
    }

    #[test]
    fn confidence_parsing() {
        assert_eq!(parse_confidence("confidence: 97%"), Some(0.97));
        assert_eq!(parse_confidence("I estimate 0.6"), Some(0.6));
        assert_eq!(parse_confidence("cannot judge"), None);
        assert_eq!(parse_confidence("fully certain: 100%"), Some(1.0));
        assert_eq!(parse_confidence("about 1"), Some(1.0));
        assert_eq!(parse_confidence("0"), Some(0.0));
        assert_eq!(parse_confidence("wild guess -5"), None);
        assert_eq!(parse_confidence("score 350"), None);
        assert_eq!(parse_confidence("roughly 72.5% sure"), Some(0.725));
    }
}
