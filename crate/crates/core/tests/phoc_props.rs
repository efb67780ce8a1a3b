mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sstr_core::phoc::{encode_str, normalize_word, Histogram, PhocConfig, DEFAULT_BIGRAMS};
use sstr_core::Error;

fn with_level_one() -> PhocConfig {
    PhocConfig::new(
        "abcdefghijklmnopqrstuvwxyz0123456789",
        vec![1, 2, 3, 4, 5],
        vec![2],
        &DEFAULT_BIGRAMS,
        0.5,
    )
    .unwrap()
}

#[test]
fn matches_rational_oracle_on_random_words() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for config in [PhocConfig::default(), with_level_one()] {
        for _ in 0..1000 {
            let w = common::random_word(&mut rng);
            let got = encode_str(&w, &config).unwrap();
            assert_eq!(got.as_slice(), common::oracle_phoc(&w, &config).as_slice(), "word {w:?}");
        }
    }
}

#[test]
fn oracle_agrees_at_other_thresholds() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for t in [0.25, 0.75, 1.0] {
        let config = PhocConfig::new("abcdefghijklmnopqrstuvwxyz", vec![2, 3, 7], vec![2, 3], &["th", "er"], t).unwrap();
        for _ in 0..300 {
            let w: String = common::random_word(&mut rng).chars().filter(char::is_ascii_lowercase).collect();
            if w.is_empty() {
                continue;
            }
            let got = encode_str(&w, &config).unwrap();
            assert_eq!(got.as_slice(), common::oracle_phoc(&w, &config).as_slice(), "word {w:?} threshold {t}");
        }
    }
}

#[test]
fn describe_agrees_with_oracle_layout() {
    let config = PhocConfig::default();
    let phoc = encode_str("the", &config).unwrap();
    for bit in phoc.set_bits() {
        let slot = config.describe(bit).unwrap();
        match slot.histogram {
            Histogram::Unigram => assert!("the".contains(slot.symbol.as_str())),
            Histogram::Bigram => assert!(slot.symbol == "th" || slot.symbol == "he"),
        }
    }
}

#[test]
fn empty_after_normalization_is_rejected() {
    let config = PhocConfig::default();
    assert!(matches!(encode_str("", &config), Err(Error::EmptyAfterNormalization(_))));
    assert!(matches!(encode_str("!!", &config), Err(Error::EmptyAfterNormalization(_))));
}

fn word() -> impl Strategy<Value = String> {
    "[a-z0-9]{1,20}"
}

proptest! {
    #[test]
    fn default_dimension_is_fixed(w in word()) {
        prop_assert_eq!(encode_str(&w, &PhocConfig::default()).unwrap().len(), 604);
    }

    #[test]
    fn every_set_bit_is_explained_by_the_word(w in word()) {
        let config = PhocConfig::default();
        let phoc = encode_str(&w, &config).unwrap();
        for bit in phoc.set_bits() {
            let slot = config.describe(bit).unwrap();
            prop_assert!(w.contains(slot.symbol.as_str()), "bit {} ({}) not in {}", bit, slot.symbol, w);
        }
    }

    #[test]
    fn level_one_block_is_the_character_set(w in word()) {
        let config = with_level_one();
        let phoc = encode_str(&w, &config).unwrap();
        let block: Vec<char> = config
            .alphabet()
            .iter()
            .enumerate()
            .filter(|&(i, _)| phoc.as_slice()[i] == 1.0)
            .map(|(_, &c)| c)
            .collect();
        let mut expected: Vec<char> = w.chars().collect();
        expected.sort_by_key(|c| config.symbol_index(*c));
        expected.dedup();
        prop_assert_eq!(block, expected);
    }

    #[test]
    fn anagrams_differ_when_the_oracle_says_so(w in "[a-z]{2,12}", seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let config = PhocConfig::default();
        let mut chars: Vec<char> = w.chars().collect();
        chars.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled: String = chars.into_iter().collect();
        let differ = common::oracle_phoc(&w, &config) != common::oracle_phoc(&shuffled, &config);
        let a = encode_str(&w, &config).unwrap();
        let b = encode_str(&shuffled, &config).unwrap();
        prop_assert_eq!(differ, a != b);
    }

    #[test]
    fn encoding_is_pure(w in "\\PC{0,24}") {
        let config = PhocConfig::default();
        match (encode_str(&w, &config), encode_str(&w, &config)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "nondeterministic result for {:?}", w),
        }
    }

    #[test]
    fn normalization_is_idempotent(w in "\\PC{1,24}") {
        let config = PhocConfig::default();
        if let Ok(n) = normalize_word(&w, &config) {
            let again = normalize_word(&n.as_string(), &config).unwrap();
            prop_assert_eq!(again.as_string(), n.as_string());
            prop_assert_eq!(encode_str(&w, &config).unwrap(), encode_str(&n.as_string(), &config).unwrap());
        }
    }
}

#[test]
fn non_repeating_words_have_a_distinguishable_reordering() {
    // Reversal moves the first and last characters to opposite halves.
    let config = PhocConfig::default();
    for w in ["ab", "tea", "shop", "beyond", "castrol"] {
        let rev: String = w.chars().rev().collect();
        assert_ne!(encode_str(w, &config).unwrap(), encode_str(&rev, &config).unwrap(), "{w}");
    }
    assert_eq!(encode_str("aaaa", &config).unwrap(), encode_str("aaaa", &config).unwrap());
}
