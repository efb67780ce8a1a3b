//! Reference implementations written without reusing library internals.
#![allow(dead_code)]

use num_rational::Ratio;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sstr_core::phoc::{PhocConfig, DEFAULT_ALPHABET};

type Q = Ratio<i64>;

fn assigned(start: i64, span: i64, n: i64, region: i64, level: i64, threshold: Q) -> bool {
    let (a0, a1) = (Q::new(start, n), Q::new(start + span, n));
    let (r0, r1) = (Q::new(region, level), Q::new(region + 1, level));
    let lo = if a0 > r0 { a0 } else { r0 };
    let hi = if a1 < r1 { a1 } else { r1 };
    if hi <= lo {
        return false;
    }
    (hi - lo) / (a1 - a0) >= threshold
}

/// Brute-force PHOC: every level, region and symbol, overlaps as exact fractions.
pub fn oracle_phoc(word: &str, config: &PhocConfig) -> Vec<f32> {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len() as i64;
    let threshold = Ratio::<i64>::approximate_float(config.overlap_threshold()).expect("finite threshold");
    let mut out = Vec::new();
    for &level in config.unigram_levels() {
        for region in 0..level as i64 {
            for &symbol in config.alphabet() {
                let hit = chars
                    .iter()
                    .enumerate()
                    .any(|(k, &c)| c == symbol && assigned(k as i64, 1, n, region, level as i64, threshold));
                out.push(if hit { 1.0 } else { 0.0 });
            }
        }
    }
    let bigrams = config.bigrams();
    for &level in config.bigram_levels() {
        for region in 0..level as i64 {
            for bigram in &bigrams {
                let hit = chars.windows(2).enumerate().any(|(k, w)| {
                    w.iter().collect::<String>() == *bigram && assigned(k as i64, 2, n, region, level as i64, threshold)
                });
                out.push(if hit { 1.0 } else { 0.0 });
            }
        }
    }
    out
}

/// Random word of length 1..=20; half the words favor frequent English letters
/// so bigram slots get exercised.
pub fn random_word(rng: &mut ChaCha8Rng) -> String {
    const COMMON: &[u8] = b"etaoinshrdlcu";
    let len = rng.random_range(1..=20);
    let common = rng.random_bool(0.5);
    let alphabet = DEFAULT_ALPHABET.as_bytes();
    (0..len)
        .map(|_| {
            let pool = if common { COMMON } else { alphabet };
            pool[rng.random_range(0..pool.len())] as char
        })
        .collect()
}

/// Exact k nearest entries by a straight f64 scan, ties by entry index.
pub fn naive_knn(vectors: &[Vec<f32>], query: &[f32], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (i, euclid(v, query)))
        .collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn euclid(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Images ranked by their closest descriptor (f64), ties by image id.
pub fn straight_line_ranking(descriptors: &[(String, Vec<f32>)], query: &[f32]) -> Vec<(String, f64)> {
    let mut best: std::collections::BTreeMap<&str, f64> = std::collections::BTreeMap::new();
    for (image, v) in descriptors {
        let d = euclid(v, query);
        let slot = best.entry(image.as_str()).or_insert(f64::INFINITY);
        if d < *slot {
            *slot = d;
        }
    }
    let mut ranked: Vec<(String, f64)> = best.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

pub fn random_unit_vectors(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..count)
        .map(|_| (0..dim).map(|_| rng.random::<f32>()).collect())
        .collect()
}
