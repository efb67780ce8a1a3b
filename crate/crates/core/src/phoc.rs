//! Pyramidal Histogram Of Characters (PHOC) encoding.
//!
//! A word is split into `L` equal regions for every pyramid level `L`. Each
//! region records which alphabet symbols (and which listed bigrams) fall into
//! it, and the per-level histograms are concatenated into one binary vector.
//!
//! Character `k` of an `n`-character word occupies `[k/n, (k+1)/n]`; a bigram
//! starting at `k` occupies `[k/n, (k+2)/n]`. A symbol is assigned to region
//! `r` of level `L` when the overlap with `[r/L, (r+1)/L]` covers at least
//! `overlap_threshold` of the occupancy width. Interval arithmetic is carried
//! out on integers scaled by `n * L`, so boundary cases such as an exact half
//! overlap are decided exactly.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Lowercase letters followed by digits.
pub const DEFAULT_ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz0123456789";

/// The 50 most frequent English bigrams, most frequent first.
pub const DEFAULT_BIGRAMS: [&str; 50] = [
    "th", "he", "in", "er", "an", "re", "on", "at", "en", "nd", "ti", "es", "or", "te", "of", "ed",
    "is", "it", "al", "ar", "st", "to", "nt", "ng", "se", "ha", "as", "ou", "io", "le", "ve", "co",
    "me", "de", "hi", "ri", "ro", "ic", "ne", "ea", "ra", "ce", "li", "ch", "ll", "be", "ma", "si",
    "om", "ur",
];

/// Descriptor scheme: alphabet, pyramid levels and bigram list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPhocConfig", into = "RawPhocConfig")]
pub struct PhocConfig {
    alphabet: Vec<char>,
    unigram_levels: Vec<usize>,
    bigram_levels: Vec<usize>,
    bigrams: Vec<[char; 2]>,
    overlap_threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPhocConfig {
    alphabet: String,
    unigram_levels: Vec<usize>,
    bigram_levels: Vec<usize>,
    bigrams: Vec<String>,
    overlap_threshold: f64,
}

impl TryFrom<RawPhocConfig> for PhocConfig {
    type Error = Error;

    fn try_from(raw: RawPhocConfig) -> Result<Self> {
        PhocConfig::new(
            &raw.alphabet,
            raw.unigram_levels,
            raw.bigram_levels,
            &raw.bigrams,
            raw.overlap_threshold,
        )
    }
}

impl From<PhocConfig> for RawPhocConfig {
    fn from(c: PhocConfig) -> Self {
        RawPhocConfig {
            alphabet: c.alphabet.iter().collect(),
            unigram_levels: c.unigram_levels,
            bigram_levels: c.bigram_levels,
            bigrams: c.bigrams.iter().map(|b| b.iter().collect()).collect(),
            overlap_threshold: c.overlap_threshold,
        }
    }
}

impl Default for PhocConfig {
    fn default() -> Self {
        PhocConfig::new(DEFAULT_ALPHABET, vec![2, 3, 4, 5], vec![2], &DEFAULT_BIGRAMS, 0.5)
            .expect("default PHOC configuration is valid")
    }
}

impl PhocConfig {
    pub fn new<S: AsRef<str>>(
        alphabet: &str,
        unigram_levels: Vec<usize>,
        bigram_levels: Vec<usize>,
        bigrams: &[S],
        overlap_threshold: f64,
    ) -> Result<Self> {
        let alphabet: Vec<char> = alphabet.chars().collect();
        if alphabet.is_empty() {
            return Err(Error::InvalidConfig("alphabet is empty".into()));
        }
        for (i, c) in alphabet.iter().enumerate() {
            if alphabet[..i].contains(c) {
                return Err(Error::InvalidConfig(format!("duplicate alphabet symbol {c:?}")));
            }
            if c.is_uppercase() {
                return Err(Error::InvalidConfig(format!(
                    "alphabet symbol {c:?} is not lowercase"
                )));
            }
        }
        if unigram_levels.iter().chain(&bigram_levels).any(|&l| l == 0) {
            return Err(Error::InvalidConfig("pyramid levels must be positive".into()));
        }
        if unigram_levels.is_empty() && bigram_levels.is_empty() {
            return Err(Error::InvalidConfig("no pyramid levels configured".into()));
        }
        if !(overlap_threshold > 0.0 && overlap_threshold <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "overlap threshold {overlap_threshold} outside (0, 1]"
            )));
        }
        let mut parsed: Vec<[char; 2]> = Vec::with_capacity(bigrams.len());
        for b in bigrams {
            let b = b.as_ref();
            let chars: Vec<char> = b.chars().collect();
            let pair = match chars.as_slice() {
                [a, c] => [*a, *c],
                _ => {
                    return Err(Error::InvalidConfig(format!(
                        "bigram {b:?} is not two characters"
                    )))
                }
            };
            if !pair.iter().all(|c| alphabet.contains(c)) {
                return Err(Error::InvalidConfig(format!(
                    "bigram {b:?} uses symbols outside the alphabet"
                )));
            }
            if parsed.contains(&pair) {
                return Err(Error::InvalidConfig(format!("duplicate bigram {b:?}")));
            }
            parsed.push(pair);
        }
        if !bigram_levels.is_empty() && parsed.is_empty() {
            return Err(Error::InvalidConfig(
                "bigram levels configured without a bigram list".into(),
            ));
        }
        Ok(PhocConfig {
            alphabet,
            unigram_levels,
            bigram_levels,
            bigrams: parsed,
            overlap_threshold,
        })
    }

    /// Same scheme with a different bigram list.
    pub fn with_bigrams<S: AsRef<str>>(&self, bigrams: &[S]) -> Result<Self> {
        let alphabet: String = self.alphabet.iter().collect();
        PhocConfig::new(
            &alphabet,
            self.unigram_levels.clone(),
            self.bigram_levels.clone(),
            bigrams,
            self.overlap_threshold,
        )
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn unigram_levels(&self) -> &[usize] {
        &self.unigram_levels
    }

    pub fn bigram_levels(&self) -> &[usize] {
        &self.bigram_levels
    }

    pub fn bigrams(&self) -> Vec<String> {
        self.bigrams.iter().map(|b| b.iter().collect()).collect()
    }

    pub fn overlap_threshold(&self) -> f64 {
        self.overlap_threshold
    }

    pub fn dimension(&self) -> usize {
        let uni: usize = self.unigram_levels.iter().sum();
        let bi: usize = self.bigram_levels.iter().sum();
        uni * self.alphabet.len() + bi * self.bigrams.len()
    }

    pub fn symbol_index(&self, c: char) -> Option<usize> {
        self.alphabet.iter().position(|&a| a == c)
    }

    fn bigram_index(&self, a: char, b: char) -> Option<usize> {
        self.bigrams.iter().position(|p| p[0] == a && p[1] == b)
    }

    /// Canonical human-readable form; also the input of [`PhocConfig::hash`].
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("PHOC configuration serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn hash(&self) -> ConfigHash {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        ConfigHash(u64::from_le_bytes(head))
    }

    /// Which (histogram, level, region, symbol) a vector position stands for.
    pub fn describe(&self, index: usize) -> Option<PhocSlot> {
        let mut offset = 0;
        let a = self.alphabet.len();
        for &level in &self.unigram_levels {
            if index < offset + level * a {
                let local = index - offset;
                return Some(PhocSlot {
                    histogram: Histogram::Unigram,
                    level,
                    region: local / a,
                    symbol: self.alphabet[local % a].to_string(),
                });
            }
            offset += level * a;
        }
        let b = self.bigrams.len();
        for &level in &self.bigram_levels {
            if index < offset + level * b {
                let local = index - offset;
                return Some(PhocSlot {
                    histogram: Histogram::Bigram,
                    level,
                    region: local / b,
                    symbol: self.bigrams[local % b].iter().collect(),
                });
            }
            offset += level * b;
        }
        None
    }
}

/// 64-bit digest of a [`PhocConfig`]'s canonical form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConfigHash(pub u64);

impl fmt::Display for ConfigHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl std::str::FromStr for ConfigHash {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        u64::from_str_radix(s, 16)
            .map(ConfigHash)
            .map_err(|e| Error::InvalidValue(format!("config hash {s:?}: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Histogram {
    Unigram,
    Bigram,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhocSlot {
    pub histogram: Histogram,
    pub level: usize,
    pub region: usize,
    pub symbol: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhocKind {
    /// Binary encoding of a known string.
    Target,
    /// Model output with values in `[0, 1]`.
    Prediction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhocVector {
    values: Vec<f32>,
    kind: PhocKind,
}

impl PhocVector {
    /// Wraps model output, rejecting values outside `[0, 1]`.
    pub fn prediction(values: Vec<f32>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidValue(format!(
                "PHOC component {i} = {v} outside [0, 1]"
            )));
        }
        Ok(PhocVector {
            values,
            kind: PhocKind::Prediction,
        })
    }

    /// Wraps a binary vector, rejecting anything but 0 and 1.
    pub fn target(values: Vec<f32>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| **v != 0.0 && **v != 1.0)
        {
            return Err(Error::InvalidValue(format!(
                "target PHOC component {i} = {v} is not binary"
            )));
        }
        Ok(PhocVector {
            values,
            kind: PhocKind::Target,
        })
    }

    pub fn kind(&self) -> PhocKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// Reinterprets a target as a prediction (a perfect one).
    pub fn into_prediction(self) -> Self {
        PhocVector {
            values: self.values,
            kind: PhocKind::Prediction,
        }
    }

    pub fn set_bits(&self) -> impl Iterator<Item = usize> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= 0.5)
            .map(|(i, _)| i)
    }
}

/// A string reduced to alphabet symbols.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NormalizedWord {
    chars: Vec<char>,
    source: String,
}

impl NormalizedWord {
    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn as_string(&self) -> String {
        self.chars.iter().collect()
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }
}

impl fmt::Display for NormalizedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.chars {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Lowercases `raw` and drops every character outside the alphabet.
pub fn normalize_word(raw: &str, config: &PhocConfig) -> Result<NormalizedWord> {
    let chars: Vec<char> = raw
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| config.symbol_index(*c).is_some())
        .collect();
    if chars.is_empty() {
        return Err(Error::EmptyAfterNormalization(raw.to_string()));
    }
    Ok(NormalizedWord {
        chars,
        source: raw.to_string(),
    })
}

/// Interval `[position/length, (position+1)/length]` covered by one character.
pub fn occupancy(position: usize, length: usize) -> (f64, f64) {
    let n = length as f64;
    (position as f64 / n, (position + 1) as f64 / n)
}

/// Whether the span `[start/n, (start+span)/n]` belongs to region `region`
/// of a level-`level` split.
fn assigned(start: usize, span: usize, n: usize, region: usize, level: usize, threshold: f64) -> bool {
    // Everything scaled by n * level.
    let lo = (start * level).max(region * n);
    let hi = ((start + span) * level).min((region + 1) * n);
    if hi <= lo {
        return false;
    }
    let overlap = (hi - lo) as f64;
    let width = (span * level) as f64;
    overlap / width >= threshold
}

pub fn encode(word: &NormalizedWord, config: &PhocConfig) -> Result<PhocVector> {
    if word.is_empty() {
        return Err(Error::EmptyAfterNormalization(word.source.clone()));
    }
    let symbols = word
        .chars
        .iter()
        .map(|&c| config.symbol_index(c).ok_or(Error::CharNotInAlphabet(c)))
        .collect::<Result<Vec<_>>>()?;
    let n = symbols.len();
    let a = config.alphabet.len();
    let t = config.overlap_threshold;
    let mut values = vec![0.0f32; config.dimension()];
    let mut offset = 0;

    for &level in &config.unigram_levels {
        for (k, &s) in symbols.iter().enumerate() {
            for region in 0..level {
                if assigned(k, 1, n, region, level, t) {
                    values[offset + region * a + s] = 1.0;
                }
            }
        }
        offset += level * a;
    }

    let b = config.bigrams.len();
    let pairs: Vec<(usize, usize)> = word
        .chars
        .windows(2)
        .enumerate()
        .filter_map(|(k, w)| config.bigram_index(w[0], w[1]).map(|i| (k, i)))
        .collect();
    for &level in &config.bigram_levels {
        for &(k, bi) in &pairs {
            for region in 0..level {
                if assigned(k, 2, n, region, level, t) {
                    values[offset + region * b + bi] = 1.0;
                }
            }
        }
        offset += level * b;
    }

    Ok(PhocVector {
        values,
        kind: PhocKind::Target,
    })
}

/// Normalizes and encodes in one step.
pub fn encode_str(raw: &str, config: &PhocConfig) -> Result<PhocVector> {
    encode(&normalize_word(raw, config)?, config)
}

/// The `count` most frequent adjacent character pairs of a lexicon.
///
/// Output is ordered by frequency, descending, then lexicographically.
/// Words that normalize to nothing are skipped.
pub fn derive_bigrams<S: AsRef<str>>(
    lexicon: &[S],
    count: usize,
    config: &PhocConfig,
) -> Result<Vec<String>> {
    if lexicon.is_empty() {
        return Err(Error::EmptyLexicon);
    }
    if count == 0 {
        return Err(Error::InvalidValue("bigram count must be at least 1".into()));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for raw in lexicon {
        let Ok(word) = normalize_word(raw.as_ref(), config) else {
            continue;
        };
        for w in word.chars.windows(2) {
            *counts.entry(w.iter().collect()).or_default() += 1;
        }
    }
    if counts.len() < count {
        return Err(Error::InsufficientBigrams {
            found: counts.len(),
            requested: count,
        });
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    // BTreeMap iteration is already lexicographic; stable sort keeps it for ties.
    ranked.sort_by_key(|r| std::cmp::Reverse(r.1));
    Ok(ranked.into_iter().take(count).map(|(b, _)| b).collect())
}

/// Memoizing encoder for workloads that encode the same words repeatedly.
#[derive(Debug)]
pub struct EncoderCache<'a> {
    config: &'a PhocConfig,
    cache: HashMap<String, PhocVector>,
}

impl<'a> EncoderCache<'a> {
    pub fn new(config: &'a PhocConfig) -> Self {
        EncoderCache {
            config,
            cache: HashMap::new(),
        }
    }

    pub fn get(&mut self, word: &str) -> Result<&PhocVector> {
        if !self.cache.contains_key(word) {
            let v = encode_str(word, self.config)?;
            self.cache.insert(word.to_string(), v);
        }
        Ok(&self.cache[word])
    }
}
