//! Lexicons, detection/ground-truth files and the synthetic benchmark.
//!
//! The synthetic generator stands in for a trained model: every image holds
//! a few planted words whose descriptors are (optionally noisy) PHOCs, padded
//! with distractor words that never count as relevant and with background
//! descriptors of random non-words.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::GroundTruth;
use crate::geometry::{BoundingBox, Detection, Shape};
use crate::phoc::{encode_str, normalize_word, ConfigHash, PhocConfig, PhocVector};

/// Reads one word per line, normalizing and dropping duplicates (first
/// occurrence wins). Lines with no alphabet character are skipped.
pub fn load_lexicon(path: impl AsRef<Path>, config: &PhocConfig) -> Result<Vec<String>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut words = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Ok(w) = normalize_word(line.trim(), config) {
            let w = w.as_string();
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
    }
    if words.is_empty() {
        return Err(Error::EmptyLexicon);
    }
    Ok(words)
}

/// `count` distinct pronounceable pseudo-words of 3 to 10 letters.
pub fn synthetic_lexicon(count: usize, seed: u64) -> Vec<String> {
    const ONSETS: [&str; 24] = [
        "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z",
        "st", "tr", "ch", "sh", "br", "pl",
    ];
    const NUCLEI: [&str; 9] = ["a", "e", "i", "o", "u", "ea", "ou", "ai", "y"];
    const CODAS: [&str; 12] = ["", "", "", "n", "r", "s", "t", "l", "nd", "st", "ng", "x"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let target = rng.random_range(3..=10);
        let mut w = String::new();
        while w.len() < target {
            w.push_str(ONSETS.choose(&mut rng).expect("non-empty"));
            w.push_str(NUCLEI.choose(&mut rng).expect("non-empty"));
            w.push_str(CODAS.choose(&mut rng).expect("non-empty"));
        }
        w.truncate(10);
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// One line of a detection file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub objectness: f32,
    pub phoc: Vec<f32>,
}

impl From<&Detection> for DetectionRecord {
    fn from(d: &Detection) -> Self {
        DetectionRecord {
            image_id: d.image_id.clone(),
            bbox: [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h],
            objectness: d.objectness,
            phoc: d.phoc.as_slice().to_vec(),
        }
    }
}

impl DetectionRecord {
    pub fn into_detection(self) -> Result<Detection> {
        let [x, y, w, h] = self.bbox;
        Detection::new(
            self.image_id,
            BoundingBox::new(x, y, w, h)?,
            self.objectness,
            PhocVector::prediction(self.phoc)?,
        )
    }
}

pub const DETECTION_FORMAT: &str = "sstr-detections";
pub const DETECTION_FORMAT_VERSION: u32 = 1;

/// First line of a detection file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionHeader {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub dim: usize,
}

/// Streams detections to a JSON-lines file.
pub struct DetectionWriter<W: Write> {
    out: W,
    dim: usize,
}

impl DetectionWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>, config: &PhocConfig) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        DetectionWriter::new(BufWriter::new(file), config)
    }
}

impl<W: Write> DetectionWriter<W> {
    pub fn new(mut out: W, config: &PhocConfig) -> Result<Self> {
        let header = DetectionHeader {
            format: DETECTION_FORMAT.into(),
            version: DETECTION_FORMAT_VERSION,
            config_hash: config.hash().to_string(),
            dim: config.dimension(),
        };
        write_json_line(&mut out, &header)?;
        Ok(DetectionWriter {
            out,
            dim: config.dimension(),
        })
    }

    pub fn write(&mut self, detection: &Detection) -> Result<()> {
        if detection.phoc.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: detection.phoc.len(),
            });
        }
        write_json_line(&mut self.out, &DetectionRecord::from(detection))
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush().map_err(|e| Error::io("<detections>", e))?;
        Ok(self.out)
    }
}

fn write_json_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value)
        .map_err(|e| Error::InvalidValue(format!("serialization failed: {e}")))?;
    out.write_all(b"\n").map_err(|e| Error::io("<detections>", e))
}

/// Detections grouped by image, in order of first appearance.
pub type DetectionsByImage = IndexMap<String, Vec<Detection>>;

/// Reads a detection file, one record at a time, grouping by image id.
///
/// Only the grouped detections are kept in memory; each line buffer is
/// reused, so peak memory stays close to the decoded payload.
pub fn load_detections(path: impl AsRef<Path>, config: &PhocConfig) -> Result<DetectionsByImage> {
    let mut groups = DetectionsByImage::new();
    for_each_detection(path, config, |detection| {
        match groups.get_mut(detection.image_id.as_str()) {
            Some(list) => list.push(detection),
            None => {
                groups.insert(detection.image_id.clone(), vec![detection]);
            }
        }
        Ok(())
    })?;
    Ok(groups)
}

/// Hands every record of a detection file to `visit`, in file order.
/// Returns the number of records.
pub fn for_each_detection<F>(path: impl AsRef<Path>, config: &PhocConfig, visit: F) -> Result<usize>
where
    F: FnMut(Detection) -> Result<()>,
{
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_detections(BufReader::new(file), config, path, visit)
}

fn read_detections<R: BufRead, F>(mut reader: R, config: &PhocConfig, path: &Path, mut visit: F) -> Result<usize>
where
    F: FnMut(Detection) -> Result<()>,
{
    let mut line = String::new();
    let mut line_no = 0usize;
    let mut header: Option<DetectionHeader> = None;
    let mut count = 0usize;
    let dim = config.dimension();
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
            break;
        }
        line_no += 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if header.is_none() {
            let h: DetectionHeader = serde_json::from_str(text).map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad header: {e}"),
            })?;
            if h.format != DETECTION_FORMAT || h.version != DETECTION_FORMAT_VERSION {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unsupported format {} v{}", h.format, h.version),
                });
            }
            let hash: ConfigHash = h.config_hash.parse()?;
            if hash != config.hash() {
                return Err(Error::ConfigMismatch {
                    index: h.config_hash,
                    query: config.hash().to_string(),
                });
            }
            header = Some(h);
            continue;
        }
        let mut record: DetectionRecord = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if record.phoc.len() != dim {
            return Err(Error::Parse {
                line: line_no,
                message: format!("PHOC has {} values, configuration needs {dim}", record.phoc.len()),
            });
        }
        // The parser grows the vector by doubling; trim it before keeping it.
        record.phoc.shrink_to_fit();
        let detection = record.into_detection().map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        visit(detection)?;
        count += 1;
    }
    if header.is_none() {
        return Err(Error::Parse {
            line: line_no.max(1),
            message: "missing header line".into(),
        });
    }
    Ok(count)
}

/// Box sizes from either plain `w h` lines or a detection file.
pub fn load_shapes(path: impl AsRef<Path>) -> Result<Vec<Shape>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut shapes = Vec::new();
    let mut json = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let is_json = *json.get_or_insert(text.starts_with('{'));
        let parse_err = |message: String| Error::Parse { line: i + 1, message };
        if is_json {
            let value: serde_json::Value = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
            if value.get("format").is_some() {
                continue;
            }
            let b = value
                .get("box")
                .and_then(|b| b.as_array())
                .filter(|b| b.len() == 4)
                .ok_or_else(|| parse_err("record without a 4-element box".into()))?;
            let w = b[2].as_f64().ok_or_else(|| parse_err("box width is not a number".into()))?;
            let h = b[3].as_f64().ok_or_else(|| parse_err("box height is not a number".into()))?;
            shapes.push(Shape::new(w, h).map_err(|e| parse_err(e.to_string()))?);
        } else {
            let fields: Vec<&str> = text.split_whitespace().collect();
            let [w, h] = fields.as_slice() else {
                return Err(parse_err(format!("expected `w h`, got {text:?}")));
            };
            let w: f64 = w.parse().map_err(|_| parse_err(format!("bad width {w:?}")))?;
            let h: f64 = h.parse().map_err(|_| parse_err(format!("bad height {h:?}")))?;
            shapes.push(Shape::new(w, h).map_err(|e| parse_err(e.to_string()))?);
        }
    }
    Ok(shapes)
}

/// Ground truth as text: `query<TAB>image<TAB>image...`, one query per line.
pub fn write_ground_truth(path: impl AsRef<Path>, gt: &GroundTruth) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (q, ids) in gt.iter() {
        out.push_str(q);
        for id in ids {
            out.push('\t');
            out.push_str(id);
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<GroundTruth> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut gt = GroundTruth::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let query = fields.next().unwrap_or_default().trim();
        let ids: Vec<&str> = fields.map(str::trim).filter(|s| !s.is_empty()).collect();
        if query.is_empty() || ids.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected a query followed by at least one image id".into(),
            });
        }
        for id in ids {
            gt.insert(query, id);
        }
    }
    Ok(gt)
}

/// One query per line; blank lines and `#` comments are ignored.
pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformRange {
    pub low: f32,
    pub high: f32,
}

impl UniformRange {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f32 {
        if self.high > self.low {
            rng.random_range(self.low..=self.high)
        } else {
            self.low
        }
    }
}

/// Parameters of the synthetic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub image_count: usize,
    pub lexicon: Vec<String>,
    /// True words per image, drawn uniformly from `min_words..=max_words`.
    pub min_words: usize,
    pub max_words: usize,
    pub descriptors_per_image: usize,
    /// Standard deviation of additive Gaussian noise, values clamped to [0, 1].
    pub phoc_noise: f64,
    pub bit_flip_rate: f64,
    /// Fraction of padding descriptors that encode distractor lexicon words;
    /// the rest encode random non-words.
    pub distractor_rate: f64,
    pub query_count: usize,
    pub min_relevant: usize,
    pub max_relevant: usize,
    /// Fraction of queries held out of the training word list.
    pub unseen_fraction: f64,
    pub word_objectness: UniformRange,
    pub padding_objectness: UniformRange,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(image_count: usize, lexicon: Vec<String>, seed: u64) -> Self {
        SyntheticSpec {
            image_count,
            lexicon,
            min_words: 1,
            max_words: 5,
            descriptors_per_image: 60,
            phoc_noise: 0.0,
            bit_flip_rate: 0.0,
            distractor_rate: 0.25,
            query_count: 50,
            min_relevant: 10,
            max_relevant: 50,
            unseen_fraction: 0.2,
            word_objectness: UniformRange { low: 0.5, high: 1.0 },
            padding_objectness: UniformRange { low: 0.0025, high: 0.3 },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidValue(m.to_string()));
        if self.image_count == 0 {
            return bad("image_count must be >= 1");
        }
        if self.min_words == 0 || self.min_words > self.max_words {
            return bad("need 1 <= min_words <= max_words");
        }
        if self.descriptors_per_image < self.max_words {
            return bad("descriptors_per_image must be >= max_words");
        }
        for (name, v) in [
            ("bit_flip_rate", self.bit_flip_rate),
            ("distractor_rate", self.distractor_rate),
            ("unseen_fraction", self.unseen_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidValue(format!("{name} {v} outside [0, 1]")));
            }
        }
        if !(self.phoc_noise >= 0.0 && self.phoc_noise.is_finite()) {
            return bad("phoc_noise must be finite and >= 0");
        }
        if self.min_relevant == 0 || self.min_relevant > self.max_relevant {
            return bad("need 1 <= min_relevant <= max_relevant");
        }
        for r in [self.word_objectness, self.padding_objectness] {
            if !(0.0 <= r.low && r.low <= r.high && r.high <= 1.0) {
                return bad("objectness ranges must lie within [0, 1]");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryWord {
    pub word: String,
    /// Whether the word belongs to the training word list.
    pub seen: bool,
}

/// Everything about a generated corpus except the descriptors themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusMeta {
    pub image_ids: Vec<String>,
    pub ground_truth: GroundTruth,
    pub queries: Vec<QueryWord>,
    /// Lexicon words usable for tuning; excludes every unseen query.
    pub training_words: Vec<String>,
    pub descriptor_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub detections: Vec<Vec<Detection>>,
    pub meta: CorpusMeta,
}

impl SyntheticCorpus {
    pub fn ground_truth(&self) -> &GroundTruth {
        &self.meta.ground_truth
    }

    pub fn query_words(&self) -> Vec<String> {
        self.meta.queries.iter().map(|q| q.word.clone()).collect()
    }
}

/// Generates the whole corpus in memory.
pub fn generate(spec: &SyntheticSpec, config: &PhocConfig) -> Result<SyntheticCorpus> {
    let mut detections: Vec<Vec<Detection>> = Vec::with_capacity(spec.image_count);
    let meta = generate_each(spec, config, |image, d| {
        if detections.len() <= image {
            detections.push(Vec::with_capacity(spec.descriptors_per_image));
        }
        detections[image].push(d);
        Ok(())
    })?;
    Ok(SyntheticCorpus { detections, meta })
}

fn bits_key(v: &PhocVector) -> Vec<u8> {
    v.as_slice().iter().map(|&x| x as u8).collect()
}

/// Generates the corpus image by image, handing each detection to `sink`
/// together with its image index. Output is a pure function of `spec`.
pub fn generate_each<F>(spec: &SyntheticSpec, config: &PhocConfig, mut sink: F) -> Result<CorpusMeta>
where
    F: FnMut(usize, Detection) -> Result<()>,
{
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Collision-free vocabulary: a word whose PHOC repeats an earlier word's is dropped.
    let mut seen_words = HashSet::new();
    let mut seen_codes = HashSet::new();
    let mut vocab: Vec<(String, PhocVector)> = Vec::new();
    for raw in &spec.lexicon {
        let Ok(word) = normalize_word(raw, config) else { continue };
        let word = word.as_string();
        if !seen_words.insert(word.clone()) {
            continue;
        }
        let phoc = encode_str(&word, config)?;
        if seen_codes.insert(bits_key(&phoc)) {
            vocab.push((word, phoc));
        }
    }
    if vocab.len() < spec.query_count + 2 {
        return Err(Error::LexiconTooSmall(format!(
            "{} collision-free words, need at least {}",
            vocab.len(),
            spec.query_count + 2
        )));
    }
    let mut order: Vec<usize> = (0..vocab.len()).collect();
    order.shuffle(&mut rng);
    let (query_ids, rest) = order.split_at(spec.query_count);
    let half = rest.len().div_ceil(2);
    let (filler_ids, distractor_ids) = rest.split_at(half);
    let unseen_count = (spec.unseen_fraction * spec.query_count as f64).round() as usize;
    let unseen: HashSet<usize> = query_ids[spec.query_count - unseen_count..].iter().copied().collect();
    let queries: Vec<QueryWord> = query_ids
        .iter()
        .map(|&i| QueryWord {
            word: vocab[i].0.clone(),
            seen: !unseen.contains(&i),
        })
        .collect();
    let training_words: Vec<String> = (0..vocab.len())
        .filter(|i| !unseen.contains(i))
        .map(|i| vocab[i].0.clone())
        .collect();
    let planted_codes: HashSet<Vec<u8>> = query_ids
        .iter()
        .chain(filler_ids)
        .map(|&i| bits_key(&vocab[i].1))
        .collect();

    let n = spec.image_count;
    let width = n.to_string().len().max(6);
    let image_ids: Vec<String> = (0..n).map(|i| format!("img{i:0width$}")).collect();

    // Plant each query in 10..=50 (capped by corpus size) distinct images.
    let mut planted: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut ground_truth = GroundTruth::new();
    let lo = spec.min_relevant.min(n);
    let hi = spec.max_relevant.min(n);
    for &q in query_ids {
        let count = rng.random_range(lo..=hi);
        let images = rand::seq::index::sample(&mut rng, n, count);
        for img in images.iter() {
            if planted[img].len() < spec.descriptors_per_image {
                planted[img].push(q);
                ground_truth.insert(vocab[q].0.clone(), image_ids[img].clone());
            }
        }
    }

    let normal = if spec.phoc_noise > 0.0 {
        Some(Normal::new(0.0f64, spec.phoc_noise).map_err(|e| Error::InvalidValue(e.to_string()))?)
    } else {
        None
    };
    let perturb = |clean: &[f32], rng: &mut ChaCha8Rng| -> Vec<f32> {
        clean
            .iter()
            .map(|&v| {
                let mut v = v as f64;
                if spec.bit_flip_rate > 0.0 && rng.random_bool(spec.bit_flip_rate) {
                    v = 1.0 - v;
                }
                if let Some(normal) = &normal {
                    v += normal.sample(rng);
                }
                v.clamp(0.0, 1.0) as f32
            })
            .collect()
    };

    let mut descriptor_count = 0usize;
    for (img, image_id) in image_ids.iter().enumerate() {
        let mut words: Vec<usize> = planted[img].clone();
        let wanted = rng.random_range(spec.min_words..=spec.max_words);
        let mut attempts = 0;
        while words.len() < wanted && !filler_ids.is_empty() && attempts < 64 {
            let f = *filler_ids.choose(&mut rng).expect("non-empty");
            if !words.contains(&f) {
                words.push(f);
            }
            attempts += 1;
        }
        // `Err` marks a background non-word.
        let mut slots: Vec<(std::result::Result<usize, PhocVector>, UniformRange)> = words
            .iter()
            .map(|&w| (Ok(w), spec.word_objectness))
            .collect();
        let padding = spec.descriptors_per_image.saturating_sub(words.len());
        let distractors = if distractor_ids.is_empty() {
            0
        } else {
            (spec.distractor_rate * padding as f64).round() as usize
        };
        for _ in 0..distractors {
            let d = *distractor_ids.choose(&mut rng).expect("non-empty");
            slots.push((Ok(d), spec.padding_objectness));
        }
        for _ in distractors..padding {
            slots.push((Err(background_phoc(&mut rng, config, &planted_codes)?), spec.padding_objectness));
        }
        slots.shuffle(&mut rng);

        for (content, objectness) in slots {
            let clean = match &content {
                Ok(w) => vocab[*w].1.as_slice(),
                Err(bg) => bg.as_slice(),
            };
            let values = if normal.is_none() && spec.bit_flip_rate == 0.0 {
                clean.to_vec()
            } else {
                perturb(clean, &mut rng)
            };
            let bbox = random_box(&mut rng);
            let det = Detection::new(
                image_id.clone(),
                bbox,
                objectness.sample(&mut rng),
                PhocVector::prediction(values)?,
            )?;
            sink(img, det)?;
            descriptor_count += 1;
        }
    }

    Ok(CorpusMeta {
        image_ids,
        ground_truth,
        queries,
        training_words,
        descriptor_count,
    })
}

fn background_phoc(rng: &mut ChaCha8Rng, config: &PhocConfig, planted: &HashSet<Vec<u8>>) -> Result<PhocVector> {
    let letters: Vec<char> = config.alphabet().iter().copied().filter(|c| c.is_alphabetic()).collect();
    let letters = if letters.is_empty() { config.alphabet().to_vec() } else { letters };
    loop {
        let len = rng.random_range(3..=10);
        let s: String = (0..len).map(|_| *letters.choose(rng).expect("non-empty")).collect();
        let phoc = encode_str(&s, config)?;
        if !planted.contains(&bits_key(&phoc)) {
            return Ok(phoc);
        }
    }
}

fn random_box(rng: &mut ChaCha8Rng) -> BoundingBox {
    let h: f64 = rng.random_range(10.0..60.0);
    let w = h * rng.random_range(1.5..8.0);
    BoundingBox {
        x: rng.random_range(0.0..600.0),
        y: rng.random_range(0.0..600.0),
        w,
        h,
    }
}

/// Text-like box sizes: log-uniform height in `[10, 40]` px, log-uniform
/// aspect ratio in `[2, 12]`, rounded to whole pixels.
pub fn synthetic_text_shapes(count: usize, seed: u64) -> Vec<Shape> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let h = (rng.random_range(10f64.ln()..40f64.ln())).exp().round();
            let aspect = rng.random_range(2f64.ln()..12f64.ln()).exp();
            Shape { w: (h * aspect).round(), h }
        })
        .collect()
}

/// Relevant image ids per query word of a generated corpus.
pub fn relevant_sets(meta: &CorpusMeta) -> Vec<(String, BTreeSet<String>)> {
    meta.queries
        .iter()
        .map(|q| {
            (
                q.word.clone(),
                meta.ground_truth.relevant(&q.word).cloned().unwrap_or_default(),
            )
        })
        .collect()
}
