//! Ranked-retrieval quality and latency measurement.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::SearchIndex;
use crate::phoc::PhocConfig;
use crate::retrieval::{query_timed, PhaseTimings, RankedList, RetrievalParams};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Query string to the set of images that contain it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    relevant: BTreeMap<String, BTreeSet<String>>,
}

impl GroundTruth {
    pub fn new() -> Self {
        GroundTruth::default()
    }

    pub fn insert(&mut self, query: impl Into<String>, image_id: impl Into<String>) {
        self.relevant.entry(query.into()).or_default().insert(image_id.into());
    }

    pub fn relevant(&self, query: &str) -> Option<&BTreeSet<String>> {
        self.relevant.get(query)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.relevant.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.relevant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevant.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.relevant.iter().map(|(q, s)| (q.as_str(), s))
    }
}

/// Non-interpolated average precision: the mean, over relevant images, of
/// the precision at the rank where each appears. Relevant images missing
/// from the list contribute zero.
pub fn average_precision<S: std::borrow::Borrow<str> + Eq + std::hash::Hash>(
    ranked: &RankedList,
    relevant: &HashSet<S>,
) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::EmptyRelevantSet);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in ranked.image_ids().enumerate() {
        if relevant.contains(id) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / relevant.len() as f64)
}

/// Relevant images among the first `n`, divided by `n` (even when the list
/// is shorter than `n`).
pub fn precision_at_n<S: std::borrow::Borrow<str> + Eq + std::hash::Hash>(
    ranked: &RankedList,
    relevant: &HashSet<S>,
    n: usize,
) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let hits = ranked.image_ids().take(n).filter(|id| relevant.contains(*id)).count();
    hits as f64 / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEval {
    pub query: String,
    pub ap: f64,
    pub p_at_10: f64,
    pub p_at_20: f64,
    pub relevant: usize,
    pub latency_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub backend: String,
    pub per_query: Vec<QueryEval>,
    #[serde(rename = "mAP")]
    pub map: f64,
    pub mean_p_at_10: f64,
    pub mean_p_at_20: f64,
    pub mean_latency_seconds: f64,
    pub descriptor_count: usize,
    pub image_count: usize,
    pub warnings: Vec<String>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Runs every query against `index` and scores it with `gt`.
///
/// Queries without ground truth are listed in `warnings` and left out of the
/// means.
pub fn evaluate<S: AsRef<str>>(
    queries: &[S],
    index: &SearchIndex,
    config: &PhocConfig,
    gt: &GroundTruth,
    params: &RetrievalParams,
) -> Result<EvalReport> {
    if queries.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    let mut per_query = Vec::new();
    let mut warnings = Vec::new();
    for q in queries {
        let q = q.as_ref();
        let Some(relevant) = gt.relevant(q) else {
            warnings.push(format!("query {q:?} has no ground truth; skipped"));
            continue;
        };
        if relevant.is_empty() {
            warnings.push(format!("query {q:?} has an empty relevant set; skipped"));
            continue;
        }
        let started = Instant::now();
        let (ranked, _) = query_timed(q, index, config, params)?;
        let latency = started.elapsed().as_secs_f64();
        let relevant: HashSet<&str> = relevant.iter().map(String::as_str).collect();
        per_query.push(QueryEval {
            query: q.to_string(),
            ap: average_precision(&ranked, &relevant)?,
            p_at_10: precision_at_n(&ranked, &relevant, 10),
            p_at_20: precision_at_n(&ranked, &relevant, 20),
            relevant: relevant.len(),
            latency_seconds: latency,
        });
    }
    if per_query.is_empty() {
        return Err(Error::InvalidValue("no query has ground truth".into()));
    }
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        backend: index.backend().to_string(),
        map: mean(per_query.iter().map(|q| q.ap)),
        mean_p_at_10: mean(per_query.iter().map(|q| q.p_at_10)),
        mean_p_at_20: mean(per_query.iter().map(|q| q.p_at_20)),
        mean_latency_seconds: mean(per_query.iter().map(|q| q.latency_seconds)),
        descriptor_count: index.len(),
        image_count: index.image_count(),
        per_query,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl LatencyStats {
    /// Seconds; `samples` must be non-empty.
    pub fn from_durations(samples: &[Duration]) -> Self {
        let mut secs: Vec<f64> = samples.iter().map(Duration::as_secs_f64).collect();
        secs.sort_by(f64::total_cmp);
        let n = secs.len();
        let median = if n % 2 == 1 {
            secs[n / 2]
        } else {
            (secs[n / 2 - 1] + secs[n / 2]) / 2.0
        };
        let p95 = secs[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1];
        LatencyStats {
            mean: secs.iter().sum::<f64>() / n as f64,
            median,
            p95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub backend: String,
    pub descriptor_count: usize,
    pub query_count: usize,
    pub repetitions: usize,
    pub encode: LatencyStats,
    pub search: LatencyStats,
    pub aggregate: LatencyStats,
    pub total: LatencyStats,
}

impl BenchReport {
    /// `(metric, value)` rows, for tabular output.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("descriptor_count".to_string(), self.descriptor_count as f64),
            ("query_count".to_string(), self.query_count as f64),
            ("repetitions".to_string(), self.repetitions as f64),
        ];
        for (phase, s) in [
            ("encode", &self.encode),
            ("search", &self.search),
            ("aggregate", &self.aggregate),
            ("total", &self.total),
        ] {
            rows.push((format!("{phase}_mean_s"), s.mean));
            rows.push((format!("{phase}_median_s"), s.median));
            rows.push((format!("{phase}_p95_s"), s.p95));
        }
        rows
    }
}

/// Times every query `repetitions` times, per pipeline stage.
pub fn bench<S: AsRef<str>>(
    index: &SearchIndex,
    config: &PhocConfig,
    queries: &[S],
    repetitions: usize,
    params: &RetrievalParams,
) -> Result<BenchReport> {
    if queries.is_empty() {
        return Err(Error::EmptyQuerySet);
    }
    let repetitions = repetitions.max(1);
    let mut timings: Vec<PhaseTimings> = Vec::with_capacity(queries.len() * repetitions);
    for _ in 0..repetitions {
        for q in queries {
            let (_, t) = query_timed(q.as_ref(), index, config, params)?;
            timings.push(t);
        }
    }
    let stats = |f: fn(&PhaseTimings) -> Duration| {
        LatencyStats::from_durations(&timings.iter().map(f).collect::<Vec<_>>())
    };
    Ok(BenchReport {
        backend: index.backend().to_string(),
        descriptor_count: index.len(),
        query_count: queries.len(),
        repetitions,
        encode: stats(|t| t.encode),
        search: stats(|t| t.search),
        aggregate: stats(|t| t.aggregate),
        total: stats(|t| t.total()),
    })
}
