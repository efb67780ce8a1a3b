//! Text query to ranked image list.
//!
//! An image's score is the smallest Euclidean distance between the query
//! PHOC and any of its descriptors. Images are ranked by ascending score,
//! ties broken by image id.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Detection;
use crate::index::{Backend, NeighborHit, SearchIndex};
use crate::phoc::{encode_str, PhocConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub image_id: String,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query: String,
    pub items: Vec<RankedItem>,
    /// True when every indexed image appears in `items`.
    pub exhaustive: bool,
}

impl RankedList {
    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|i| i.image_id.as_str())
    }

    pub fn rank_of(&self, image_id: &str) -> Option<usize> {
        self.items.iter().position(|i| i.image_id == image_id).map(|p| p + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RetrievalParams {
    /// Descriptors fetched from a graph backend; `None` picks
    /// `max(1000, 10 * sqrt(image_count))`. The exact backend always scans
    /// everything.
    pub k_pool: Option<usize>,
}

impl RetrievalParams {
    pub fn pool_size(&self, image_count: usize) -> usize {
        self.k_pool
            .unwrap_or_else(|| 1000.max((10.0 * (image_count as f64).sqrt()).ceil() as usize))
            .max(1)
    }
}

/// Wall-clock time spent in each stage of one query.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimings {
    pub encode: Duration,
    pub search: Duration,
    pub aggregate: Duration,
}

impl PhaseTimings {
    pub fn total(&self) -> Duration {
        self.encode + self.search + self.aggregate
    }
}

/// First (closest) hit per image, ordered by distance then image index.
pub fn aggregate_by_image(hits: &[NeighborHit]) -> Vec<(u32, f32)> {
    let mut seen = std::collections::HashSet::new();
    let mut out: Vec<(u32, f32)> = hits
        .iter()
        .filter(|h| seen.insert(h.image))
        .map(|h| (h.image, h.distance))
        .collect();
    out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    out
}

/// Union of the detections produced at several input resolutions. No
/// deduplication is applied.
pub fn merge_multiresolution(sets: &[Vec<Detection>]) -> Result<Vec<Detection>> {
    let dim = sets.iter().flatten().map(|d| d.phoc.len()).next();
    let mut merged = Vec::with_capacity(sets.iter().map(Vec::len).sum());
    for d in sets.iter().flatten() {
        if Some(d.phoc.len()) != dim {
            return Err(Error::DimensionMismatch {
                expected: dim.unwrap_or(0),
                actual: d.phoc.len(),
            });
        }
        merged.push(d.clone());
    }
    Ok(merged)
}

pub fn query(text: &str, index: &SearchIndex, config: &PhocConfig, params: &RetrievalParams) -> Result<RankedList> {
    query_timed(text, index, config, params).map(|(list, _)| list)
}

pub fn query_timed(
    text: &str,
    index: &SearchIndex,
    config: &PhocConfig,
    params: &RetrievalParams,
) -> Result<(RankedList, PhaseTimings)> {
    let (index_hash, query_hash) = (index.config().hash(), config.hash());
    if index_hash != query_hash {
        return Err(Error::ConfigMismatch {
            index: index_hash.to_string(),
            query: query_hash.to_string(),
        });
    }
    let t0 = Instant::now();
    let phoc = encode_str(text, config)?;
    let t1 = Instant::now();
    let (ranked, t2, exhaustive) = match index.backend() {
        Backend::Exact => {
            let minima = index.image_minima(phoc.as_slice())?;
            let t2 = Instant::now();
            let mut order: Vec<(u32, f32)> = minima
                .into_iter()
                .enumerate()
                .map(|(i, d)| (i as u32, d))
                .collect();
            order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            (order, t2, true)
        }
        Backend::Graph => {
            let hits = index.knn(phoc.as_slice(), params.pool_size(index.image_count()))?;
            let t2 = Instant::now();
            let order = aggregate_by_image(&hits);
            let exhaustive = order.len() == index.image_count();
            (order, t2, exhaustive)
        }
    };
    let items = ranked
        .into_iter()
        .map(|(image, score)| RankedItem {
            image_id: index.image_id(image).to_string(),
            score,
        })
        .collect();
    let t3 = Instant::now();
    Ok((
        RankedList {
            query: text.to_string(),
            items,
            exhaustive,
        },
        PhaseTimings {
            encode: t1 - t0,
            search: t2 - t1,
            aggregate: t3 - t2,
        },
    ))
}
