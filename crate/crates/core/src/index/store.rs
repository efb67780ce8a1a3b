use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::distance::{squared_l2, Scored};
use super::hnsw::HnswGraph;
use crate::error::{Error, Result};
use crate::geometry::Detection;
use crate::phoc::PhocConfig;

/// Flat storage of every descriptor: vectors, owning image and objectness.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryTable {
    pub(crate) dim: usize,
    pub(crate) vectors: Vec<f32>,
    pub(crate) objectness: Vec<f32>,
    pub(crate) image_of: Vec<u32>,
    /// Image ids; sorted once sealed, so index order is lexicographic order.
    pub(crate) image_ids: Vec<String>,
}

impl EntryTable {
    fn new(dim: usize) -> Self {
        EntryTable {
            dim,
            vectors: Vec::new(),
            objectness: Vec::new(),
            image_of: Vec::new(),
            image_ids: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.image_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image_of.is_empty()
    }

    pub fn vector(&self, entry: usize) -> &[f32] {
        &self.vectors[entry * self.dim..(entry + 1) * self.dim]
    }

    pub fn objectness(&self, entry: usize) -> f32 {
        self.objectness[entry]
    }

    pub fn image_of(&self, entry: usize) -> u32 {
        self.image_of[entry]
    }

    pub fn image_count(&self) -> usize {
        self.image_ids.len()
    }

    pub fn image_id(&self, image: u32) -> &str {
        &self.image_ids[image as usize]
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    /// Renumbers images so that index order matches lexicographic id order.
    fn sort_images(&mut self) {
        let mut order: Vec<u32> = (0..self.image_ids.len() as u32).collect();
        order.sort_by(|&a, &b| self.image_ids[a as usize].cmp(&self.image_ids[b as usize]));
        let mut remap = vec![0u32; order.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old as usize] = new as u32;
        }
        for img in &mut self.image_of {
            *img = remap[*img as usize];
        }
        self.image_ids = order
            .iter()
            .map(|&old| std::mem::take(&mut self.image_ids[old as usize]))
            .collect();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Exact,
    Graph,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Exact => "exact",
            Backend::Graph => "graph",
        })
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Backend::Exact),
            "graph" => Ok(Backend::Graph),
            other => Err(Error::InvalidValue(format!("unknown backend {other:?}"))),
        }
    }
}

/// Graph construction and search parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnParams {
    /// Links per node on upper layers; layer 0 allows twice as many.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for AnnParams {
    fn default() -> Self {
        AnnParams {
            m: 16,
            ef_construction: 200,
            ef_search: 100,
            seed: 0x5eed,
        }
    }
}

impl AnnParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.ef_construction == 0 || self.ef_search == 0 {
            return Err(Error::InvalidValue(
                "graph degree must be >= 2 and beam widths >= 1".into(),
            ));
        }
        if self.m > u16::MAX as usize / 2 {
            return Err(Error::InvalidValue(format!("graph degree {} too large", self.m)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborHit {
    pub entry: usize,
    /// Image index into the index's (sorted) image table.
    pub image: u32,
    pub distance: f32,
}

/// Collection of descriptors being built up before it becomes searchable.
#[derive(Debug)]
pub struct DescriptorStore {
    config: PhocConfig,
    table: EntryTable,
    image_lookup: HashMap<String, u32>,
    sealed: Option<SearchIndex>,
}

impl DescriptorStore {
    pub fn new(config: PhocConfig) -> Self {
        let dim = config.dimension();
        DescriptorStore {
            config,
            table: EntryTable::new(dim),
            image_lookup: HashMap::new(),
            sealed: None,
        }
    }

    pub fn config(&self) -> &PhocConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        match &self.sealed {
            Some(index) => index.len(),
            None => self.table.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed.is_some()
    }

    pub fn add(&mut self, detection: &Detection) -> Result<()> {
        self.add_vector(&detection.image_id, detection.phoc.as_slice(), detection.objectness)
    }

    /// Appends one descriptor without going through a [`Detection`].
    pub fn add_vector(&mut self, image_id: &str, vector: &[f32], objectness: f32) -> Result<()> {
        if self.sealed.is_some() {
            return Err(Error::SealedStore);
        }
        if vector.len() != self.table.dim {
            return Err(Error::DimensionMismatch {
                expected: self.table.dim,
                actual: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) || !(0.0..=1.0).contains(&objectness) {
            return Err(Error::InvalidValue(format!(
                "descriptor for {image_id} has non-finite values or objectness outside [0, 1]"
            )));
        }
        let next = self.table.image_ids.len() as u32;
        let image = *self.image_lookup.entry(image_id.to_string()).or_insert_with(|| {
            self.table.image_ids.push(image_id.to_string());
            next
        });
        self.table.vectors.extend_from_slice(vector);
        self.table.objectness.push(objectness);
        self.table.image_of.push(image);
        Ok(())
    }

    /// Freezes the contents and builds the chosen backend.
    pub fn seal(&mut self, backend: Backend, params: AnnParams) -> Result<&SearchIndex> {
        if self.sealed.is_some() {
            return Err(Error::SealedStore);
        }
        if self.table.is_empty() {
            return Err(Error::EmptyStore);
        }
        params.validate()?;
        let mut table = std::mem::replace(&mut self.table, EntryTable::new(self.config.dimension()));
        self.image_lookup = HashMap::new();
        table.sort_images();
        table.vectors.shrink_to_fit();
        let index = SearchIndex::build(self.config.clone(), Arc::new(table), backend, params);
        Ok(self.sealed.insert(index))
    }

    pub fn index(&self) -> Result<&SearchIndex> {
        self.sealed.as_ref().ok_or(Error::NotSealed)
    }

    pub fn into_index(self) -> Result<SearchIndex> {
        self.sealed.ok_or(Error::NotSealed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum BackendIndex {
    Exact,
    Graph(HnswGraph),
}

/// Immutable, searchable descriptor collection.
///
/// Entries are shared behind an `Arc`, so several backends can be built over
/// one table and the index can be handed to any number of reader threads.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchIndex {
    pub(crate) config: PhocConfig,
    pub(crate) table: Arc<EntryTable>,
    pub(crate) backend: BackendIndex,
}

impl SearchIndex {
    fn build(config: PhocConfig, table: Arc<EntryTable>, backend: Backend, params: AnnParams) -> Self {
        let backend = match backend {
            Backend::Exact => BackendIndex::Exact,
            Backend::Graph => BackendIndex::Graph(HnswGraph::build(&table, params)),
        };
        SearchIndex {
            config,
            table,
            backend,
        }
    }

    /// Another backend over the same entries.
    pub fn with_backend(&self, backend: Backend, params: AnnParams) -> Result<SearchIndex> {
        params.validate()?;
        Ok(SearchIndex::build(self.config.clone(), Arc::clone(&self.table), backend, params))
    }

    pub fn backend(&self) -> Backend {
        match self.backend {
            BackendIndex::Exact => Backend::Exact,
            BackendIndex::Graph(_) => Backend::Graph,
        }
    }

    pub fn ann_params(&self) -> Option<AnnParams> {
        match &self.backend {
            BackendIndex::Exact => None,
            BackendIndex::Graph(g) => Some(g.params),
        }
    }

    /// Changes the query-time beam width of a graph backend.
    pub fn set_ef_search(&mut self, ef: usize) -> Result<()> {
        if ef == 0 {
            return Err(Error::InvalidValue("search beam width must be >= 1".into()));
        }
        if let BackendIndex::Graph(g) = &mut self.backend {
            g.params.ef_search = ef;
        }
        Ok(())
    }

    pub fn config(&self) -> &PhocConfig {
        &self.config
    }

    pub fn table(&self) -> &EntryTable {
        &self.table
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn image_count(&self) -> usize {
        self.table.image_count()
    }

    pub fn image_id(&self, image: u32) -> &str {
        self.table.image_id(image)
    }

    fn check_query(&self, query: &[f32]) -> Result<()> {
        if query.len() != self.table.dim {
            return Err(Error::DimensionMismatch {
                expected: self.table.dim,
                actual: query.len(),
            });
        }
        Ok(())
    }

    /// `k` nearest descriptors by Euclidean distance, closest first; ties go
    /// to the lower entry index. Exact unless the backend is a graph.
    pub fn knn(&self, query: &[f32], k: usize) -> Result<Vec<NeighborHit>> {
        self.check_query(query)?;
        if k == 0 {
            return Err(Error::InvalidValue("k must be >= 1".into()));
        }
        let scored = match &self.backend {
            BackendIndex::Exact => self.exact_knn(query, k),
            BackendIndex::Graph(g) => g.search(&self.table, query, k),
        };
        Ok(scored
            .into_iter()
            .map(|s| NeighborHit {
                entry: s.id as usize,
                image: self.table.image_of(s.id as usize),
                distance: s.dist.sqrt(),
            })
            .collect())
    }

    fn exact_knn(&self, query: &[f32], k: usize) -> Vec<Scored> {
        let mut heap: BinaryHeap<Scored> = BinaryHeap::with_capacity(k + 1);
        for (i, v) in self.table.vectors.chunks_exact(self.table.dim).enumerate() {
            let s = Scored {
                dist: squared_l2(query, v),
                id: i as u32,
            };
            if heap.len() < k {
                heap.push(s);
            } else if s < *heap.peek().expect("k >= 1") {
                heap.pop();
                heap.push(s);
            }
        }
        heap.into_sorted_vec()
    }

    /// Smallest Euclidean distance from `query` to any descriptor of each
    /// image, by exhaustive scan. Indexed by image.
    pub fn image_minima(&self, query: &[f32]) -> Result<Vec<f32>> {
        self.check_query(query)?;
        let mut best = vec![f32::INFINITY; self.table.image_count()];
        for (v, &img) in self
            .table
            .vectors
            .chunks_exact(self.table.dim)
            .zip(&self.table.image_of)
        {
            let d = squared_l2(query, v);
            let slot = &mut best[img as usize];
            if d < *slot {
                *slot = d;
            }
        }
        for d in &mut best {
            *d = d.sqrt();
        }
        Ok(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::phoc::{encode_str, PhocVector};

    fn tiny_config() -> PhocConfig {
        PhocConfig::new("abcd", vec![1, 2], vec![], &[] as &[&str], 0.5).unwrap()
    }

    fn det(image: &str, word: &str, config: &PhocConfig) -> Detection {
        let phoc = encode_str(word, config).unwrap();
        Detection::new(image, BoundingBox::new(0.0, 0.0, 10.0, 5.0).unwrap(), 0.9, phoc).unwrap()
    }

    #[test]
    fn add_counts_and_checks_dimension() {
        let config = tiny_config();
        let mut store = DescriptorStore::new(config.clone());
        store.add(&det("a", "ab", &config)).unwrap();
        assert_eq!(store.len(), 1);
        for img in 0..10 {
            for _ in 0..60 {
                store.add(&det(&format!("img{img}"), "cab", &config)).unwrap();
            }
        }
        assert_eq!(store.len(), 601);
        let bad = PhocVector::prediction(vec![0.0; 3]).unwrap();
        let d = Detection::new("x", BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), 0.5, bad).unwrap();
        assert!(matches!(store.add(&d), Err(Error::DimensionMismatch { expected: 12, actual: 3 })));
    }

    #[test]
    fn seal_lifecycle() {
        let config = tiny_config();
        let mut store = DescriptorStore::new(config.clone());
        assert!(matches!(store.index(), Err(Error::NotSealed)));
        assert!(matches!(
            store.seal(Backend::Exact, AnnParams::default()),
            Err(Error::EmptyStore)
        ));
        store.add(&det("b", "ab", &config)).unwrap();
        store.seal(Backend::Exact, AnnParams::default()).unwrap();
        assert!(matches!(
            store.seal(Backend::Exact, AnnParams::default()),
            Err(Error::SealedStore)
        ));
        assert!(matches!(store.add(&det("c", "ab", &config)), Err(Error::SealedStore)));
        assert_eq!(store.index().unwrap().len(), 1);
    }

    #[test]
    fn images_sorted_after_seal() {
        let config = tiny_config();
        let mut store = DescriptorStore::new(config.clone());
        for img in ["zeta", "alpha", "mid", "alpha"] {
            store.add(&det(img, "abc", &config)).unwrap();
        }
        let index = store.seal(Backend::Exact, AnnParams::default()).unwrap();
        assert_eq!(index.table().image_ids(), ["alpha", "mid", "zeta"]);
        let owners: Vec<&str> = (0..4).map(|e| index.image_id(index.table().image_of(e))).collect();
        assert_eq!(owners, ["zeta", "alpha", "mid", "alpha"]);
    }

    #[test]
    fn knn_identity_and_short_store() {
        let config = tiny_config();
        let mut store = DescriptorStore::new(config.clone());
        for (i, w) in ["ab", "ba", "cd", "dab"].iter().enumerate() {
            store.add(&det(&format!("i{i}"), w, &config)).unwrap();
        }
        let index = store.seal(Backend::Exact, AnnParams::default()).unwrap();
        let q = encode_str("cd", &config).unwrap();
        let hits = index.knn(q.as_slice(), 10).unwrap();
        assert_eq!(hits.len(), 4);
        assert_eq!(hits[0].entry, 2);
        assert_eq!(hits[0].distance, 0.0);
        assert!(hits.windows(2).all(|w| w[0].distance <= w[1].distance));
        assert!(index.knn(&[0.0; 3], 1).is_err());
    }
}
