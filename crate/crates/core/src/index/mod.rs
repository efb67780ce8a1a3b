//! Descriptor storage with exact and graph-based nearest-neighbor search.

mod distance;
mod format;
mod hnsw;
mod store;

pub use distance::squared_l2;
pub use format::{FORMAT_VERSION, MAGIC};
pub use store::{AnnParams, Backend, DescriptorStore, EntryTable, NeighborHit, SearchIndex};
