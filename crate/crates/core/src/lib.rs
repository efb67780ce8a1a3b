//! Scene text retrieval over Pyramidal Histogram Of Characters descriptors.
//!
//! A single-shot detector emits, for every proposal, a box, an objectness
//! score and a PHOC prediction. All descriptors of all images form one
//! database; a text query is encoded as a PHOC and answered by Euclidean
//! nearest-neighbor search, images ranked by their closest descriptor.
//!
//! - [`phoc`]: string to PHOC encoding.
//! - [`geometry`]: IoU, anchor selection, grid decoding.
//! - [`loss`]: the multi-part training objective and its PHOC gradient.
//! - [`index`]: descriptor store with exact and graph backends, on-disk format.
//! - [`retrieval`]: query pipeline and multi-resolution merging.
//! - [`evalkit`]: AP, mAP, P@n and latency benchmarking.
//! - [`corpus`]: file loaders and the synthetic benchmark generator.

pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod geometry;
pub mod index;
pub mod loss;
pub mod phoc;
pub mod retrieval;

pub use error::{Error, Result};
