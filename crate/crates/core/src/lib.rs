//! Multilingual k-nearest-neighbor machine translation datastores.
//!
//! A datastore caches `(translation context, target token)` pairs. This crate
//! builds such stores from parallel corpora, merges bilingual stores into
//! multilingual ones, searches them (exact scan or IVF), turns neighbors into
//! a retrieval distribution interpolated with a base model, and fits linear
//! maps that carry one language's contexts into another's region.
//!
//! The [`synth`] module provides a seeded toy multilingual world so that the
//! whole pipeline can be exercised without a neural translation model.

pub mod datastore;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod index;
pub mod lang;
pub mod retrieval;
pub mod synth;
pub mod xmap;

pub use datastore::{Datastore, Entry, OriginTable, ParallelCorpus, StoreStats};
pub use error::{Error, Result};
pub use index::{HitList, Index, IndexKind, IndexParams, NeighborSearch, SearchHit};
pub use lang::LanguageTag;
pub use retrieval::{ContextProvider, DecodeParams, ProbabilityDistribution, RetrievalParams};
pub use xmap::{AlignedPairSet, LinearMap, Ridge};
