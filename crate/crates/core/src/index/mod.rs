//! Nearest-neighbor search over a sealed datastore's keys.
//!
//! Distances are squared Euclidean, accumulated in `f64`. Every result list is
//! ordered by `(distance, entry_index)`, so equal distances always resolve to
//! the lower entry index and searches are fully deterministic.

mod flat;
mod io;
mod ivf;

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use self::io::{load_index, save_index, INDEX_MAGIC};
use crate::datastore::Datastore;
use crate::error::{Error, Result};

/// Number of k-means iterations used to fit IVF coarse centroids.
pub const KMEANS_ITERS: usize = 20;
pub const DEFAULT_NPROBE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub entry_index: u32,
    pub distance: f64,
    pub token: u32,
    pub origin: u16,
}

impl SearchHit {
    fn rank_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.entry_index.cmp(&other.entry_index))
    }
}

/// Neighbors sorted ascending by `(distance, entry_index)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HitList {
    hits: Vec<SearchHit>,
}

impl HitList {
    /// Sorts `hits` into canonical order.
    pub fn from_unsorted(mut hits: Vec<SearchHit>) -> Self {
        hits.sort_by(SearchHit::rank_cmp);
        HitList { hits }
    }

    pub fn as_slice(&self) -> &[SearchHit] {
        &self.hits
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SearchHit> {
        self.hits.iter()
    }

    /// The first `k` hits. A prefix of a top-`K` list is the top-`k` list.
    pub fn truncated(&self, k: usize) -> HitList {
        HitList { hits: self.hits[..k.min(self.hits.len())].to_vec() }
    }

    pub fn into_vec(self) -> Vec<SearchHit> {
        self.hits
    }
}

impl<'a> IntoIterator for &'a HitList {
    type Item = &'a SearchHit;
    type IntoIter = std::slice::Iter<'a, SearchHit>;
    fn into_iter(self) -> Self::IntoIter {
        self.hits.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Flat,
    Ivf,
}

impl std::str::FromStr for IndexKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(IndexKind::Flat),
            "ivf" => Ok(IndexKind::Ivf),
            _ => Err(Error::invalid(format!("unknown index kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexParams {
    pub kind: IndexKind,
    /// Number of IVF cells; `None` picks `ceil(sqrt(|D|))`.
    #[serde(default)]
    pub nlist: Option<usize>,
    #[serde(default = "default_nprobe")]
    pub nprobe: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_nprobe() -> usize {
    DEFAULT_NPROBE
}

impl IndexParams {
    pub fn flat() -> Self {
        IndexParams { kind: IndexKind::Flat, nlist: None, nprobe: DEFAULT_NPROBE, seed: 0 }
    }

    pub fn ivf(seed: u64) -> Self {
        IndexParams { kind: IndexKind::Ivf, nlist: None, nprobe: DEFAULT_NPROBE, seed }
    }

    pub fn with_nlist(mut self, nlist: usize) -> Self {
        self.nlist = Some(nlist);
        self
    }

    pub fn with_nprobe(mut self, nprobe: usize) -> Self {
        self.nprobe = nprobe;
        self
    }
}

/// `ceil(sqrt(n))`, at least 1.
pub fn default_nlist(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r < n {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r.max(1)
}

/// Anything that answers k-nearest-neighbor queries.
pub trait NeighborSearch: Sync {
    fn dim(&self) -> usize;
    fn search(&self, query: &[f32], k: usize) -> Result<HitList>;
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct IvfLayout {
    pub nlist: usize,
    pub nprobe: usize,
    pub seed: u64,
    pub centroids: Vec<f32>,
    /// Cell `c` holds `perm[offsets[c]..offsets[c + 1]]`.
    pub offsets: Vec<usize>,
    pub perm: Vec<u32>,
}

/// An immutable search structure over a sealed store.
#[derive(Debug, Clone)]
pub struct Index {
    store: Arc<Datastore>,
    ivf: Option<IvfLayout>,
}

impl Index {
    pub fn build(store: Arc<Datastore>, params: &IndexParams) -> Result<Index> {
        match params.kind {
            IndexKind::Flat => Index::flat(store),
            IndexKind::Ivf => {
                let nlist = params.nlist.unwrap_or_else(|| default_nlist(store.len()));
                let nprobe = params.nprobe.min(nlist);
                Index::ivf(store, nlist, nprobe, params.seed)
            }
        }
    }

    /// Exhaustive scan index.
    pub fn flat(store: Arc<Datastore>) -> Result<Index> {
        check_sealed(&store)?;
        Ok(Index { store, ivf: None })
    }

    /// Inverted-file index with `nlist` k-means cells, probing `nprobe` per query.
    pub fn ivf(store: Arc<Datastore>, nlist: usize, nprobe: usize, seed: u64) -> Result<Index> {
        check_sealed(&store)?;
        if nlist == 0 || nprobe == 0 {
            return Err(Error::invalid("nlist and nprobe must be positive"));
        }
        if nprobe > nlist {
            return Err(Error::invalid(format!("nprobe {nprobe} exceeds nlist {nlist}")));
        }
        if store.len() < nlist {
            return Err(Error::invalid(format!(
                "store has {} entries, fewer than nlist = {nlist}",
                store.len()
            )));
        }
        let ivf = ivf::train(&store, nlist, nprobe, seed);
        Ok(Index { store, ivf: Some(ivf) })
    }

    pub fn kind(&self) -> IndexKind {
        if self.ivf.is_some() {
            IndexKind::Ivf
        } else {
            IndexKind::Flat
        }
    }

    pub fn store(&self) -> &Arc<Datastore> {
        &self.store
    }

    pub fn nlist(&self) -> Option<usize> {
        self.ivf.as_ref().map(|l| l.nlist)
    }

    pub fn nprobe(&self) -> Option<usize> {
        self.ivf.as_ref().map(|l| l.nprobe)
    }

    /// Same cells and centroids, different probe count.
    pub fn with_nprobe(&self, nprobe: usize) -> Result<Index> {
        let mut out = self.clone();
        if let Some(l) = out.ivf.as_mut() {
            if nprobe == 0 || nprobe > l.nlist {
                return Err(Error::invalid(format!("nprobe must be in 1..={}", l.nlist)));
            }
            l.nprobe = nprobe;
        }
        Ok(out)
    }

    pub(crate) fn layout(&self) -> Option<&IvfLayout> {
        self.ivf.as_ref()
    }

    pub(crate) fn from_parts(store: Arc<Datastore>, ivf: Option<IvfLayout>) -> Index {
        Index { store, ivf }
    }
}

impl NeighborSearch for Index {
    fn dim(&self) -> usize {
        self.store.dim()
    }

    fn search(&self, query: &[f32], k: usize) -> Result<HitList> {
        if query.len() != self.store.dim() {
            return Err(Error::invalid(format!(
                "query has dimension {}, index expects {}",
                query.len(),
                self.store.dim()
            )));
        }
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        Ok(match &self.ivf {
            None => flat::scan_all(&self.store, query, k),
            Some(layout) => ivf::search(&self.store, layout, query, k),
        })
    }
}

fn check_sealed(store: &Datastore) -> Result<()> {
    if store.is_sealed() {
        Ok(())
    } else {
        Err(Error::InvalidState("indexes can only be built over sealed stores".into()))
    }
}

/// Squared Euclidean distance with `f64` accumulation.
#[inline]
pub fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let d = *x as f64 - *y as f64;
        s += d * d;
    }
    s
}

/// Mean fraction of `exact`'s top-`k` entry indices that `index` also returns.
pub fn recall_at_k<A, B>(index: &A, exact: &B, queries: &[Vec<f32>], k: usize) -> Result<f64>
where
    A: NeighborSearch + ?Sized,
    B: NeighborSearch + ?Sized,
{
    if queries.is_empty() {
        return Ok(1.0);
    }
    let mut total = 0.0;
    for q in queries {
        let truth: HashSet<u32> = exact.search(q, k)?.iter().map(|h| h.entry_index).collect();
        if truth.is_empty() {
            total += 1.0;
            continue;
        }
        let got = index.search(q, k)?;
        let found = got.iter().filter(|h| truth.contains(&h.entry_index)).count();
        total += found as f64 / truth.len() as f64;
    }
    Ok(total / queries.len() as f64)
}
