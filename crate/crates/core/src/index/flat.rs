use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{sq_dist, HitList, SearchHit};
use crate::datastore::Datastore;

#[derive(Clone, Copy)]
struct Candidate {
    distance: f64,
    index: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance.total_cmp(&other.distance).then(self.index.cmp(&other.index))
    }
}

/// Keeps the `k` smallest candidates seen so far (max-heap on the worst).
pub(super) struct TopK {
    k: usize,
    heap: BinaryHeap<Candidate>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        TopK { k, heap: BinaryHeap::with_capacity(k + 1) }
    }

    #[inline]
    pub fn offer(&mut self, distance: f64, index: u32) {
        let c = Candidate { distance, index };
        if self.heap.len() < self.k {
            self.heap.push(c);
        } else if let Some(mut worst) = self.heap.peek_mut() {
            if c < *worst {
                *worst = c;
            }
        }
    }

    pub fn finish(self, store: &Datastore) -> HitList {
        let hits = self
            .heap
            .into_iter()
            .map(|c| SearchHit {
                entry_index: c.index,
                distance: c.distance,
                token: store.values()[c.index as usize],
                origin: store.origin_ids()[c.index as usize],
            })
            .collect();
        HitList::from_unsorted(hits)
    }
}

pub(super) fn scan_all(store: &Datastore, query: &[f32], k: usize) -> HitList {
    let dim = store.dim();
    let mut top = TopK::new(k);
    for (i, key) in store.keys().chunks_exact(dim).enumerate() {
        top.offer(sq_dist(key, query), i as u32);
    }
    top.finish(store)
}
