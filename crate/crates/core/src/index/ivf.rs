use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::flat::TopK;
use super::{sq_dist, HitList, IvfLayout, KMEANS_ITERS};
use crate::datastore::Datastore;

fn nearest(centroids: &[f32], dim: usize, v: &[f32]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (c, cen) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(cen, v);
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

fn assign(store: &Datastore, centroids: &[f32]) -> Vec<u32> {
    let dim = store.dim();
    store
        .keys()
        .par_chunks_exact(dim)
        .map(|k| nearest(centroids, dim, k) as u32)
        .collect()
}

/// Lloyd's k-means from `nlist` sampled entries, then a CSR cell layout.
pub(super) fn train(store: &Datastore, nlist: usize, nprobe: usize, seed: u64) -> IvfLayout {
    let dim = store.dim();
    let n = store.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<f32> = Vec::with_capacity(nlist * dim);
    for i in sample(&mut rng, n, nlist).into_iter() {
        centroids.extend_from_slice(store.key(i));
    }

    if nlist > 1 {
        for _ in 0..KMEANS_ITERS {
            let cells = assign(store, &centroids);
            let mut sums = vec![0.0f64; nlist * dim];
            let mut counts = vec![0usize; nlist];
            for (i, &c) in cells.iter().enumerate() {
                let c = c as usize;
                counts[c] += 1;
                for (s, x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(store.key(i)) {
                    *s += *x as f64;
                }
            }
            let mut moved = false;
            for c in 0..nlist {
                if counts[c] == 0 {
                    continue;
                }
                for j in 0..dim {
                    let v = (sums[c * dim + j] / counts[c] as f64) as f32;
                    if v != centroids[c * dim + j] {
                        moved = true;
                        centroids[c * dim + j] = v;
                    }
                }
            }
            if !moved {
                break;
            }
        }
    }

    let cells = assign(store, &centroids);
    let mut offsets = vec![0usize; nlist + 1];
    for &c in &cells {
        offsets[c as usize + 1] += 1;
    }
    for c in 0..nlist {
        offsets[c + 1] += offsets[c];
    }
    let mut fill = offsets.clone();
    let mut perm = vec![0u32; n];
    for (i, &c) in cells.iter().enumerate() {
        perm[fill[c as usize]] = i as u32;
        fill[c as usize] += 1;
    }
    IvfLayout { nlist, nprobe, seed, centroids, offsets, perm }
}

pub(super) fn search(store: &Datastore, layout: &IvfLayout, query: &[f32], k: usize) -> HitList {
    let dim = store.dim();
    let mut cells: Vec<(f64, usize)> = layout
        .centroids
        .chunks_exact(dim)
        .enumerate()
        .map(|(c, cen)| (sq_dist(cen, query), c))
        .collect();
    let probe = layout.nprobe.min(layout.nlist);
    if probe < cells.len() {
        cells.select_nth_unstable_by(probe - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cells.truncate(probe);
    }

    let mut top = TopK::new(k);
    for &(_, c) in &cells {
        for &i in &layout.perm[layout.offsets[c]..layout.offsets[c + 1]] {
            top.offer(sq_dist(store.key(i as usize), query), i);
        }
    }
    top.finish(store)
}
