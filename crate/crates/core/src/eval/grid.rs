use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{corpus_bleu, decode_corpus, neg_log};
use crate::datastore::ParallelCorpus;
use crate::error::{Error, Result};
use crate::index::{HitList, NeighborSearch};
use crate::retrieval::{combine, retrieve, ContextProvider, DecodeParams, ProbabilityDistribution, RetrievalParams};
use crate::xmap::LinearMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    pub k: Vec<usize>,
    pub lambda: Vec<f64>,
    pub temperature: Vec<f64>,
}

impl Grids {
    /// `k ∈ {16, 32, 64}`, `λ ∈ {0.2, …, 0.7}`, `T ∈ {10, 100}`.
    pub fn standard() -> Self {
        Grids {
            k: vec![16, 32, 64],
            lambda: vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            temperature: vec![10.0, 100.0],
        }
    }

    pub fn single(p: &RetrievalParams) -> Self {
        Grids { k: vec![p.k], lambda: vec![p.lambda], temperature: vec![p.temperature] }
    }

    /// Sorted, deduplicated, validated axes.
    pub fn normalized(&self) -> Result<Grids> {
        if self.k.is_empty() || self.lambda.is_empty() || self.temperature.is_empty() {
            return Err(Error::invalid("every grid axis needs at least one value"));
        }
        let mut k = self.k.clone();
        k.sort_unstable();
        k.dedup();
        let mut lambda = self.lambda.clone();
        lambda.sort_by(f64::total_cmp);
        lambda.dedup();
        let mut temperature = self.temperature.clone();
        temperature.sort_by(f64::total_cmp);
        temperature.dedup();
        let g = Grids { k, lambda, temperature };
        for p in g.configs() {
            p.validate()?;
        }
        Ok(g)
    }

    /// Every combination, ordered by `(k, λ, T)`.
    pub fn configs(&self) -> Vec<RetrievalParams> {
        let mut out = Vec::new();
        for &k in &self.k {
            for &lambda in &self.lambda {
                for &temperature in &self.temperature {
                    out.push(RetrievalParams { k, lambda, temperature });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Bleu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub k: usize,
    pub lambda: f64,
    pub temperature: f64,
    pub accuracy: f64,
    pub nll: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleu: Option<f64>,
}

impl GridRow {
    pub fn params(&self) -> RetrievalParams {
        RetrievalParams { k: self.k, lambda: self.lambda, temperature: self.temperature }
    }

    fn score(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::Bleu => self.bleu.unwrap_or(0.0),
        }
    }
}

struct CachedStep {
    gold: u32,
    base: ProbabilityDistribution,
    hits: HitList,
}

/// Evaluates every grid configuration on `corpus` and returns the best one
/// with the full table.
///
/// Neighbors are retrieved once at the largest `k`; smaller `k` use a prefix
/// of that list. Ties on the metric go to smaller `k`, then smaller `λ`,
/// then smaller `T`. With [`Metric::Bleu`] every configuration also decodes
/// the corpus with `dparams`.
pub fn grid_search<P, I, C>(
    provider: &P,
    index: &I,
    map: Option<&LinearMap>,
    corpus: &C,
    grids: &Grids,
    metric: Metric,
    dparams: &DecodeParams,
) -> Result<(RetrievalParams, Vec<GridRow>)>
where
    P: ContextProvider + ?Sized,
    P::Source: Sync,
    I: NeighborSearch + ?Sized,
    C: ParallelCorpus<Source = P::Source> + Sync + ?Sized,
{
    let grids = grids.normalized()?;
    let k_max = *grids.k.last().expect("non-empty");
    let vocab = provider.vocab_size();

    let cached: Vec<Vec<CachedStep>> = (0..corpus.num_pairs())
        .into_par_iter()
        .map(|i| {
            let (_, src, gold) = corpus.pair(i);
            (0..gold.len())
                .map(|t| {
                    let (_, base, hits) = retrieve(provider, index, map, k_max, src, &gold[..t])?;
                    Ok(CachedStep { gold: gold[t], base, hits })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let steps: Vec<&CachedStep> = cached.iter().flatten().collect();

    let references: Vec<Vec<u32>> = (0..corpus.num_pairs()).map(|i| corpus.pair(i).2.to_vec()).collect();

    let rows: Vec<GridRow> = grids
        .configs()
        .into_par_iter()
        .map(|p| {
            let mut correct = 0usize;
            let mut nll = 0.0;
            for s in &steps {
                let d = combine(&s.hits, &s.base, &p, vocab)?;
                correct += (d.argmax() == s.gold) as usize;
                nll += neg_log(d.prob(s.gold));
            }
            let n = steps.len().max(1) as f64;
            let bleu = match metric {
                Metric::Accuracy => None,
                Metric::Bleu => {
                    let outs = decode_corpus(provider, index, map, &p, dparams, corpus)?;
                    let hyps: Vec<Vec<u32>> = outs.into_iter().map(|o| o.tokens).collect();
                    Some(if hyps.is_empty() { 0.0 } else { corpus_bleu(&hyps, &references)? })
                }
            };
            Ok(GridRow {
                k: p.k,
                lambda: p.lambda,
                temperature: p.temperature,
                accuracy: correct as f64 / n,
                nll: nll / n,
                bleu,
            })
        })
        .collect::<Result<_>>()?;

    let mut best = &rows[0];
    for r in &rows[1..] {
        if r.score(metric) > best.score(metric) {
            best = r;
        }
    }
    Ok((best.params(), rows))
}

/// CSV with header `k,lambda,temperature,accuracy,nll,bleu`.
pub fn write_grid_csv(rows: &[GridRow]) -> String {
    let mut s = String::from("k,lambda,temperature,accuracy,nll,bleu\n");
    for r in rows {
        let bleu = r.bleu.map(|b| format!("{b:.4}")).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{:.6},{:.6},{}", r.k, r.lambda, r.temperature, r.accuracy, r.nll, bleu);
    }
    s
}
