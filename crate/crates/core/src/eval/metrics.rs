use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::GridRow;
use crate::datastore::ParallelCorpus;
use crate::error::{Error, Result};
use crate::index::NeighborSearch;
use crate::retrieval::{
    augmented_step, decode, retrieve, ContextProvider, DecodeOutput, DecodeParams, RetrievalParams, LOG_FLOOR,
};
use crate::xmap::LinearMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenMetrics {
    /// Teacher-forced top-1 accuracy.
    pub accuracy: f64,
    /// Mean negative log-likelihood of the gold token.
    pub nll: f64,
    pub tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub params: RetrievalParams,
    pub accuracy: f64,
    pub nll: f64,
    pub bleu: f64,
    pub tokens: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub configs: Vec<GridRow>,
}

pub(crate) fn neg_log(p: f64) -> f64 {
    if p > 0.0 {
        -p.ln()
    } else {
        -LOG_FLOOR
    }
}

/// Scores every gold token of `corpus` with the gold prefix as history.
pub fn token_metrics<P, I, C>(
    provider: &P,
    index: &I,
    map: Option<&LinearMap>,
    params: &RetrievalParams,
    corpus: &C,
) -> Result<TokenMetrics>
where
    P: ContextProvider + ?Sized,
    P::Source: Sync,
    I: NeighborSearch + ?Sized,
    C: ParallelCorpus<Source = P::Source> + Sync + ?Sized,
{
    let per_sentence: Vec<(usize, f64, usize)> = (0..corpus.num_pairs())
        .into_par_iter()
        .map(|i| {
            let (_, src, gold) = corpus.pair(i);
            let mut correct = 0;
            let mut nll = 0.0;
            for t in 0..gold.len() {
                let p = augmented_step(provider, index, map, params, src, &gold[..t])?;
                correct += (p.argmax() == gold[t]) as usize;
                nll += neg_log(p.prob(gold[t]));
            }
            Ok((correct, nll, gold.len()))
        })
        .collect::<Result<_>>()?;
    let (correct, nll, tokens) =
        per_sentence.iter().fold((0, 0.0, 0), |(c, n, t), &(c2, n2, t2)| (c + c2, n + n2, t + t2));
    if tokens == 0 {
        return Ok(TokenMetrics { accuracy: 0.0, nll: 0.0, tokens: 0 });
    }
    Ok(TokenMetrics { accuracy: correct as f64 / tokens as f64, nll: nll / tokens as f64, tokens })
}

/// Fraction of positions whose single nearest neighbor carries the gold token.
pub fn retrieval_hit_rate<P, I, C>(provider: &P, index: &I, map: Option<&LinearMap>, corpus: &C) -> Result<f64>
where
    P: ContextProvider + ?Sized,
    P::Source: Sync,
    I: NeighborSearch + ?Sized,
    C: ParallelCorpus<Source = P::Source> + Sync + ?Sized,
{
    let per: Vec<(usize, usize)> = (0..corpus.num_pairs())
        .into_par_iter()
        .map(|i| {
            let (_, src, gold) = corpus.pair(i);
            let mut hit = 0;
            for t in 0..gold.len() {
                let (_, _, hits) = retrieve(provider, index, map, 1, src, &gold[..t])?;
                hit += hits.iter().next().is_some_and(|h| h.token == gold[t]) as usize;
            }
            Ok((hit, gold.len()))
        })
        .collect::<Result<_>>()?;
    let (hit, n) = per.iter().fold((0, 0), |(a, b), &(c, d)| (a + c, b + d));
    Ok(if n == 0 { 0.0 } else { hit as f64 / n as f64 })
}

/// Decodes every source sentence; outputs keep corpus order.
pub fn decode_corpus<P, I, C>(
    provider: &P,
    index: &I,
    map: Option<&LinearMap>,
    rparams: &RetrievalParams,
    dparams: &DecodeParams,
    corpus: &C,
) -> Result<Vec<DecodeOutput>>
where
    P: ContextProvider + ?Sized,
    P::Source: Sync,
    I: NeighborSearch + ?Sized,
    C: ParallelCorpus<Source = P::Source> + Sync + ?Sized,
{
    (0..corpus.num_pairs())
        .into_par_iter()
        .map(|i| decode(provider, index, map, rparams, dparams, corpus.pair(i).1))
        .collect()
}

fn ngram_counts(toks: &[u32], n: usize) -> HashMap<&[u32], usize> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Corpus BLEU-4 over token ids, in `[0, 100]`.
///
/// Clipped n-gram matches are pooled over the corpus. The unigram precision
/// is unsmoothed; higher orders use add-one smoothing. The brevity penalty is
/// `exp(1 − r/c)` when the hypotheses are shorter than the references.
pub fn corpus_bleu(hypotheses: &[Vec<u32>], references: &[Vec<u32>]) -> Result<f64> {
    if hypotheses.is_empty() {
        return Err(Error::invalid("BLEU needs at least one sentence pair"));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::invalid(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=4 {
            let rc = ngram_counts(r, n);
            for (g, c) in ngram_counts(h, n) {
                matches[n - 1] += c.min(rc.get(g).copied().unwrap_or(0));
            }
            totals[n - 1] += h.len().saturating_sub(n - 1);
        }
    }
    if matches[0] == 0 || hyp_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = (matches[0] as f64 / totals[0] as f64).ln();
    for n in 1..4 {
        log_sum += ((matches[n] + 1) as f64 / (totals[n] + 1) as f64).ln();
    }
    let bp = if hyp_len >= ref_len { 1.0 } else { (1.0 - ref_len as f64 / hyp_len as f64).exp() };
    Ok((100.0 * bp * (log_sum / 4.0).exp()).clamp(0.0, 100.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bleu_identity_and_disjoint() {
        let h = vec![vec![1, 2, 3, 4, 5], vec![7, 8, 9, 10]];
        assert!((corpus_bleu(&h, &h).unwrap() - 100.0).abs() < 1e-9);
        let r = vec![vec![11, 12, 13, 14, 15], vec![17, 18, 19, 20]];
        assert_eq!(corpus_bleu(&h, &r).unwrap(), 0.0);
        assert!(corpus_bleu(&[], &[]).is_err());
        assert!(corpus_bleu(&h, &r[..1]).is_err());
    }

    #[test]
    fn bleu_hand_computed() {
        // p1 = 3/4, p2 = (2+1)/(3+1), p3 = (1+1)/(2+1), p4 = (0+1)/(1+1), BP = 1.
        let want = 100.0 * (0.75f64 * 0.75 * (2.0 / 3.0) * 0.5).powf(0.25);
        let got = corpus_bleu(&[vec![1, 2, 3, 4]], &[vec![1, 2, 3, 5]]).unwrap();
        assert!((got - want).abs() < 1e-9);
        assert!((got - 65.80).abs() < 0.005);
    }

    #[test]
    fn bleu_brevity_and_clipping() {
        // hyp "1 1" vs ref "1 2 3 4": p1 = 1/2 (clipped), p2 = 1/2, p3 = p4 = 1, BP = e^(1-2).
        let got = corpus_bleu(&[vec![1, 1]], &[vec![1, 2, 3, 4]]).unwrap();
        let want = 100.0 * (-1.0f64).exp() * (0.5f64 * 0.5).powf(0.25);
        assert!((got - want).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn bleu_permutation_invariant(
            pairs in prop::collection::vec(
                (prop::collection::vec(0u32..6, 0..8), prop::collection::vec(0u32..6, 1..8)), 1..6),
            rot in 0usize..6,
        ) {
            let (h, r): (Vec<_>, Vec<_>) = pairs.iter().cloned().unzip();
            let a = corpus_bleu(&h, &r).unwrap();
            let mut p2 = pairs.clone();
            p2.rotate_left(rot % pairs.len());
            p2.reverse();
            let (h2, r2): (Vec<_>, Vec<_>) = p2.into_iter().unzip();
            let b = corpus_bleu(&h2, &r2).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!((0.0..=100.0).contains(&a));
        }
    }
}
