//! Retrieval distributions, interpolation with a base model, and decoding.

mod decode;

use serde::{Deserialize, Serialize};

pub use self::decode::{
    decode, decode_traced, read_trace_jsonl, write_trace_jsonl, DecodeOutput, TraceHit, TraceStep,
    LOG_FLOOR,
};
use crate::error::{Error, Result};
use crate::index::{HitList, NeighborSearch};
use crate::xmap::{apply_map, LinearMap};

const SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalParams {
    pub k: usize,
    pub lambda: f64,
    pub temperature: f64,
}

impl RetrievalParams {
    pub fn new(k: usize, lambda: f64, temperature: f64) -> Result<Self> {
        let p = RetrievalParams { k, lambda, temperature };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid(format!("temperature {} must be positive", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub beam_width: usize,
    pub max_length: usize,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams { beam_width: 1, max_length: 256 }
    }
}

/// A probability vector over the token vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbabilityDistribution {
    probs: Vec<f64>,
}

impl ProbabilityDistribution {
    /// Entries must be finite, non-negative and sum to 1 within `1e-6`.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("distribution over an empty vocabulary"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::invalid(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(ProbabilityDistribution { probs })
    }

    /// Normalizes non-negative weights.
    pub fn from_weights(mut w: Vec<f64>) -> Result<Self> {
        let sum: f64 = w.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) || w.iter().any(|x| *x < 0.0) {
            return Err(Error::invalid("weights must be non-negative with a positive finite sum"));
        }
        for x in &mut w {
            *x /= sum;
        }
        ProbabilityDistribution::new(w)
    }

    /// Softmax of `logits`, shifted by the maximum for stability.
    pub fn softmax(logits: &[f64]) -> Result<Self> {
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::invalid("softmax needs at least one finite logit"));
        }
        ProbabilityDistribution::from_weights(logits.iter().map(|l| (l - m).exp()).collect())
    }

    pub fn one_hot(vocab_size: usize, token: u32) -> Result<Self> {
        if token as usize >= vocab_size {
            return Err(Error::invalid(format!("token {token} outside vocabulary of {vocab_size}")));
        }
        let mut probs = vec![0.0; vocab_size];
        probs[token as usize] = 1.0;
        Ok(ProbabilityDistribution { probs })
    }

    pub fn uniform(vocab_size: usize) -> Result<Self> {
        ProbabilityDistribution::from_weights(vec![1.0; vocab_size])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, token: u32) -> f64 {
        self.probs.get(token as usize).copied().unwrap_or(0.0)
    }

    /// Most probable token; the lowest id wins ties.
    pub fn argmax(&self) -> u32 {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as u32
    }
}

/// `p(y) ∝ Σ_i [v_i = y] · exp(-d_i / T)` over the hits.
///
/// Distances are shifted by their minimum before exponentiation, which
/// leaves the distribution unchanged but keeps the largest weight at 1.
pub fn knn_distribution(
    hits: &HitList,
    temperature: f64,
    vocab_size: usize,
) -> Result<ProbabilityDistribution> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(format!("temperature {temperature} must be positive")));
    }
    if hits.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    let d_min = hits.iter().map(|h| h.distance).fold(f64::INFINITY, f64::min);
    let mut w = vec![0.0; vocab_size];
    for h in hits {
        let slot = w.get_mut(h.token as usize).ok_or_else(|| {
            Error::invalid(format!("hit token {} outside vocabulary of {vocab_size}", h.token))
        })?;
        *slot += (-(h.distance - d_min) / temperature).exp();
    }
    ProbabilityDistribution::from_weights(w)
}

/// Normalized kernel weight of each hit, in hit order.
pub fn hit_weights(hits: &HitList, temperature: f64) -> Vec<f64> {
    let d_min = hits.iter().map(|h| h.distance).fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = hits.iter().map(|h| (-(h.distance - d_min) / temperature).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// `λ · p_knn + (1 − λ) · p_base`.
pub fn interpolate(
    p_knn: &ProbabilityDistribution,
    p_base: &ProbabilityDistribution,
    lambda: f64,
) -> Result<ProbabilityDistribution> {
    if p_knn.len() != p_base.len() {
        return Err(Error::invalid(format!(
            "vocabulary sizes differ: {} vs {}",
            p_knn.len(),
            p_base.len()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda {lambda} outside [0, 1]")));
    }
    if lambda == 0.0 {
        return Ok(p_base.clone());
    }
    if lambda == 1.0 {
        return Ok(p_knn.clone());
    }
    let probs = p_knn
        .probs
        .iter()
        .zip(&p_base.probs)
        .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
        .collect();
    ProbabilityDistribution::new(probs)
}

/// Source of decoder contexts and base-model distributions.
pub trait ContextProvider: Sync {
    type Source;

    fn dim(&self) -> usize;
    fn vocab_size(&self) -> usize;

    /// Token that ends a hypothesis, if the vocabulary has one.
    fn eos_token(&self) -> Option<u32> {
        None
    }

    /// Upper bound on the output length for `source`, if the provider has one.
    fn max_len(&self, _source: &Self::Source) -> Option<usize> {
        None
    }

    /// The translation context `f(x, y_<t)` with `t = prefix.len()`.
    fn context(&self, source: &Self::Source, prefix: &[u32]) -> Result<Vec<f32>>;

    fn base_distribution(
        &self,
        source: &Self::Source,
        prefix: &[u32],
        context: &[f32],
    ) -> Result<ProbabilityDistribution>;
}

/// Everything computed for one augmented decoding step.
#[derive(Debug, Clone)]
pub struct StepDetail {
    pub query: Vec<f32>,
    pub base: ProbabilityDistribution,
    pub hits: HitList,
    pub dist: ProbabilityDistribution,
}

/// Context, optional map, `k`-NN search, then interpolation with the base model.
pub fn augmented_step<P, I>(
    provider: &P,
    index: &I,
    map: Option<&LinearMap>,
    params: &RetrievalParams,
    source: &P::Source,
    prefix: &[u32],
) -> Result<ProbabilityDistribution>
where
    P: ContextProvider + ?Sized,
    I: NeighborSearch + ?Sized,
{
    augmented_step_detail(provider, index, map, params, source, prefix).map(|s| s.dist)
}

pub fn augmented_step_detail<P, I>(
    provider: &P,
    index: &I,
    map: Option<&LinearMap>,
    params: &RetrievalParams,
    source: &P::Source,
    prefix: &[u32],
) -> Result<StepDetail>
where
    P: ContextProvider + ?Sized,
    I: NeighborSearch + ?Sized,
{
    params.validate()?;
    let (query, base, hits) = retrieve(provider, index, map, params.k, source, prefix)?;
    let dist = combine(&hits, &base, params, provider.vocab_size())?;
    Ok(StepDetail { query, base, hits, dist })
}

/// Query vector, base distribution and the `k` nearest neighbors for one step.
pub fn retrieve<P, I>(
    provider: &P,
    index: &I,
    map: Option<&LinearMap>,
    k: usize,
    source: &P::Source,
    prefix: &[u32],
) -> Result<(Vec<f32>, ProbabilityDistribution, HitList)>
where
    P: ContextProvider + ?Sized,
    I: NeighborSearch + ?Sized,
{
    if provider.dim() != index.dim() {
        return Err(Error::invalid(format!(
            "provider dimension {} does not match index dimension {}",
            provider.dim(),
            index.dim()
        )));
    }
    let context = provider.context(source, prefix)?;
    let base = provider.base_distribution(source, prefix, &context)?;
    let query = match map {
        Some(m) => apply_map(m, &context)?,
        None => context,
    };
    let hits = index.search(&query, k)?;
    Ok((query, base, hits))
}

/// Interpolated distribution from precomputed hits; the first `params.k` are used.
pub fn combine(
    hits: &HitList,
    base: &ProbabilityDistribution,
    params: &RetrievalParams,
    vocab_size: usize,
) -> Result<ProbabilityDistribution> {
    if params.lambda == 0.0 {
        return Ok(base.clone());
    }
    let hits = if hits.len() > params.k { hits.truncated(params.k) } else { hits.clone() };
    match knn_distribution(&hits, params.temperature, vocab_size) {
        Ok(p_knn) => interpolate(&p_knn, base, params.lambda),
        Err(Error::EmptyNeighborhood) => Ok(base.clone()),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::SearchHit;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn hits(v: &[(f64, u32)]) -> HitList {
        HitList::from_unsorted(
            v.iter()
                .enumerate()
                .map(|(i, &(d, t))| SearchHit { entry_index: i as u32, distance: d, token: t, origin: 0 })
                .collect(),
        )
    }

    #[test]
    fn params_validation() {
        assert!(RetrievalParams::new(16, 0.2, 10.0).is_ok());
        assert!(RetrievalParams::new(0, 0.2, 10.0).is_err());
        assert!(RetrievalParams::new(1, 1.2, 10.0).is_err());
        assert!(RetrievalParams::new(1, 0.5, 0.0).is_err());
        assert!(RetrievalParams::new(1, 0.5, f64::INFINITY).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(ProbabilityDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbabilityDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(ProbabilityDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbabilityDistribution::new(vec![]).is_err());
        assert_eq!(ProbabilityDistribution::new(vec![0.25, 0.5, 0.25]).unwrap().argmax(), 1);
        assert_eq!(ProbabilityDistribution::new(vec![0.4, 0.2, 0.4]).unwrap().argmax(), 0);
    }

    #[test]
    fn single_hit_is_one_hot() {
        for t in [0.1, 1.0, 100.0] {
            let p = knn_distribution(&hits(&[(3.7, 5)]), t, 8).unwrap();
            assert_eq!(p.probs(), ProbabilityDistribution::one_hot(8, 5).unwrap().probs());
        }
    }

    #[test]
    fn equal_distances_split_evenly() {
        let p = knn_distribution(&hits(&[(2.0, 1), (2.0, 2)]), 10.0, 4).unwrap();
        assert_eq!(p.probs(), &[0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn temperature_ten_halving() {
        let p = knn_distribution(&hits(&[(0.0, 0), (6.931, 1)]), 10.0, 2).unwrap();
        // Oracle: weights 1 and exp(-0.6931), normalized by hand.
        let w1 = (-0.6931f64).exp();
        assert_abs_diff_eq!(p.prob(0), 1.0 / (1.0 + w1), epsilon = 1e-12);
        // 6.931 is ln 2 to four places, so the split is 2:1 to about 1e-5.
        assert_abs_diff_eq!(p.prob(0), 2.0 / 3.0, epsilon = 2e-5);
        assert_abs_diff_eq!(p.prob(1), 1.0 / 3.0, epsilon = 2e-5);
    }

    #[test]
    fn knn_errors() {
        assert!(matches!(knn_distribution(&HitList::default(), 1.0, 4), Err(Error::EmptyNeighborhood)));
        assert!(matches!(knn_distribution(&hits(&[(1.0, 4)]), 1.0, 4), Err(Error::InvalidArgument(_))));
        assert!(knn_distribution(&hits(&[(1.0, 0)]), 0.0, 4).is_err());
    }

    #[test]
    fn huge_distances_stay_finite() {
        let p = knn_distribution(&hits(&[(1e6, 0), (1e6 + 1.0, 1)]), 0.01, 2).unwrap();
        assert_eq!(p.argmax(), 0);
        assert!(p.prob(1) >= 0.0);
    }

    #[test]
    fn interpolation_cases() {
        let a = ProbabilityDistribution::new(vec![1.0, 0.0]).unwrap();
        let b = ProbabilityDistribution::new(vec![0.2, 0.8]).unwrap();
        assert_eq!(interpolate(&a, &b, 0.0).unwrap(), b);
        assert_eq!(interpolate(&a, &b, 1.0).unwrap(), a);
        let m = interpolate(&a, &b, 0.5).unwrap();
        assert_abs_diff_eq!(m.prob(0), 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(m.prob(1), 0.4, epsilon = 1e-12);
        let c = ProbabilityDistribution::uniform(3).unwrap();
        assert!(matches!(interpolate(&a, &c, 0.5), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn combine_falls_back_on_empty() {
        let base = ProbabilityDistribution::new(vec![0.3, 0.7]).unwrap();
        let p = RetrievalParams::new(4, 0.6, 10.0).unwrap();
        assert_eq!(combine(&HitList::default(), &base, &p, 2).unwrap(), base);
    }

    fn hit_strategy() -> impl Strategy<Value = Vec<(f64, u32)>> {
        prop::collection::vec((0.0f64..50.0, 0u32..12), 1..40)
    }

    proptest! {
        #[test]
        fn shift_invariance(v in hit_strategy(), c in 0.0f64..100.0, t in 0.5f64..200.0) {
            let p = knn_distribution(&hits(&v), t, 12).unwrap();
            let shifted: Vec<_> = v.iter().map(|&(d, tok)| (d + c, tok)).collect();
            let q = knn_distribution(&hits(&shifted), t, 12).unwrap();
            for (a, b) in p.probs().iter().zip(q.probs()) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }

        #[test]
        fn support_within_hit_tokens(v in hit_strategy(), t in 0.1f64..100.0) {
            let p = knn_distribution(&hits(&v), t, 12).unwrap();
            for (tok, &pr) in p.probs().iter().enumerate() {
                if pr > 0.0 {
                    prop_assert!(v.iter().any(|&(_, x)| x as usize == tok));
                }
            }
            let s: f64 = p.probs().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn high_temperature_gives_frequencies(v in hit_strategy()) {
            let p = knn_distribution(&hits(&v), 1e9, 12).unwrap();
            for tok in 0..12u32 {
                let freq = v.iter().filter(|&&(_, x)| x == tok).count() as f64 / v.len() as f64;
                prop_assert!((p.prob(tok) - freq).abs() <= 1e-4);
            }
        }

        #[test]
        fn interpolate_self_is_identity(w in prop::collection::vec(0.01f64..1.0, 1..20), l in 0.0f64..=1.0) {
            let p = ProbabilityDistribution::from_weights(w).unwrap();
            let q = interpolate(&p, &p, l).unwrap();
            for (a, b) in p.probs().iter().zip(q.probs()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
