use std::cmp::Ordering;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{augmented_step_detail, hit_weights, ContextProvider, DecodeParams, RetrievalParams};
use crate::error::{Error, Result};
use crate::index::NeighborSearch;
use crate::xmap::LinearMap;

/// Log-probability assigned to zero-probability tokens.
pub const LOG_FLOOR: f64 = -1e30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHit {
    pub entry_index: u32,
    pub distance: f64,
    pub token: u32,
    pub origin: u16,
    /// Normalized kernel weight of this neighbor in the retrieval distribution.
    pub weight: f64,
}

/// One decoding step of the returned hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sentence_id: Option<u32>,
    pub step: usize,
    pub chosen: u32,
    pub hits: Vec<TraceHit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    pub tokens: Vec<u32>,
    /// Sum of log-probabilities of the emitted tokens.
    pub score: f64,
    /// Empty unless produced by [`decode_traced`].
    pub trace: Vec<TraceStep>,
}

fn log_prob(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        LOG_FLOOR
    }
}

#[derive(Clone)]
struct Hyp {
    tokens: Vec<u32>,
    score: f64,
    done: bool,
    trace: Vec<TraceStep>,
}

/// Higher score first; equal scores prefer the lexicographically smaller sequence.
fn rank(a: &Hyp, b: &Hyp) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Beam search over augmented step distributions. `beam_width = 1` is greedy.
pub fn decode<P, I>(
    provider: &P,
    index: &I,
    map: Option<&LinearMap>,
    rparams: &RetrievalParams,
    dparams: &DecodeParams,
    source: &P::Source,
) -> Result<DecodeOutput>
where
    P: ContextProvider + ?Sized,
    I: NeighborSearch + ?Sized,
{
    run(provider, index, map, rparams, dparams, source, false)
}

/// Like [`decode`], also recording the neighbors retrieved at every step.
pub fn decode_traced<P, I>(
    provider: &P,
    index: &I,
    map: Option<&LinearMap>,
    rparams: &RetrievalParams,
    dparams: &DecodeParams,
    source: &P::Source,
) -> Result<DecodeOutput>
where
    P: ContextProvider + ?Sized,
    I: NeighborSearch + ?Sized,
{
    run(provider, index, map, rparams, dparams, source, true)
}

fn run<P, I>(
    provider: &P,
    index: &I,
    map: Option<&LinearMap>,
    rparams: &RetrievalParams,
    dparams: &DecodeParams,
    source: &P::Source,
    traced: bool,
) -> Result<DecodeOutput>
where
    P: ContextProvider + ?Sized,
    I: NeighborSearch + ?Sized,
{
    if dparams.beam_width == 0 {
        return Err(Error::invalid("beam width must be at least 1"));
    }
    if dparams.max_length == 0 {
        return Err(Error::invalid("max length must be at least 1"));
    }
    rparams.validate()?;
    let max_len = provider.max_len(source).map_or(dparams.max_length, |m| m.min(dparams.max_length));
    let eos = provider.eos_token();

    let mut beams = vec![Hyp { tokens: Vec::new(), score: 0.0, done: false, trace: Vec::new() }];
    for step in 0..max_len {
        if beams.iter().all(|h| h.done) {
            break;
        }
        let mut candidates: Vec<Hyp> = Vec::new();
        for hyp in &beams {
            if hyp.done {
                candidates.push(hyp.clone());
                continue;
            }
            let detail = augmented_step_detail(provider, index, map, rparams, source, &hyp.tokens)?;
            let trace_hits: Vec<TraceHit> = if traced {
                let w = hit_weights(&detail.hits, rparams.temperature);
                detail
                    .hits
                    .iter()
                    .zip(w)
                    .map(|(h, weight)| TraceHit {
                        entry_index: h.entry_index,
                        distance: h.distance,
                        token: h.token,
                        origin: h.origin,
                        weight,
                    })
                    .collect()
            } else {
                Vec::new()
            };
            // Only the best `beam_width` extensions of one hypothesis can survive.
            let mut order: Vec<u32> = (0..detail.dist.len() as u32).collect();
            let probs = detail.dist.probs();
            order.sort_by(|&a, &b| probs[b as usize].total_cmp(&probs[a as usize]).then(a.cmp(&b)));
            for &tok in order.iter().take(dparams.beam_width) {
                let mut tokens = hyp.tokens.clone();
                tokens.push(tok);
                let mut trace = Vec::new();
                if traced {
                    trace = hyp.trace.clone();
                    trace.push(TraceStep { sentence_id: None, step, chosen: tok, hits: trace_hits.clone() });
                }
                candidates.push(Hyp {
                    score: hyp.score + log_prob(probs[tok as usize]),
                    done: eos == Some(tok),
                    tokens,
                    trace,
                });
            }
        }
        candidates.sort_by(rank);
        candidates.truncate(dparams.beam_width);
        beams = candidates;
    }

    let best = beams.into_iter().min_by(rank).expect("beam is never empty");
    Ok(DecodeOutput { tokens: best.tokens, score: best.score, trace: best.trace })
}

pub fn write_trace_jsonl<W: Write>(mut w: W, steps: &[TraceStep]) -> Result<()> {
    for s in steps {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace_jsonl<R: BufRead>(r: R) -> Result<Vec<TraceStep>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
