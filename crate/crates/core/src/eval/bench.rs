use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datastore::ParallelCorpus;
use crate::error::{Error, Result};
use crate::index::{Index, IndexKind};
use crate::retrieval::{decode, ContextProvider, DecodeParams, RetrievalParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub size: usize,
    pub kind: IndexKind,
    pub tokens_per_sec: f64,
    /// Median wall time of one pass over the corpus, in seconds.
    pub wall_secs: f64,
    pub queries: usize,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    /// Sorted by store size, largest first.
    pub rows: Vec<BenchRow>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Greedy decoding throughput of `corpus` against each index.
///
/// Runs single-threaded. One untimed warm-up pass precedes `repetitions`
/// timed passes; the median pass is reported. Every pass must produce the
/// same outputs.
pub fn throughput_bench<P, C>(
    provider: &P,
    indexes: &[&Index],
    corpus: &C,
    params: &RetrievalParams,
    dparams: &DecodeParams,
    repetitions: usize,
) -> Result<BenchReport>
where
    P: ContextProvider + ?Sized,
    C: ParallelCorpus<Source = P::Source> + ?Sized,
{
    if corpus.num_pairs() == 0 {
        return Err(Error::invalid("benchmark corpus is empty"));
    }
    if indexes.is_empty() {
        return Err(Error::invalid("benchmark needs at least one index"));
    }
    let repetitions = repetitions.max(3);

    let pass = |index: &Index| -> Result<Vec<Vec<u32>>> {
        (0..corpus.num_pairs())
            .map(|i| decode(provider, index, None, params, dparams, corpus.pair(i).1).map(|o| o.tokens))
            .collect()
    };

    let mut rows = Vec::new();
    for index in indexes {
        let reference = pass(index)?;
        let tokens: usize = reference.iter().map(Vec::len).sum();
        let mut times = Vec::with_capacity(repetitions);
        for _ in 0..repetitions {
            let start = Instant::now();
            let out = pass(index)?;
            times.push(start.elapsed().as_secs_f64());
            if out != reference {
                return Err(Error::InvalidState("decoded outputs changed between repetitions".into()));
            }
        }
        let wall = median(times).max(1e-9);
        rows.push(BenchRow {
            size: index.store().len(),
            kind: index.kind(),
            tokens_per_sec: tokens as f64 / wall,
            wall_secs: wall,
            queries: tokens,
            repetitions,
        });
    }
    rows.sort_by_key(|r| std::cmp::Reverse(r.size));
    Ok(BenchReport { rows })
}

/// CSV with header `size,kind,tokens_per_sec,wall_secs,queries,repetitions`.
pub fn write_bench_csv(report: &BenchReport) -> String {
    let mut s = String::from("size,kind,tokens_per_sec,wall_secs,queries,repetitions\n");
    for r in &report.rows {
        let kind = match r.kind {
            IndexKind::Flat => "flat",
            IndexKind::Ivf => "ivf",
        };
        let _ = writeln!(s, "{},{},{:.3},{:.6},{},{}", r.size, kind, r.tokens_per_sec, r.wall_secs, r.queries, r.repetitions);
    }
    s
}
