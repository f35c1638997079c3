//! Metrics, hyperparameter tuning, origin accounting and throughput.

mod bench;
mod grid;
mod metrics;
mod origins;
mod stats;

pub use self::bench::{throughput_bench, write_bench_csv, BenchReport, BenchRow};
pub use self::grid::{grid_search, write_grid_csv, GridRow, Grids, Metric};
pub use self::metrics::{
    corpus_bleu, decode_corpus, retrieval_hit_rate, token_metrics, EvalReport, TokenMetrics,
};
pub use self::origins::{origin_analysis, uniform_shares, OriginReport, OriginRow, Weighting};
pub use self::stats::{size_quality_correlation, spearman};
