use serde::{Deserialize, Serialize};

use crate::datastore::Datastore;
use crate::error::{Error, Result};
use crate::retrieval::TraceStep;

/// How retrieved neighbors are counted toward their origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Each neighbor counts once per step.
    #[default]
    Occurrence,
    /// Each neighbor counts with its kernel weight.
    Mass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginRow {
    pub origin: u16,
    pub label: String,
    pub store_count: u64,
    pub retrieved: f64,
    pub p_obs: f64,
    pub p_uni: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginReport {
    pub weighting: Weighting,
    pub total_retrieved: f64,
    pub rows: Vec<OriginRow>,
}

/// `p_i = n_i / Σ n`. All zeros when every size is zero.
pub fn uniform_shares(sizes: &[u64]) -> Vec<f64> {
    let total: u64 = sizes.iter().sum();
    if total == 0 {
        return vec![0.0; sizes.len()];
    }
    sizes.iter().map(|&s| s as f64 / total as f64).collect()
}

/// Observed vs uniform origin shares of the neighbors in a decode trace.
pub fn origin_analysis(trace: &[TraceStep], store: &Datastore, weighting: Weighting) -> Result<OriginReport> {
    let n_origins = store.origins().len();
    let mut retrieved = vec![0.0f64; n_origins];
    for step in trace {
        for h in &step.hits {
            let slot = retrieved.get_mut(h.origin as usize).ok_or_else(|| {
                Error::invalid(format!("trace references origin {} but the store has {n_origins}", h.origin))
            })?;
            if h.entry_index as usize >= store.len() || store.origin_ids()[h.entry_index as usize] != h.origin {
                return Err(Error::invalid(format!(
                    "trace entry {} does not match the store",
                    h.entry_index
                )));
            }
            *slot += match weighting {
                Weighting::Occurrence => 1.0,
                Weighting::Mass => h.weight,
            };
        }
    }
    let total: f64 = retrieved.iter().sum();
    let counts = store.origin_counts();
    let p_uni = uniform_shares(&counts);
    let rows = (0..n_origins)
        .map(|o| OriginRow {
            origin: o as u16,
            label: store.origins().get(o as u16).expect("in range").label.clone(),
            store_count: counts[o],
            retrieved: retrieved[o],
            p_obs: if total > 0.0 { retrieved[o] / total } else { 0.0 },
            p_uni: p_uni[o],
        })
        .collect();
    Ok(OriginReport { weighting, total_retrieved: total, rows })
}
